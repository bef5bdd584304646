//! Propagating one node's state through a graph with a filtering aggregator:
//! the exact Kronecker-delta filter and its smooth family `n^{−‖h − t‖₂}`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::mlp::MlpParams;
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::train::{Optimizer, OptimizerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpreadMode {
    #[default]
    Exact,
    Smooth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadConfig {
    pub mode: SpreadMode,
    /// Sharpness base, smooth mode only.
    pub n: f64,
    /// L∞ tolerance for "equal to the target", exact mode only.
    pub eq_tol: f64,
    pub target: Vec<f64>,
    pub include_self: bool,
    /// A node has arrived once its L∞ error drops below this.
    pub report_tol: f64,
}

impl SpreadConfig {
    pub fn exact(target: Vec<f64>) -> Self {
        Self {
            mode: SpreadMode::Exact,
            n: 1e6,
            eq_tol: 1e-9,
            target,
            include_self: true,
            report_tol: 1e-3,
        }
    }

    pub fn smooth(target: Vec<f64>, n: f64) -> Self {
        Self {
            mode: SpreadMode::Smooth,
            n,
            ..Self::exact(target)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target.is_empty() {
            return Err(Error::Empty("spread target"));
        }
        if self.target.iter().all(|&x| x == 0.0) {
            return Err(invalid(
                "the propagated state must be non-zero: a zero target is indistinguishable from the empty-match output",
            ));
        }
        if !(self.eq_tol >= 0.0) || !(self.report_tol >= 0.0) {
            return Err(invalid("tolerances must be non-negative"));
        }
        if self.mode == SpreadMode::Smooth {
            check_base(self.n)?;
        }
        Ok(())
    }
}

fn check_base(n: f64) -> Result<()> {
    if n > 1.0 && n.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("sharpness base must be finite and > 1, got {n}")))
    }
}

fn check_widths<X: AsRef<[f64]>>(xs: &[X], target: &[f64]) -> Result<()> {
    for x in xs {
        if x.as_ref().len() != target.len() {
            return Err(Error::ShapeMismatch {
                op: "aggregate",
                left: vec![x.as_ref().len()],
                right: vec![target.len()],
            });
        }
    }
    Ok(())
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean of the elements within `eq_tol` (L∞) of `target`; zero when none match.
pub fn delta_aggregate<X: AsRef<[f64]>>(xs: &[X], target: &[f64], eq_tol: f64) -> Result<Vec<f64>> {
    check_widths(xs, target)?;
    let mut acc = vec![0.0; target.len()];
    let mut z = 0usize;
    for x in xs {
        let x = x.as_ref();
        if linf(x, target) <= eq_tol {
            z += 1;
            for (a, v) in acc.iter_mut().zip(x) {
                *a += v;
            }
        }
    }
    if z > 1 {
        let z = z as f64;
        acc.iter_mut().for_each(|a| *a /= z);
    }
    Ok(acc)
}

/// `n^{−‖h − target‖₂}`, in `(0, 1]` and exactly 1 at `h == target`.
pub fn smooth_delta_weight(h: &[f64], target: &[f64], n: f64) -> Result<f64> {
    check_base(n)?;
    check_widths(&[h], target)?;
    Ok(n.powf(-l2(h, target)))
}

/// `Σ wᵢ xᵢ / Σ wᵢ` with smooth delta weights; zero for an empty multiset
/// or when every weight underflows.
pub fn smooth_aggregate<X: AsRef<[f64]>>(xs: &[X], target: &[f64], n: f64) -> Result<Vec<f64>> {
    check_base(n)?;
    check_widths(xs, target)?;
    let mut acc = vec![0.0; target.len()];
    let mut z = 0.0;
    for x in xs {
        let x = x.as_ref();
        let w = n.powf(-l2(x, target));
        z += w;
        for (a, v) in acc.iter_mut().zip(x) {
            *a += w * v;
        }
    }
    if z > 0.0 {
        acc.iter_mut().for_each(|a| *a /= z);
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpreadTrace {
    /// `steps + 1` state matrices, each `[n × d]`.
    pub states: Vec<Tensor<f64>>,
    pub first_arrival: Vec<Option<usize>>,
    pub target: Vec<f64>,
}

impl SpreadTrace {
    pub fn linf_error(&self, step: usize, node: usize) -> f64 {
        linf(self.states[step].row(node), &self.target)
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    /// `step,node,first_arrival,linf_error_to_target`; `-1` marks a node that never arrives.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "node", "first_arrival", "linf_error_to_target"])?;
        for (step, s) in self.states.iter().enumerate() {
            for node in 0..s.rows() {
                let arrival = self.first_arrival[node].map_or(-1, |a| a as i64);
                out.write_record([
                    step.to_string(),
                    node.to_string(),
                    arrival.to_string(),
                    self.linf_error(step, node).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs `steps` synchronous aggregation rounds. At step 0 `source` holds the
/// target and every other node holds its own feature row (the distractors).
/// Each round a node aggregates its incoming neighbours' states, plus its own
/// when `include_self` is set.
pub fn propagate(g: &Graph, source: usize, cfg: &SpreadConfig, steps: usize) -> Result<SpreadTrace> {
    cfg.validate()?;
    let n = g.num_nodes();
    if source >= n {
        return Err(Error::IndexOutOfRange {
            what: "nodes",
            index: source,
            len: n,
        });
    }
    let d = cfg.target.len();
    if g.feature_dim() != d {
        return Err(invalid(format!(
            "node features have width {} but the target has width {d}",
            g.feature_dim()
        )));
    }
    let mut state = g.node_features().clone();
    state.row_mut(source).copy_from_slice(&cfg.target);
    let arrived = |s: &Tensor<f64>, v: usize| linf(s.row(v), &cfg.target) < cfg.report_tol;
    let mut first_arrival: Vec<Option<usize>> = (0..n).map(|v| arrived(&state, v).then_some(0)).collect();
    let mut states = vec![state.clone()];
    for step in 1..=steps {
        let mut next = Tensor::zeros(&[n, d]);
        for v in 0..n {
            let mut xs: Vec<&[f64]> = Vec::new();
            if cfg.include_self {
                xs.push(state.row(v));
            }
            for &(u, _) in g.incoming_neighbors(v)? {
                xs.push(state.row(u));
            }
            let agg = match cfg.mode {
                SpreadMode::Exact => delta_aggregate(&xs, &cfg.target, cfg.eq_tol)?,
                SpreadMode::Smooth => smooth_aggregate(&xs, &cfg.target, cfg.n)?,
            };
            next.row_mut(v).copy_from_slice(&agg);
        }
        for (v, fa) in first_arrival.iter_mut().enumerate() {
            if fa.is_none() && arrived(&next, v) {
                *fa = Some(step);
            }
        }
        state = next;
        states.push(state.clone());
    }
    Ok(SpreadTrace {
        states,
        first_arrival,
        target: cfg.target.clone(),
    })
}

/// Distractor rows `target + (1 + j/2)·e₀`: all on one side of the target,
/// so every convex combination of them stays at L2 distance ≥ 1.
pub fn distractors(target: &[f64], count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|j| {
            let mut x = target.to_vec();
            x[0] += 1.0 + 0.5 * j as f64;
            x
        })
        .collect()
}

/// A chain `v0 → … → vd` whose source `v0` holds `target` and whose other
/// nodes hold [`distractors`].
pub fn chain_fixture(d: usize, target: &[f64]) -> Result<Graph> {
    let mut states = vec![target.to_vec()];
    states.extend(distractors(target, d));
    crate::graph::gen_chain(d, &states)
}

/// Settings for fitting an MLP to the smooth delta weight.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub n: f64,
    pub target: Vec<f64>,
    pub hidden: Vec<usize>,
    pub samples: usize,
    /// Samples are drawn uniformly from the box `target ± radius`.
    pub radius: f64,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Learn the centre the MLP compares against instead of fixing it to `target`.
    pub learn_center: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n: 4.0,
            target: vec![1.0],
            hidden: vec![32, 32],
            samples: 128,
            radius: 2.0,
            epochs: 500,
            lr: 1e-2,
            seed: 0,
            learn_center: false,
        }
    }
}

/// Mean squared error before and after training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub initial_mse: f64,
    pub final_mse: f64,
}

/// Regresses `n^{−‖x − target‖₂}` with an MLP on `x − c` by full-batch
/// Adam, where `c` is the target or, with `learn_center`, a learnable vector
/// started at zero.
pub fn fit_smooth_weight(cfg: &FitConfig) -> Result<FitReport> {
    check_base(cfg.n)?;
    if cfg.target.is_empty() || cfg.samples == 0 || cfg.epochs == 0 {
        return Err(invalid("fit needs a target, samples and epochs"));
    }
    let d = cfg.target.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let xs: Vec<f64> = (0..cfg.samples * d)
        .map(|i| cfg.target[i % d] + rng.gen_range(-cfg.radius..=cfg.radius))
        .collect();
    let x = Tensor::matrix(cfg.samples, d, xs)?;
    let y = Tensor::matrix(
        cfg.samples,
        1,
        (0..cfg.samples)
            .map(|i| smooth_delta_weight(x.row(i), &cfg.target, cfg.n))
            .collect::<Result<_>>()?,
    )?;
    let mut dims = vec![d];
    dims.extend_from_slice(&cfg.hidden);
    dims.push(1);
    let mut mlp = MlpParams::<f64>::glorot(&mut rng, &dims)?;
    let mut center = if cfg.learn_center {
        Tensor::zeros(&[1, d])
    } else {
        Tensor::matrix(1, d, cfg.target.clone())?
    };
    let ones = Tensor::<f64>::ones(&[cfg.samples]);
    let eval = |mlp: &MlpParams<f64>, center: &Tensor<f64>, with_grad: bool| -> Result<(f64, Vec<Tensor<f64>>)> {
        let mut tape = Tape::new();
        let mut b = crate::bind::Binder::params(&mut tape, None);
        let vars = mlp.bind(&mut b, "fit");
        let c = b.bind("center".into(), center);
        let bound = b.finish();
        let xv = tape.constant(x.clone());
        // broadcast the centre over the sample rows
        let idx: std::sync::Arc<[usize]> = vec![0; ones.len()].into();
        let cb = tape.gather_rows(c, idx)?;
        let diff = tape.sub(xv, cb)?;
        let out = vars.apply(&mut tape, diff)?;
        let loss = tape.mean_squared_error(out, &y)?;
        let value = tape.value(loss).data()[0];
        if !with_grad {
            return Ok((value, vec![]));
        }
        let grads = tape.backward(loss)?;
        let mut values = Vec::new();
        mlp.for_each("fit", &mut |_, t| values.push(t.clone()));
        values.push(center.clone());
        Ok((
            value,
            bound
                .iter()
                .zip(&values)
                .map(|((_, v), p)| grads.get_or_zeros(*v, p))
                .collect(),
        ))
    };
    let initial_mse = eval(&mlp, &center, false)?.0;
    let mut params = Vec::new();
    mlp.for_each("fit", &mut |_, t| params.push(t.clone()));
    params.push(center.clone());
    let mut opt = Optimizer::new(OptimizerKind::Adam, &params);
    for epoch in 0..cfg.epochs {
        let (loss, mut grads) = eval(&mlp, &center, true)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        if !cfg.learn_center {
            let last = grads.len() - 1;
            grads[last] = Tensor::zeros(&[1, d]);
        }
        opt.step(&mut params, &grads, cfg.lr)?;
        let mut i = 0;
        mlp.for_each_mut("fit", &mut |_, t| {
            *t = params[i].clone();
            i += 1;
        });
        center = params[i].clone();
    }
    let final_mse = eval(&mlp, &center, false)?.0;
    Ok(FitReport {
        initial_mse,
        final_mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_examples() {
        let t = [1.0, 2.0];
        assert_eq!(delta_aggregate(&[[1.0, 2.0], [3.0, 4.0]], &t, 1e-9).unwrap(), vec![1.0, 2.0]);
        assert_eq!(delta_aggregate(&[[3.0, 4.0]], &t, 1e-9).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            delta_aggregate(&[[1.0, 2.0], [1.0, 2.0], [9.0, 9.0]], &t, 1e-9).unwrap(),
            vec![1.0, 2.0]
        );
        let empty: [[f64; 2]; 0] = [];
        assert_eq!(delta_aggregate(&empty, &t, 1e-9).unwrap(), vec![0.0, 0.0]);
        assert!(delta_aggregate(&[[1.0]], &t, 1e-9).is_err());
    }

    #[test]
    fn weight_examples() {
        assert_eq!(smooth_delta_weight(&[1.0, 2.0], &[1.0, 2.0], 10.0).unwrap(), 1.0);
        assert!((smooth_delta_weight(&[1.0], &[0.0], 10.0).unwrap() - 0.1).abs() < 1e-15);
        let ws: Vec<f64> = [10.0, 1e3, 1e6]
            .iter()
            .map(|&n| smooth_delta_weight(&[0.5], &[0.0], n).unwrap())
            .collect();
        assert!(ws[0] > ws[1] && ws[1] > ws[2]);
        assert!(smooth_delta_weight(&[0.0], &[0.0], 1.0).is_err());
    }

    #[test]
    fn smooth_examples() {
        let t = [1.0, -1.0];
        assert_eq!(smooth_aggregate(&[t], &t, 1e6).unwrap(), t.to_vec());
        let far = [2.0, -1.0];
        let got = smooth_aggregate(&[t, far], &t, 1e6).unwrap();
        assert!(linf(&got, &t) < 1e-5);
        let flat = smooth_aggregate(&[[0.0], [2.0]], &[0.0], 1.0 + 1e-9).unwrap();
        assert!((flat[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_steps_is_the_assignment() {
        let g = chain_fixture(3, &[1.0, 2.0]).unwrap();
        let tr = propagate(&g, 0, &SpreadConfig::exact(vec![1.0, 2.0]), 0).unwrap();
        assert_eq!(tr.first_arrival, vec![Some(0), None, None, None]);
    }

    #[test]
    fn zero_target_rejected() {
        let g = chain_fixture(1, &[1.0]).unwrap();
        assert!(propagate(&g, 0, &SpreadConfig::exact(vec![0.0]), 1).is_err());
    }

    #[test]
    fn csv_marks_unreached() {
        let g = crate::graph::gen_chain(1, &[vec![2.0], vec![3.0]]).unwrap();
        let tr = propagate(&g, 1, &SpreadConfig::exact(vec![1.0]), 1).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,node,first_arrival,linf_error_to_target\n0,0,-1,"));
    }

    #[test]
    fn mlp_fits_the_weight() {
        let r = fit_smooth_weight(&FitConfig { epochs: 300, ..Default::default() }).unwrap();
        assert!(r.final_mse < r.initial_mse / 10.0, "{r:?}");
    }
}
