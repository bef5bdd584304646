//! Self-checking experiments behind `gated-gin verify`. Each suite builds
//! its own random instances from a seed and reports pass/fail with the
//! measured quantities.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::finite_diff::{grad_finite_diff, gradient_error_ratio};
use crate::graph::{fixtures, random_graph, Dataset, Graph, RandomGraphSpec};
use crate::layers::{forward, make_gin_equivalent_params, EdgeMode, GinModel, Model, ModelConfig};
use crate::tensor::Tensor;
use crate::train::{cross_entropy, loss_and_gradients};
use crate::wl::wl_distinguish;

/// Tolerances used by the suites.
pub const GIN_EQUIVALENCE_TOL: f64 = 1e-10;
pub const PERMUTATION_TOL: f64 = 1e-9;
pub const GRAD_REL_TOL: f64 = 1e-4;
pub const GRAD_ABS_TOL: f64 = 1e-7;
pub const GRAD_ABS_FLOOR: f64 = 1e-3;
pub const FD_STEP: f64 = 1e-5;
pub const SEPARATION_GAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    GinEquivalence,
    Permutation,
    Gradcheck,
    CorollarySeparation,
    WlAgreement,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::GinEquivalence,
        Suite::Permutation,
        Suite::Gradcheck,
        Suite::CorollarySeparation,
        Suite::WlAgreement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::GinEquivalence => "gin-equivalence",
            Suite::Permutation => "permutation",
            Suite::Gradcheck => "gradcheck",
            Suite::CorollarySeparation => "corollary-separation",
            Suite::WlAgreement => "wl-agreement",
        }
    }

    pub fn run(self, seed: u64) -> Result<SuiteReport> {
        let mut r = SuiteReport::new(self.name());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Suite::GinEquivalence => gin_equivalence(&mut rng, &mut r)?,
            Suite::Permutation => permutation(&mut rng, &mut r)?,
            Suite::Gradcheck => gradcheck(&mut rng, &mut r)?,
            Suite::CorollarySeparation => corollary_separation(&mut rng, &mut r)?,
            Suite::WlAgreement => wl_agreement(&mut rng, &mut r)?,
        }
        Ok(r)
    }
}

impl FromStr for Suite {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| invalid(format!("unknown suite {s:?}")))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub checks: Vec<(String, bool)>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checks: Vec::new(),
        }
    }

    fn check(&mut self, what: String, ok: bool) {
        self.checks.push((what, ok));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (what, ok) in &self.checks {
            writeln!(f, "[{}] {}: {what}", if *ok { "PASS" } else { "FAIL" }, self.name)?;
        }
        Ok(())
    }
}

/// Max absolute deviation between two tensor lists of equal shapes.
pub fn max_deviation(a: &[Tensor<f64>], b: &[Tensor<f64>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(invalid("tensor lists differ in length"));
    }
    a.iter()
        .zip(b)
        .try_fold(0.0f64, |m, (x, y)| Ok(m.max(x.max_abs_diff(y)?)))
}

fn gin_graph_spec() -> RandomGraphSpec {
    RandomGraphSpec {
        max_nodes: 12,
        ..Default::default()
    }
}

/// Worst node-state / embedding deviation between `gin` and its Gated-GIN
/// embedding at saturation `b`, and whether every edge state was exactly one.
pub fn gin_equivalence_deviation(gin: &GinModel<f64>, graphs: &[Graph], b: f64) -> Result<(f64, bool)> {
    let edge_dim = graphs.first().map_or(1, Graph::edge_dim);
    let model = make_gin_equivalent_params(gin, b, edge_dim)?;
    let mut worst = 0.0f64;
    let mut ones = true;
    for g in graphs {
        let reference = gin.forward(g)?;
        let out = forward(&model, g)?;
        worst = worst
            .max(max_deviation(&reference.node_states, &out.node_states)?)
            .max(reference.embedding.max_abs_diff(&out.embedding)?);
        ones &= out.edge_states.iter().all(|e| e.data().iter().all(|&x| x == 1.0));
    }
    Ok((worst, ones))
}

fn gin_equivalence(rng: &mut ChaCha8Rng, r: &mut SuiteReport) -> Result<()> {
    let spec = gin_graph_spec();
    let mut worst = 0.0f64;
    let mut ones = true;
    let mut monotone = true;
    for _ in 0..10 {
        let gin = GinModel::random(rng, spec.feature_dim, 8, 3, &[8], 2)?;
        let graphs: Vec<Graph> = (0..20).map(|_| random_graph(rng, &spec)).collect();
        let (dev, all_ones) = gin_equivalence_deviation(&gin, &graphs, 50.0)?;
        worst = worst.max(dev);
        ones &= all_ones;
        let sweep = [2.0, 10.0, 50.0]
            .iter()
            .map(|&b| Ok(gin_equivalence_deviation(&gin, &graphs, b)?.0))
            .collect::<Result<Vec<_>>>()?;
        monotone &= sweep[0] > sweep[1] && sweep[1] > sweep[2];
    }
    r.check(
        format!("max deviation at B=50 is {worst:.3e} (< {GIN_EQUIVALENCE_TOL:e})"),
        worst < GIN_EQUIVALENCE_TOL,
    );
    r.check("every edge state is exactly one".into(), ones);
    r.check("deviation strictly decreases over B = 2, 10, 50".into(), monotone);
    Ok(())
}

/// A random permutation of `0..n`.
pub fn random_permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut pi: Vec<usize> = (0..n).collect();
    pi.shuffle(rng);
    pi
}

fn random_config<R: Rng + ?Sized>(rng: &mut R, spec: &RandomGraphSpec) -> ModelConfig {
    let d = rng.gen_range(2..=6);
    ModelConfig {
        input_dim: spec.feature_dim,
        edge_dim: spec.edge_dim,
        hidden_dim: d,
        num_layers: rng.gen_range(0..=3),
        phi_v_hidden: vec![d],
        phi_e_hidden: vec![d],
        readout_hidden: vec![d],
        readout_dim: 2,
        share_weights: rng.gen_bool(0.5),
        share_eps: rng.gen_bool(0.5),
        edge_mode: if rng.gen_bool(0.5) { EdgeMode::Directed } else { EdgeMode::Symmetric },
        ..Default::default()
    }
}

/// Largest violation of equivariance (node and edge states) and invariance
/// (embedding) for one model, graph and permutation.
pub fn permutation_deviation(model: &Model<f64>, g: &Graph, pi: &[usize]) -> Result<f64> {
    let a = forward(model, g)?;
    let b = forward(model, &g.permute(pi)?)?;
    let mut worst = a.embedding.max_abs_diff(&b.embedding)?;
    for (ha, hb) in a.node_states.iter().zip(&b.node_states) {
        for (v, &pv) in pi.iter().enumerate() {
            for (x, y) in ha.row(v).iter().zip(hb.row(pv)) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    // permute keeps edge order, so edge states line up index by index
    worst = worst.max(max_deviation(&a.edge_states, &b.edge_states)?);
    Ok(worst)
}

fn permutation(rng: &mut ChaCha8Rng, r: &mut SuiteReport) -> Result<()> {
    let spec = RandomGraphSpec {
        self_loops: true,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let g = random_graph(rng, &spec);
        let pi = random_permutation(rng, g.num_nodes());
        let model = Model::new(random_config(rng, &spec), rng)?;
        worst = worst.max(permutation_deviation(&model, &g, &pi)?);
    }
    r.check(
        format!("50 triples, max deviation {worst:.3e} (< {PERMUTATION_TOL:e})"),
        worst < PERMUTATION_TOL,
    );
    Ok(())
}

/// Jitters every parameter so biases and epsilons are away from zero.
pub fn jitter<R: Rng + ?Sized>(model: &mut Model<f64>, rng: &mut R, amount: f64) {
    model.for_each_param_mut(&mut |_, t| {
        for x in t.data_mut() {
            *x += rng.gen_range(-amount..=amount);
        }
    });
}

/// Worst gradient error ratio (≤ 1 means within tolerance) of the mean
/// cross-entropy over `data`.
pub fn gradient_check(model: &Model<f64>, data: &Dataset) -> Result<f64> {
    let (_, analytic) = loss_and_gradients(model, data)?;
    let mut probe = model.clone();
    let loss = |params: &[Tensor<f64>]| -> f64 {
        probe.set_params(params).expect("same layout");
        let mut total = 0.0;
        for g in &data.graphs {
            let logits = forward(&probe, g).expect("valid graph").embedding;
            total += cross_entropy(&logits, g.label().expect("labelled")).expect("label in range");
        }
        total / data.len() as f64
    };
    let numeric = grad_finite_diff(loss, &model.params(), FD_STEP);
    Ok(gradient_error_ratio(&analytic, &numeric, GRAD_REL_TOL, GRAD_ABS_TOL, GRAD_ABS_FLOOR))
}

fn gradcheck(rng: &mut ChaCha8Rng, r: &mut SuiteReport) -> Result<()> {
    let spec = RandomGraphSpec {
        min_nodes: 4,
        max_nodes: 4,
        edge_prob: 0.5,
        ..Default::default()
    };
    let g = random_graph(rng, &spec).with_label(Some(1));
    let data = Dataset::new(vec![g], 2)?;
    for (share, share_eps, mode) in [
        (false, true, EdgeMode::Directed),
        (true, true, EdgeMode::Symmetric),
        (true, false, EdgeMode::Directed),
    ] {
        let cfg = ModelConfig {
            input_dim: spec.feature_dim,
            edge_dim: spec.edge_dim,
            hidden_dim: 4,
            num_layers: 2,
            phi_v_hidden: vec![4],
            phi_e_hidden: vec![4],
            readout_hidden: vec![4],
            share_weights: share,
            share_eps,
            edge_mode: mode,
            ..Default::default()
        };
        let mut model = Model::new(cfg, rng)?;
        jitter(&mut model, rng, 0.3);
        let ratio = gradient_check(&model, &data)?;
        r.check(
            format!(
                "K=2 d=4 share_weights={share} share_eps={share_eps} {mode:?}: worst error ratio {ratio:.3} (<= 1)"
            ),
            ratio <= 1.0,
        );
    }
    Ok(())
}

/// Embedding gap between two graphs.
pub fn embedding_gap(model: &Model<f64>, a: &Graph, b: &Graph) -> Result<f64> {
    forward(model, a)?.embedding.max_abs_diff(&forward(model, b)?.embedding)
}

fn corollary_separation(rng: &mut ChaCha8Rng, r: &mut SuiteReport) -> Result<()> {
    let spec = RandomGraphSpec {
        min_nodes: 4,
        max_nodes: 8,
        edge_prob: 0.4,
        ..Default::default()
    };
    let mut g1 = random_graph(rng, &spec);
    while g1.num_edges() == 0 {
        g1 = random_graph(rng, &spec);
    }
    let attrs = g1.edges().iter().map(|e| e.attr.iter().map(|x| -x).collect()).collect();
    let g2 = g1.with_edge_attrs(attrs)?;
    let cfg = ModelConfig {
        input_dim: spec.feature_dim,
        edge_dim: spec.edge_dim,
        hidden_dim: 8,
        num_layers: 2,
        ..Default::default()
    };
    let mut gated = Model::new(cfg, rng)?;
    jitter(&mut gated, rng, 0.1);
    let gap = embedding_gap(&gated, &g1, &g2)?;
    r.check(
        format!("Gated-GIN separates graphs differing only in edge attributes: gap {gap:.3e} (> {SEPARATION_GAP:e})"),
        gap > SEPARATION_GAP,
    );
    let gin = GinModel::random(rng, spec.feature_dim, 8, 2, &[8], 2)?;
    let equiv = make_gin_equivalent_params(&gin, 50.0, spec.edge_dim)?;
    let gap = embedding_gap(&equiv, &g1, &g2)?;
    r.check(
        format!("GIN-equivalent configuration cannot: gap {gap:.3e} (<= {GIN_EQUIVALENCE_TOL:e})"),
        gap <= GIN_EQUIVALENCE_TOL,
    );
    Ok(())
}

/// WL fixture pairs with their expected verdicts.
pub fn wl_fixture_pairs<R: Rng + ?Sized>(rng: &mut R) -> Result<Vec<(String, Graph, Graph, bool)>> {
    let mut pairs = vec![
        ("triangle vs path3".to_string(), fixtures::triangle(), fixtures::path(3), true),
        ("cycle6 vs two-triangles".to_string(), fixtures::cycle(6), fixtures::two_triangles(), false),
    ];
    let singles = [
        ("triangle", fixtures::triangle()),
        ("path3", fixtures::path(3)),
        ("cycle6", fixtures::cycle(6)),
        ("two-triangles", fixtures::two_triangles()),
        ("star4", fixtures::star(4)),
    ];
    for (name, g) in singles {
        let pi = random_permutation(rng, g.num_nodes());
        let p = g.permute(&pi)?;
        pairs.push((format!("{name} vs a permutation of itself"), g, p, false));
    }
    Ok(pairs)
}

fn wl_agreement(rng: &mut ChaCha8Rng, r: &mut SuiteReport) -> Result<()> {
    for (name, a, b, expected) in wl_fixture_pairs(rng)? {
        let got = wl_distinguish(&a, &b, 10);
        r.check(format!("{name}: distinguished={got} (expected {expected})"), got == expected);
        let mut separated = 0;
        let mut worst_equal = 0.0f64;
        for _ in 0..5 {
            let gin = GinModel::random(rng, 1, 16, 3, &[16], 2)?;
            let model = make_gin_equivalent_params(&gin, 50.0, 1)?;
            let gap = embedding_gap(&model, &a, &b)?;
            separated += usize::from(gap > SEPARATION_GAP);
            worst_equal = worst_equal.max(gap);
        }
        if got {
            r.check(
                format!("{name}: GIN-equivalent Gated-GIN separates in {separated}/5 seeds (>= 4)"),
                separated >= 4,
            );
        } else {
            r.check(
                format!("{name}: GIN-equivalent Gated-GIN gap {worst_equal:.3e} (<= {PERMUTATION_TOL:e})"),
                worst_equal <= PERMUTATION_TOL,
            );
        }
    }
    Ok(())
}

/// Runs every suite in order.
pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    Suite::ALL.iter().map(|s| s.run(seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("everything".parse::<Suite>().is_err());
    }

    #[test]
    fn every_suite_passes() {
        for report in run_all(7).unwrap() {
            assert!(report.passed(), "{report}");
        }
    }
}
