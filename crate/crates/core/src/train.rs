//! Full-batch training: graph cross-entropy for classification, mean squared
//! error for distillation, SGD or Adam.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{Dataset, Graph};
use crate::layers::{forward, EdgeMode, Model, ModelConfig};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub phi0_v_hidden: Vec<usize>,
    pub phi0_e_hidden: Vec<usize>,
    pub phi_v_hidden: Vec<usize>,
    pub phi_e_hidden: Vec<usize>,
    pub readout_hidden: Vec<usize>,
    pub share_weights: bool,
    pub share_eps: bool,
    pub edge_mode: EdgeMode,
    /// Train the edge-ablated configuration.
    pub ablate_edges: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-2,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            hidden_dim: 16,
            num_layers: 2,
            phi0_v_hidden: vec![],
            phi0_e_hidden: vec![],
            phi_v_hidden: vec![16],
            phi_e_hidden: vec![16],
            readout_hidden: vec![16],
            share_weights: true,
            share_eps: true,
            edge_mode: EdgeMode::Directed,
            ablate_edges: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid("epochs must be positive"));
        }
        // lr = 0 is allowed: it is the "nothing moves" control run
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(invalid("learning rate must be finite and non-negative"));
        }
        if self.hidden_dim == 0 {
            return Err(invalid("hidden_dim must be at least 1"));
        }
        Ok(())
    }

    pub fn model_config(&self, input_dim: usize, edge_dim: usize, readout_dim: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            edge_dim,
            hidden_dim: self.hidden_dim,
            num_layers: self.num_layers,
            phi0_v_hidden: self.phi0_v_hidden.clone(),
            phi0_e_hidden: self.phi0_e_hidden.clone(),
            phi_v_hidden: self.phi_v_hidden.clone(),
            phi_e_hidden: self.phi_e_hidden.clone(),
            readout_hidden: self.readout_hidden.clone(),
            readout_dim,
            share_weights: self.share_weights,
            share_eps: self.share_eps,
            edge_mode: self.edge_mode,
            frozen: vec![],
        }
    }

    /// Fresh model for `data`, seeded from `self.seed`.
    pub fn init_model<T: Scalar>(&self, data: &Dataset) -> Result<Model<T>> {
        self.validate()?;
        let (d_in, d_e) = data
            .feature_dim()
            .zip(data.edge_dim())
            .ok_or(Error::Empty("dataset"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut model = Model::new(self.model_config(d_in, d_e, data.num_classes), &mut rng)?;
        if self.ablate_edges {
            model.ablate_edges();
        }
        Ok(model)
    }
}

/// `−log softmax(logits)[label]`.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, label: usize) -> Result<T> {
    let mut tape = Tape::new();
    let x = tape.constant(logits.clone());
    let l = tape.cross_entropy(x, label)?;
    Ok(tape.value(l).data()[0])
}

/// SGD or Adam (β₁ = 0.9, β₂ = 0.999, ε = 1e-8) state for one parameter list.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    step: i32,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, params: &[Tensor<T>]) -> Self {
        let zeros = || params.iter().map(Tensor::zeros_like).collect();
        Self {
            kind,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// One update of `params` in place.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>], lr: T) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(invalid(format!(
                "{} parameters, {} gradients, optimizer built for {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "optimizer_step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (x, &dx) in p.data_mut().iter_mut().zip(g.data()) {
                        *x -= lr * dx;
                    }
                }
            }
            OptimizerKind::Adam => {
                let b1 = T::constant(0.9);
                let b2 = T::constant(0.999);
                let eps = T::constant(1e-8);
                let one = T::one();
                let c1 = one - b1.powi(self.step);
                let c2 = one - b2.powi(self.step);
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = self.m[i].data_mut();
                    let v = self.v[i].data_mut();
                    for (j, (x, &dx)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[j] = b1 * m[j] + (one - b1) * dx;
                        v[j] = b2 * v[j] + (one - b2) * dx * dx;
                        let m_hat = m[j] / c1;
                        let v_hat = v[j] / c2;
                        *x -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

/// Per-epoch metrics (measured before that epoch's update) and the metrics
/// of the final parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    pub final_loss: f64,
    pub final_accuracy: Option<f64>,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.epochs.first().map_or(self.final_loss, |e| e.loss)
    }

    /// `epoch,loss,accuracy`; the final parameters appear as epoch `len`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "loss", "accuracy"])?;
        let fmt = |a: Option<f64>| a.map(|a| a.to_string()).unwrap_or_default();
        for e in &self.epochs {
            out.write_record([e.epoch.to_string(), e.loss.to_string(), fmt(e.accuracy)])?;
        }
        out.write_record([
            self.epochs.len().to_string(),
            self.final_loss.to_string(),
            fmt(self.final_accuracy),
        ])?;
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn check_data(data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    Ok(())
}

/// Loss and analytic gradients of `objective` summed over the dataset and
/// divided by its size. Returns the mean loss, per-parameter gradients in
/// canonical order, and the per-graph outputs.
fn full_batch<T, F>(
    model: &Model<T>,
    graphs: &[Graph],
    mut objective: F,
) -> Result<(T, Vec<Tensor<T>>, Vec<Tensor<T>>)>
where
    T: Scalar,
    F: FnMut(&mut Tape<T>, usize, &crate::layers::ForwardVars) -> Result<(Var, Var)>,
{
    let mut tape = Tape::new();
    let (vars, bound) = model.bind_params(&mut tape);
    let mut total: Option<Var> = None;
    let mut outputs = Vec::with_capacity(graphs.len());
    for (i, g) in graphs.iter().enumerate() {
        let fv = model.forward_on_tape(&mut tape, &vars, g)?;
        let (loss, out) = objective(&mut tape, i, &fv)?;
        outputs.push(out);
        total = Some(match total {
            Some(t) => tape.add(t, loss)?,
            None => loss,
        });
    }
    let total = total.ok_or(Error::Empty("dataset"))?;
    let mean = tape.scale_const(total, T::one() / T::from_f64_lossy(graphs.len() as f64));
    let grads = tape.backward(mean)?;
    let params = model.params();
    let grad_list = bound
        .iter()
        .zip(&params)
        .map(|((_, v), p)| grads.get_or_zeros(*v, p))
        .collect();
    let outs = outputs.iter().map(|&v| tape.value(v).clone()).collect();
    Ok((tape.value(mean).data()[0], grad_list, outs))
}

fn accuracy<T: Scalar>(graphs: &[Graph], logits: &[Tensor<T>]) -> f64 {
    let hits = graphs
        .iter()
        .zip(logits)
        .filter(|(g, l)| g.label().is_some() && l.argmax() == g.label())
        .count();
    hits as f64 / graphs.len() as f64
}

fn apply_update<T: Scalar>(
    model: &mut Model<T>,
    opt: &mut Optimizer<T>,
    grads: &[Tensor<T>],
    lr: T,
) -> Result<()> {
    let mut params = model.params();
    let names = model.param_names();
    // frozen parameters stay put even under Adam
    let grads: Vec<Tensor<T>> = grads
        .iter()
        .zip(&names)
        .map(|(g, n)| if model.is_frozen(n) { Tensor::zeros_like(g) } else { g.clone() })
        .collect();
    opt.step(&mut params, &grads, lr)?;
    model.set_params(&params)
}

fn run_loop<T, F>(
    model: &mut Model<T>,
    data: &Dataset,
    cfg: &TrainConfig,
    mut epoch_fn: F,
) -> Result<TrainReport>
where
    T: Scalar,
    F: FnMut(&Model<T>) -> Result<(T, Vec<Tensor<T>>, Option<f64>)>,
{
    cfg.validate()?;
    check_data(data)?;
    let mut opt = Optimizer::new(cfg.optimizer, &model.params());
    let lr = T::from_f64_lossy(cfg.lr);
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (loss, grads, acc) = epoch_fn(model)?;
        let loss = loss.to_f64_exact();
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        epochs.push(EpochMetrics {
            epoch,
            loss,
            accuracy: acc,
        });
        apply_update(model, &mut opt, &grads, lr)?;
    }
    let (loss, _, acc) = epoch_fn(model)?;
    let final_loss = loss.to_f64_exact();
    if !final_loss.is_finite() {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            loss: final_loss,
        });
    }
    Ok(TrainReport {
        epochs,
        final_loss,
        final_accuracy: acc,
    })
}

/// Full-batch training on mean graph cross-entropy. Every graph needs a label.
pub fn train<T: Scalar>(model: &mut Model<T>, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    let labels = data
        .graphs
        .iter()
        .enumerate()
        .map(|(i, g)| {
            g.label().ok_or_else(|| Error::InvalidGraph {
                graph: i,
                message: "training needs a label".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    run_loop(model, data, cfg, |m| {
        let (loss, grads, logits) = full_batch(m, &data.graphs, |tape, i, fv| {
            Ok((tape.cross_entropy(fv.embedding, labels[i])?, fv.embedding))
        })?;
        Ok((loss, grads, Some(accuracy(&data.graphs, &logits))))
    })
}

/// Mean cross-entropy and accuracy of `model` on labelled `data`.
pub fn evaluate<T: Scalar>(model: &Model<T>, data: &Dataset) -> Result<(f64, f64)> {
    check_data(data)?;
    let mut loss = 0.0;
    let mut hits = 0;
    for (i, g) in data.graphs.iter().enumerate() {
        let label = g.label().ok_or_else(|| Error::InvalidGraph {
            graph: i,
            message: "evaluation needs a label".into(),
        })?;
        let logits = forward(model, g)?.embedding;
        loss += cross_entropy(&logits, label)?.to_f64_exact();
        hits += usize::from(logits.argmax() == Some(label));
    }
    let n = data.len() as f64;
    Ok((loss / n, hits as f64 / n))
}

/// Which student output is regressed onto the teacher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistillOutput {
    /// `H^K`, compared node by node.
    #[default]
    FinalNodeStates,
    /// The readout output.
    Embedding,
}

/// Trains `student` to match frozen per-graph targets under mean squared
/// error (averaged over entries within a graph, then over graphs).
pub fn distill<T, F>(
    target_fn: F,
    student: &mut Model<T>,
    data: &Dataset,
    output: DistillOutput,
    cfg: &TrainConfig,
) -> Result<TrainReport>
where
    T: Scalar,
    F: Fn(&Graph) -> Result<Tensor<T>>,
{
    check_data(data)?;
    let targets = data.graphs.iter().map(&target_fn).collect::<Result<Vec<_>>>()?;
    run_loop(student, data, cfg, |m| {
        let (loss, grads, _) = full_batch(m, &data.graphs, |tape, i, fv| {
            let out = match output {
                DistillOutput::FinalNodeStates => *fv.node_states.last().expect("H⁰ exists"),
                DistillOutput::Embedding => fv.embedding,
            };
            Ok((tape.mean_squared_error(out, &targets[i])?, out))
        })?;
        Ok((loss, grads, None))
    })
}

/// Analytic gradient of the mean training cross-entropy, in canonical parameter order.
pub fn loss_and_gradients<T: Scalar>(model: &Model<T>, data: &Dataset) -> Result<(T, Vec<Tensor<T>>)> {
    check_data(data)?;
    let (loss, grads, _) = full_batch(model, &data.graphs, |tape, i, fv| {
        let label = data.graphs[i].label().ok_or_else(|| Error::InvalidGraph {
            graph: i,
            message: "needs a label".into(),
        })?;
        Ok((tape.cross_entropy(fv.embedding, label)?, fv.embedding))
    })?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::gen_edge_task;

    #[test]
    fn cross_entropy_values() {
        assert!((cross_entropy(&Tensor::from_vec(vec![0.0, 0.0]), 0).unwrap() - 2f64.ln()).abs() < 1e-15);
        let v = cross_entropy(&Tensor::from_vec(vec![10.0, -10.0]), 0).unwrap();
        let expected = (1.0 + (-20f64).exp()).ln();
        assert!((v - expected).abs() < 1e-20 && (v - 2.06e-9).abs() < 1e-11);
        assert!(cross_entropy(&Tensor::from_vec(vec![1.0, 2.0]), 2).is_err());
    }

    #[test]
    fn sgd_step() {
        let mut p: Vec<Tensor<f64>> = vec![Tensor::from_vec(vec![1.0])];
        let g = vec![Tensor::from_vec(vec![2.0])];
        let mut opt = Optimizer::new(OptimizerKind::Sgd, &p);
        opt.step(&mut p, &g, 0.1).unwrap();
        assert!((p[0].data()[0] - 0.8).abs() < 1e-15);
        opt.step(&mut p, &[Tensor::from_vec(vec![0.0])], 0.1).unwrap();
        assert!((p[0].data()[0] - 0.8).abs() < 1e-15);
        assert!(opt.step(&mut p, &[], 0.1).is_err());
    }

    #[test]
    fn adam_first_step_is_lr() {
        let mut p: Vec<Tensor<f64>> = vec![Tensor::from_vec(vec![0.0, 5.0])];
        let mut opt = Optimizer::new(OptimizerKind::Adam, &p);
        opt.step(&mut p, &[Tensor::from_vec(vec![1.0, 1.0])], 0.01).unwrap();
        assert!((p[0].data()[0] + 0.01).abs() < 1e-9);
        assert!((p[0].data()[1] - 4.99).abs() < 1e-9);
    }

    fn tiny() -> (Dataset, TrainConfig) {
        let data = gen_edge_task(3, 4, (2, 5), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            hidden_dim: 4,
            phi_v_hidden: vec![4],
            phi_e_hidden: vec![4],
            readout_hidden: vec![4],
            ..Default::default()
        };
        (data, cfg)
    }

    #[test]
    fn zero_lr_changes_nothing() {
        let (data, mut cfg) = tiny();
        cfg.lr = 0.0;
        let mut model = cfg.init_model::<f64>(&data).unwrap();
        let before = model.clone();
        let report = train(&mut model, &data, &cfg).unwrap();
        assert_eq!(model, before);
        assert!(report.epochs.iter().all(|e| e.loss == report.final_loss));
    }

    #[test]
    fn deterministic_reports() {
        let (data, cfg) = tiny();
        let run = || {
            let mut m = cfg.init_model::<f64>(&data).unwrap();
            train(&mut m, &data, &cfg).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let (data, mut cfg) = tiny();
        cfg.ablate_edges = true;
        let mut model = cfg.init_model::<f64>(&data).unwrap();
        let before = model.phi0_e.clone();
        train(&mut model, &data, &cfg).unwrap();
        assert_eq!(model.phi0_e, before);
    }

    #[test]
    fn self_distillation_starts_at_zero() {
        let (data, cfg) = tiny();
        let mut student = cfg.init_model::<f64>(&data).unwrap();
        let teacher = student.clone();
        let target = |g: &Graph| Ok(forward(&teacher, g)?.node_states.pop().unwrap());
        let report = distill(target, &mut student, &data, DistillOutput::FinalNodeStates, &cfg).unwrap();
        assert_eq!(report.initial_loss(), 0.0);
    }

    #[test]
    fn csv_layout() {
        let report = TrainReport {
            epochs: vec![EpochMetrics { epoch: 0, loss: 0.5, accuracy: Some(1.0) }],
            final_loss: 0.25,
            final_accuracy: None,
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,loss,accuracy\n0,0.5,1\n1,0.25,\n");
    }
}
