use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bind::Binder;
use crate::error::{invalid, Result};
use crate::graph::Graph;
use crate::mlp::{MlpParams, MlpVars};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::baselines::GinModel;
use super::gated::{edge_conv_vars, node_conv_vars};
use super::{EdgeMode, GatedGinLayerParams, GatedGinLayerVars, GraphInputs};

/// Architecture hyperparameters; stored verbatim in the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub edge_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub phi0_v_hidden: Vec<usize>,
    pub phi0_e_hidden: Vec<usize>,
    pub phi_v_hidden: Vec<usize>,
    pub phi_e_hidden: Vec<usize>,
    pub readout_hidden: Vec<usize>,
    pub readout_dim: usize,
    pub share_weights: bool,
    /// Only meaningful with `share_weights`: `false` gives every layer its own epsilon.
    pub share_eps: bool,
    pub edge_mode: EdgeMode,
    /// Parameter names excluded from training.
    pub frozen: Vec<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 1,
            edge_dim: 1,
            hidden_dim: 16,
            num_layers: 2,
            phi0_v_hidden: vec![],
            phi0_e_hidden: vec![],
            phi_v_hidden: vec![16],
            phi_e_hidden: vec![16],
            readout_hidden: vec![16],
            readout_dim: 2,
            share_weights: true,
            share_eps: true,
            edge_mode: EdgeMode::Directed,
            frozen: vec![],
        }
    }
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = Vec::with_capacity(hidden.len() + 2);
    v.push(input);
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

pub(crate) fn hidden_widths<T: Scalar>(mlp: &MlpParams<T>) -> Vec<usize> {
    let layers = mlp.layers();
    layers[..layers.len() - 1]
        .iter()
        .map(|l| l.weight.shape()[0])
        .collect()
}

/// A Gated-GIN: input embeddings, `K` gated layers (one shared parameter set
/// or `K` distinct ones), sum pooling and a readout MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    pub phi0_v: MlpParams<T>,
    pub phi0_e: MlpParams<T>,
    layers: Vec<GatedGinLayerParams<T>>,
    layer_eps: Option<Vec<Tensor<T>>>,
    pub readout: MlpParams<T>,
    frozen: BTreeSet<String>,
}

/// Tape handles for a whole model.
#[derive(Debug, Clone)]
pub struct ModelVars {
    pub phi0_v: MlpVars,
    pub phi0_e: MlpVars,
    /// One entry when weights are shared.
    pub layers: Vec<GatedGinLayerVars>,
    /// Epsilon used at each of the `K` layers.
    pub eps: Vec<Var>,
    pub readout: MlpVars,
    pub shared: bool,
    pub edge_mode: EdgeMode,
}

#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub node_states: Vec<Var>,
    pub edge_states: Vec<Var>,
    pub embedding: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    /// `H⁰ … H^K`, each `[n × d]`.
    pub node_states: Vec<Tensor<T>>,
    /// Edge states for layers `0 … K`, each `[m × d]`.
    pub edge_states: Vec<Tensor<T>>,
    pub embedding: Tensor<T>,
}

impl ModelVars {
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, gi: &GraphInputs) -> Result<ForwardVars> {
        let mut h = self.phi0_v.apply(tape, gi.features)?;
        let mut e = self.phi0_e.apply(tape, gi.edge_attrs)?;
        let mut node_states = vec![h];
        let mut edge_states = vec![e];
        for (k, &eps) in self.eps.iter().enumerate() {
            let lv = &self.layers[if self.shared { 0 } else { k }];
            // both updates read layer k-1 only
            let h_next = node_conv_vars(tape, lv, eps, h, e, gi)?;
            let e_next = edge_conv_vars(tape, lv, self.edge_mode, h, e, gi)?;
            h = h_next;
            e = e_next;
            node_states.push(h);
            edge_states.push(e);
        }
        let pooled = tape.sum_rows(h);
        let embedding = self.readout.apply(tape, pooled)?;
        Ok(ForwardVars {
            node_states,
            edge_states,
            embedding,
        })
    }
}

impl<T: Scalar> Model<T> {
    /// Randomly initialized model.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let d = config.hidden_dim;
        if d == 0 || config.input_dim == 0 || config.edge_dim == 0 || config.readout_dim == 0 {
            return Err(invalid("model widths must be positive"));
        }
        let phi0_v = MlpParams::glorot(rng, &widths(config.input_dim, &config.phi0_v_hidden, d))?;
        let phi0_e = MlpParams::glorot(rng, &widths(config.edge_dim, &config.phi0_e_hidden, d))?;
        let sets = if config.share_weights { 1 } else { config.num_layers };
        let layers = (0..sets)
            .map(|_| {
                GatedGinLayerParams::glorot(
                    rng,
                    d,
                    config.edge_mode,
                    &config.phi_v_hidden,
                    &config.phi_e_hidden,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let layer_eps = (config.share_weights && !config.share_eps)
            .then(|| vec![Tensor::scalar(T::zero()); config.num_layers]);
        let readout = MlpParams::glorot(rng, &widths(d, &config.readout_hidden, config.readout_dim))?;
        Self::from_parts(config, phi0_v, phi0_e, layers, layer_eps, readout)
    }

    pub fn from_parts(
        config: ModelConfig,
        phi0_v: MlpParams<T>,
        phi0_e: MlpParams<T>,
        layers: Vec<GatedGinLayerParams<T>>,
        layer_eps: Option<Vec<Tensor<T>>>,
        readout: MlpParams<T>,
    ) -> Result<Self> {
        let mut config = config;
        let d = config.hidden_dim;
        if phi0_v.input_dim() != config.input_dim || phi0_v.output_dim() != d {
            return Err(invalid(format!("phi0_V must map {} -> {d}", config.input_dim)));
        }
        if phi0_e.input_dim() != config.edge_dim || phi0_e.output_dim() != d {
            return Err(invalid(format!("phi0_E must map {} -> {d}", config.edge_dim)));
        }
        if readout.input_dim() != d || readout.output_dim() != config.readout_dim {
            return Err(invalid(format!("readout must map {d} -> {}", config.readout_dim)));
        }
        let sets = if config.share_weights { 1 } else { config.num_layers };
        if layers.len() != sets {
            return Err(invalid(format!(
                "expected {sets} layer parameter sets, got {}",
                layers.len()
            )));
        }
        for l in &layers {
            l.validate()?;
            if l.d != d || l.edge_mode != config.edge_mode {
                return Err(invalid("layer width or edge mode disagrees with the config"));
            }
        }
        let wants_eps = config.share_weights && !config.share_eps;
        match &layer_eps {
            Some(eps) if wants_eps => {
                if eps.len() != config.num_layers || eps.iter().any(|e| e.shape() != [1]) {
                    return Err(invalid("one scalar epsilon per layer required"));
                }
            }
            None if !wants_eps => {}
            _ => return Err(invalid("per-layer epsilons exist only with shared weights and share_eps = false")),
        }
        let frozen = std::mem::take(&mut config.frozen).into_iter().collect();
        Ok(Self {
            config,
            phi0_v,
            phi0_e,
            layers,
            layer_eps,
            readout,
            frozen,
        })
    }

    pub fn config(&self) -> ModelConfig {
        let mut c = self.config.clone();
        c.frozen = self.frozen.iter().cloned().collect();
        c
    }

    pub fn num_layers(&self) -> usize {
        self.config.num_layers
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn edge_mode(&self) -> EdgeMode {
        self.config.edge_mode
    }

    pub fn share_weights(&self) -> bool {
        self.config.share_weights
    }

    /// Parameter sets: one when shared, otherwise one per layer.
    pub fn layer_sets(&self) -> &[GatedGinLayerParams<T>] {
        &self.layers
    }

    pub fn layer_sets_mut(&mut self) -> &mut [GatedGinLayerParams<T>] {
        &mut self.layers
    }

    /// Parameters used at layer `k` (0-based).
    pub fn layer(&self, k: usize) -> &GatedGinLayerParams<T> {
        &self.layers[if self.config.share_weights { 0 } else { k }]
    }

    /// Epsilon used at layer `k`.
    pub fn eps(&self, k: usize) -> &Tensor<T> {
        match &self.layer_eps {
            Some(eps) => &eps[k],
            None => &self.layer(k).eps_v,
        }
    }

    fn layer_prefix(&self, k: usize) -> String {
        if self.config.share_weights {
            "layer.shared".to_string()
        } else {
            format!("layer.{k}")
        }
    }

    /// Visits every parameter tensor with its canonical name.
    pub fn for_each_param(&self, f: &mut dyn FnMut(String, &Tensor<T>)) {
        self.phi0_v.for_each("phi0_V", f);
        self.phi0_e.for_each("phi0_E", f);
        let with_eps = self.layer_eps.is_none();
        for (k, l) in self.layers.iter().enumerate() {
            l.for_each(&self.layer_prefix(k), with_eps, f);
        }
        if let Some(eps) = &self.layer_eps {
            for (k, e) in eps.iter().enumerate() {
                f(format!("layer.{k}.eps_V"), e);
            }
        }
        self.readout.for_each("readout", f);
    }

    pub fn for_each_param_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.phi0_v.for_each_mut("phi0_V", f);
        self.phi0_e.for_each_mut("phi0_E", f);
        let with_eps = self.layer_eps.is_none();
        let prefixes: Vec<String> = (0..self.layers.len()).map(|k| self.layer_prefix(k)).collect();
        for (l, prefix) in self.layers.iter_mut().zip(&prefixes) {
            l.for_each_mut(prefix, with_eps, f);
        }
        if let Some(eps) = &mut self.layer_eps {
            for (k, e) in eps.iter_mut().enumerate() {
                f(format!("layer.{k}.eps_V"), e);
            }
        }
        self.readout.for_each_mut("readout", f);
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.for_each_param(&mut |n, _| names.push(n));
        names
    }

    /// Clones of every parameter in canonical order.
    pub fn params(&self) -> Vec<Tensor<T>> {
        let mut out = Vec::new();
        self.for_each_param(&mut |_, t| out.push(t.clone()));
        out
    }

    pub fn set_params(&mut self, values: &[Tensor<T>]) -> Result<()> {
        let mut i = 0;
        let mut bad = None;
        self.for_each_param_mut(&mut |name, t| {
            match values.get(i) {
                Some(v) if v.shape() == t.shape() => *t = v.clone(),
                _ if bad.is_none() => bad = Some(name),
                _ => {}
            }
            i += 1;
        });
        if let Some(name) = bad {
            return Err(invalid(format!("replacement for {name} missing or misshaped")));
        }
        if values.len() != i {
            return Err(invalid(format!("expected {i} parameter tensors, got {}", values.len())));
        }
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |_, t| n += t.len());
        n
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    pub fn frozen(&self) -> &BTreeSet<String> {
        &self.frozen
    }

    pub fn freeze(&mut self, name: impl Into<String>) {
        self.frozen.insert(name.into());
    }

    /// Replaces `φ⁰_E` and every `φ_E` by the constant-one map and freezes
    /// them. Every edge state is then identically one and the node update
    /// reduces to an edge-blind GIN-style aggregation.
    pub fn ablate_edges(&mut self) {
        let d = self.config.hidden_dim;
        self.phi0_e = MlpParams::constant(self.config.edge_dim, d, T::one());
        for l in &mut self.layers {
            l.phi_e = MlpParams::constant(l.edge_mode.gate_width(d), d, T::one());
        }
        self.config.phi0_e_hidden.clear();
        self.config.phi_e_hidden.clear();
        let mut names = Vec::new();
        self.for_each_param(&mut |n, _| {
            if n.starts_with("phi0_E.") || n.contains(".phi_E.") {
                names.push(n);
            }
        });
        self.frozen.extend(names);
    }

    /// Binds every parameter as a constant.
    pub fn bind_constants(&self, tape: &mut Tape<T>) -> ModelVars {
        let mut b = Binder::constants(tape);
        self.bind(&mut b)
    }

    /// Binds trainable parameters as tape leaves (frozen ones as constants).
    /// The returned names follow [`Self::for_each_param`] order.
    pub fn bind_params(&self, tape: &mut Tape<T>) -> (ModelVars, Vec<(String, Var)>) {
        let mut b = Binder::params(tape, Some(&self.frozen));
        let vars = self.bind(&mut b);
        (vars, b.finish())
    }

    pub fn bind(&self, b: &mut Binder<'_, T>) -> ModelVars {
        let phi0_v = self.phi0_v.bind(b, "phi0_V");
        let phi0_e = self.phi0_e.bind(b, "phi0_E");
        let with_eps = self.layer_eps.is_none();
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut set_eps = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            let (lv, eps) = l.bind(b, &self.layer_prefix(k), with_eps);
            layers.push(lv);
            set_eps.extend(eps);
        }
        let eps = match &self.layer_eps {
            Some(per_layer) => per_layer
                .iter()
                .enumerate()
                .map(|(k, e)| b.bind(format!("layer.{k}.eps_V"), e))
                .collect(),
            None if self.config.share_weights => vec![set_eps[0]; self.config.num_layers],
            None => set_eps,
        };
        let readout = self.readout.bind(b, "readout");
        ModelVars {
            phi0_v,
            phi0_e,
            layers,
            eps,
            readout,
            shared: self.config.share_weights,
            edge_mode: self.config.edge_mode,
        }
    }

    fn check_graph(&self, g: &Graph) -> Result<()> {
        if g.feature_dim() != self.config.input_dim {
            return Err(invalid(format!(
                "graph feature width {} but model expects {}",
                g.feature_dim(),
                self.config.input_dim
            )));
        }
        if g.edge_dim() != self.config.edge_dim {
            return Err(invalid(format!(
                "graph edge attribute width {} but model expects {}",
                g.edge_dim(),
                self.config.edge_dim
            )));
        }
        Ok(())
    }

    /// Records a full forward pass on `tape`.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<T>,
        vars: &ModelVars,
        g: &Graph,
    ) -> Result<ForwardVars> {
        self.check_graph(g)?;
        let gi = GraphInputs::bind(tape, g);
        vars.forward(tape, &gi)
    }
}

/// Full inference: initial embeddings, `K` rounds of node and edge
/// convolution, sum pooling of `H^K`, readout.
pub fn forward<T: Scalar>(model: &Model<T>, g: &Graph) -> Result<ForwardOutput<T>> {
    let mut tape = Tape::new();
    let vars = model.bind_constants(&mut tape);
    let out = model.forward_on_tape(&mut tape, &vars, g)?;
    Ok(ForwardOutput {
        node_states: out.node_states.iter().map(|&v| tape.value(v).clone()).collect(),
        edge_states: out.edge_states.iter().map(|&v| tape.value(v).clone()).collect(),
        embedding: tape.value(out.embedding).clone(),
    })
}

/// Gated-GIN parameters that reproduce `gin`: node MLPs and epsilons are
/// copied, every edge MLP is the constant one, all gate matrices are zero
/// and all gate biases equal `saturation`. As `saturation` grows the update
/// and reset gates open fully and each layer becomes the GIN layer.
pub fn make_gin_equivalent_params<T: Scalar>(
    gin: &GinModel<T>,
    saturation: T,
    edge_dim: usize,
) -> Result<Model<T>> {
    if saturation <= T::zero() {
        return Err(invalid("saturation must be positive"));
    }
    let d = gin.phi0.output_dim();
    let config = ModelConfig {
        input_dim: gin.phi0.input_dim(),
        edge_dim,
        hidden_dim: d,
        num_layers: gin.layers.len(),
        phi0_v_hidden: hidden_widths(&gin.phi0),
        phi0_e_hidden: vec![],
        phi_v_hidden: gin.layers.first().map(|l| hidden_widths(&l.phi)).unwrap_or_default(),
        phi_e_hidden: vec![],
        readout_hidden: hidden_widths(&gin.readout),
        readout_dim: gin.readout.output_dim(),
        share_weights: false,
        share_eps: true,
        edge_mode: EdgeMode::Directed,
        frozen: vec![],
    };
    let mode = EdgeMode::Directed;
    let gw = mode.gate_width(d);
    let layers = gin
        .layers
        .iter()
        .map(|l| {
            if l.dim() != d {
                return Err(invalid("every GIN layer must have the embedding width"));
            }
            Ok(GatedGinLayerParams {
                d,
                edge_mode: mode,
                eps_v: l.eps.clone(),
                w_z_v: Tensor::zeros(&[d, 2 * d]),
                b_z_v: Tensor::full(&[d], saturation),
                w_r_v: Tensor::zeros(&[d, 2 * d]),
                b_r_v: Tensor::full(&[d], saturation),
                phi_v: l.phi.clone(),
                w_z_e: Tensor::zeros(&[d, gw]),
                b_z_e: Tensor::full(&[d], saturation),
                w_r_e: Tensor::zeros(&[d, gw]),
                b_r_e: Tensor::full(&[d], saturation),
                phi_e: MlpParams::constant(gw, d, T::one()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Model::from_parts(
        config,
        gin.phi0.clone(),
        MlpParams::constant(edge_dim, d, T::one()),
        layers,
        None,
        gin.readout.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{random_graph, RandomGraphSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config(share: bool) -> ModelConfig {
        ModelConfig {
            input_dim: 3,
            edge_dim: 2,
            hidden_dim: 4,
            num_layers: 3,
            phi_v_hidden: vec![5],
            phi_e_hidden: vec![5],
            readout_hidden: vec![4],
            readout_dim: 2,
            share_weights: share,
            ..Default::default()
        }
    }

    #[test]
    fn bind_order_matches_visit_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (share, share_eps) in [(true, true), (true, false), (false, true)] {
            let mut cfg = small_config(share);
            cfg.share_eps = share_eps;
            let model = Model::<f64>::new(cfg, &mut rng).unwrap();
            let mut tape = Tape::new();
            let (_, bound) = model.bind_params(&mut tape);
            let bound_names: Vec<String> = bound.into_iter().map(|(n, _)| n).collect();
            assert_eq!(bound_names, model.param_names());
        }
    }

    #[test]
    fn canonical_names() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shared = Model::<f64>::new(small_config(true), &mut rng).unwrap();
        let names = shared.param_names();
        assert!(names.contains(&"phi0_V.0.W".to_string()));
        assert!(names.contains(&"layer.shared.b_r_E".to_string()));
        assert!(names.contains(&"readout.1.b".to_string()));
        let unshared = Model::<f64>::new(small_config(false), &mut rng).unwrap();
        assert!(unshared.param_names().contains(&"layer.2.W_z_V".to_string()));
    }

    #[test]
    fn k_zero_embedding_is_readout_of_pooled_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut cfg = small_config(false);
        cfg.num_layers = 0;
        let model = Model::<f64>::new(cfg, &mut rng).unwrap();
        let g = random_graph(&mut rng, &RandomGraphSpec::default());
        let out = forward(&model, &g).unwrap();
        let h0 = crate::mlp::mlp_forward(&model.phi0_v, &g.node_features().cast()).unwrap();
        let expected = crate::mlp::mlp_forward(&model.readout, &h0.sum_rows()).unwrap();
        assert_eq!(out.embedding, expected);
        assert_eq!(out.node_states.len(), 1);
    }

    #[test]
    fn set_params_round_trip_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut model = Model::<f64>::new(small_config(true), &mut rng).unwrap();
        let p = model.params();
        let scaled: Vec<_> = p.iter().map(|t| t.scale(2.0)).collect();
        model.set_params(&scaled).unwrap();
        assert_eq!(model.params(), scaled);
        assert!(model.set_params(&scaled[1..]).is_err());
    }

    #[test]
    fn ablation_freezes_edge_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut model = Model::<f64>::new(small_config(true), &mut rng).unwrap();
        model.ablate_edges();
        assert!(model.is_frozen("phi0_E.0.W"));
        assert!(model.is_frozen("layer.shared.phi_E.0.b"));
        assert!(!model.is_frozen("layer.shared.W_z_E"));
        let g = random_graph(&mut rng, &RandomGraphSpec::default());
        let out = forward(&model, &g).unwrap();
        for e in &out.edge_states {
            assert!(e.data().iter().all(|&x| x == 1.0));
        }
    }
}
