//! Reference architectures: GIN and a gated graph network (GG-NN) layer.

use rand::Rng;

use crate::bind::Binder;
use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::mlp::{glorot_uniform, MlpParams, MlpVars};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::GraphInputs;

#[derive(Debug, Clone, PartialEq)]
pub struct GinLayerParams<T> {
    /// Shape `[1]`.
    pub eps: Tensor<T>,
    pub phi: MlpParams<T>,
}

#[derive(Debug, Clone)]
pub struct GinLayerVars {
    pub eps: Var,
    pub phi: MlpVars,
}

impl<T: Scalar> GinLayerParams<T> {
    pub fn new(eps: T, phi: MlpParams<T>) -> Result<Self> {
        if phi.input_dim() != phi.output_dim() {
            return Err(invalid(format!(
                "GIN phi must preserve width, maps {} -> {}",
                phi.input_dim(),
                phi.output_dim()
            )));
        }
        Ok(Self {
            eps: Tensor::scalar(eps),
            phi,
        })
    }

    pub fn dim(&self) -> usize {
        self.phi.input_dim()
    }

    pub fn bind(&self, b: &mut Binder<'_, T>, prefix: &str) -> GinLayerVars {
        GinLayerVars {
            eps: b.bind(format!("{prefix}.eps"), &self.eps),
            phi: self.phi.bind(b, &format!("{prefix}.phi")),
        }
    }
}

pub(crate) fn gin_layer_vars<T: Scalar>(
    tape: &mut Tape<T>,
    lv: &GinLayerVars,
    h: Var,
    gi: &GraphInputs,
) -> Result<Var> {
    let one_plus_eps = tape.add_const(lv.eps, T::one());
    let h_self = tape.scale(h, one_plus_eps)?;
    let hu = tape.gather_rows(h, gi.sources.clone())?;
    let s = tape.scatter_add_rows(hu, gi.targets.clone(), gi.num_nodes)?;
    let pre = tape.add(h_self, s)?;
    lv.phi.apply(tape, pre)
}

fn check_node_states<T: Scalar>(h: &Tensor<T>, g: &Graph, d: usize) -> Result<()> {
    if h.rank() != 2 || h.rows() != g.num_nodes() || h.cols() != d {
        return Err(Error::ShapeMismatch {
            op: "node states",
            left: h.shape().to_vec(),
            right: vec![g.num_nodes(), d],
        });
    }
    Ok(())
}

/// `φ((1+ε)·h_v + Σ_{u ∈ N(v)} h_u)`; edge attributes are ignored.
pub fn gin_layer<T: Scalar>(p: &GinLayerParams<T>, h: &Tensor<T>, g: &Graph) -> Result<Tensor<T>> {
    check_node_states(h, g, p.dim())?;
    let mut tape = Tape::new();
    let mut b = Binder::constants(&mut tape);
    let lv = p.bind(&mut b, "gin");
    let gi = GraphInputs::bind(&mut tape, g);
    let hv = tape.constant(h.clone());
    let out = gin_layer_vars(&mut tape, &lv, hv, &gi)?;
    Ok(tape.value(out).clone())
}

/// A complete GIN: input MLP, `K` layers, sum pooling and a readout MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct GinModel<T> {
    pub phi0: MlpParams<T>,
    pub layers: Vec<GinLayerParams<T>>,
    pub readout: MlpParams<T>,
}

#[derive(Debug, Clone)]
pub struct GinOutput<T> {
    /// `H⁰ … H^K`
    pub node_states: Vec<Tensor<T>>,
    pub embedding: Tensor<T>,
}

impl<T: Scalar> GinModel<T> {
    /// Random GIN; `eps` of every layer is drawn uniformly from `[-0.5, 0.5]`
    /// so that the `(1+ε)` path is exercised.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        d_in: usize,
        d: usize,
        num_layers: usize,
        phi_hidden: &[usize],
        readout_dim: usize,
    ) -> Result<Self> {
        let phi0 = MlpParams::glorot(rng, &[d_in, d])?;
        let mut dims = vec![d];
        dims.extend_from_slice(phi_hidden);
        dims.push(d);
        let layers = (0..num_layers)
            .map(|_| {
                let eps = T::from_f64_lossy(rng.gen_range(-0.5..=0.5));
                GinLayerParams::new(eps, MlpParams::glorot(rng, &dims)?)
            })
            .collect::<Result<_>>()?;
        let readout = MlpParams::glorot(rng, &[d, d, readout_dim])?;
        Ok(Self {
            phi0,
            layers,
            readout,
        })
    }

    pub fn forward(&self, g: &Graph) -> Result<GinOutput<T>> {
        let mut tape = Tape::new();
        let mut b = Binder::constants(&mut tape);
        let phi0 = self.phi0.bind(&mut b, "phi0");
        let layers: Vec<_> = self
            .layers
            .iter()
            .enumerate()
            .map(|(k, l)| l.bind(&mut b, &format!("layer.{k}")))
            .collect();
        let readout = self.readout.bind(&mut b, "readout");
        let gi = GraphInputs::bind(&mut tape, g);
        let mut h = phi0.apply(&mut tape, gi.features)?;
        let mut states = vec![h];
        for lv in &layers {
            h = gin_layer_vars(&mut tape, lv, h, &gi)?;
            states.push(h);
        }
        let pooled = tape.sum_rows(h);
        let emb = readout.apply(&mut tape, pooled)?;
        Ok(GinOutput {
            node_states: states.into_iter().map(|v| tape.value(v).clone()).collect(),
            embedding: tape.value(emb).clone(),
        })
    }
}

/// One GG-NN propagation step: the message `m_v = Σ_{u∈N(v)} W_msg·h_u`
/// drives a gated-recurrent cell with state `h_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct GgnnLayerParams<T> {
    pub w_msg: Tensor<T>,
    pub w_z: Tensor<T>,
    pub u_z: Tensor<T>,
    pub b_z: Tensor<T>,
    pub w_r: Tensor<T>,
    pub u_r: Tensor<T>,
    pub b_r: Tensor<T>,
    pub w_h: Tensor<T>,
    pub u_h: Tensor<T>,
    pub b_h: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct GgnnLayerVars {
    w_msg: Var,
    w_z: Var,
    u_z: Var,
    b_z: Var,
    w_r: Var,
    u_r: Var,
    b_r: Var,
    w_h: Var,
    u_h: Var,
    b_h: Var,
    zero_bias: Var,
}

impl<T: Scalar> GgnnLayerParams<T> {
    pub fn zeros(d: usize) -> Self {
        let m = || Tensor::zeros(&[d, d]);
        let v = || Tensor::zeros(&[d]);
        Self {
            w_msg: m(),
            w_z: m(),
            u_z: m(),
            b_z: v(),
            w_r: m(),
            u_r: m(),
            b_r: v(),
            w_h: m(),
            u_h: m(),
            b_h: v(),
        }
    }

    /// Random matrices and biases (biases uniform in `[-0.5, 0.5]`).
    pub fn random<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Self {
        let mut bias = || {
            Tensor::from_vec(
                (0..d)
                    .map(|_| T::from_f64_lossy(rng.gen_range(-0.5..=0.5)))
                    .collect(),
            )
        };
        let (b_z, b_r, b_h) = (bias(), bias(), bias());
        Self {
            w_msg: glorot_uniform(rng, d, d),
            w_z: glorot_uniform(rng, d, d),
            u_z: glorot_uniform(rng, d, d),
            b_z,
            w_r: glorot_uniform(rng, d, d),
            u_r: glorot_uniform(rng, d, d),
            b_r,
            w_h: glorot_uniform(rng, d, d),
            u_h: glorot_uniform(rng, d, d),
            b_h,
        }
    }

    pub fn dim(&self) -> usize {
        self.b_z.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for m in [
            &self.w_msg,
            &self.w_z,
            &self.u_z,
            &self.w_r,
            &self.u_r,
            &self.w_h,
            &self.u_h,
        ] {
            if m.shape() != [d, d] {
                return Err(invalid(format!("GG-NN matrix {:?}, expected [{d}, {d}]", m.shape())));
            }
        }
        if self.b_r.len() != d || self.b_h.len() != d {
            return Err(invalid("GG-NN biases must all have width d"));
        }
        Ok(())
    }

    pub fn bind(&self, b: &mut Binder<'_, T>, prefix: &str) -> GgnnLayerVars {
        let d = self.dim();
        GgnnLayerVars {
            w_msg: b.bind(format!("{prefix}.W_msg"), &self.w_msg),
            w_z: b.bind(format!("{prefix}.W_z"), &self.w_z),
            u_z: b.bind(format!("{prefix}.U_z"), &self.u_z),
            b_z: b.bind(format!("{prefix}.b_z"), &self.b_z),
            w_r: b.bind(format!("{prefix}.W_r"), &self.w_r),
            u_r: b.bind(format!("{prefix}.U_r"), &self.u_r),
            b_r: b.bind(format!("{prefix}.b_r"), &self.b_r),
            w_h: b.bind(format!("{prefix}.W_h"), &self.w_h),
            u_h: b.bind(format!("{prefix}.U_h"), &self.u_h),
            b_h: b.bind(format!("{prefix}.b_h"), &self.b_h),
            zero_bias: b.tape().constant(Tensor::zeros(&[d])),
        }
    }
}

pub(crate) fn ggnn_layer_vars<T: Scalar>(
    tape: &mut Tape<T>,
    lv: &GgnnLayerVars,
    h: Var,
    gi: &GraphInputs,
) -> Result<Var> {
    let hu = tape.gather_rows(h, gi.sources.clone())?;
    let msg_each = tape.linear(hu, lv.w_msg, lv.zero_bias)?;
    let m = tape.scatter_add_rows(msg_each, gi.targets.clone(), gi.num_nodes)?;

    let gate = |tape: &mut Tape<T>, w: Var, u: Var, b: Var, state: Var| -> Result<Var> {
        let from_msg = tape.linear(m, w, b)?;
        let from_state = tape.linear(state, u, lv.zero_bias)?;
        tape.add(from_msg, from_state)
    };
    let z_pre = gate(tape, lv.w_z, lv.u_z, lv.b_z, h)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, lv.w_r, lv.u_r, lv.b_r, h)?;
    let r = tape.sigmoid(r_pre);
    let reset = tape.hadamard(r, h)?;
    let cand_pre = gate(tape, lv.w_h, lv.u_h, lv.b_h, reset)?;
    let cand = tape.tanh(cand_pre);

    let keep = tape.one_minus(z);
    let kept = tape.hadamard(keep, h)?;
    let fresh = tape.hadamard(z, cand)?;
    tape.add(kept, fresh)
}

pub fn ggnn_layer<T: Scalar>(p: &GgnnLayerParams<T>, h: &Tensor<T>, g: &Graph) -> Result<Tensor<T>> {
    p.validate()?;
    check_node_states(h, g, p.dim())?;
    let mut tape = Tape::new();
    let mut b = Binder::constants(&mut tape);
    let lv = p.bind(&mut b, "ggnn");
    let gi = GraphInputs::bind(&mut tape, g);
    let hv = tape.constant(h.clone());
    let out = ggnn_layer_vars(&mut tape, &lv, hv, &gi)?;
    Ok(tape.value(out).clone())
}

/// Initial GG-NN state: node features padded with zeros to width `d`.
pub fn ggnn_init_embedding<T: Scalar>(g: &Graph, d: usize) -> Result<Tensor<T>> {
    let d_in = g.feature_dim();
    if d_in > d {
        return Err(invalid(format!("feature width {d_in} exceeds state width {d}")));
    }
    let mut h = Tensor::zeros(&[g.num_nodes(), d]);
    for v in 0..g.num_nodes() {
        for (dst, &x) in h.row_mut(v).iter_mut().zip(g.node_features().row(v)) {
            *dst = T::from_f64_lossy(x);
        }
    }
    Ok(h)
}

/// `K` GG-NN steps on the zero-padded features.
#[derive(Debug, Clone, PartialEq)]
pub struct GgnnModel<T> {
    pub d: usize,
    pub layers: Vec<GgnnLayerParams<T>>,
}

impl<T: Scalar> GgnnModel<T> {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, d: usize, num_layers: usize) -> Self {
        Self {
            d,
            layers: (0..num_layers).map(|_| GgnnLayerParams::random(rng, d)).collect(),
        }
    }

    /// `H⁰ … H^K`.
    pub fn forward(&self, g: &Graph) -> Result<Vec<Tensor<T>>> {
        let mut tape = Tape::new();
        let mut b = Binder::constants(&mut tape);
        let layers: Vec<_> = self
            .layers
            .iter()
            .enumerate()
            .map(|(k, l)| l.bind(&mut b, &format!("layer.{k}")))
            .collect();
        let gi = GraphInputs::bind(&mut tape, g);
        let mut h = tape.constant(ggnn_init_embedding(g, self.d)?);
        let mut states = vec![h];
        for lv in &layers {
            h = ggnn_layer_vars(&mut tape, lv, h, &gi)?;
            states.push(h);
        }
        Ok(states.into_iter().map(|v| tape.value(v).clone()).collect())
    }

    pub fn final_states(&self, g: &Graph) -> Result<Tensor<T>> {
        Ok(self.forward(g)?.pop().expect("at least the initial state"))
    }
}
