//! Gated-GIN node/edge convolutions, the GIN and GG-NN baselines, the full
//! model and its JSON form.
//!
//! Every layer is written once against the [`Tape`]; the eager functions
//! (`node_conv`, `gin_layer`, ...) bind their inputs as constants and read
//! the result back, so inference and training share the same arithmetic.

mod baselines;
mod gated;
mod model;
mod serialize;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use baselines::{
    ggnn_init_embedding, ggnn_layer, gin_layer, GgnnLayerParams, GgnnLayerVars, GgnnModel,
    GinLayerParams, GinLayerVars, GinModel, GinOutput,
};
pub use gated::{edge_conv, edge_init, node_conv, node_init};
pub use model::{
    forward, make_gin_equivalent_params, ForwardOutput, ForwardVars, Model, ModelConfig, ModelVars,
};
pub use serialize::{load_model, model_from_json, model_to_json, save_model};

use crate::bind::Binder;
use crate::error::{invalid, Result};
use crate::graph::Graph;
use crate::mlp::{glorot_uniform, MlpParams, MlpVars};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// How the edge convolution combines its endpoint states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMode {
    /// Gate and candidate inputs are `[h_uv, h_u, h_v]`.
    #[default]
    Directed,
    /// Gate and candidate inputs are `[h_uv, h_u + h_v]`, so antiparallel
    /// edges with equal states get equal gates.
    Symmetric,
}

impl EdgeMode {
    /// Width of the edge gate input for hidden width `d`.
    pub fn gate_width(self, d: usize) -> usize {
        match self {
            EdgeMode::Directed => 3 * d,
            EdgeMode::Symmetric => 2 * d,
        }
    }
}

/// A graph's structure and raw features placed on a tape.
#[derive(Debug, Clone)]
pub struct GraphInputs {
    pub num_nodes: usize,
    pub sources: Arc<[usize]>,
    pub targets: Arc<[usize]>,
    /// `[n × d_in]`
    pub features: Var,
    /// `[m × d_e]`
    pub edge_attrs: Var,
}

impl GraphInputs {
    pub fn bind<T: Scalar>(tape: &mut Tape<T>, g: &Graph) -> Self {
        Self {
            num_nodes: g.num_nodes(),
            sources: g.edge_sources(),
            targets: g.edge_targets(),
            features: tape.constant(g.node_features().cast()),
            edge_attrs: tape.constant(g.edge_attr_matrix().cast()),
        }
    }
}

/// Every learnable quantity of one Gated-GIN layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedGinLayerParams<T> {
    pub d: usize,
    pub edge_mode: EdgeMode,
    /// Shape `[1]`.
    pub eps_v: Tensor<T>,
    pub w_z_v: Tensor<T>,
    pub b_z_v: Tensor<T>,
    pub w_r_v: Tensor<T>,
    pub b_r_v: Tensor<T>,
    pub phi_v: MlpParams<T>,
    pub w_z_e: Tensor<T>,
    pub b_z_e: Tensor<T>,
    pub w_r_e: Tensor<T>,
    pub b_r_e: Tensor<T>,
    pub phi_e: MlpParams<T>,
}

/// Tape handles of a [`GatedGinLayerParams`]; `eps_v` is bound separately.
#[derive(Debug, Clone)]
pub struct GatedGinLayerVars {
    pub w_z_v: Var,
    pub b_z_v: Var,
    pub w_r_v: Var,
    pub b_r_v: Var,
    pub phi_v: MlpVars,
    pub w_z_e: Var,
    pub b_z_e: Var,
    pub w_r_e: Var,
    pub b_r_e: Var,
    pub phi_e: MlpVars,
}

impl<T: Scalar> GatedGinLayerParams<T> {
    /// Random layer. `phi_v_hidden`/`phi_e_hidden` are the hidden widths of the two MLPs.
    pub fn glorot<R: Rng + ?Sized>(
        rng: &mut R,
        d: usize,
        edge_mode: EdgeMode,
        phi_v_hidden: &[usize],
        phi_e_hidden: &[usize],
    ) -> Result<Self> {
        let gw = edge_mode.gate_width(d);
        let dims = |input: usize, hidden: &[usize]| {
            let mut v = vec![input];
            v.extend_from_slice(hidden);
            v.push(d);
            v
        };
        let p = Self {
            d,
            edge_mode,
            eps_v: Tensor::scalar(T::zero()),
            w_z_v: glorot_uniform(rng, d, 2 * d),
            b_z_v: Tensor::zeros(&[d]),
            w_r_v: glorot_uniform(rng, d, 2 * d),
            b_r_v: Tensor::zeros(&[d]),
            phi_v: MlpParams::glorot(rng, &dims(d, phi_v_hidden))?,
            w_z_e: glorot_uniform(rng, d, gw),
            b_z_e: Tensor::zeros(&[d]),
            w_r_e: glorot_uniform(rng, d, gw),
            b_r_e: Tensor::zeros(&[d]),
            phi_e: MlpParams::glorot(rng, &dims(gw, phi_e_hidden))?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        let gw = self.edge_mode.gate_width(d);
        let checks: [(&str, &Tensor<T>, &[usize]); 9] = [
            ("eps_V", &self.eps_v, &[1]),
            ("W_z_V", &self.w_z_v, &[d, 2 * d]),
            ("b_z_V", &self.b_z_v, &[d]),
            ("W_r_V", &self.w_r_v, &[d, 2 * d]),
            ("b_r_V", &self.b_r_v, &[d]),
            ("W_z_E", &self.w_z_e, &[d, gw]),
            ("b_z_E", &self.b_z_e, &[d]),
            ("W_r_E", &self.w_r_e, &[d, gw]),
            ("b_r_E", &self.b_r_e, &[d]),
        ];
        for (name, t, shape) in checks {
            if t.shape() != shape {
                return Err(invalid(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        if self.phi_v.input_dim() != d || self.phi_v.output_dim() != d {
            return Err(invalid(format!("phi_V must map {d} -> {d}")));
        }
        if self.phi_e.input_dim() != gw || self.phi_e.output_dim() != d {
            return Err(invalid(format!("phi_E must map {gw} -> {d}")));
        }
        Ok(())
    }

    /// Visits parameters in canonical order; `eps_V` is skipped when `with_eps` is false.
    pub fn for_each(&self, prefix: &str, with_eps: bool, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(format!("{prefix}.W_z_V"), &self.w_z_v);
        f(format!("{prefix}.b_z_V"), &self.b_z_v);
        f(format!("{prefix}.W_r_V"), &self.w_r_v);
        f(format!("{prefix}.b_r_V"), &self.b_r_v);
        if with_eps {
            f(format!("{prefix}.eps_V"), &self.eps_v);
        }
        self.phi_v.for_each(&format!("{prefix}.phi_V"), f);
        f(format!("{prefix}.W_z_E"), &self.w_z_e);
        f(format!("{prefix}.b_z_E"), &self.b_z_e);
        f(format!("{prefix}.W_r_E"), &self.w_r_e);
        f(format!("{prefix}.b_r_E"), &self.b_r_e);
        self.phi_e.for_each(&format!("{prefix}.phi_E"), f);
    }

    pub fn for_each_mut(
        &mut self,
        prefix: &str,
        with_eps: bool,
        f: &mut dyn FnMut(String, &mut Tensor<T>),
    ) {
        f(format!("{prefix}.W_z_V"), &mut self.w_z_v);
        f(format!("{prefix}.b_z_V"), &mut self.b_z_v);
        f(format!("{prefix}.W_r_V"), &mut self.w_r_v);
        f(format!("{prefix}.b_r_V"), &mut self.b_r_v);
        if with_eps {
            f(format!("{prefix}.eps_V"), &mut self.eps_v);
        }
        self.phi_v.for_each_mut(&format!("{prefix}.phi_V"), f);
        f(format!("{prefix}.W_z_E"), &mut self.w_z_e);
        f(format!("{prefix}.b_z_E"), &mut self.b_z_e);
        f(format!("{prefix}.W_r_E"), &mut self.w_r_e);
        f(format!("{prefix}.b_r_E"), &mut self.b_r_e);
        self.phi_e.for_each_mut(&format!("{prefix}.phi_E"), f);
    }

    /// Binds in the same order as [`Self::for_each`]. Returns the eps handle
    /// when `with_eps` is set.
    pub fn bind(
        &self,
        b: &mut Binder<'_, T>,
        prefix: &str,
        with_eps: bool,
    ) -> (GatedGinLayerVars, Option<Var>) {
        let w_z_v = b.bind(format!("{prefix}.W_z_V"), &self.w_z_v);
        let b_z_v = b.bind(format!("{prefix}.b_z_V"), &self.b_z_v);
        let w_r_v = b.bind(format!("{prefix}.W_r_V"), &self.w_r_v);
        let b_r_v = b.bind(format!("{prefix}.b_r_V"), &self.b_r_v);
        let eps = with_eps.then(|| b.bind(format!("{prefix}.eps_V"), &self.eps_v));
        let phi_v = self.phi_v.bind(b, &format!("{prefix}.phi_V"));
        let w_z_e = b.bind(format!("{prefix}.W_z_E"), &self.w_z_e);
        let b_z_e = b.bind(format!("{prefix}.b_z_E"), &self.b_z_e);
        let w_r_e = b.bind(format!("{prefix}.W_r_E"), &self.w_r_e);
        let b_r_e = b.bind(format!("{prefix}.b_r_E"), &self.b_r_e);
        let phi_e = self.phi_e.bind(b, &format!("{prefix}.phi_E"));
        (
            GatedGinLayerVars {
                w_z_v,
                b_z_v,
                w_r_v,
                b_r_v,
                phi_v,
                w_z_e,
                b_z_e,
                w_r_e,
                b_r_e,
                phi_e,
            },
            eps,
        )
    }
}
