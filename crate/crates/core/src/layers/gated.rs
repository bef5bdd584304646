use crate::bind::Binder;
use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::mlp::{mlp_forward, MlpParams};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::{EdgeMode, GatedGinLayerParams, GatedGinLayerVars, GraphInputs};

/// `Σ_{(u,e) ∈ N(v)} h_u ⊙ h_e` for every node, as an `[n × d]` matrix.
pub(crate) fn neighbor_sum<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    e: Var,
    gi: &GraphInputs,
) -> Result<Var> {
    let hu = tape.gather_rows(h, gi.sources.clone())?;
    let msg = tape.hadamard(hu, e)?;
    tape.scatter_add_rows(msg, gi.targets.clone(), gi.num_nodes)
}

pub(crate) fn node_conv_vars<T: Scalar>(
    tape: &mut Tape<T>,
    lv: &GatedGinLayerVars,
    eps: Var,
    h: Var,
    e: Var,
    gi: &GraphInputs,
) -> Result<Var> {
    let one_plus_eps = tape.add_const(eps, T::one());
    let h_self = tape.scale(h, one_plus_eps)?;
    let s = neighbor_sum(tape, h, e, gi)?;
    let gate_in = tape.concat_cols(&[h_self, s])?;

    let z_pre = tape.linear(gate_in, lv.w_z_v, lv.b_z_v)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = tape.linear(gate_in, lv.w_r_v, lv.b_r_v)?;
    let r = tape.sigmoid(r_pre);

    let reset = tape.hadamard(h_self, r)?;
    let cand_in = tape.add(reset, s)?;
    let cand = lv.phi_v.apply(tape, cand_in)?;

    let keep = tape.one_minus(z);
    let kept = tape.hadamard(keep, h)?;
    let fresh = tape.hadamard(z, cand)?;
    tape.add(kept, fresh)
}

pub(crate) fn edge_conv_vars<T: Scalar>(
    tape: &mut Tape<T>,
    lv: &GatedGinLayerVars,
    mode: EdgeMode,
    h: Var,
    e: Var,
    gi: &GraphInputs,
) -> Result<Var> {
    let hu = tape.gather_rows(h, gi.sources.clone())?;
    let hv = tape.gather_rows(h, gi.targets.clone())?;
    let endpoints = match mode {
        EdgeMode::Directed => vec![hu, hv],
        EdgeMode::Symmetric => vec![tape.add(hu, hv)?],
    };
    let mut gate_parts = vec![e];
    gate_parts.extend_from_slice(&endpoints);
    let gate_in = tape.concat_cols(&gate_parts)?;

    let z_pre = tape.linear(gate_in, lv.w_z_e, lv.b_z_e)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = tape.linear(gate_in, lv.w_r_e, lv.b_r_e)?;
    let r = tape.sigmoid(r_pre);

    let reset = tape.hadamard(e, r)?;
    let mut cand_parts = vec![reset];
    cand_parts.extend_from_slice(&endpoints);
    let cand_in = tape.concat_cols(&cand_parts)?;
    let cand = lv.phi_e.apply(tape, cand_in)?;

    let keep = tape.one_minus(z);
    let kept = tape.hadamard(keep, e)?;
    let fresh = tape.hadamard(z, cand)?;
    tape.add(kept, fresh)
}

fn check_states<T: Scalar>(h: &Tensor<T>, e: &Tensor<T>, g: &Graph, d: usize) -> Result<()> {
    if h.rank() != 2 || h.rows() != g.num_nodes() || h.cols() != d {
        return Err(Error::ShapeMismatch {
            op: "node states",
            left: h.shape().to_vec(),
            right: vec![g.num_nodes(), d],
        });
    }
    if e.rank() != 2 || e.rows() != g.num_edges() || e.cols() != d {
        return Err(Error::ShapeMismatch {
            op: "edge states",
            left: e.shape().to_vec(),
            right: vec![g.num_edges(), d],
        });
    }
    Ok(())
}

/// `h⁰_v = φ⁰_V(x_v)` for every node.
pub fn node_init<T: Scalar>(phi0_v: &MlpParams<T>, g: &Graph) -> Result<Tensor<T>> {
    mlp_forward(phi0_v, &g.node_features().cast())
}

/// `h⁰_uv = φ⁰_E(a_uv)` for every edge; `[0 × d]` when the graph has no edges.
pub fn edge_init<T: Scalar>(phi0_e: &MlpParams<T>, g: &Graph) -> Result<Tensor<T>> {
    mlp_forward(phi0_e, &g.edge_attr_matrix().cast())
}

/// One gated node convolution. `h` is `[n × d]`, `e` is `[m × d]`.
pub fn node_conv<T: Scalar>(
    p: &GatedGinLayerParams<T>,
    h: &Tensor<T>,
    e: &Tensor<T>,
    g: &Graph,
) -> Result<Tensor<T>> {
    check_states(h, e, g, p.d)?;
    let mut tape = Tape::new();
    let mut b = Binder::constants(&mut tape);
    let (lv, eps) = p.bind(&mut b, "layer", true);
    let eps = eps.expect("eps bound");
    let gi = GraphInputs::bind(&mut tape, g);
    let hv = tape.constant(h.clone());
    let ev = tape.constant(e.clone());
    let out = node_conv_vars(&mut tape, &lv, eps, hv, ev, &gi)?;
    Ok(tape.value(out).clone())
}

/// One gated edge convolution; `mode` must match the layer's parameters.
pub fn edge_conv<T: Scalar>(
    p: &GatedGinLayerParams<T>,
    h: &Tensor<T>,
    e: &Tensor<T>,
    g: &Graph,
    mode: EdgeMode,
) -> Result<Tensor<T>> {
    if mode != p.edge_mode {
        return Err(invalid(format!(
            "edge mode {mode:?} does not match parameters built for {:?}",
            p.edge_mode
        )));
    }
    check_states(h, e, g, p.d)?;
    let mut tape = Tape::new();
    let mut b = Binder::constants(&mut tape);
    let (lv, _) = p.bind(&mut b, "layer", false);
    let gi = GraphInputs::bind(&mut tape, g);
    let hv = tape.constant(h.clone());
    let ev = tape.constant(e.clone());
    let out = edge_conv_vars(&mut tape, &lv, mode, hv, ev, &gi)?;
    Ok(tape.value(out).clone())
}
