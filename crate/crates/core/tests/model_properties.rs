use gated_gin::graph::{random_graph, RandomGraphSpec};
use gated_gin::layers::{forward, EdgeMode, Model, ModelConfig};
use gated_gin::train::loss_and_gradients;
use gated_gin::{Dataset, Graph, Model64, Tensor64};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(spec: &RandomGraphSpec, share: bool, mode: EdgeMode, k: usize) -> ModelConfig {
    ModelConfig {
        input_dim: spec.feature_dim,
        edge_dim: spec.edge_dim,
        hidden_dim: 4,
        num_layers: k,
        phi_v_hidden: vec![5],
        phi_e_hidden: vec![5],
        readout_hidden: vec![4],
        share_weights: share,
        edge_mode: mode,
        ..Default::default()
    }
}

fn mode(symmetric: bool) -> EdgeMode {
    if symmetric {
        EdgeMode::Symmetric
    } else {
        EdgeMode::Directed
    }
}

fn jittered(cfg: ModelConfig, rng: &mut ChaCha8Rng) -> Model64 {
    let mut m = Model::new(cfg, rng).unwrap();
    m.for_each_param_mut(&mut |_, t| {
        for x in t.data_mut() {
            *x += rng.gen_range(-0.2..=0.2);
        }
    });
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn node_states_are_equivariant(seed in any::<u64>(), share in any::<bool>(), sym in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = RandomGraphSpec { self_loops: true, ..Default::default() };
        let g = random_graph(&mut rng, &spec);
        let model = jittered(config(&spec, share, mode(sym), 3), &mut rng);
        let mut pi: Vec<usize> = (0..g.num_nodes()).collect();
        pi.shuffle(&mut rng);
        let a = forward(&model, &g).unwrap();
        let b = forward(&model, &g.permute(&pi).unwrap()).unwrap();
        for (ha, hb) in a.node_states.iter().zip(&b.node_states) {
            for (v, &p) in pi.iter().enumerate() {
                for (x, y) in ha.row(v).iter().zip(hb.row(p)) {
                    prop_assert!((x - y).abs() <= 1e-9);
                }
            }
        }
        prop_assert!(a.embedding.max_abs_diff(&b.embedding).unwrap() <= 1e-9);
    }

    #[test]
    fn far_nodes_cannot_influence(seed in any::<u64>(), k in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = RandomGraphSpec { edge_prob: 0.15, ..Default::default() };
        let g = random_graph(&mut rng, &spec);
        let model = jittered(config(&spec, false, EdgeMode::Directed, k), &mut rng);
        let u = rng.gen_range(0..g.num_nodes());
        let mut features = g.node_features().clone();
        for x in features.row_mut(u) {
            *x += 3.0;
        }
        let changed = g.with_node_features(features).unwrap();
        let dist = g.hop_distances(u).unwrap();
        let a = forward(&model, &g).unwrap();
        let b = forward(&model, &changed).unwrap();
        for (layer, (ha, hb)) in a.node_states.iter().zip(&b.node_states).enumerate() {
            for (v, dv) in dist.iter().enumerate() {
                if dv.is_none_or(|d| d > layer) {
                    prop_assert_eq!(ha.row(v), hb.row(v), "layer {} node {}", layer, v);
                }
            }
        }
    }

    #[test]
    fn shared_gradients_sum_over_layers(seed in any::<u64>(), sym in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = RandomGraphSpec { min_nodes: 2, max_nodes: 6, ..Default::default() };
        let g = random_graph(&mut rng, &spec).with_label(Some(1));
        let data = Dataset::new(vec![g], 2).unwrap();
        let k = 3;
        let shared = jittered(config(&spec, true, mode(sym), k), &mut rng);
        let mut unshared_cfg = shared.config();
        unshared_cfg.share_weights = false;
        let unshared = Model::from_parts(
            unshared_cfg,
            shared.phi0_v.clone(),
            shared.phi0_e.clone(),
            vec![shared.layer(0).clone(); k],
            None,
            shared.readout.clone(),
        ).unwrap();
        let (ls, gs) = loss_and_gradients(&shared, &data).unwrap();
        let (lu, gu) = loss_and_gradients(&unshared, &data).unwrap();
        prop_assert_eq!(ls, lu);
        let by_name = |m: &Model64, grads: &[Tensor64]| -> std::collections::BTreeMap<String, Tensor64> {
            m.param_names().into_iter().zip(grads.iter().cloned()).collect()
        };
        let gs = by_name(&shared, &gs);
        let gu = by_name(&unshared, &gu);
        for (name, grad) in &gs {
            let Some(suffix) = name.strip_prefix("layer.shared.") else {
                prop_assert_eq!(grad, &gu[name]);
                continue;
            };
            let mut total = Tensor64::zeros_like(grad);
            for layer in 0..k {
                total.add_assign(&gu[&format!("layer.{layer}.{suffix}")]).unwrap();
            }
            prop_assert!(grad.max_abs_diff(&total).unwrap() <= 1e-8, "{}", name);
        }
    }

    #[test]
    fn closed_gates_freeze_node_states(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = RandomGraphSpec::default();
        let g = random_graph(&mut rng, &spec);
        let mut model = jittered(config(&spec, false, EdgeMode::Directed, 3), &mut rng);
        for layer in model.layer_sets_mut() {
            layer.w_z_v = Tensor64::zeros(layer.w_z_v.shape());
            layer.b_z_v = Tensor64::full(layer.b_z_v.shape(), -50.0);
        }
        let out = forward(&model, &g).unwrap();
        for pair in out.node_states.windows(2) {
            prop_assert!(pair[0].max_abs_diff(&pair[1]).unwrap() <= 1e-15 * (1.0 + pair[0].linf_norm()));
        }
    }
}

#[test]
fn edge_order_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = RandomGraphSpec { min_nodes: 5, ..Default::default() };
    let g = random_graph(&mut rng, &spec);
    let mut edges = g.edges().to_vec();
    edges.reverse();
    let shuffled = Graph::new(g.node_features().clone(), edges, g.edge_dim(), None).unwrap();
    let model = jittered(config(&spec, true, EdgeMode::Symmetric, 2), &mut rng);
    let a = forward(&model, &g).unwrap();
    let b = forward(&model, &shuffled).unwrap();
    assert!(a.embedding.max_abs_diff(&b.embedding).unwrap() <= 1e-9);
}

#[test]
fn symmetric_mode_gives_antiparallel_edges_equal_states() {
    use gated_gin::graph::fixtures;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = fixtures::cycle(5);
    let spec = RandomGraphSpec { feature_dim: 1, edge_dim: 1, ..Default::default() };
    let model = jittered(config(&spec, true, EdgeMode::Symmetric, 3), &mut rng);
    let out = forward(&model, &g).unwrap();
    // fixtures store each undirected pair as consecutive antiparallel edges
    for e in &out.edge_states {
        for pair in 0..g.num_edges() / 2 {
            assert_eq!(e.row(2 * pair), e.row(2 * pair + 1));
        }
    }
}
