use gated_gin::graph::{gen_edge_task, random_graph, RandomGraphSpec};
use gated_gin::layers::{forward, GgnnModel};
use gated_gin::train::{distill, evaluate, train, DistillOutput, OptimizerKind, TrainConfig};
use gated_gin::{Dataset, Error, Graph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small() -> TrainConfig {
    TrainConfig {
        hidden_dim: 6,
        phi_v_hidden: vec![6],
        phi_e_hidden: vec![6],
        readout_hidden: vec![6],
        ..Default::default()
    }
}

#[test]
fn single_graph_overfits() {
    let data = gen_edge_task(5, 1, (4, 6), 2).unwrap();
    let cfg = TrainConfig { epochs: 200, ..small() };
    let mut model = cfg.init_model::<f64>(&data).unwrap();
    let report = train(&mut model, &data, &cfg).unwrap();
    assert!(report.final_loss < report.initial_loss());
    assert_eq!(report.final_accuracy, Some(1.0));
    let (loss, acc) = evaluate(&model, &data).unwrap();
    assert_eq!((loss, acc), (report.final_loss, 1.0));
}

#[test]
fn sgd_also_descends() {
    let data = gen_edge_task(6, 6, (3, 6), 1).unwrap();
    let cfg = TrainConfig { epochs: 30, optimizer: OptimizerKind::Sgd, lr: 0.05, ..small() };
    let mut model = cfg.init_model::<f64>(&data).unwrap();
    let report = train(&mut model, &data, &cfg).unwrap();
    assert!(report.final_loss < report.initial_loss());
}

#[test]
fn nan_parameters_report_divergence() {
    let data = gen_edge_task(5, 2, (3, 4), 1).unwrap();
    let cfg = TrainConfig { epochs: 3, ..small() };
    let mut model = cfg.init_model::<f64>(&data).unwrap();
    model.readout.for_each_mut("r", &mut |_, t| t.data_mut()[0] = f64::NAN);
    match train(&mut model, &data, &cfg) {
        Err(Error::Diverged { epoch: 0, loss }) => assert!(loss.is_nan()),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn unlabelled_graphs_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = random_graph(&mut rng, &RandomGraphSpec::default());
    let data = Dataset::new(vec![g], 2).unwrap();
    let cfg = small();
    let mut model = cfg.init_model::<f64>(&data).unwrap();
    assert!(matches!(train(&mut model, &data, &cfg), Err(Error::InvalidGraph { graph: 0, .. })));
}

#[test]
fn distillation_reduces_error_and_respects_zero_lr() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = RandomGraphSpec { max_nodes: 6, feature_dim: 2, edge_dim: 1, ..Default::default() };
    let graphs: Vec<Graph> = (0..6).map(|_| random_graph(&mut rng, &spec)).collect();
    let data = Dataset::new(graphs, 1).unwrap();
    let teacher = GgnnModel::<f64>::random(&mut rng, 6, 2);
    let target = |g: &Graph| teacher.final_states(g);

    let frozen_cfg = TrainConfig { epochs: 5, lr: 0.0, ..small() };
    let mut student = frozen_cfg.init_model::<f64>(&data).unwrap();
    let report = distill(target, &mut student, &data, DistillOutput::FinalNodeStates, &frozen_cfg).unwrap();
    assert!(report.epochs.iter().all(|e| e.loss == report.final_loss));

    let cfg = TrainConfig { epochs: 100, ..small() };
    let mut student = cfg.init_model::<f64>(&data).unwrap();
    let report = distill(target, &mut student, &data, DistillOutput::FinalNodeStates, &cfg).unwrap();
    assert!(report.final_loss < report.initial_loss() / 2.0);
}

#[test]
fn embedding_distillation_targets_readout() {
    let data = gen_edge_task(8, 4, (3, 5), 1).unwrap();
    let cfg = TrainConfig { epochs: 40, ..small() };
    let teacher = TrainConfig { seed: 99, ..cfg.clone() }.init_model::<f64>(&data).unwrap();
    let mut student = cfg.init_model::<f64>(&data).unwrap();
    let report = distill(
        |g: &Graph| Ok(forward(&teacher, g)?.embedding),
        &mut student,
        &data,
        DistillOutput::Embedding,
        &cfg,
    )
    .unwrap();
    assert!(report.final_loss < report.initial_loss());
}
