use std::fs;
use std::process::{Command, Output};

use gated_gin::graph::{gen_edge_task, save_graphs};

fn gated_gin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gated-gin"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_gin_equivalence_passes() {
    let o = gated_gin(&["verify", "gin-equivalence", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("max deviation"));
}

#[test]
fn verify_all_passes() {
    let o = gated_gin(&["verify", "all", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    for suite in ["gin-equivalence", "permutation", "gradcheck", "corollary-separation", "wl-agreement"] {
        assert!(stdout(&o).contains(suite));
    }
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn wl_fixtures() {
    let o = gated_gin(&["wl", "--g1", "triangle", "--g2", "path3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "distinguished=true");
    let o = gated_gin(&["wl", "--g1", "cycle6", "--g2", "two-triangles", "--iters", "5"]);
    assert_eq!(stdout(&o).trim(), "distinguished=false");
}

#[test]
fn wl_reads_graph_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    fs::write(&a, "{\"nodes\":[[1.0],[1.0]],\"edges\":[{\"src\":0,\"dst\":1}]}\n").unwrap();
    fs::write(&b, "{\"nodes\":[[1.0],[1.0]],\"edges\":[{\"src\":1,\"dst\":0}]}\n").unwrap();
    let o = gated_gin(&["wl", "--g1", a.to_str().unwrap(), "--g2", b.to_str().unwrap()]);
    assert_eq!(stdout(&o).trim(), "distinguished=false");
    let o = gated_gin(&["wl", "--g1", "no-such-thing", "--g2", "triangle"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("edge.jsonl");
    save_graphs(&data, &gen_edge_task(1, 8, (2, 6), 1).unwrap()).unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"epochs": 1000, "hidden_dim": 6, "phi_v_hidden": [6], "phi_e_hidden": [6], "readout_hidden": [6]}"#).unwrap();
    let model = dir.path().join("model.json");
    let args = [
        "train",
        "--data",
        data.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--epochs",
        "20",
    ];
    let o = gated_gin(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(model.with_extension("csv")).unwrap();
    assert!(report.starts_with("epoch,loss,accuracy\n"));
    // the flag wins over the config file: 20 epochs plus the final row
    assert_eq!(report.lines().count(), 22);
    let again = dir.path().join("again.json");
    let mut args2 = args;
    args2[6] = again.to_str().unwrap();
    gated_gin(&args2);
    assert_eq!(fs::read(&model).unwrap(), fs::read(&again).unwrap());

    let o = gated_gin(&["eval", "--model", model.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("accuracy="));
}

#[test]
fn missing_inputs_exit_2() {
    let o = gated_gin(&["train", "--data", "missing.jsonl", "--out", "m.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.jsonl"));
    let o = gated_gin(&["eval", "--model", "nope.json", "--data", "missing.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_config_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, "{not json").unwrap();
    let o = gated_gin(&["train", "--data", "x.jsonl", "--config", cfg.to_str().unwrap(), "--out", "m.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spread_csv() {
    let o = gated_gin(&["spread", "--chain-length", "4", "--mode", "exact", "--n", "10"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,node,first_arrival,linf_error_to_target"));
    assert!(text.lines().any(|l| l == "4,4,4,0"));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let o = gated_gin(&["spread", "--chain-length", "3", "--mode", "smooth", "--n", "1e6", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("first_arrival=3"));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1 + 4 * 4);
}

#[test]
fn spread_rejects_zero_target() {
    let o = gated_gin(&["spread", "--chain-length", "2", "--target", "0,0"]);
    assert_eq!(o.status.code(), Some(2));
}
