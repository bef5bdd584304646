//! `gated-gin` command line: train, evaluate, verify, spread, wl.
//!
//! Exit codes: 0 success, 1 a verification suite failed, 2 usage or I/O error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gated_gin::graph::{fixtures, load_graphs};
use gated_gin::layers::{load_model, save_model, EdgeMode};
use gated_gin::spread::{chain_fixture, propagate, SpreadConfig};
use gated_gin::train::{evaluate, train, OptimizerKind, TrainConfig};
use gated_gin::verify::Suite;
use gated_gin::wl::wl_distinguish;
use gated_gin::{Graph, Model64};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "gated-gin", version, about = "Gated-GIN graph networks and their verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on a JSON Lines dataset.
    Train(TrainArgs),
    /// Print loss and accuracy of a saved model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run a verification suite.
    Verify {
        #[arg(value_enum)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Propagate a state along a chain with the delta aggregator.
    Spread(SpreadArgs),
    /// Compare two graphs with 1-WL refinement.
    Wl {
        /// Graph file (first line is used) or a fixture name.
        #[arg(long)]
        g1: String,
        #[arg(long)]
        g2: String,
        #[arg(long)]
        iters: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// JSON file with training settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the model path with a `.csv` extension.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    share_weights: Option<bool>,
    #[arg(long, value_enum)]
    edge_mode: Option<EdgeModeArg>,
    #[arg(long)]
    ablate_edges: Option<bool>,
}

#[derive(Args, Debug)]
struct SpreadArgs {
    #[arg(long)]
    chain_length: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    mode: ModeArg,
    /// Sharpness base for smooth mode.
    #[arg(long, default_value_t = 1e6)]
    n: f64,
    /// Defaults to the chain length.
    #[arg(long)]
    steps: Option<usize>,
    /// Comma-separated target state.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    target: Vec<f64>,
    #[arg(long)]
    no_self: bool,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SuiteArg {
    GinEquivalence,
    Permutation,
    Gradcheck,
    CorollarySeparation,
    WlAgreement,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EdgeModeArg {
    Directed,
    Symmetric,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Exact,
    Smooth,
}

type Failure = String;

fn io_context<E: std::fmt::Display>(what: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| format!("{}: {e}", what.display())
}

/// Built-in defaults, then the config file, then explicit flags.
fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_context(path))?;
            serde_json::from_str::<TrainConfig>(&text).map_err(io_context(path))?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.optimizer {
        cfg.optimizer = match v {
            OptimizerArg::Sgd => OptimizerKind::Sgd,
            OptimizerArg::Adam => OptimizerKind::Adam,
        };
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.hidden_dim {
        cfg.hidden_dim = v;
    }
    if let Some(v) = args.layers {
        cfg.num_layers = v;
    }
    if let Some(v) = args.share_weights {
        cfg.share_weights = v;
    }
    if let Some(v) = args.edge_mode {
        cfg.edge_mode = match v {
            EdgeModeArg::Directed => EdgeMode::Directed,
            EdgeModeArg::Symmetric => EdgeMode::Symmetric,
        };
    }
    if let Some(v) = args.ablate_edges {
        cfg.ablate_edges = v;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn cmd_train(args: &TrainArgs) -> Result<i32, Failure> {
    let cfg = resolve_train_config(args)?;
    let data = load_graphs(&args.data).map_err(io_context(&args.data))?;
    let mut model: Model64 = cfg.init_model(&data).map_err(|e| e.to_string())?;
    let report = train(&mut model, &data, &cfg).map_err(|e| e.to_string())?;
    save_model(&args.out, &model).map_err(io_context(&args.out))?;
    let report_path = args.report.clone().unwrap_or_else(|| args.out.with_extension("csv"));
    report.save_csv(&report_path).map_err(io_context(&report_path))?;
    println!(
        "epochs={} final_loss={} accuracy={}",
        cfg.epochs,
        report.final_loss,
        report.final_accuracy.unwrap_or(f64::NAN)
    );
    Ok(EXIT_OK)
}

fn cmd_eval(model: &Path, data: &Path) -> Result<i32, Failure> {
    let m: Model64 = load_model(model).map_err(io_context(model))?;
    let d = load_graphs(data).map_err(io_context(data))?;
    let (loss, acc) = evaluate(&m, &d).map_err(|e| e.to_string())?;
    println!("loss={loss} accuracy={acc}");
    Ok(EXIT_OK)
}

fn cmd_verify(suite: SuiteArg, seed: u64) -> Result<i32, Failure> {
    let suites: Vec<Suite> = match suite {
        SuiteArg::All => Suite::ALL.to_vec(),
        SuiteArg::GinEquivalence => vec![Suite::GinEquivalence],
        SuiteArg::Permutation => vec![Suite::Permutation],
        SuiteArg::Gradcheck => vec![Suite::Gradcheck],
        SuiteArg::CorollarySeparation => vec![Suite::CorollarySeparation],
        SuiteArg::WlAgreement => vec![Suite::WlAgreement],
    };
    let mut all = true;
    for s in suites {
        let report = s.run(seed).map_err(|e| format!("{s}: {e}"))?;
        print!("{report}");
        all &= report.passed();
    }
    Ok(if all { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

fn cmd_spread(args: &SpreadArgs) -> Result<i32, Failure> {
    let mut cfg = match args.mode {
        ModeArg::Exact => SpreadConfig::exact(args.target.clone()),
        ModeArg::Smooth => SpreadConfig::smooth(args.target.clone(), args.n),
    };
    cfg.include_self = !args.no_self;
    let d = args.chain_length;
    let g = chain_fixture(d, &args.target).map_err(|e| e.to_string())?;
    let trace = propagate(&g, 0, &cfg, args.steps.unwrap_or(d)).map_err(|e| e.to_string())?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(io_context(path))?;
            trace.write_csv(file).map_err(io_context(path))?;
            let arrival = trace.first_arrival[d].map_or(-1, |a| a as i64);
            println!(
                "first_arrival={arrival} linf_error={:e}",
                trace.linf_error(trace.steps(), d)
            );
        }
        None => trace.write_csv(std::io::stdout().lock()).map_err(|e| e.to_string())?,
    }
    Ok(EXIT_OK)
}

fn graph_arg(arg: &str) -> Result<Graph, Failure> {
    let path = Path::new(arg);
    if path.exists() {
        let data = load_graphs(path).map_err(io_context(path))?;
        return data
            .graphs
            .into_iter()
            .next()
            .ok_or_else(|| format!("{arg}: no graph in file"));
    }
    fixtures::by_name(arg).ok_or_else(|| format!("{arg}: no such file or fixture (fixtures: triangle, path3, cycle6, two-triangles)"))
}

fn cmd_wl(g1: &str, g2: &str, iters: Option<usize>) -> Result<i32, Failure> {
    let a = graph_arg(g1)?;
    let b = graph_arg(g2)?;
    println!("distinguished={}", wl_distinguish(&a, &b, iters.unwrap_or(usize::MAX)));
    Ok(EXIT_OK)
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval { model, data } => cmd_eval(model, data),
        Command::Verify { suite, seed } => cmd_verify(*suite, *seed),
        Command::Spread(args) => cmd_spread(args),
        Command::Wl { g1, g2, iters } => cmd_wl(g1, g2, *iters),
    };
    result.unwrap_or_else(|msg| {
        eprintln!("error: {msg}");
        EXIT_USAGE
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_train(extra: &[&str]) -> TrainArgs {
        let mut argv = vec!["gated-gin", "train", "--data", "d.jsonl", "--out", "m.json"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Train(a) => a,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flags_beat_config_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"epochs": 7, "lr": 0.5}"#).unwrap();
        let p = path.to_str().unwrap();
        let cfg = resolve_train_config(&parse_train(&["--config", p, "--lr", "0.25"])).unwrap();
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.lr, 0.25);
        assert_eq!(cfg.hidden_dim, TrainConfig::default().hidden_dim);
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"epoch": 7}"#).unwrap();
        assert!(resolve_train_config(&parse_train(&["--config", path.to_str().unwrap()])).is_err());
    }

    #[test]
    fn unknown_flags_are_usage_errors() {
        assert_eq!(run(["gated-gin", "verify", "permutation", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["gated-gin", "verify", "nonsense"]), EXIT_USAGE);
    }
}
