use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use ssqp_bench::config::{BenchConfig, GammaSpec};
use ssqp_bench::experiment::{compute_reference, METADATA_FILE};
use ssqp_bench::report::{calls_to_threshold, slope_fit, wall_clock_model, FitMode, Metric, Window};
use ssqp_bench::{run_experiment, trace_io, BenchError, EXIT_DIVERGED, OUTPUT_DIR_ENV};
use ssqp_core::algorithms::StoppingRule;

#[derive(Parser)]
#[command(name = "ssqp-bench", version, about = "Run and analyze SSQP benchmark experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a config (or a metadata file) and write traces.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compute the reference point and value and print them as JSON.
    Reference {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Mean calls to reach each threshold over the traces of a run directory.
    Report {
        trace_dir: PathBuf,
        #[arg(long = "threshold", required = true)]
        thresholds: Vec<f64>,
        #[arg(long, default_value = "dist_sq")]
        metric: Metric,
        /// QMO cost in SFO units; defaults to the value in the run metadata.
        #[arg(long)]
        m: Option<f64>,
    },
    /// Least-squares slope of log(metric) over a trace.
    Slope {
        trace: PathBuf,
        #[arg(long, default_value = "gap")]
        metric: Metric,
        /// Fit against the iteration (epoch) instead of its logarithm.
        #[arg(long)]
        log_linear: bool,
        /// `final-decade`, `all`, or a starting iteration.
        #[arg(long, default_value = "final-decade", value_parser = parse_window)]
        window: Window,
    },
}

#[derive(Args)]
struct Overrides {
    /// Seeds: a list `1,2,5`, a range `1..50` (inclusive), or both.
    #[arg(long, value_parser = parse_seeds)]
    seed: Option<Seeds>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Penalty parameter, replacing the configured one.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, conflicts_with = "epochs")]
    iterations: Option<u64>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    stride: Option<u64>,
    #[arg(long)]
    wall_clock: bool,
}

#[derive(Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.parse().map_err(|_| format!("bad seed range {part:?}"))?;
            let b: u64 = b.trim_start_matches('=').parse().map_err(|_| format!("bad seed range {part:?}"))?;
            if b < a {
                return Err(format!("empty seed range {part:?}"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad seed {part:?}"))?);
        }
    }
    if out.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(Seeds(out))
}

fn parse_window(s: &str) -> Result<Window, String> {
    match s {
        "final-decade" | "final_decade" => Ok(Window::FinalDecade),
        "all" => Ok(Window::All),
        n => n.parse().map(Window::From).map_err(|_| format!("bad window {n:?}")),
    }
}

fn load_config(path: &Path, o: &Overrides) -> Result<BenchConfig, BenchError> {
    let mut cfg = BenchConfig::load(path)?;
    if let Some(Seeds(s)) = &o.seed {
        cfg.seeds = s.clone();
    }
    if let Some(dir) = &o.output {
        cfg.output = dir.clone();
    } else if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
        cfg.output = PathBuf::from(dir);
    }
    if let Some(g) = o.gamma {
        cfg.gamma = GammaSpec::Tuned { value: g };
    }
    if let Some(t) = o.iterations {
        cfg.stop = StoppingRule::Iterations(t);
    }
    if let Some(e) = o.epochs {
        cfg.stop = StoppingRule::Epochs(e);
    }
    if o.stride.is_some() {
        cfg.checkpoint_stride = o.stride;
    }
    if o.wall_clock {
        cfg.wall_clock = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).unwrap_or_default());
}

fn run(cmd: Command) -> Result<i32, BenchError> {
    match cmd {
        Command::Run { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let out = run_experiment(&cfg)?;
            let diverged = out.diverged();
            log::info!("wrote {} traces to {}", out.traces.len(), out.directory.display());
            if diverged.is_empty() {
                Ok(0)
            } else {
                eprintln!("diverged seeds: {diverged:?}");
                Ok(EXIT_DIVERGED)
            }
        }
        Command::Reference { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let (penalty, reference) = compute_reference(&cfg)?;
            print_json(&json!({ "gamma": penalty.gamma, "reference": reference }));
            Ok(0)
        }
        Command::Report { trace_dir, thresholds, metric, m } => {
            let m = match m {
                Some(m) => m,
                None => metadata_cost(&trace_dir)?,
            };
            if m.is_nan() || m < 1.0 {
                return Err(BenchError::Config("M must be at least 1".into()));
            }
            let traces = read_trace_dir(&trace_dir)?;
            let rows: Vec<_> = thresholds
                .iter()
                .map(|&eps| {
                    let r = calls_to_threshold(&traces, metric, eps);
                    let model = r.mean_sfo.zip(r.mean_qmo).map(|(s, q)| wall_clock_model(s, q, m));
                    json!({
                        "epsilon": eps,
                        "mean_sfo": r.mean_sfo,
                        "mean_qmo": r.mean_qmo,
                        "mean_wall": r.mean_wall,
                        "model_time": model,
                        "crossed": r.crossed,
                        "censored": r.censored,
                    })
                })
                .collect();
            print_json(&json!({ "metric": metric, "m": m, "traces": traces.len(), "thresholds": rows }));
            Ok(0)
        }
        Command::Slope { trace, metric, log_linear, window } => {
            let rows = trace_io::read_trace_file(&trace)?;
            let mode = if log_linear { FitMode::LogLinear } else { FitMode::LogLog };
            let fit = slope_fit(&rows, metric, mode, window).map_err(|e| BenchError::Trace(e.to_string()))?;
            print_json(&json!({ "metric": metric, "mode": mode, "fit": fit }));
            Ok(0)
        }
    }
}

fn metadata_cost(dir: &Path) -> Result<f64, BenchError> {
    let path = dir.join(METADATA_FILE);
    let Ok(text) = std::fs::read_to_string(&path) else {
        return Ok(1.0);
    };
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| BenchError::Trace(format!("{}: {e}", path.display())))?;
    Ok(v.pointer("/config/cost_model_m").and_then(serde_json::Value::as_f64).unwrap_or(1.0))
}

fn read_trace_dir(dir: &Path) -> Result<Vec<Vec<ssqp_core::algorithms::RunTraceRow>>, BenchError> {
    let entries = std::fs::read_dir(dir).map_err(|e| BenchError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(BenchError::Trace(format!("no trace files in {}", dir.display())));
    }
    paths.iter().map(|p| trace_io::read_trace_file(p)).collect()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
