//! `bracketlearn`: synthesise data, run experiments, export rasters and run
//! verification suites.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error, 3 target
//! unattainable (report still written), 4 verification failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use bracketlearn::bracketing::{BudgetClassifier, Hypothesis};
use bracketlearn::datasets::{generate_synthetic_raw, load_csv, synthetic_label, FeatureMap};
use bracketlearn::experiment::{run_experiment, Artifact, ExperimentConfig, Method};
use bracketlearn::verify::{run_suite, Suite};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_UNATTAINABLE: u8 = 3;
const EXIT_VERIFY_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "bracketlearn", version, about = "Budget learning by bracketing a cloud classifier")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic quartic dataset as CSV (x, y, cloud_label).
    Synth {
        #[arg(long, default_value_t = 2500, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, env = "BRACKETLEARN_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train, select on validation and report on the held-out test split.
    Run {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "target-acc")]
        target_acc: f64,
        /// Experiment configuration JSON; overrides --preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Built-in configuration: synthetic, mnist or default.
        #[arg(long, default_value = "default")]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write the selected bracket / gated classifier here.
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Also write one report per sweep value (alt-min, sum-relax) here.
        #[arg(long)]
        sweep_out: Option<PathBuf>,
        /// Use certified selection (bracketing only).
        #[arg(long)]
        certify: bool,
        #[arg(long, default_value_t = 0.1, requires = "certify")]
        zeta: f64,
        #[arg(long, default_value_t = 0.1, requires = "certify")]
        delta: f64,
    },
    /// Evaluate a saved bundle on a grid over [-10, 10]^2.
    Raster {
        #[arg(long = "model-bundle")]
        model_bundle: PathBuf,
        #[arg(long, default_value_t = 400, value_parser = clap::value_parser!(u64).range(1..))]
        grid: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a verification suite and write its JSON report.
    Verify {
        #[arg(long)]
        suite: Suite,
        #[arg(long, env = "BRACKETLEARN_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl<E: std::fmt::Display> From<E> for Failure
where
    E: Into<bracketlearn::Error>,
{
    fn from(e: E) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let s = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    std::fs::write(path, s + "\n").map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8, Failure> {
    match cmd {
        Command::Synth { n, seed, out } => {
            generate_synthetic_raw(n as usize, seed)?.write_csv(&out)?;
            Ok(0)
        }
        Command::Run { method, data, target_acc, config, preset, out, bundle, sweep_out, certify, zeta, delta } => {
            if certify && method != Method::Bracketing {
                return Err(Failure::Usage("--certify applies to the bracketing method only".into()));
            }
            if !(target_acc > 0.0 && target_acc < 1.0) {
                return Err(Failure::Usage("--target-acc must lie in (0, 1)".into()));
            }
            let mut cfg = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
                    serde_json::from_str::<ExperimentConfig>(&text)
                        .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
                }
                None => ExperimentConfig::preset(&preset).map_err(|e| Failure::Usage(e.to_string()))?,
            };
            if let Ok(s) = std::env::var("BRACKETLEARN_SEED") {
                let seed = s.parse().map_err(|_| Failure::Usage(format!("BRACKETLEARN_SEED `{s}` is not an integer")))?;
                cfg = cfg.with_seed(seed);
            }
            let raw = load_csv(&data, cfg.feature_map)?;
            let outcome = run_experiment(method, &raw, target_acc, &cfg, certify.then_some((zeta, delta)))?;
            write_json(&out, &outcome.report)?;
            if let Some(p) = bundle {
                write_json(&p, &outcome.artifact)?;
            }
            if let Some(p) = sweep_out {
                write_json(&p, &outcome.sub_reports)?;
            }
            let r = &outcome.report;
            println!(
                "{} target={} accuracy={:.4} usage={:.4} attained={}",
                r.method, r.target_accuracy, r.achieved_accuracy, r.usage, r.attained
            );
            Ok(if r.attained { 0 } else { EXIT_UNATTAINABLE })
        }
        Command::Raster { model_bundle, grid, out } => {
            let text = std::fs::read_to_string(&model_bundle)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", model_bundle.display())))?;
            let artifact: Artifact = serde_json::from_str(&text)
                .map_err(|e| Failure::Runtime(format!("{}: not a model bundle: {e}", model_bundle.display())))?;
            raster(&artifact, grid as usize, &out)?;
            Ok(0)
        }
        Command::Verify { suite, seed, out } => {
            let report = run_suite(suite, seed)?;
            if let Some(p) = out {
                write_json(&p, &report)?;
            }
            for c in report.cases.iter().filter(|c| !c.passed) {
                eprintln!("FAIL {}: {}", c.name, c.detail);
            }
            println!("{} {}/{} cases passed", suite, report.cases_passed, report.cases_total);
            Ok(if report.passed { 0 } else { EXIT_VERIFY_FAILED })
        }
    }
}

/// Feature map of the first model found in a hypothesis; constants need none.
fn feature_map_of(h: &Hypothesis) -> Option<FeatureMap> {
    match h {
        Hypothesis::Linear(m) | Hypothesis::Confident { confidence_of: m, .. } => Some(m.feature_map),
        Hypothesis::Constant { .. } => None,
        Hypothesis::Not { not } => feature_map_of(not),
        Hypothesis::And { and: pair } | Hypothesis::Or { or: pair } => {
            feature_map_of(&pair.0).or_else(|| feature_map_of(&pair.1))
        }
    }
}

fn raster(artifact: &Artifact, grid: usize, out: &Path) -> Result<(), Failure> {
    let bracket = artifact.bracket();
    let map = feature_map_of(&bracket.lower).or_else(|| feature_map_of(&bracket.upper)).unwrap_or(FeatureMap::Identity);
    map.output_dim(2).map_err(|e| Failure::Runtime(format!("bundle does not take planar inputs: {e}")))?;
    let c = BudgetClassifier::new(bracket);
    let file = File::create(out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| Failure::Runtime(e.to_string());
    writeln!(w, "x,y,defer,local,cloud").map_err(io)?;
    let step = 20.0 / grid as f64;
    for j in 0..grid {
        let y = -10.0 + (j as f64 + 0.5) * step;
        for i in 0..grid {
            let x = -10.0 + (i as f64 + 0.5) * step;
            let features = map.apply(&[x, y]);
            let defer = c.bracket.defers(&features);
            let local = c.bracket.upper.decide(&features);
            let cloud = synthetic_label(x, y);
            writeln!(w, "{x},{y},{},{},{}", defer as u8, local as u8, cloud as u8).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
