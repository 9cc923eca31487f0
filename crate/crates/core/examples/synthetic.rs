//! Runs every method on the synthetic quartic task at one target accuracy.
//!
//! `cargo run --release -p bracketlearn --example synthetic -- [target] [seed]`

use bracketlearn::experiment::{run_experiment, synthetic_data, ExperimentConfig, Method};

fn main() -> bracketlearn::Result<()> {
    let mut args = std::env::args().skip(1);
    let target: f64 = args.next().map_or(0.995, |s| s.parse().expect("target"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let cfg = ExperimentConfig::synthetic().with_seed(seed);
    let raw = synthetic_data(seed)?;
    for m in Method::ALL {
        let out = run_experiment(m, &raw, target, &cfg, None)?;
        let r = &out.report;
        println!(
            "{:<13} attained={} acc={:.4} usage={:.4} val_acc={:.4} val_usage={:.4} {:.1}s {:?}",
            m.name(),
            r.attained,
            r.achieved_accuracy,
            r.usage,
            r.validation_accuracy,
            r.validation_usage,
            r.wall_time_seconds,
            r.selection
        );
    }
    Ok(())
}
