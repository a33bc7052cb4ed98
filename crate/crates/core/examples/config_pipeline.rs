//! Drives the same pipelines as the `mpemba-wsd` binary from a TOML
//! experiment file, without going through the command line.
//!
//! ```text
//! cargo run --release --example config_pipeline [config.toml]
//! ```

use std::path::PathBuf;

use mpemba_wsd::cli::{analyze, synthesize_schedule};
use mpemba_wsd::config::ExperimentConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/strong_mpemba.toml")
        });
    let cfg = ExperimentConfig::load(&path)?;
    println!("{}", path.display());

    if cfg.scan.is_some() {
        let analysis = analyze(&cfg)?;
        let eig = &analysis.decomposition.eigenvalues;
        println!(
            "eta_b = {}: lambda2 = {:.5}, lambda3 = {:.5}",
            analysis.eta_b, eig[1], eig[2]
        );
        println!(
            "verdict {:?}, eta* = {:.6}, strong points {:?}",
            analysis.report.verdict,
            analysis.report.optimal_plateau,
            analysis
                .report
                .strong_points
                .iter()
                .map(|p| p.eta)
                .collect::<Vec<_>>()
        );
    }

    if cfg.schedule.is_some() {
        let outcome = synthesize_schedule(&cfg)?;
        let plan = &outcome.plan;
        println!(
            "schedule: warm-up {}, stable {:.3} at eta* = {:.4}, decay p = {} m = {:.4} for {:.3}",
            plan.warmup.duration,
            plan.stable.duration,
            plan.stable.eta,
            plan.decay.exponent,
            plan.decay.coefficient,
            plan.decay_duration
        );
        println!(
            "validation {} after {} tuning attempt(s)",
            if outcome.report.passed {
                "passed"
            } else {
                "failed"
            },
            outcome.attempts.len()
        );
    }
    Ok(())
}
