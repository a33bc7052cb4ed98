//! Builds warm-up / stable / decay schedules for the tilted double well,
//! checks them against the admissible decay window and tunes a schedule
//! whose decay is too slow.
//!
//! ```text
//! cargo run --release --example wsd_schedule [output_dir]
//! ```

use std::path::PathBuf;

use mpemba_wsd::landscape::presets::{double_well, DoubleWellParams};
use mpemba_wsd::schedule::{
    recommended_schedule, tune_decay, validate_schedule, DecayFamily, Margins, SchedulePlan,
    ValidationReport,
};
use mpemba_wsd::{Grid, TimeConvention};

fn summarize(label: &str, plan: &SchedulePlan, report: &ValidationReport) {
    println!(
        "{label}: p = {}, m = {:.4}, stable {:.3}, decay {:.3}, final eta {:.3e}",
        plan.decay.exponent,
        plan.decay.coefficient,
        plan.stable.duration,
        plan.decay_duration,
        plan.final_eta()
    );
    println!(
        "  {} ({} of {} instants failing), min |eta'|/(k eta^2) = {:.2}, max |eta'|/(a eta) = {:.3}",
        if report.passed { "admissible" } else { "rejected" },
        report.failing().count(),
        report.points.len(),
        report.worst_quench_ratio,
        report.worst_saturation_ratio
    );
}

fn main() -> mpemba_wsd::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let spec = double_well(DoubleWellParams {
        w: 0.8,
        beta: 2.0,
        a0: 4f64.exp(),
        ..DoubleWellParams::default()
    })?;
    let grid = Grid::for_spec(&spec, 2001)?;
    let y_star = spec.river_minimum(&grid);
    let a = spec.evaluate(y_star)?.a;
    let k = spec.curvature_log_slope(y_star)?.abs();
    let eta_star = 2.1138;
    println!("river minimum y = {y_star:.3}: a = {a:.4}, k = {k:.4}, eta* = {eta_star}");

    let margins = Margins::default();
    let recommended = recommended_schedule(eta_star, a, k, 1.0)?;
    let report = validate_schedule(&recommended, recommended.decay_duration, 200, margins)?;
    summarize("recommended", &recommended, &report);
    // m = a/5 clears the quench margin at eta* only when k <= a/25.
    println!(
        "  k/a = {:.3} (recommended decay is guaranteed for k/a <= 0.04)",
        k / a
    );

    // A power-law decay with too small a coefficient falls behind the
    // river drift once eta has dropped.
    let slow = SchedulePlan::new(
        1.0,
        recommended.stable.duration,
        DecayFamily::new(2.0, 0.05, eta_star, TimeConvention::Rescaled)?,
        recommended.decay_duration,
        a,
        k,
        0.05,
    )?;
    let report = validate_schedule(&slow, slow.decay_duration, 200, margins)?;
    summarize("slow p = 2", &slow, &report);
    if let Some(first) = report.failing().next() {
        println!(
            "  first failure at t = {:.3}: eta = {:.4}, envelope [{:.4}, {:.4}]",
            first.t, first.eta, first.envelope_lower, first.envelope_upper
        );
    }

    let tuned = tune_decay(&slow, slow.decay_duration, 200, margins)?;
    summarize("tuned", &tuned.plan, &tuned.report);
    println!("  {} candidate(s) tried", tuned.attempts.len());

    // The closed-form decay against a direct RK4 integration of eta' = -m eta^p.
    println!("closed form vs RK4 for eta' = -m eta^p, m = 0.5, t = 4:");
    for p in [0.5, 1.0, 1.5, 2.0, 3.0] {
        let family = DecayFamily::new(p, 0.5, eta_star, TimeConvention::Rescaled)?;
        let f = |eta: f64| -0.5 * eta.max(0.0).powf(p);
        let (mut eta, h) = (eta_star, 1e-4);
        for _ in 0..40_000 {
            let k1 = f(eta);
            let k2 = f(eta + 0.5 * h * k1);
            let k3 = f(eta + 0.5 * h * k2);
            let k4 = f(eta + h * k3);
            eta += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let exact = family.value(4.0);
        println!(
            "  p = {p}: closed {exact:.10}, rk4 {:.10}, extinction {:?}",
            eta.max(0.0),
            family.extinction_time()
        );
    }

    if let Some(dir) = &out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("recommended.json"), recommended.to_json())?;
        std::fs::write(dir.join("recommended.svg"), recommended.to_svg())?;
        std::fs::write(dir.join("tuned.svg"), tuned.plan.to_svg())?;
        std::fs::write(
            dir.join("recommended_steps.csv"),
            recommended.to_step_csv(100.0)?,
        )?;
    }
    Ok(())
}
