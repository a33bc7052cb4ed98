//! Scans the slow-mode amplitude `a₂(η)` of plateau states on the default
//! double-well preset and on its tilted variants, printing the verdict and
//! comparing the three derivative formulas.
//!
//! ```text
//! cargo run --release --example amplitude_scan [output_dir]
//! ```

use std::path::PathBuf;

use mpemba_wsd::landscape::presets::{double_well, DoubleWellParams};
use mpemba_wsd::mpemba::{find_strong_points, scan_amplitude, RootChoice, ROOT_TOLERANCE};
use mpemba_wsd::{Grid, SpectralDecomposition};

fn main() -> mpemba_wsd::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let eta_b = 0.15;
    for beta in [0.0, 0.5, 2.0] {
        let spec = double_well(DoubleWellParams {
            w: 0.8,
            beta,
            ..DoubleWellParams::default()
        })?;
        let grid = Grid::for_spec(&spec, 2001)?;
        let decomp = SpectralDecomposition::new(&spec.effective_free_energy(&grid, eta_b)?, 4)?;
        let curve = scan_amplitude(&decomp, &spec, [2.0 * eta_b, 50.0 * eta_b], 48)?;
        let report =
            find_strong_points(&curve, &decomp, &spec, ROOT_TOLERANCE, RootChoice::Largest)?;
        println!(
            "beta = {beta}: lambda2 = {:.4}, lambda3 = {:.4}, verdict {:?}, eta* = {:.6}",
            curve.lambda2, curve.lambda3, report.verdict, report.optimal_plateau
        );
        println!(
            "  {:>9} {:>12} {:>12} {:>12} {:>12}",
            "eta", "a2", "exact", "Cov(F,u2)", "Cov(ln a,u2)"
        );
        for i in (0..curve.eta_samples.len()).step_by(8) {
            println!(
                "  {:>9.4} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
                curve.eta_samples[i],
                curve.a2_values[i],
                curve.derivative_values[i],
                curve.free_energy_form_values[i],
                curve.log_curvature_form_values[i]
            );
        }
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir)?;
            std::fs::write(
                dir.join(format!("amplitude_beta{beta}.csv")),
                curve.to_csv(),
            )?;
            std::fs::write(
                dir.join(format!("amplitude_beta{beta}.json")),
                curve.report_json(&report),
            )?;
            std::fs::write(
                dir.join(format!("amplitude_beta{beta}.svg")),
                curve.to_svg(&report),
            )?;
        }
    }
    Ok(())
}
