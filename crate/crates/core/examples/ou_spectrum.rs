//! Relaxation spectrum of an Ornstein–Uhlenbeck river, `c = κy²/2`, `a ≡ 1`,
//! against the analytic eigenvalues `λ_n = κ(n − 1)`.
//!
//! ```text
//! cargo run --release --example ou_spectrum
//! ```

use mpemba_wsd::landscape::presets;
use mpemba_wsd::{Grid, SpectralDecomposition};

fn main() -> mpemba_wsd::Result<()> {
    let kappa = 1.0;
    let spec = presets::ou(kappa, 8.0)?;
    let eta = 0.5;
    for n_points in [251, 501, 1001, 2001] {
        let grid = Grid::for_spec(&spec, n_points)?;
        let field = spec.effective_free_energy(&grid, eta)?;
        let decomp = SpectralDecomposition::new(&field, 5)?;
        let errors: Vec<String> = decomp
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(n, l)| format!("{:+.2e}", l - kappa * n as f64))
            .collect();
        let residual = decomp
            .generator
            .apply(&decomp.stationary.weights)
            .iter()
            .fold(0.0f64, |m, r| m.max(r.abs()));
        println!(
            "{n_points:>5} nodes: lambda_n - kappa (n-1) = [{}], |L pi|_max = {residual:.1e}",
            errors.join(", ")
        );
    }

    // A density started off-centre relaxes as e^{-κ t} toward π_η.
    let grid = Grid::for_spec(&spec, 2001)?;
    let decomp = SpectralDecomposition::new(&spec.effective_free_energy(&grid, eta)?, 40)?;
    let shifted = spec.effective_free_energy(&grid, eta)?;
    let start: Vec<f64> = {
        let w: Vec<f64> = grid
            .nodes()
            .zip(&shifted.values)
            .map(|(y, _)| (-(y - 2.0).powi(2) / (2.0 * 0.1)).exp())
            .collect();
        let z = grid.integrate(&w);
        w.iter().map(|v| v / z).collect()
    };
    for t in [0.5, 1.0, 2.0, 4.0] {
        let p = decomp.evolve(&start, t)?;
        let mean = grid.integrate(&grid.nodes().zip(&p).map(|(y, v)| y * v).collect::<Vec<_>>());
        println!(
            "t = {t}: mean = {mean:.6}, analytic 2 e^(-t) = {:.6}",
            2.0 * (-kappa * t).exp()
        );
    }
    Ok(())
}
