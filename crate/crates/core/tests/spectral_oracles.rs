//! Eigenpairs checked against a dense solver, analytic spectra and grid refinement.

use mpemba_wsd::landscape::presets::{self, double_well, DoubleWellParams};
use mpemba_wsd::{Grid, LandscapeSpec, SpectralDecomposition};
use nalgebra::DMatrix;

fn decompose(spec: &LandscapeSpec, n_points: usize, eta: f64, n_modes: usize) -> SpectralDecomposition {
    let grid = Grid::for_spec(spec, n_points).unwrap();
    SpectralDecomposition::new(&spec.effective_free_energy(&grid, eta).unwrap(), n_modes).unwrap()
}

/// Dense `−𝓛` assembled column by column from the matrix-free generator.
fn dense_generator(d: &SpectralDecomposition) -> DMatrix<f64> {
    let n = d.grid.len();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        for (i, v) in d.generator.apply(&e).into_iter().enumerate() {
            m[(i, j)] = -v;
        }
        e[j] = 0.0;
    }
    m
}

#[test]
fn eigenvalues_match_a_dense_solver() {
    let spec = double_well(DoubleWellParams::default()).unwrap();
    for eta in [0.2, 0.5, 1.0] {
        let d = decompose(&spec, 301, eta, 6);
        let minus_l = dense_generator(&d);
        // Symmetrize with D = diag(π/V) independently of the library.
        let scale: Vec<f64> = d
            .stationary
            .weights
            .iter()
            .zip(&d.generator.volumes)
            .map(|(p, v)| (p / v).sqrt())
            .collect();
        let n = scale.len();
        let h = DMatrix::from_fn(n, n, |i, j| minus_l[(i, j)] * scale[j] / scale[i]);
        let asymmetry = (&h - h.transpose()).amax();
        assert!(asymmetry < 1e-8 * h.amax(), "asymmetry {asymmetry:e}");
        let sym = (&h + h.transpose()) * 0.5;
        let mut dense: Vec<f64> = sym.symmetric_eigenvalues().iter().cloned().collect();
        dense.sort_by(f64::total_cmp);
        for (k, (ours, theirs)) in d.eigenvalues.iter().zip(&dense).enumerate() {
            let tol = 1e-9 * h.amax() + 1e-8 * theirs.abs();
            assert!((ours - theirs).abs() < tol, "eta {eta}, mode {k}: {ours} vs {theirs}");
        }
    }
}

#[test]
fn right_modes_are_eigenvectors_of_the_forward_operator() {
    let spec = presets::tilted_river().unwrap();
    let d = decompose(&spec, 401, 0.4, 5);
    for (lambda, v) in d.eigenvalues.iter().zip(&d.right_modes) {
        let lv = d.generator.apply(v);
        let norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let worst = lv
            .iter()
            .zip(v)
            .fold(0.0f64, |m, (a, b)| m.max((a + lambda * b).abs()));
        assert!(worst < 1e-7 * norm * (1.0 + lambda), "lambda {lambda}: residual {worst:e}");
    }
    for (lambda, u) in d.eigenvalues.iter().zip(&d.left_modes) {
        let lu = d.generator.apply_adjoint(u);
        let norm = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let worst = lu
            .iter()
            .zip(u)
            .fold(0.0f64, |m, (a, b)| m.max((a + lambda * b).abs()));
        assert!(worst < 1e-7 * norm * (1.0 + lambda), "lambda {lambda}: residual {worst:e}");
    }
}

#[test]
fn ornstein_uhlenbeck_spectrum_is_kappa_times_n() {
    for kappa in [0.5, 1.0, 2.0] {
        let spec = presets::ou(kappa, 8.0).unwrap();
        let d = decompose(&spec, 2001, 0.5, 6);
        for (n, lambda) in d.eigenvalues.iter().enumerate() {
            let exact = kappa * n as f64;
            assert!((lambda - exact).abs() < 2e-4 * (1.0 + exact), "kappa {kappa}, n {n}: {lambda}");
        }
    }
}

#[test]
fn ornstein_uhlenbeck_modes_are_hermite_polynomials() {
    // u_2 ∝ y and u_3 ∝ y² − η/κ for c = κy²/2, a ≡ 1.
    let (kappa, eta) = (1.0, 0.5);
    let spec = presets::ou(kappa, 8.0).unwrap();
    let d = decompose(&spec, 2001, eta, 4);
    let grid = &d.grid;
    let check = |u: &[f64], shape: &dyn Fn(f64) -> f64| {
        let ratio = grid
            .nodes()
            .zip(u)
            .filter(|(y, _)| y.abs() > 0.3 && y.abs() < 2.0)
            .map(|(y, v)| v / shape(y))
            .collect::<Vec<_>>();
        let mean = ratio.iter().sum::<f64>() / ratio.len() as f64;
        let spread = ratio.iter().fold(0.0f64, |m, r| m.max((r - mean).abs()));
        assert!(spread < 1e-3 * mean.abs(), "spread {spread:e} around {mean}");
    };
    check(&d.left_modes[1], &|y| y);
    check(&d.left_modes[2], &|y| y * y - eta / kappa + 1e-300);
}

#[test]
fn slowest_rate_converges_at_second_order() {
    let spec = double_well(DoubleWellParams::default()).unwrap();
    let reference = decompose(&spec, 8001, 0.3, 3).eigenvalues[1];
    let errors: Vec<f64> = [251, 501, 1001]
        .iter()
        .map(|&n| (decompose(&spec, n, 0.3, 3).eigenvalues[1] - reference).abs())
        .collect();
    for pair in errors.windows(2) {
        let order = (pair[0] / pair[1]).log2();
        assert!(order > 1.8, "observed order {order:.2} from errors {errors:?}");
    }
}

#[test]
fn leading_modes_reconstruct_a_smooth_density() {
    let spec = presets::tilted_river().unwrap();
    let grid = Grid::for_spec(&spec, 401).unwrap();
    let field = spec.effective_free_energy(&grid, 0.5).unwrap();
    let d = SpectralDecomposition::new(&field, 40).unwrap();
    // π times a profile with zero slope at both walls, so the no-flux
    // expansion converges quickly.
    let bump: Vec<f64> = grid
        .nodes()
        .zip(&d.stationary.weights)
        .map(|(y, p)| p * (1.0 + 0.8 * (std::f64::consts::PI * (y + 2.0) / 4.0).cos()))
        .collect();
    let z = grid.integrate(&bump);
    let start: Vec<f64> = bump.iter().map(|b| b / z).collect();
    let peak = start.iter().fold(0.0f64, |m, p| m.max(*p));
    let error = |modes: &SpectralDecomposition| {
        let back = modes.evolve(&start, 0.0).unwrap();
        back.iter().zip(&start).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / peak
    };
    let coarse = error(&SpectralDecomposition::new(&field, 5).unwrap());
    let fine = error(&d);
    assert!(fine < 1e-5 && fine < coarse / 100.0, "relative error {coarse:e} with 5 modes, {fine:e} with 40");
    let late = d.evolve(&start, 200.0).unwrap();
    let gap = late
        .iter()
        .zip(&d.stationary.weights)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(gap < 1e-9, "late density differs from pi by {gap:e}");
}
