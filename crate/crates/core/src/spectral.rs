//! Fokker–Planck operator of the river coordinate on a reflecting box.
//!
//! The generator `𝓛_η p = ∂_y[F'_η p + η ∂_y p]` is discretized in
//! conservative flux form on node-centred control volumes (trapezoid
//! volumes `h/2` at the walls, `h` inside). The flux between neighbouring
//! nodes uses exponential fitting,
//!
//! ```text
//! J_{i+1/2} = (η/h) [B(δ_i) p_i − B(−δ_i) p_{i+1}],   δ_i = (F_{i+1} − F_i)/η,
//! ```
//!
//! with the Bernoulli function `B(z) = z / (e^z − 1)`. Wall fluxes vanish.
//! The discrete Boltzmann weights `exp(−F_i/η)` null every flux exactly, and
//! detailed balance makes `D^{-1/2} (−𝓛) D^{1/2}` symmetric for
//! `D = diag(π_i / V_i)`.
//!
//! Mode conventions: `φ_n` are eigenvectors of the symmetric operator,
//! orthonormal under the trapezoid inner product; left modes
//! `u_n = φ_n / √π` (with `u_1 ≡ 1`) give expansion coefficients
//! `a_n = ∫ u_n p dy`; right modes `v_n = φ_n √π` (with `v_1 = π`) span the
//! density. Modes are indexed from 1 with `λ_1 = 0`.

use std::io::Write;

use log::warn;

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::landscape::{FreeEnergyField, Grid};
use crate::tridiag::{SymTridiag, TridiagLu};

/// `B(z) = z / (e^z − 1)`, continuous through `z = 0`.
pub fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 - 0.5 * z + z * z / 12.0
    } else if z > 700.0 {
        z * (-z).exp()
    } else {
        z / z.exp_m1()
    }
}

/// Boltzmann distribution `π_η ∝ exp(−F_η/η)` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub eta: f64,
    pub grid: Grid,
    /// `π(y_i)`, normalized so the trapezoid integral is 1.
    pub weights: Vec<f64>,
    /// `ln π(y_i)`; finite even where `weights` underflow.
    pub log_weights: Vec<f64>,
    /// `ln Z_η` with `Z_η = ∫ exp(−F_η/η) dy`.
    pub partition_log: f64,
}

impl StationaryDistribution {
    pub fn from_free_energy(field: &FreeEnergyField) -> Result<Self> {
        let eta = field.eta;
        let grid = &field.grid;
        let exponents: Vec<f64> = field.values.iter().map(|f| -f / eta).collect();
        let top = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::DegenerateDistribution {
                eta,
                detail: "free energy is not finite".into(),
            });
        }
        let shifted: Vec<f64> = exponents.iter().map(|e| (e - top).exp()).collect();
        let support = shifted.iter().filter(|w| **w > 1e-300).count();
        if support < 3 {
            return Err(Error::DegenerateDistribution {
                eta,
                detail: format!("only {support} grid node(s) carry non-negligible weight"),
            });
        }
        let z_shifted = grid.integrate(&shifted);
        let partition_log = top + z_shifted.ln();
        let log_weights: Vec<f64> = exponents.iter().map(|e| e - partition_log).collect();
        let weights = shifted.iter().map(|w| w / z_shifted).collect();
        Ok(StationaryDistribution {
            eta,
            grid: grid.clone(),
            weights,
            log_weights,
            partition_log,
        })
    }

    /// Probability mass of each of `n_bins` equal bins, integrating the
    /// grid density by the trapezoid rule inside each bin. Bin edges must
    /// fall on grid nodes.
    pub fn bin_masses(&self, n_bins: usize) -> Result<Vec<f64>> {
        let intervals = self.grid.len() - 1;
        if n_bins == 0 || intervals % n_bins != 0 {
            return Err(Error::contract(
                "bin_masses",
                format!("{intervals} grid intervals cannot be split evenly into {n_bins} bins"),
            ));
        }
        let per_bin = intervals / n_bins;
        let h = self.grid.spacing();
        let masses: Vec<f64> = (0..n_bins)
            .map(|b| {
                let lo = b * per_bin;
                (lo..lo + per_bin)
                    .map(|i| 0.5 * h * (self.weights[i] + self.weights[i + 1]))
                    .sum()
            })
            .collect();
        let total: f64 = masses.iter().sum();
        Ok(masses.into_iter().map(|m| m / total).collect())
    }

    /// Mean of `f` under the distribution (trapezoid rule).
    pub fn expectation(&self, f: &[f64]) -> f64 {
        let prod: Vec<f64> = self.weights.iter().zip(f).map(|(w, v)| w * v).collect();
        self.grid.integrate(&prod)
    }

    /// Covariance of `f` and `g` under the distribution.
    pub fn covariance(&self, f: &[f64], g: &[f64]) -> f64 {
        let mf = self.expectation(f);
        let mg = self.expectation(g);
        let prod: Vec<f64> = f.iter().zip(g).map(|(a, b)| (a - mf) * (b - mg)).collect();
        self.expectation(&prod)
    }
}

/// Discrete generator in flux form: `dp/dt = V⁻¹ A p`.
///
/// `A` is tridiagonal with zero column sums (mass conservation under the
/// trapezoid measure `V`).
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub eta: f64,
    pub grid: Grid,
    /// Control-volume widths (trapezoid weights).
    pub volumes: Vec<f64>,
    /// `A[i+1][i]`.
    pub lower: Vec<f64>,
    /// `A[i][i]`.
    pub diag: Vec<f64>,
    /// `A[i][i+1]`.
    pub upper: Vec<f64>,
}

impl Generator {
    pub fn new(field: &FreeEnergyField) -> Result<Self> {
        let grid = field.grid.clone();
        let n = grid.len();
        if n < Grid::MIN_POINTS {
            return Err(Error::contract(
                "build_generator",
                "grid needs at least 16 nodes",
            ));
        }
        let eta = field.eta;
        let h = grid.spacing();
        let scale = eta / h;
        let mut lower = Vec::with_capacity(n - 1);
        let mut upper = Vec::with_capacity(n - 1);
        let mut diag = vec![0.0; n];
        for i in 0..n - 1 {
            let delta = (field.values[i + 1] - field.values[i]) / eta;
            // J_{i+1/2} = scale [B(δ) p_i − B(−δ) p_{i+1}] leaves node i and enters node i+1.
            let out_right = scale * bernoulli(delta);
            let out_left = scale * bernoulli(-delta);
            diag[i] -= out_right;
            lower.push(out_right);
            diag[i + 1] -= out_left;
            upper.push(out_left);
        }
        Ok(Generator {
            eta,
            volumes: grid.weights(),
            grid,
            lower,
            diag,
            upper,
        })
    }

    /// `𝓛 p` on the grid.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * p[i];
                if i > 0 {
                    s += self.lower[i - 1] * p[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * p[i + 1];
                }
                s / self.volumes[i]
            })
            .collect()
    }

    /// Backward (adjoint) operator `𝓛† u = V⁻¹ Aᵀ u`, the generator acting on observables.
    pub fn apply_adjoint(&self, u: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * u[i];
                if i > 0 {
                    s += self.upper[i - 1] * u[i - 1];
                }
                if i + 1 < n {
                    s += self.lower[i] * u[i + 1];
                }
                s / self.volumes[i]
            })
            .collect()
    }

    /// Largest `|Σ_i A_ij|` relative to the largest entry of `A`.
    pub fn relative_column_imbalance(&self) -> f64 {
        let n = self.diag.len();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for j in 0..n {
            let mut s = self.diag[j];
            scale = scale.max(self.diag[j].abs());
            if j > 0 {
                s += self.upper[j - 1];
            }
            if j + 1 < n {
                s += self.lower[j];
            }
            worst = worst.max(s.abs());
        }
        worst / scale
    }

    /// Symmetric operator `D^{-1/2}(−𝓛)D^{1/2}` with `D = diag(π/V)`, built
    /// through the similarity transform and checked for symmetry.
    pub fn symmetrized(&self, stationary: &StationaryDistribution) -> Result<SymTridiag> {
        let n = self.diag.len();
        let lw = &stationary.log_weights;
        let v = &self.volumes;
        let diag: Vec<f64> = (0..n).map(|i| -self.diag[i] / v[i]).collect();
        let mut off = Vec::with_capacity(n - 1);
        let mut worst: f64 = 0.0;
        let mut scale: f64 = diag.iter().fold(0.0, |m, d| m.max(d.abs()));
        for i in 0..n - 1 {
            // H_ij = −A_ij √(π_j/π_i) / √(V_i V_j)
            let vv = (v[i] * v[i + 1]).sqrt();
            let upper = -self.upper[i] * (0.5 * (lw[i + 1] - lw[i])).exp() / vv;
            let lower = -self.lower[i] * (0.5 * (lw[i] - lw[i + 1])).exp() / vv;
            worst = worst.max((upper - lower).abs());
            scale = scale.max(upper.abs());
            off.push(0.5 * (upper + lower));
        }
        if worst > 1e-10 * scale {
            return Err(Error::numerical(
                "eigendecompose",
                format!(
                    "similarity-transformed generator is asymmetric: max |H_ij − H_ji| = {worst:e} (scale {scale:e})"
                ),
            ));
        }
        Ok(SymTridiag::new(diag, off))
    }
}

/// Leading relaxation modes of `𝓛_{η_b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eta_b: f64,
    pub grid: Grid,
    /// `λ_1 ≤ λ_2 ≤ …`, with `λ_1 ≈ 0`.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors of the symmetric operator (trapezoid inner product).
    pub phi_modes: Vec<Vec<f64>>,
    /// `u_n = φ_n / √π`.
    pub left_modes: Vec<Vec<f64>>,
    /// `v_n = φ_n √π`.
    pub right_modes: Vec<Vec<f64>>,
    pub stationary: StationaryDistribution,
    pub generator: Generator,
    /// `(λ_3 − λ_2)/λ_2` below `1e-3`.
    pub gapless: bool,
}

/// Relative gap below which the spectrum is flagged as gapless.
pub const GAPLESS_THRESHOLD: f64 = 1e-3;

impl SpectralDecomposition {
    /// Discretizes `𝓛_η` and extracts its `n_modes` slowest modes.
    ///
    /// Requires `3 ≤ n_modes ≤ n_points / 4`.
    pub fn new(field: &FreeEnergyField, n_modes: usize) -> Result<Self> {
        let n = field.grid.len();
        if n_modes < 3 || n_modes > n / 4 {
            return Err(Error::contract(
                "eigendecompose",
                format!(
                    "n_modes must lie in [3, n_points/4 = {}], got {n_modes}",
                    n / 4
                ),
            ));
        }
        Self::with_modes(field, n_modes)
    }

    /// Like [`SpectralDecomposition::new`] without the resolution guard, so
    /// small grids can be decomposed completely.
    pub fn with_modes(field: &FreeEnergyField, n_modes: usize) -> Result<Self> {
        let stationary = StationaryDistribution::from_free_energy(field)?;
        let generator = Generator::new(field)?;
        let hermitian = generator.symmetrized(&stationary)?;
        let n_modes = n_modes.min(field.grid.len());
        let eigenvalues = hermitian.lowest_eigenvalues(n_modes);
        let resolution = 64.0 * f64::EPSILON * hermitian.norm_bound();
        if eigenvalues.len() >= 2 && eigenvalues[1] - eigenvalues[0] <= resolution {
            return Err(Error::numerical(
                "eigendecompose",
                format!(
                    "slowest nonzero rate {:e} is below eigensolver resolution {resolution:e} (||H|| ≈ {:e}); \
                     the barrier is too high for eta_b = {}",
                    eigenvalues[1],
                    hermitian.norm_bound(),
                    field.eta
                ),
            ));
        }
        if let Some(bad) = eigenvalues.iter().find(|l| **l < -1e-8) {
            return Err(Error::numerical(
                "eigendecompose",
                format!("negative eigenvalue {bad:e} for a detailed-balance generator"),
            ));
        }

        let left_modes = left_eigenvectors(&generator, &stationary, &eigenvalues, resolution)?;
        let half: Vec<f64> = stationary
            .log_weights
            .iter()
            .map(|l| (0.5 * l).exp())
            .collect();
        let mut phi_modes = Vec::with_capacity(left_modes.len());
        let mut left = Vec::with_capacity(left_modes.len());
        let mut right = Vec::with_capacity(left_modes.len());
        for mut u in left_modes {
            let mut phi: Vec<f64> = u.iter().zip(&half).map(|(a, s)| a * s).collect();
            let first = phi.iter().find(|v| v.abs() > 1e-10).copied().unwrap_or(1.0);
            if first < 0.0 {
                phi.iter_mut().for_each(|v| *v = -*v);
                u.iter_mut().for_each(|v| *v = -*v);
            }
            right.push(
                u.iter()
                    .zip(&stationary.weights)
                    .map(|(a, p)| a * p)
                    .collect(),
            );
            phi_modes.push(phi);
            left.push(u);
        }

        let gapless = eigenvalues.len() >= 3
            && (eigenvalues[2] - eigenvalues[1]) / eigenvalues[1] < GAPLESS_THRESHOLD;
        Ok(SpectralDecomposition {
            eta_b: field.eta,
            grid: field.grid.clone(),
            eigenvalues,
            phi_modes,
            left_modes: left,
            right_modes: right,
            stationary,
            generator,
            gapless,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Expansion coefficients `a_n = ∫ u_n p dy` of a density.
    pub fn coefficients(&self, density: &[f64]) -> Vec<f64> {
        self.left_modes
            .iter()
            .map(|u| {
                let prod: Vec<f64> = u.iter().zip(density).map(|(a, b)| a * b).collect();
                self.grid.integrate(&prod)
            })
            .collect()
    }

    /// `p(t) = Σ_n a_n v_n e^{−λ_n t}` over the retained modes (`n = 1` is π).
    pub fn evolve(&self, initial: &[f64], t: f64) -> Result<Vec<f64>> {
        if initial.len() != self.grid.len() {
            return Err(Error::contract(
                "spectral_evolve",
                format!(
                    "density has {} nodes, grid has {}",
                    initial.len(),
                    self.grid.len()
                ),
            ));
        }
        if !(t >= 0.0) {
            return Err(Error::contract(
                "spectral_evolve",
                format!("t must be >= 0, got {t}"),
            ));
        }
        let mass = self.grid.integrate(initial);
        if (mass - 1.0).abs() > 1e-6 || initial.iter().any(|p| !p.is_finite()) {
            return Err(Error::contract(
                "spectral_evolve",
                format!("initial density must be normalized (trapezoid mass = {mass})"),
            ));
        }
        let coeffs = self.coefficients(initial);
        let reconstruction = self.combine(&coeffs, 0.0);
        let l1: Vec<f64> = reconstruction
            .iter()
            .zip(initial)
            .map(|(a, b)| (a - b).abs())
            .collect();
        let truncation = self.grid.integrate(&l1);
        if truncation > 1e-3 {
            warn!(
                "spectral_evolve: {} modes reconstruct the initial density with L1 error {truncation:.3e}",
                self.n_modes()
            );
        }
        Ok(self.combine(&coeffs, t))
    }

    fn combine(&self, coeffs: &[f64], t: f64) -> Vec<f64> {
        let mut out = self.stationary.weights.clone();
        for ((a, v), lambda) in coeffs
            .iter()
            .zip(&self.right_modes)
            .zip(&self.eigenvalues)
            .skip(1)
        {
            let w = a * (-lambda * t).exp();
            if w == 0.0 {
                continue;
            }
            for (o, vi) in out.iter_mut().zip(v) {
                *o += w * vi;
            }
        }
        out
    }

    /// Writes `index,eigenvalue,node_0,…` rows with the `φ_n` values.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (0..self.grid.len()).map(|i| format!("node_{i}")).collect();
        writeln!(out, "index,eigenvalue,{}", header.join(","))?;
        for (n, (lambda, phi)) in self.eigenvalues.iter().zip(&self.phi_modes).enumerate() {
            let row: Vec<String> = phi.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(out, "{},{},{}", n + 1, fmt_f64(*lambda), row.join(","))?;
        }
        Ok(())
    }
}

/// Inverse iteration on the backward operator for each eigenvalue, with
/// re-orthogonalization in the `π`-weighted inner product. Working with
/// `u_n` directly keeps full relative accuracy where `π` is tiny.
fn left_eigenvectors(
    generator: &Generator,
    stationary: &StationaryDistribution,
    eigenvalues: &[f64],
    resolution: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = generator.diag.len();
    let v = &generator.volumes;
    // Backward operator bands: G = V⁻¹ Aᵀ.
    let g_lower: Vec<f64> = (1..n).map(|i| generator.upper[i - 1] / v[i]).collect();
    let g_upper: Vec<f64> = (0..n - 1).map(|i| generator.lower[i] / v[i]).collect();
    let g_diag: Vec<f64> = (0..n).map(|i| generator.diag[i] / v[i]).collect();
    let measure: Vec<f64> = stationary
        .weights
        .iter()
        .zip(v)
        .map(|(p, w)| p * w)
        .collect();
    let inner = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .zip(&measure)
            .map(|((x, y), m)| x * y * m)
            .sum()
    };

    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(eigenvalues.len());
    for (k, &lambda) in eigenvalues.iter().enumerate() {
        let diag: Vec<f64> = g_diag.iter().map(|d| d + lambda).collect();
        let lu = TridiagLu::factor(&g_lower, &diag, &g_upper, resolution.max(f64::MIN_POSITIVE))?;
        // Deterministic start vector with components along every mode.
        let mut u: Vec<f64> = (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                1.0 + s + (7.3 * s + 0.1 * k as f64).sin()
            })
            .collect();
        for _ in 0..4 {
            for prev in &modes {
                let c = inner(&u, prev);
                u.iter_mut().zip(prev).for_each(|(a, b)| *a -= c * b);
            }
            u = lu.solve(&u);
            for prev in &modes {
                let c = inner(&u, prev);
                u.iter_mut().zip(prev).for_each(|(a, b)| *a -= c * b);
            }
            let norm = inner(&u, &u).sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::numerical(
                    "eigendecompose",
                    format!(
                        "inverse iteration broke down for mode {} (lambda = {lambda:e})",
                        k + 1
                    ),
                ));
            }
            u.iter_mut().for_each(|a| *a /= norm);
        }
        modes.push(u);
    }
    Ok(modes)
}
