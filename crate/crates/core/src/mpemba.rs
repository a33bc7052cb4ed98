//! Mpemba amplitude `a₂(η) = ∫ u₂ π_η dy` of plateau states against the
//! slowest relaxation mode at the bath learning rate, and the search for
//! strong Mpemba points where it vanishes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{csv_table, to_json_string};
use crate::landscape::presets::{self, DoubleWellParams};
use crate::landscape::{Grid, LandscapeSpec};
use crate::spectral::{SpectralDecomposition, StationaryDistribution};
use crate::svg::{LinePlot, Series, PALETTE};

/// Default residual tolerance for bisected roots.
pub const ROOT_TOLERANCE: f64 = 1e-10;
/// Iteration cap for root bisection.
pub const MAX_BISECTIONS: usize = 80;
/// Amplitudes below this are treated as numerically zero when classifying a scan.
pub const ZERO_AMPLITUDE: f64 = 1e-12;

/// `a₂(η) = ∫ u₂ π_η dy` by the trapezoid rule.
pub fn amplitude(decomp: &SpectralDecomposition, pi_init: &StationaryDistribution) -> Result<f64> {
    check_usable(decomp)?;
    if !decomp.grid.matches(&pi_init.grid) {
        return Err(Error::contract(
            "amplitude",
            "initial distribution and decomposition live on different grids",
        ));
    }
    let u2 = &decomp.left_modes[1];
    let prod: Vec<f64> = u2
        .iter()
        .zip(&pi_init.weights)
        .map(|(u, p)| u * p)
        .collect();
    Ok(decomp.grid.integrate(&prod))
}

fn check_usable(decomp: &SpectralDecomposition) -> Result<()> {
    if decomp.n_modes() < 3 {
        return Err(Error::contract(
            "amplitude",
            "decomposition needs at least 3 modes",
        ));
    }
    if decomp.gapless {
        let l = &decomp.eigenvalues;
        return Err(Error::Gapless {
            eta_b: decomp.eta_b,
            relative_gap: (l[2] - l[1]) / l[1],
        });
    }
    Ok(())
}

/// Three forms of `da₂/dη`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmplitudeDerivative {
    /// `Cov_π(c, u₂)/η²`: the derivative of `∫ u₂ π_η` including the
    /// η-dependence of `F_η`. Authoritative.
    pub exact: f64,
    /// `Cov_π(F_η, u₂)/η²`, treating `F_η` as fixed.
    pub free_energy_form: f64,
    /// `Cov_π(ln a, u₂)/η²` (unit prefactor).
    pub log_curvature_form: f64,
}

/// Evaluates `a₂(η)` and its derivatives on the decomposition's grid.
pub fn amplitude_derivative(
    decomp: &SpectralDecomposition,
    spec: &LandscapeSpec,
    grid: &Grid,
    eta: f64,
) -> Result<AmplitudeDerivative> {
    Ok(AmplitudeProbe::new(decomp, spec, grid)?.evaluate(eta)?.1)
}

/// Reusable evaluator of `a₂` for one bath decomposition.
pub struct AmplitudeProbe<'a> {
    decomp: &'a SpectralDecomposition,
    spec: &'a LandscapeSpec,
    c: Vec<f64>,
    ln_a: Vec<f64>,
}

impl<'a> AmplitudeProbe<'a> {
    pub fn new(
        decomp: &'a SpectralDecomposition,
        spec: &'a LandscapeSpec,
        grid: &Grid,
    ) -> Result<Self> {
        check_usable(decomp)?;
        if !decomp.grid.matches(grid) {
            return Err(Error::contract(
                "amplitude_derivative",
                "grid differs from the decomposition grid",
            ));
        }
        let (c, ln_a) = grid
            .nodes()
            .map(|y| {
                let p = spec.point(y);
                (p.c, p.a.ln())
            })
            .unzip();
        Ok(AmplitudeProbe {
            decomp,
            spec,
            c,
            ln_a,
        })
    }

    fn stationary(&self, eta: f64) -> Result<StationaryDistribution> {
        let field = self.spec.effective_free_energy(&self.decomp.grid, eta)?;
        StationaryDistribution::from_free_energy(&field)
    }

    pub fn a2(&self, eta: f64) -> Result<f64> {
        amplitude(self.decomp, &self.stationary(eta)?)
    }

    /// `(a₂(η), derivatives)`.
    pub fn evaluate(&self, eta: f64) -> Result<(f64, AmplitudeDerivative)> {
        if !(eta > 0.0) {
            return Err(Error::contract(
                "amplitude_derivative",
                format!("eta must be positive, got {eta}"),
            ));
        }
        let pi = self.stationary(eta)?;
        let a2 = amplitude(self.decomp, &pi)?;
        let u2 = &self.decomp.left_modes[1];
        let f: Vec<f64> = self
            .c
            .iter()
            .zip(&self.ln_a)
            .map(|(c, l)| c + 0.5 * eta * l)
            .collect();
        let e2 = eta * eta;
        Ok((
            a2,
            AmplitudeDerivative {
                exact: pi.covariance(&self.c, u2) / e2,
                free_energy_form: pi.covariance(&f, u2) / e2,
                log_curvature_form: pi.covariance(&self.ln_a, u2) / e2,
            },
        ))
    }
}

/// Sampled `a₂(η)` over a plateau learning-rate range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplitudeCurve {
    pub eta_b: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// `a₂(η_b)`; zero up to round-off by orthogonality.
    pub a2_at_eta_b: f64,
    pub eta_samples: Vec<f64>,
    pub a2_values: Vec<f64>,
    pub derivative_values: Vec<f64>,
    pub free_energy_form_values: Vec<f64>,
    pub log_curvature_form_values: Vec<f64>,
    /// Adjacent sample pairs `(η_i, η_{i+1})` across which `a₂` changes sign.
    pub sign_flip_brackets: Vec<(f64, f64)>,
}

/// Log-spaced samples of `a₂` on `[eta_min, eta_max]`, evaluated in parallel.
pub fn scan_amplitude(
    decomp: &SpectralDecomposition,
    spec: &LandscapeSpec,
    eta_range: [f64; 2],
    n_samples: usize,
) -> Result<AmplitudeCurve> {
    let [eta_min, eta_max] = eta_range;
    let eta_b = decomp.eta_b;
    if !(eta_b > 0.0 && eta_min > eta_b) {
        return Err(Error::contract(
            "scan_amplitude",
            format!("requires eta_min > eta_b > 0 (eta_min = {eta_min}, eta_b = {eta_b})"),
        ));
    }
    if !(eta_max > eta_min && eta_max.is_finite()) {
        return Err(Error::contract(
            "scan_amplitude",
            format!("requires eta_max > eta_min (got [{eta_min}, {eta_max}])"),
        ));
    }
    if n_samples < 8 {
        return Err(Error::contract(
            "scan_amplitude",
            format!("n_samples must be >= 8, got {n_samples}"),
        ));
    }
    let probe = AmplitudeProbe::new(decomp, spec, &decomp.grid)?;
    let a2_at_eta_b = probe.a2(eta_b)?;
    let eta_samples = log_space(eta_min, eta_max, n_samples);
    let evaluated: Vec<(f64, AmplitudeDerivative)> = eta_samples
        .par_iter()
        .map(|&eta| probe.evaluate(eta))
        .collect::<Result<_>>()?;
    let a2_values: Vec<f64> = evaluated.iter().map(|e| e.0).collect();
    let sign_flip_brackets = eta_samples
        .windows(2)
        .zip(a2_values.windows(2))
        .filter(|(_, a)| a[0] * a[1] < 0.0 && a[0].abs().max(a[1].abs()) > ZERO_AMPLITUDE)
        .map(|(e, _)| (e[0], e[1]))
        .collect();
    Ok(AmplitudeCurve {
        eta_b,
        lambda2: decomp.eigenvalues[1],
        lambda3: decomp.eigenvalues[2],
        a2_at_eta_b,
        derivative_values: evaluated.iter().map(|e| e.1.exact).collect(),
        free_energy_form_values: evaluated.iter().map(|e| e.1.free_energy_form).collect(),
        log_curvature_form_values: evaluated.iter().map(|e| e.1.log_curvature_form).collect(),
        eta_samples,
        a2_values,
        sign_flip_brackets,
    })
}

/// `n` points from `lo` to `hi`, evenly spaced in `ln η`, with exact endpoints.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// `a₂` vanishes at some `η ≠ η_b` in range.
    Strong,
    /// `|a₂|` is non-monotonic but never vanishes.
    Weak,
    /// `|a₂|` is monotonic; the best plateau sits at the boundary.
    None,
}

/// Which root becomes `η*` when several exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RootChoice {
    #[default]
    Largest,
    Smallest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrongPoint {
    pub eta: f64,
    pub bracket: (f64, f64),
    /// `a₂` at the returned `eta`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpembaReport {
    pub strong_points: Vec<StrongPoint>,
    pub optimal_plateau: f64,
    pub a2_at_optimum: f64,
    pub verdict: Verdict,
}

/// Bisects every sign-flip bracket of `curve` and classifies the scan.
pub fn find_strong_points(
    curve: &AmplitudeCurve,
    decomp: &SpectralDecomposition,
    spec: &LandscapeSpec,
    tol: f64,
    choice: RootChoice,
) -> Result<MpembaReport> {
    if (curve.eta_b - decomp.eta_b).abs() > 1e-15 * curve.eta_b {
        return Err(Error::contract(
            "find_strong_points",
            "curve and decomposition use different eta_b",
        ));
    }
    let probe = AmplitudeProbe::new(decomp, spec, &decomp.grid)?;
    find_strong_points_with(curve, |eta| probe.a2(eta), tol, choice)
}

/// [`find_strong_points`] with an arbitrary evaluator of `a₂(η)`.
pub fn find_strong_points_with<F>(
    curve: &AmplitudeCurve,
    a2: F,
    tol: f64,
    choice: RootChoice,
) -> Result<MpembaReport>
where
    F: Fn(f64) -> Result<f64>,
{
    let n = curve.eta_samples.len();
    if n == 0 || curve.a2_values.len() != n {
        return Err(Error::contract(
            "find_strong_points",
            "amplitude curve is empty or inconsistent",
        ));
    }
    let mut strong_points = Vec::with_capacity(curve.sign_flip_brackets.len());
    for &(lo, hi) in &curve.sign_flip_brackets {
        strong_points.push(bisect(&a2, lo, hi, tol)?);
    }

    let abs: Vec<f64> = curve.a2_values.iter().map(|v| v.abs()).collect();
    let scale = abs.iter().cloned().fold(0.0, f64::max);
    let (optimal_plateau, a2_at_optimum, verdict) = if !strong_points.is_empty() {
        let pick = match choice {
            RootChoice::Largest => strong_points.iter().max_by(|a, b| a.eta.total_cmp(&b.eta)),
            RootChoice::Smallest => strong_points.iter().min_by(|a, b| a.eta.total_cmp(&b.eta)),
        }
        .expect("non-empty");
        (pick.eta, pick.residual, Verdict::Strong)
    } else {
        let slack = ZERO_AMPLITUDE * scale.max(1.0);
        let increasing = scale <= ZERO_AMPLITUDE || abs.windows(2).all(|w| w[1] >= w[0] - slack);
        let decreasing = abs.windows(2).all(|w| w[1] <= w[0] + slack);
        if increasing {
            (curve.eta_samples[0], curve.a2_values[0], Verdict::None)
        } else if decreasing {
            (
                curve.eta_samples[n - 1],
                curve.a2_values[n - 1],
                Verdict::None,
            )
        } else {
            let i = (0..n)
                .min_by(|&i, &j| abs[i].total_cmp(&abs[j]))
                .expect("non-empty");
            (curve.eta_samples[i], curve.a2_values[i], Verdict::Weak)
        }
    };
    Ok(MpembaReport {
        strong_points,
        optimal_plateau,
        a2_at_optimum,
        verdict,
    })
}

fn bisect<F: Fn(f64) -> Result<f64>>(f: &F, lo: f64, hi: f64, tol: f64) -> Result<StrongPoint> {
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a)?;
    let fb = f(b)?;
    if fa * fb > 0.0 {
        return Err(Error::contract(
            "find_strong_points",
            format!("bracket ({lo}, {hi}) does not enclose a sign change"),
        ));
    }
    let (mut best, mut best_val) = if fa.abs() < fb.abs() {
        (a, fa)
    } else {
        (b, fb)
    };
    let mut iterations = 0;
    while iterations < MAX_BISECTIONS && best_val.abs() >= tol {
        iterations += 1;
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid)?;
        if fm.abs() < best_val.abs() {
            best = mid;
            best_val = fm;
        }
        if fa * fm <= 0.0 {
            b = mid;
        } else {
            a = mid;
            fa = fm;
        }
    }
    Ok(StrongPoint {
        eta: best,
        bracket: (lo, hi),
        residual: best_val,
        iterations,
    })
}

/// Mpemba advantage `|a₂(η_l)| > |a₂(η_h)|`, interpolating the curve
/// linearly in `(ln η, a₂)`.
pub fn advantage_check(curve: &AmplitudeCurve, eta_h: f64, eta_l: f64) -> Result<bool> {
    if !(curve.eta_b < eta_l && eta_l < eta_h) {
        return Err(Error::contract(
            "advantage_check",
            format!(
                "requires eta_b < eta_l < eta_h (eta_b = {}, eta_l = {eta_l}, eta_h = {eta_h})",
                curve.eta_b
            ),
        ));
    }
    let hot = curve.interpolate(eta_h)?;
    let cold = curve.interpolate(eta_l)?;
    Ok(cold.abs() > hot.abs())
}

#[derive(Serialize)]
struct SampleRow {
    eta: f64,
    a2: f64,
    d_exact: f64,
    d_boxed: f64,
    d_log_a: f64,
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    eta_b: f64,
    lambda2: f64,
    lambda3: f64,
    a2_at_eta_b: f64,
    samples: Vec<SampleRow>,
    sign_flip_brackets: &'a [(f64, f64)],
    strong_points: &'a [StrongPoint],
    optimal_plateau: f64,
    a2_at_optimum: f64,
    verdict: Verdict,
}

impl AmplitudeCurve {
    /// `a₂` at `eta`, linear in `ln η` between samples.
    pub fn interpolate(&self, eta: f64) -> Result<f64> {
        let s = &self.eta_samples;
        let (first, last) = (s[0], s[s.len() - 1]);
        if !(eta >= first && eta <= last) {
            return Err(Error::contract(
                "advantage_check",
                format!("eta = {eta} lies outside the scanned range [{first}, {last}]"),
            ));
        }
        let i = s.partition_point(|&x| x <= eta).clamp(1, s.len() - 1);
        let (x0, x1) = (s[i - 1].ln(), s[i].ln());
        let w = if x1 > x0 {
            (eta.ln() - x0) / (x1 - x0)
        } else {
            0.0
        };
        Ok(self.a2_values[i - 1] + w * (self.a2_values[i] - self.a2_values[i - 1]))
    }

    /// Columns `eta,a2,d_exact,d_boxed,d_log_a`.
    pub fn to_csv(&self) -> String {
        csv_table(
            &["eta", "a2", "d_exact", "d_boxed", "d_log_a"],
            (0..self.eta_samples.len()).map(|i| {
                vec![
                    self.eta_samples[i],
                    self.a2_values[i],
                    self.derivative_values[i],
                    self.free_energy_form_values[i],
                    self.log_curvature_form_values[i],
                ]
            }),
        )
    }

    /// JSON document combining the curve and its report.
    pub fn report_json(&self, report: &MpembaReport) -> String {
        let samples = (0..self.eta_samples.len())
            .map(|i| SampleRow {
                eta: self.eta_samples[i],
                a2: self.a2_values[i],
                d_exact: self.derivative_values[i],
                d_boxed: self.free_energy_form_values[i],
                d_log_a: self.log_curvature_form_values[i],
            })
            .collect();
        to_json_string(&ReportDocument {
            eta_b: self.eta_b,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            a2_at_eta_b: self.a2_at_eta_b,
            samples,
            sign_flip_brackets: &self.sign_flip_brackets,
            strong_points: &report.strong_points,
            optimal_plateau: report.optimal_plateau,
            a2_at_optimum: report.a2_at_optimum,
            verdict: report.verdict,
        })
    }

    /// Line plot of `a₂(η)` on a log axis with roots circled.
    pub fn to_svg(&self, report: &MpembaReport) -> String {
        LinePlot {
            title: format!("Mpemba amplitude, eta_b = {}", self.eta_b),
            x_label: "plateau learning rate eta".into(),
            y_label: "a2(eta)".into(),
            log_x: true,
            log_y: false,
            series: vec![Series {
                label: "a2".into(),
                points: self
                    .eta_samples
                    .iter()
                    .cloned()
                    .zip(self.a2_values.iter().cloned())
                    .collect(),
                color: PALETTE[1],
            }],
            markers: report.strong_points.iter().map(|p| (p.eta, 0.0)).collect(),
            y_reference: Some(0.0),
        }
        .render()
    }
}

/// Parameter grid for a constructive search over the double-well preset.
///
/// Each configuration is decomposed at `eta_b`, scanned over
/// `[window[0]·η_b, window[1]·η_b]` and kept when the scan brackets a root.
/// `a0` only shifts `F_η` by a constant, so it does not affect the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleWellSearch {
    pub h: Vec<f64>,
    pub beta: Vec<f64>,
    pub eta_b: Vec<f64>,
    pub w: Vec<f64>,
    pub half_width: Vec<f64>,
    pub a0: f64,
    pub n_points: usize,
    pub n_samples: usize,
    pub window: [f64; 2],
}

impl Default for DoubleWellSearch {
    fn default() -> Self {
        DoubleWellSearch {
            h: vec![0.5, 1.0, 2.0, 4.0],
            beta: vec![0.2, 0.5, 1.0, 2.0],
            eta_b: vec![0.02, 0.05, 0.1, 0.15, 0.2],
            w: vec![0.6, 0.8, 1.0],
            half_width: vec![2.0, 2.5, 3.0],
            a0: 20.0,
            n_points: 801,
            n_samples: 48,
            window: [2.0, 50.0],
        }
    }
}

/// A configuration with a strong Mpemba point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchHit {
    pub params: DoubleWellParams,
    pub eta_b: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Largest root.
    pub eta_star: f64,
    pub residual: f64,
    pub n_roots: usize,
    /// `a₂` at the midpoint plateau `(η_b + η*)/2`.
    pub a2_midpoint: f64,
}

impl DoubleWellSearch {
    pub fn configurations(&self) -> Vec<(DoubleWellParams, f64)> {
        let mut out = Vec::new();
        for &w in &self.w {
            for &half_width in &self.half_width {
                for &h in &self.h {
                    for &beta in &self.beta {
                        for &eta_b in &self.eta_b {
                            let params = DoubleWellParams {
                                h,
                                w,
                                a0: self.a0,
                                beta,
                                half_width,
                            };
                            out.push((params, eta_b));
                        }
                    }
                }
            }
        }
        out
    }

    /// Runs every configuration in parallel; hits come back in grid order.
    /// Configurations that fail numerically (e.g. gapless spectra) are skipped.
    pub fn run(&self) -> Vec<SearchHit> {
        self.configurations()
            .par_iter()
            .filter_map(|&(params, eta_b)| self.evaluate(params, eta_b).ok().flatten())
            .collect()
    }

    pub fn evaluate(&self, params: DoubleWellParams, eta_b: f64) -> Result<Option<SearchHit>> {
        let spec = presets::double_well(params)?;
        let grid = Grid::for_spec(&spec, self.n_points)?;
        let decomp = SpectralDecomposition::new(&spec.effective_free_energy(&grid, eta_b)?, 4)?;
        let range = [self.window[0] * eta_b, self.window[1] * eta_b];
        let curve = scan_amplitude(&decomp, &spec, range, self.n_samples)?;
        let report =
            find_strong_points(&curve, &decomp, &spec, ROOT_TOLERANCE, RootChoice::Largest)?;
        if report.verdict != Verdict::Strong {
            return Ok(None);
        }
        let probe = AmplitudeProbe::new(&decomp, &spec, &grid)?;
        Ok(Some(SearchHit {
            params,
            eta_b,
            lambda2: curve.lambda2,
            lambda3: curve.lambda3,
            eta_star: report.optimal_plateau,
            residual: report.a2_at_optimum,
            n_roots: report.strong_points.len(),
            a2_midpoint: probe.a2(0.5 * (eta_b + report.optimal_plateau))?,
        }))
    }
}
