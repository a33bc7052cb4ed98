//! Valley–river landscapes `L(x, y) = c(y) + a(y) x² / 2`.
//!
//! The river profile `c(y)` and valley curvature `a(y)` are parametric
//! families on a bounded interval `[y_min, y_max]`. Integrating out the
//! valley coordinate gives the effective free energy
//! `F_η(y) = c(y) + (η/2) ln a(y)` that drives the river dynamics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::CubicSpline;

/// Floor applied to interpolated or clamped curvature values.
pub const CURVATURE_FLOOR: f64 = 1e-12;

/// River profile `c(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "family",
    content = "params",
    rename_all = "kebab-case",
    deny_unknown_fields
)]
pub enum RiverProfile {
    /// `c(y) = Σ coeffs[k] y^k`.
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// `c(y) = h ((y/w)² − 1)²`: barrier height `h` at `y = 0`, minima at `±w`.
    DoubleWell {
        h: f64,
        w: f64,
    },
    Tabulated(CubicSpline),
}

/// Valley curvature `a(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "family",
    content = "params",
    rename_all = "kebab-case",
    deny_unknown_fields
)]
pub enum ValleyCurvature {
    Constant {
        a0: f64,
    },
    /// `a(y) = a0 · exp(beta · y)`.
    Exponential {
        a0: f64,
        beta: f64,
    },
    /// Polynomial clamped from below at [`CURVATURE_FLOOR`].
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// Natural spline through strictly positive samples, clamped at [`CURVATURE_FLOOR`].
    Tabulated(CubicSpline),
}

fn poly_eval(coeffs: &[f64], y: f64) -> (f64, f64) {
    let mut value = 0.0;
    let mut slope = 0.0;
    for &c in coeffs.iter().rev() {
        slope = slope * y + value;
        value = value * y + c;
    }
    (value, slope)
}

impl RiverProfile {
    fn eval(&self, y: f64) -> (f64, f64) {
        match self {
            RiverProfile::Polynomial { coeffs } => poly_eval(coeffs, y),
            RiverProfile::DoubleWell { h, w } => {
                let s = y / w;
                let q = s * s - 1.0;
                (h * q * q, 4.0 * h * q * s / w)
            }
            RiverProfile::Tabulated(spline) => spline.eval(y),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            RiverProfile::Polynomial { coeffs } => {
                if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidLandscape(
                        "river polynomial needs at least one finite coefficient".into(),
                    ));
                }
            }
            RiverProfile::DoubleWell { h, w } => {
                if !(h.is_finite() && *h >= 0.0 && w.is_finite() && *w > 0.0) {
                    return Err(Error::InvalidLandscape(format!(
                        "double-well needs h >= 0 and w > 0, got h = {h}, w = {w}"
                    )));
                }
            }
            RiverProfile::Tabulated(_) => {}
        }
        Ok(())
    }
}

impl ValleyCurvature {
    fn eval(&self, y: f64) -> (f64, f64) {
        match self {
            ValleyCurvature::Constant { a0 } => (*a0, 0.0),
            ValleyCurvature::Exponential { a0, beta } => {
                let a = a0 * (beta * y).exp();
                (a, beta * a)
            }
            ValleyCurvature::Polynomial { coeffs } => {
                let (a, da) = poly_eval(coeffs, y);
                if a < CURVATURE_FLOOR {
                    (CURVATURE_FLOOR, 0.0)
                } else {
                    (a, da)
                }
            }
            ValleyCurvature::Tabulated(spline) => {
                let (a, da) = spline.eval(y);
                if a < CURVATURE_FLOOR {
                    (CURVATURE_FLOOR, 0.0)
                } else {
                    (a, da)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ValleyCurvature::Constant { a0 } | ValleyCurvature::Exponential { a0, .. } => {
                if !(a0.is_finite() && *a0 > 0.0) {
                    return Err(Error::InvalidLandscape(format!(
                        "valley curvature prefactor a0 must be positive, got {a0}"
                    )));
                }
                if let ValleyCurvature::Exponential { beta, .. } = self {
                    if !beta.is_finite() {
                        return Err(Error::InvalidLandscape("beta must be finite".into()));
                    }
                }
            }
            ValleyCurvature::Polynomial { coeffs } => {
                if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidLandscape(
                        "curvature polynomial needs at least one finite coefficient".into(),
                    ));
                }
            }
            ValleyCurvature::Tabulated(spline) => {
                if let Some(bad) = spline.values().iter().find(|v| **v <= 0.0) {
                    return Err(Error::InvalidLandscape(format!(
                        "tabulated curvature sample {bad} is not positive"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Which time parametrization the Langevin drift uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TimeConvention {
    /// Drift not multiplied by η (time already rescaled by the learning rate).
    #[default]
    Rescaled,
    /// Drift multiplied by η.
    Unscaled,
}

/// Landscape values at one river coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapePoint {
    pub c: f64,
    pub a: f64,
    pub dc_dy: f64,
    pub da_dy: f64,
}

/// A complete valley–river landscape on a bounded river interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeSpec {
    pub c: RiverProfile,
    pub a: ValleyCurvature,
    /// `[y_min, y_max]`.
    pub domain: [f64; 2],
}

impl LandscapeSpec {
    pub fn new(c: RiverProfile, a: ValleyCurvature, y_min: f64, y_max: f64) -> Result<Self> {
        let spec = LandscapeSpec {
            c,
            a,
            domain: [y_min, y_max],
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks parameters and positivity/finiteness on a 1025-node probe grid.
    pub fn validate(&self) -> Result<()> {
        let [y_min, y_max] = self.domain;
        if !(y_min.is_finite() && y_max.is_finite() && y_min < y_max) {
            return Err(Error::InvalidLandscape(format!(
                "domain must satisfy y_min < y_max (finite), got [{y_min}, {y_max}]"
            )));
        }
        self.c.validate()?;
        self.a.validate()?;
        self.validate_on(&Grid::new(y_min, y_max, 1025)?)
    }

    /// Checks `a > 0` and finite `c`, `a`, derivatives at every grid node.
    pub fn validate_on(&self, grid: &Grid) -> Result<()> {
        for y in grid.nodes() {
            let p = self.point(y);
            if !(p.a > 0.0) {
                return Err(Error::InvalidLandscape(format!(
                    "valley curvature a({y}) = {} is not positive",
                    p.a
                )));
            }
            if !(p.c.is_finite() && p.a.is_finite() && p.dc_dy.is_finite() && p.da_dy.is_finite()) {
                return Err(Error::InvalidLandscape(format!(
                    "landscape is not finite at y = {y}: {p:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn y_min(&self) -> f64 {
        self.domain[0]
    }

    pub fn y_max(&self) -> f64 {
        self.domain[1]
    }

    /// Evaluates without domain or positivity checks (hot loops).
    #[inline]
    pub fn point(&self, y: f64) -> LandscapePoint {
        let (c, dc_dy) = self.c.eval(y);
        let (a, da_dy) = self.a.eval(y);
        LandscapePoint { c, a, dc_dy, da_dy }
    }

    /// `c(y)`, `a(y)` and their first derivatives.
    pub fn evaluate(&self, y: f64) -> Result<LandscapePoint> {
        let [y_min, y_max] = self.domain;
        let slack = 1e-12 * (y_max - y_min);
        if !(y >= y_min - slack && y <= y_max + slack) {
            return Err(Error::Domain { y, y_min, y_max });
        }
        let p = self.point(y);
        if !(p.a > 0.0) {
            return Err(Error::InvalidLandscape(format!(
                "valley curvature a({y}) = {} is not positive",
                p.a
            )));
        }
        Ok(p)
    }

    /// `k = (1/2) d/dy ln a(y)`.
    pub fn curvature_log_slope(&self, y: f64) -> Result<f64> {
        let p = self.evaluate(y)?;
        Ok(p.da_dy / (2.0 * p.a))
    }

    /// Fast/slow relaxation time estimates at river position `y`.
    ///
    /// `tau_y` is `f64::INFINITY` when the curvature is locally flat (`k = 0`).
    pub fn relaxation_times(
        &self,
        y: f64,
        eta: f64,
        convention: TimeConvention,
    ) -> Result<RelaxationTimes> {
        if !(eta > 0.0) {
            return Err(Error::contract(
                "relaxation_times",
                format!("eta must be positive, got {eta}"),
            ));
        }
        let p = self.evaluate(y)?;
        let k = p.da_dy / (2.0 * p.a);
        let tau_x = match convention {
            TimeConvention::Rescaled => 1.0 / p.a,
            TimeConvention::Unscaled => 1.0 / (p.a * eta),
        };
        let tau_y = if k == 0.0 {
            f64::INFINITY
        } else {
            1.0 / (k * eta).abs()
        };
        Ok(RelaxationTimes { tau_x, tau_y })
    }

    /// `F_η(y_i) = c(y_i) + (η/2) ln a(y_i)` on every grid node, with no additive shift.
    pub fn effective_free_energy(&self, grid: &Grid, eta: f64) -> Result<FreeEnergyField> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::contract(
                "effective_free_energy",
                format!("eta must be positive and finite, got {eta}"),
            ));
        }
        let mut values = Vec::with_capacity(grid.len());
        let mut derivative = Vec::with_capacity(grid.len());
        for y in grid.nodes() {
            let p = self.point(y);
            if !(p.a > 0.0) {
                return Err(Error::InvalidLandscape(format!(
                    "valley curvature a({y}) = {} is not positive",
                    p.a
                )));
            }
            values.push(p.c + 0.5 * eta * p.a.ln());
            derivative.push(p.dc_dy + 0.5 * eta * p.da_dy / p.a);
        }
        if values.iter().chain(&derivative).any(|v| !v.is_finite()) {
            return Err(Error::InvalidLandscape(format!(
                "effective free energy is not finite at eta = {eta}"
            )));
        }
        Ok(FreeEnergyField {
            eta,
            grid: grid.clone(),
            values,
            derivative,
        })
    }

    /// Smallest and largest `a(y)` over a 1025-node probe of the domain.
    pub fn curvature_range(&self) -> (f64, f64) {
        let grid = Grid::new(self.y_min(), self.y_max(), 1025).expect("domain validated");
        grid.nodes()
            .map(|y| self.point(y).a)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| {
                (lo.min(a), hi.max(a))
            })
    }

    /// Node of `grid` with the smallest river profile `c`.
    pub fn river_minimum(&self, grid: &Grid) -> f64 {
        grid.nodes()
            .map(|y| (y, self.point(y).c))
            .fold((grid.y_min, f64::INFINITY), |best, (y, c)| {
                if c < best.1 {
                    (y, c)
                } else {
                    best
                }
            })
            .0
    }

    /// True when `c` and `a` are both even in `y` on a symmetric domain.
    pub fn is_even(&self) -> bool {
        let [y_min, y_max] = self.domain;
        if (y_min + y_max).abs() > 1e-12 * (y_max - y_min) {
            return false;
        }
        let grid = Grid::new(0.0, y_max, 257).expect("positive half-domain");
        let even = grid.nodes().all(|y| {
            let p = self.point(y);
            let q = self.point(-y);
            (p.c - q.c).abs() <= 1e-12 * (1.0 + p.c.abs()) && (p.a - q.a).abs() <= 1e-12 * p.a
        });
        even
    }
}

/// Relaxation times of the fast (valley) and slow (river) directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelaxationTimes {
    pub tau_x: f64,
    pub tau_y: f64,
}

/// Uniform grid on `[y_min, y_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub y_min: f64,
    pub y_max: f64,
    pub n_points: usize,
}

impl Grid {
    pub const MIN_POINTS: usize = 16;

    pub fn new(y_min: f64, y_max: f64, n_points: usize) -> Result<Self> {
        if n_points < Self::MIN_POINTS {
            return Err(Error::contract(
                "Grid::new",
                format!("need at least {} nodes, got {n_points}", Self::MIN_POINTS),
            ));
        }
        if !(y_min.is_finite() && y_max.is_finite() && y_min < y_max) {
            return Err(Error::contract(
                "Grid::new",
                format!("bounds must satisfy y_min < y_max, got [{y_min}, {y_max}]"),
            ));
        }
        Ok(Grid {
            y_min,
            y_max,
            n_points,
        })
    }

    pub fn for_spec(spec: &LandscapeSpec, n_points: usize) -> Result<Self> {
        Grid::new(spec.y_min(), spec.y_max(), n_points)
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn spacing(&self) -> f64 {
        (self.y_max - self.y_min) / (self.n_points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.y_max
        } else {
            self.y_min + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|i| self.node(i))
    }

    /// Trapezoid-rule quadrature weights (`h/2` at the ends, `h` inside).
    pub fn weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.n_points];
        w[0] = 0.5 * h;
        w[self.n_points - 1] = 0.5 * h;
        w
    }

    /// `∫ f dy` by the trapezoid rule.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.n_points);
        let h = self.spacing();
        let inner: f64 = f[1..f.len() - 1].iter().sum();
        h * (inner + 0.5 * (f[0] + f[f.len() - 1]))
    }

    /// Same bounds and node count.
    pub fn matches(&self, other: &Grid) -> bool {
        self.n_points == other.n_points && self.y_min == other.y_min && self.y_max == other.y_max
    }
}

/// Effective free energy `F_η` and its analytic derivative on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeEnergyField {
    pub eta: f64,
    pub grid: Grid,
    pub values: Vec<f64>,
    pub derivative: Vec<f64>,
}

/// Named landscapes shipped with the toolkit.
pub mod presets {
    use super::*;

    /// Parameters of the double-well preset
    /// `c = h((y/w)² − 1)²`, `a = a0 · exp(beta · y)`.
    #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
    #[serde(default, deny_unknown_fields)]
    pub struct DoubleWellParams {
        pub h: f64,
        pub w: f64,
        pub a0: f64,
        pub beta: f64,
        pub half_width: f64,
    }

    impl Default for DoubleWellParams {
        fn default() -> Self {
            DoubleWellParams {
                h: 0.5,
                w: 1.0,
                a0: 20.0,
                beta: 1.0,
                half_width: 2.0,
            }
        }
    }

    pub const NAMES: [&str; 3] = ["ou", "tilted-river", "double-well"];

    /// `c = κ y²/2`, `a ≡ 1` on `[-half_width, half_width]`.
    pub fn ou(kappa: f64, half_width: f64) -> Result<LandscapeSpec> {
        LandscapeSpec::new(
            RiverProfile::Polynomial {
                coeffs: vec![0.0, 0.0, 0.5 * kappa],
            },
            ValleyCurvature::Constant { a0: 1.0 },
            -half_width,
            half_width,
        )
    }

    /// `c = 0.05 y`, `a = exp(2y)` on `[-2, 2]`.
    pub fn tilted_river() -> Result<LandscapeSpec> {
        LandscapeSpec::new(
            RiverProfile::Polynomial {
                coeffs: vec![0.0, 0.05],
            },
            ValleyCurvature::Exponential { a0: 1.0, beta: 2.0 },
            -2.0,
            2.0,
        )
    }

    pub fn double_well(p: DoubleWellParams) -> Result<LandscapeSpec> {
        LandscapeSpec::new(
            RiverProfile::DoubleWell { h: p.h, w: p.w },
            ValleyCurvature::Exponential {
                a0: p.a0,
                beta: p.beta,
            },
            -p.half_width,
            p.half_width,
        )
    }

    /// Looks up a preset by name with its default parameters.
    pub fn by_name(name: &str) -> Result<LandscapeSpec> {
        match name {
            "ou" => ou(1.0, 8.0),
            "tilted-river" => tilted_river(),
            "double-well" => double_well(DoubleWellParams::default()),
            other => Err(Error::config(
                "landscape.preset",
                format!("unknown preset `{other}`; expected one of {NAMES:?}"),
            )),
        }
    }
}
