//! Natural cubic spline used by the tabulated landscape families.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples `(y, values)` interpolated by a natural cubic spline.
///
/// Serialized as the raw samples; the second-derivative table is rebuilt on
/// deserialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableSamples", into = "TableSamples")]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSamples {
    pub y: Vec<f64>,
    pub values: Vec<f64>,
}

impl TryFrom<TableSamples> for CubicSpline {
    type Error = Error;

    fn try_from(t: TableSamples) -> Result<Self> {
        CubicSpline::natural(t.y, t.values)
    }
}

impl From<CubicSpline> for TableSamples {
    fn from(s: CubicSpline) -> Self {
        TableSamples {
            y: s.knots,
            values: s.values,
        }
    }
}

impl CubicSpline {
    pub fn natural(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = knots.len();
        if n < 3 || values.len() != n {
            return Err(Error::InvalidLandscape(format!(
                "tabulated family needs at least 3 (y, value) pairs of equal length, got {} and {}",
                n,
                values.len()
            )));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidLandscape(
                "tabulated samples must be finite".into(),
            ));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidLandscape(
                "tabulated y samples must be strictly increasing".into(),
            ));
        }

        // Tridiagonal system for the interior second derivatives (Thomas algorithm).
        let mut second = vec![0.0; n];
        let mut c_prime = vec![0.0; n];
        let mut d_prime = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = knots[i] - knots[i - 1];
            let h1 = knots[i + 1] - knots[i];
            let a = h0;
            let b = 2.0 * (h0 + h1);
            let c = h1;
            let d = 6.0 * ((values[i + 1] - values[i]) / h1 - (values[i] - values[i - 1]) / h0);
            let denom = b - a * c_prime[i - 1];
            c_prime[i] = c / denom;
            d_prime[i] = (d - a * d_prime[i - 1]) / denom;
        }
        for i in (1..n - 1).rev() {
            second[i] = d_prime[i] - c_prime[i] * second[i + 1];
        }
        Ok(CubicSpline {
            knots,
            values,
            second,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value and first derivative at `t`. Outside the knot range the end
    /// cubic is extrapolated.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let n = self.knots.len();
        let i = match self.knots.partition_point(|&k| k <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        let value = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let slope =
            (y1 - y0) / h - (3.0 * a * a - 1.0) / 6.0 * h * m0 + (3.0 * b * b - 1.0) / 6.0 * h * m1;
        (value, slope)
    }
}
