//! Tridiagonal linear algebra: Sturm-sequence bisection for symmetric
//! eigenvalues and a partially pivoted solver for general systems.

use crate::error::{Error, Result};

/// Real symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(
            off.len() + 1,
            diag.len(),
            "off-diagonal length must be n - 1"
        );
        SymTridiag { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    pub fn norm_bound(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    /// Number of eigenvalues strictly below `x` (LDLᵀ inertia count).
    pub fn count_below(&self, x: f64) -> usize {
        let tiny = f64::MIN_POSITIVE * 1e10 + f64::EPSILON * self.norm_bound() * 1e-30;
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            if q == 0.0 {
                q = tiny;
            }
            let e = self.off[i - 1];
            q = self.diag[i] - x - e * e / q;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k` smallest eigenvalues, ascending, by bisection.
    pub fn lowest_eigenvalues(&self, k: usize) -> Vec<f64> {
        let k = k.min(self.len());
        let (lo, hi) = self.gershgorin();
        let scale = self.norm_bound().max(f64::MIN_POSITIVE);
        let abs_tol = 2.0 * f64::EPSILON * scale;
        let mut out = Vec::with_capacity(k);
        let mut floor = lo;
        for idx in 0..k {
            // Find the (idx+1)-th eigenvalue: smallest x with count_below(x) > idx.
            let mut a = floor;
            let mut b = hi + abs_tol;
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b || b - a <= abs_tol.max(2.0 * f64::EPSILON * mid.abs()) {
                    break;
                }
                if self.count_below(mid) > idx {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            let lambda = 0.5 * (a + b);
            out.push(lambda);
            floor = a;
        }
        out
    }

    /// Dense matrix-vector product.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s += self.off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * v[i + 1];
                }
                s
            })
            .collect()
    }
}

/// LU factorization with partial pivoting of a general tridiagonal matrix
/// (the `gttrf` layout: one extra super-diagonal from row swaps).
#[derive(Debug, Clone)]
pub struct TridiagLu {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    upper2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    /// Factorizes the matrix with sub-diagonal `lower`, diagonal `diag` and
    /// super-diagonal `upper`. Zero pivots are replaced by `pivot_floor`
    /// (inverse iteration relies on solving with a numerically singular matrix).
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64], pivot_floor: f64) -> Result<Self> {
        let n = diag.len();
        if lower.len() + 1 != n || upper.len() + 1 != n {
            return Err(Error::contract(
                "TridiagLu::factor",
                "band lengths must be n - 1",
            ));
        }
        let mut dl = lower.to_vec();
        let mut d = diag.to_vec();
        let mut du = upper.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = pivot_floor;
                }
                let m = dl[i] / d[i];
                dl[i] = m;
                d[i + 1] -= m * du[i];
            } else {
                let m = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = m;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - m * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -m * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = pivot_floor;
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("TridiagLu::factor", "non-finite pivot"));
        }
        Ok(TridiagLu {
            lower: dl,
            diag: d,
            upper: du,
            upper2: du2,
            swapped,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut b = rhs.to_vec();
        for i in 0..n - 1 {
            if self.swapped[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= self.lower[i] * b[i];
        }
        b[n - 1] /= self.diag[n - 1];
        if n >= 2 {
            b[n - 2] = (b[n - 2] - self.upper[n - 2] * b[n - 1]) / self.diag[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.upper[i] * b[i + 1] - self.upper2[i] * b[i + 2]) / self.diag[i];
        }
        b
    }
}
