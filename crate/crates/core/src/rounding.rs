//! Rounding oblique points onto the nonnegative Stiefel set and the
//! constants of the accompanying error bound.

use crate::types::{identity_nk, Mat, ObliqueMatrix, PenaltyContext};

/// A point with orthonormal, nonnegative columns and disjoint supports.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasiblePoint {
    data: Mat,
    sign: Mat,
}

impl FeasiblePoint {
    /// Wraps a matrix already known to be feasible; the sign pattern is
    /// read off the entries.
    pub(crate) fn from_feasible(data: Mat) -> Self {
        let sign = data.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        Self { data, sign }
    }

    pub fn as_mat(&self) -> &Mat {
        &self.data
    }

    pub fn into_mat(self) -> Mat {
        self.data
    }

    /// The 0/1 pattern `sgn(X)`.
    pub fn sign(&self) -> &Mat {
        &self.sign
    }

    /// Column owning row `i`, if the row is nonzero.
    pub fn owner(&self, i: usize) -> Option<usize> {
        (0..self.sign.ncols()).find(|&j| self.sign[(i, j)] > 0.0)
    }

    pub fn to_oblique(&self) -> ObliqueMatrix {
        ObliqueMatrix::from_projection(self.data.clone())
    }
}

/// Keeps the largest entry of every row (smallest column index on ties),
/// renormalizes the columns, and falls back to `I_{n,k}` when a column is
/// left empty.
pub fn round(x: &ObliqueMatrix) -> FeasiblePoint {
    round_mat(x.as_mat())
}

pub(crate) fn round_mat(x: &Mat) -> FeasiblePoint {
    let (n, k) = x.shape();
    let mut out = Mat::zeros(n, k);
    for i in 0..n {
        let row = x.row(i);
        let mut best = 0;
        for j in 1..k {
            if row[j] > row[best] {
                best = j;
            }
        }
        out[(i, best)] = row[best];
    }
    for j in 0..k {
        let nrm = out.column(j).norm();
        if nrm == 0.0 || !nrm.is_finite() {
            return FeasiblePoint::from_feasible(identity_nk(n, k));
        }
        out.column_mut(j).scale_mut(1.0 / nrm);
    }
    FeasiblePoint::from_feasible(out)
}

/// `tilde rho_q` with `zeta_2 <= tilde rho_q * zeta_q` on the oblique set.
///
/// At `q = 1` both the middle and the small-`q` branch apply; the larger
/// small-`q` value is used.
pub fn rho_tilde(k: usize, q: f64) -> f64 {
    let rk = (k as f64).sqrt();
    if q >= 2.0 {
        1.0
    } else if q > 1.0 {
        (rk + 1.0) / q
    } else {
        2.0 * rk * (rk + 1.0) / (q * (q + 1.0))
    }
}

/// Error-bound constant: `||round(X) - X||_F <= rho_q sqrt(zeta_q(X))`.
pub fn rho_q(ctx: &PenaltyContext, q: f64) -> f64 {
    let k = ctx.k();
    (2.0 * k as f64 * rho_tilde(k, q) / ctx.omega_min()).sqrt()
}

/// `||X^T X - I||_F + ||min(X, 0)||_F`.
pub fn feasibility_violation(x: &Mat) -> f64 {
    let k = x.ncols();
    let orth = (x.transpose() * x - Mat::identity(k, k)).norm();
    let neg = x.map(|v| v.min(0.0)).norm();
    orth + neg
}
