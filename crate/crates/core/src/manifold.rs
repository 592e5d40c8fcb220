//! Projections onto the nonnegative oblique set and the oblique-manifold
//! derivative corrections.

use nalgebra::{DVector, DVectorView};

use crate::error::{Error, Result};
use crate::subsolvers::simplex::project_delta;
use crate::types::{Mat, ObliqueMatrix};

/// A direction at a base point whose columns are orthogonal to the base
/// columns.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentDirection {
    data: Mat,
}

impl TangentDirection {
    /// Checks `|x_j . d_j| <= 1e-10 max(1, ||d_j||)` for every column.
    pub fn new(x: &ObliqueMatrix, d: Mat) -> Result<Self> {
        check_tangent(x, &d, 1e-10)?;
        Ok(Self { data: d })
    }

    pub fn as_mat(&self) -> &Mat {
        &self.data
    }

    pub fn into_mat(self) -> Mat {
        self.data
    }
}

fn check_shape(x: &Mat, other: &Mat) -> Result<()> {
    if x.shape() != other.shape() {
        return Err(Error::BadShape(format!(
            "expected {:?}, got {:?}",
            x.shape(),
            other.shape()
        )));
    }
    Ok(())
}

fn check_tangent(x: &ObliqueMatrix, d: &Mat, tol: f64) -> Result<()> {
    check_shape(x.as_mat(), d)?;
    for j in 0..x.k() {
        let inner = x.as_mat().column(j).dot(&d.column(j));
        if inner.abs() > tol * d.column(j).norm().max(1.0) {
            return Err(Error::NotTangent { col: j, inner });
        }
    }
    Ok(())
}

/// Nearest point of the nonnegative unit sphere to `c`, restricted to the
/// coordinates where `mask` is true.
///
/// With a nonzero positive part the answer is the normalized positive part;
/// otherwise it is the basis vector at the largest (masked) entry, smallest
/// index on ties. Returns `None` when the mask is empty.
pub(crate) fn project_column_masked(c: DVectorView<'_, f64>, mask: Option<&[bool]>) -> Option<DVector<f64>> {
    let n = c.len();
    let keep = |i: usize| mask.is_none_or(|m| m[i]);
    let mut z = DVector::from_fn(n, |i, _| if keep(i) { c[i].max(0.0) } else { 0.0 });
    let norm = z.norm();
    if norm > 0.0 && norm.is_finite() {
        z /= norm;
        return Some(z);
    }
    let mut best: Option<usize> = None;
    for i in (0..n).filter(|&i| keep(i)) {
        if best.is_none_or(|b| c[i] > c[b]) {
            best = Some(i);
        }
    }
    best.map(|b| {
        let mut e = DVector::zeros(n);
        e[b] = 1.0;
        e
    })
}

/// Column-wise projection onto the nonnegative oblique set.
pub fn project_oblique_plus(c: &Mat) -> ObliqueMatrix {
    let (n, k) = c.shape();
    let mut out = Mat::zeros(n, k);
    for j in 0..k {
        let col = project_column_masked(c.column(j), None).expect("nonempty column");
        out.set_column(j, &col);
    }
    ObliqueMatrix::from_projection(out)
}

/// `grad f(X) = G - X Diag(X^T G)`.
pub fn riemannian_grad(x: &ObliqueMatrix, g: &Mat) -> Result<Mat> {
    check_shape(x.as_mat(), g)?;
    Ok(rgrad_unchecked(x.as_mat(), g))
}

pub(crate) fn rgrad_unchecked(x: &Mat, g: &Mat) -> Mat {
    let mut r = g.clone();
    for j in 0..x.ncols() {
        let a = x.column(j).dot(&g.column(j));
        r.column_mut(j).axpy(-a, &x.column(j), 1.0);
    }
    r
}

/// `Hess f(X)[D] = H_D - D Diag(X^T G)` where `H_D` is the Euclidean
/// Hessian applied to `D` and `G` the Euclidean gradient.
pub fn riemannian_hess_apply(x: &ObliqueMatrix, g: &Mat, h_d: &Mat, d: &Mat) -> Result<Mat> {
    check_shape(x.as_mat(), g)?;
    check_shape(x.as_mat(), h_d)?;
    check_tangent(x, d, 1e-8)?;
    Ok(rhess_unchecked(x.as_mat(), g, h_d, d))
}

pub(crate) fn rhess_unchecked(x: &Mat, g: &Mat, h_d: &Mat, d: &Mat) -> Mat {
    let mut out = h_d.clone();
    for j in 0..x.ncols() {
        let a = x.column(j).dot(&g.column(j));
        out.column_mut(j).axpy(-a, &d.column(j), 1.0);
    }
    out
}

/// Projection onto `T(X) = {D : x_j.d_j = 0, x_j + d_j >= 0}`.
///
/// Column-wise `T(X) = Delta(X) - X`, so this is `Pi_Delta(x_j + d_j) - x_j`.
pub fn project_tangent_t(x: &ObliqueMatrix, d: &Mat) -> TangentDirection {
    TangentDirection { data: project_tangent_unchecked(x.as_mat(), d) }
}

pub(crate) fn project_tangent_unchecked(x: &Mat, d: &Mat) -> Mat {
    let mut out = Mat::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        let xj = x.column(j);
        let shifted: DVector<f64> = xj + d.column(j);
        let z = project_delta(xj, shifted.as_view()).expect("oblique column has a positive entry");
        out.set_column(j, &(z - xj));
    }
    out
}

/// Nearest orthogonal matrix to a square `M` (its polar factor `U W^T`).
///
/// Singular triplets are sorted by decreasing singular value and signed so
/// the largest-magnitude entry of each left vector is positive. Left vectors
/// belonging to (numerically) zero singular values are replaced by the
/// Gram-Schmidt completion of the matching right vectors, so `M = 0` maps to
/// the identity.
pub fn project_orthogonal_group(m: &Mat) -> Mat {
    let k = m.nrows();
    assert_eq!(k, m.ncols(), "polar projection needs a square matrix");
    if m.iter().all(|v| *v == 0.0) {
        return Mat::identity(k, k);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("left vectors requested");
    let vt = svd.v_t.expect("right vectors requested");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let smax = s.max();
    let cutoff = smax * k as f64 * f64::EPSILON;

    let mut uu = Mat::zeros(k, k);
    let mut ww = Mat::zeros(k, k);
    for (slot, &i) in order.iter().enumerate() {
        let mut ui = u.column(i).into_owned();
        let mut wi = vt.row(i).transpose();
        let imax = ui.iamax();
        if ui[imax] < 0.0 {
            ui = -ui;
            wi = -wi;
        }
        uu.set_column(slot, &ui);
        ww.set_column(slot, &wi);
    }
    let rank = order.iter().filter(|&&i| s[i] > cutoff).count();
    for slot in rank..k {
        let mut cand = ww.column(slot).into_owned();
        let mut done = false;
        for attempt in 0..=k {
            if attempt > 0 {
                cand = DVector::zeros(k);
                cand[attempt - 1] = 1.0;
            }
            for prev in 0..slot {
                let p = uu.column(prev).dot(&cand);
                cand.axpy(-p, &uu.column(prev), 1.0);
            }
            let nrm = cand.norm();
            if nrm > 1e-8 {
                uu.set_column(slot, &(cand.clone() / nrm));
                done = true;
                break;
            }
        }
        debug_assert!(done);
    }
    uu * ww.transpose()
}
