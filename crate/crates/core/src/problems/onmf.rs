//! Orthogonal nonnegative matrix factorization.
//!
//! The ONMF objective `min ||A - X Y^T||^2` over nonnegative `Y` reduces, for
//! feasible `X`, to the projective objective `||A - X X^T A||^2`. The driver
//! anchors against the latter and solves each subproblem on the
//! Gauss-Newton model that freezes `Y` at the start point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{random_stiefel_plus, row_labels, Preset};
use crate::driver::{ep4orth_solve, Refinement, SolveOptions};
use crate::error::{Error, Result};
use crate::manifold::project_oblique_plus;
use crate::objective::Objective;
use crate::rounding::feasibility_violation;
use crate::types::{Mat, PenaltyContext, SolveReport};

#[derive(Clone, Debug, PartialEq)]
pub struct OnmfInstance {
    pub a: Mat,
    pub k: usize,
    pub labels: Option<Vec<usize>>,
    /// Generating factor of a synthetic instance.
    pub b: Option<Mat>,
    pub xi: Option<f64>,
}

impl OnmfInstance {
    /// Wraps a data matrix, dropping all-zero rows and columns. Returns the
    /// kept row indices alongside.
    pub fn from_data(a: Mat, k: usize) -> Result<(Self, Vec<usize>)> {
        if let Some((idx, v)) = a.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            let (row, col) = (idx % a.nrows(), idx / a.nrows());
            return Err(if v.is_finite() {
                Error::NegativeEntry { row, col, value: *v }
            } else {
                Error::NonFinite(format!("entry ({row}, {col})"))
            });
        }
        let rows: Vec<usize> = (0..a.nrows()).filter(|&i| a.row(i).iter().any(|v| *v != 0.0)).collect();
        let cols: Vec<usize> = (0..a.ncols()).filter(|&j| a.column(j).iter().any(|v| *v != 0.0)).collect();
        if k == 0 || k > rows.len() {
            return Err(Error::BadShape(format!("k = {k} with {} nonzero rows", rows.len())));
        }
        let a = a.select_rows(&rows).select_columns(&cols);
        Ok((Self { a, k, labels: None, b: None, xi: None }, rows))
    }
}

/// `A = B C / ||B C|| + xi D / ||D||` with `B` random in the nonnegative
/// Stiefel set and `C`, `D` uniform.
pub fn gen_onmf(n: usize, r: usize, k: usize, xi: f64, seed: u64) -> Result<OnmfInstance> {
    if r == 0 || !(xi >= 0.0) {
        return Err(Error::InvalidParameter(format!("need r > 0 and xi >= 0, got r={r}, xi={xi}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = random_stiefel_plus(n, k, &mut rng)?;
    let c = Mat::from_fn(k, r, |_, _| rng.random::<f64>());
    let d = Mat::from_fn(n, r, |_, _| rng.random::<f64>());
    let mut a = &b * c;
    a /= a.norm();
    a += &d * (xi / d.norm());
    let labels = row_labels(&b);
    Ok(OnmfInstance { a, k, labels: Some(labels), b: Some(b), xi: Some(xi) })
}

/// `Y = max(A^T X (X^T X)^{-1}, 0)`, the nonnegative part of the
/// least-squares factor for fixed `X`.
pub fn onmf_gauss_newton_y(a: &Mat, x: &Mat) -> Result<Mat> {
    if a.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch(format!("A has {} rows, X has {}", a.nrows(), x.nrows())));
    }
    let k = x.ncols();
    let gram = x.transpose() * x;
    let chol = gram
        .clone()
        .cholesky()
        .or_else(|| (gram + Mat::identity(k, k) * 1e-12).cholesky())
        .ok_or(Error::SingularGram)?;
    // (X^T X)^{-1} X^T A, transposed
    let yt = chol.solve(&(x.transpose() * a));
    Ok(yt.transpose().map(|v| v.max(0.0)))
}

/// `||A - X X^T A||_F` at a feasible `X`.
pub fn resi(a: &Mat, x: &Mat) -> Result<f64> {
    let v = feasibility_violation(x);
    if v > 1e-8 {
        return Err(Error::NotFeasible { zeta: v });
    }
    if a.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch(format!("A has {} rows, X has {}", a.nrows(), x.nrows())));
    }
    Ok((a - x * (x.transpose() * a)).norm())
}

/// `||A - X X^T A||_F^2`; `A A^T` is never formed.
#[derive(Clone, Debug)]
pub struct ProjectiveObjective<'a> {
    pub a: &'a Mat,
}

impl ProjectiveObjective<'_> {
    /// `M X` with `M = A A^T`.
    fn m_apply(&self, x: &Mat) -> Mat {
        self.a * (self.a.transpose() * x)
    }
}

impl Objective for ProjectiveObjective<'_> {
    fn value(&self, x: &Mat) -> f64 {
        (self.a - x * (x.transpose() * self.a)).norm_squared()
    }

    fn gradient(&self, x: &Mat) -> Mat {
        let mx = self.m_apply(x);
        let xtx = x.transpose() * x;
        &mx * -4.0 + x * (x.transpose() * &mx) * 2.0 + &mx * xtx * 2.0
    }

    fn hess_apply(&self, x: &Mat, d: &Mat) -> Mat {
        let mx = self.m_apply(x);
        let md = self.m_apply(d);
        let xt_mx = x.transpose() * &mx;
        let xtx = x.transpose() * x;
        let sym = d.transpose() * x + x.transpose() * d;
        let mut out = &md * -4.0;
        out += d * &xt_mx * 2.0;
        out += x * (d.transpose() * &mx + x.transpose() * &md) * 2.0;
        out += &md * &xtx * 2.0;
        out += &mx * sym * 2.0;
        out
    }
}

/// `||A - X Y^T||_F^2` for a fixed `Y`.
#[derive(Clone, Debug)]
pub struct FixedFactorObjective {
    a_sq: f64,
    ay: Mat,
    yty: Mat,
    lipschitz: f64,
}

impl FixedFactorObjective {
    pub fn new(a: &Mat, y: &Mat) -> Self {
        let yty = y.transpose() * y;
        let lipschitz = 2.0 * yty.clone().symmetric_eigenvalues().max().max(0.0);
        Self { a_sq: a.norm_squared(), ay: a * y, yty, lipschitz }
    }
}

impl Objective for FixedFactorObjective {
    fn value(&self, x: &Mat) -> f64 {
        self.a_sq - 2.0 * self.ay.dot(x) + (x.transpose() * x).dot(&self.yty)
    }

    fn gradient(&self, x: &Mat) -> Mat {
        (x * &self.yty - &self.ay) * 2.0
    }

    fn hess_apply(&self, _x: &Mat, d: &Mat) -> Mat {
        d * &self.yty * 2.0
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
}

/// Start point from the top-`k` singular triplets of `A`: each left
/// singular vector keeps the sign part (positive or negative) whose product
/// with the matching right part has the larger norm, then the columns are
/// projected onto the nonnegative oblique set.
pub fn svd_init(a: &Mat, k: usize) -> Result<Mat> {
    if k == 0 || k > a.nrows().min(a.ncols()) {
        return Err(Error::BadShape(format!("k = {k} exceeds the rank bound of a {:?} matrix", a.shape())));
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.ok_or_else(|| Error::InvalidParameter("SVD did not converge".into()))?;
    let vt = svd.v_t.ok_or_else(|| Error::InvalidParameter("SVD did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut top = Mat::zeros(a.nrows(), k);
    for (j, &s) in order.iter().take(k).enumerate() {
        let uj = u.column(s);
        let vj = vt.row(s);
        let pos = |x: f64| x.max(0.0);
        let neg = |x: f64| (-x).max(0.0);
        let up = uj.map(pos);
        let un = uj.map(neg);
        let pos_mass = up.norm() * vj.map(pos).norm();
        let neg_mass = un.norm() * vj.map(neg).norm();
        top.set_column(j, if pos_mass >= neg_mass { &up } else { &un });
    }
    Ok(project_oblique_plus(&top).into_mat())
}

#[derive(Clone, Debug, Serialize)]
pub struct OnmfResult {
    pub report: SolveReport,
    pub resi: f64,
    pub labels: Vec<usize>,
}

/// Which objective drives the subproblems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OnmfModel {
    /// Gauss-Newton model with `Y` frozen at each outer start point.
    GaussNewton,
    /// The projective objective itself.
    Projective,
}

pub fn onmf_solve(inst: &OnmfInstance, preset: &Preset, model: OnmfModel) -> Result<OnmfResult> {
    let a = &inst.a;
    let x0 = svd_init(a, inst.k)?;
    let ctx = PenaltyContext::uniform(inst.k);
    let f = ProjectiveObjective { a };
    let build = |x: &Mat| -> Box<dyn Objective + '_> {
        let y = onmf_gauss_newton_y(a, x).unwrap_or_else(|_| (a.transpose() * x).map(|v| v.max(0.0)));
        Box::new(FixedFactorObjective::new(a, &y))
    };
    let opts = SolveOptions {
        feasible_hint: Some(x0.clone()),
        x0: Some(x0),
        refinement: Refinement::Gram { a: a.clone() },
        gp: preset.gp,
        newton: preset.newton,
        surrogate: match model {
            OnmfModel::GaussNewton => Some(&build),
            OnmfModel::Projective => None,
        },
        ..SolveOptions::default()
    };
    let report = ep4orth_solve(&f, &ctx, &preset.driver, &opts)?;
    let resi = resi(a, &report.x)?;
    let labels = row_labels(&report.x);
    Ok(OnmfResult { report, resi, labels })
}
