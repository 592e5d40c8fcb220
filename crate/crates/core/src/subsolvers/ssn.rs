//! Semi-smooth Newton method for the quadratic direction subproblem
//!
//! ```text
//! min <g, Z - X> + 1/2 <Z - X, B[Z - X]>   s.t.  x_j.z_j = 1, z_j >= 0
//! ```
//!
//! through the residual `F(Z) = Z - Pi_Delta(Z - alpha (g + B[Z - X]))`.
//! Each Newton system uses the HS-Jacobian of `Pi_Delta`, a column-wise
//! symmetric projection `P`, and is solved by splitting `H` into its
//! `range(P)` and `range(I - P)` parts: the latter is explicit and the
//! former is found by conjugate gradients on `alpha P B P`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::simplex::project_delta;
use crate::types::{Mat, ZERO_TOL};

/// A quadratic model around an oblique base point.
pub struct QuadraticModel<'a> {
    pub base: &'a Mat,
    pub grad: Mat,
    /// Symmetric linear operator `B`.
    pub hess: &'a dyn Fn(&Mat) -> Mat,
}

impl QuadraticModel<'_> {
    /// `<g, D> + <D, B[D]>/2`.
    pub fn value(&self, d: &Mat) -> f64 {
        self.grad.dot(d) + 0.5 * d.dot(&(self.hess)(d))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsnConfig {
    /// Absolute bound on `||F||_F`.
    pub tol: f64,
    /// Bound on `||F||_F` relative to its value at `Z = X`; the looser of
    /// the two bounds applies.
    pub rel_tol: f64,
    pub max_iter: usize,
    pub cg_max_iter: usize,
    /// Required reduction of `||F||` for a full Newton step.
    pub decrease: f64,
}

impl Default for SsnConfig {
    fn default() -> Self {
        Self { tol: 1e-14, rel_tol: 1e-8, max_iter: 100, cg_max_iter: 200, decrease: 0.9 }
    }
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    /// `D = Z - X`, exactly in the tangent set.
    pub direction: Mat,
    /// `||F(Z)||_F` at the returned point.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Column-wise HS-Jacobian of `Pi_Delta` at a point.
struct Jacobian {
    mask: Mat,
    masked_base: Mat,
    denom: Vec<f64>,
}

impl Jacobian {
    fn at(base: &Mat, projected: &Mat) -> Self {
        let mask = projected.map(|v| if v > ZERO_TOL { 1.0 } else { 0.0 });
        let masked_base = base.component_mul(&mask);
        let denom = (0..base.ncols()).map(|j| masked_base.column(j).dot(&base.column(j))).collect();
        Self { mask, masked_base, denom }
    }

    fn apply(&self, h: &Mat) -> Mat {
        let mut out = h.component_mul(&self.mask);
        for j in 0..h.ncols() {
            if self.denom[j] > 0.0 {
                let a = self.masked_base.column(j).dot(&h.column(j)) / self.denom[j];
                out.column_mut(j).axpy(-a, &self.masked_base.column(j), 1.0);
            }
        }
        out
    }
}

struct Residual {
    value: Mat,
    projected: Mat,
    norm: f64,
}

fn project_columns(base: &Mat, c: &Mat) -> Mat {
    let mut out = Mat::zeros(c.nrows(), c.ncols());
    for j in 0..c.ncols() {
        let col: DVector<f64> = project_delta(base.column(j), c.column(j)).expect("base column has a positive entry");
        out.set_column(j, &col);
    }
    out
}

fn residual(model: &QuadraticModel<'_>, alpha: f64, z: &Mat) -> Residual {
    let d = z - model.base;
    let c = z - (&model.grad + (model.hess)(&d)) * alpha;
    let projected = project_columns(model.base, &c);
    let value = z - &projected;
    let norm = value.norm();
    Residual { value, projected, norm }
}

/// Conjugate gradients for `A u = b` restricted to `range(P)`; stops at
/// the first direction of nonpositive curvature.
fn projected_cg(apply: impl Fn(&Mat) -> Mat, b: &Mat, tol: f64, max_iter: usize) -> Mat {
    let mut u = Mat::zeros(b.nrows(), b.ncols());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let target = tol * tol * rr;
    for it in 0..max_iter {
        if rr <= target || rr == 0.0 {
            break;
        }
        let ap = apply(&p);
        let curv = p.dot(&ap);
        if curv <= 1e-14 * p.norm_squared() {
            if it == 0 {
                u = b.clone();
            }
            break;
        }
        let step = rr / curv;
        u += &p * step;
        r -= &ap * step;
        let rr_new = r.norm_squared();
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    u
}

/// Solves the direction subproblem from `Z = X` with step `alpha`.
pub fn solve_qp_subproblem(model: &QuadraticModel<'_>, alpha: f64, cfg: &SsnConfig) -> QpSolution {
    let mut z = model.base.clone();
    let mut res = residual(model, alpha, &z);
    let target = cfg.tol.max(cfg.rel_tol * res.norm);
    let mut iterations = 0;
    while res.norm > target && iterations < cfg.max_iter {
        iterations += 1;
        let jac = Jacobian::at(model.base, &res.projected);
        let pf = jac.apply(&res.value);
        let h2 = -(&res.value - &pf);
        let bh2 = (model.hess)(&h2);
        let rhs = -(&pf + jac.apply(&bh2) * alpha);
        let cg_tol = res.norm.min(0.1);
        let h1 = projected_cg(|v| jac.apply(&(model.hess)(&jac.apply(v))) * alpha, &rhs, cg_tol, cfg.cg_max_iter);
        let newton = &z + h1 + h2;
        let trial = residual(model, alpha, &newton);
        if trial.norm <= cfg.decrease * res.norm {
            z = newton;
            res = trial;
            continue;
        }
        let fixed_point = &res.projected;
        let mut accepted = None;
        for theta in [0.5, 0.75, 1.0] {
            let cand = &newton * (1.0 - theta) + fixed_point * theta;
            let r = residual(model, alpha, &cand);
            if r.norm < res.norm || theta == 1.0 {
                accepted = Some((cand, r));
                break;
            }
        }
        let (cand, r) = accepted.expect("theta = 1 is always accepted");
        z = cand;
        res = r;
    }
    // report the feasible image of the final iterate
    let direction = &res.projected - model.base;
    let residual_norm = residual(model, alpha, &res.projected).norm;
    QpSolution { direction, residual: residual_norm, iterations, converged: residual_norm <= target }
}
