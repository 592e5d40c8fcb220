//! The penalty `f + sigma (zeta_q + eps)^p` with `zeta_q = ||XV||_F^q - 1`,
//! its derivatives and stationarity checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{rgrad_unchecked, rhess_unchecked, TangentDirection};
use crate::objective::Objective;
use crate::types::{Mat, ObliqueMatrix, PenaltyContext, PenaltyParams, SupportPattern, ZERO_TOL};

/// Feasibility tolerance on `zeta_2` for the original-problem checker.
pub const FEASIBLE_ZETA_TOL: f64 = 1e-10;

/// `zeta_2(X) = ||XV||_F^2 - 1` evaluated as `<VV^T, X^T X - I>` so that
/// near-feasible points do not lose digits to cancellation.
pub(crate) fn zeta2_raw(x: &Mat, ctx: &PenaltyContext) -> f64 {
    let w = ctx.vvt();
    let k = x.ncols();
    let mut acc = 0.0;
    for j in 0..k {
        let xj = x.column(j);
        acc += w[(j, j)] * (xj.norm_squared() - 1.0);
        for i in (j + 1)..k {
            acc += 2.0 * w[(i, j)] * xj.dot(&x.column(i));
        }
    }
    acc
}

fn zeta_q_from_2(zeta2: f64, q: f64) -> f64 {
    if q == 2.0 {
        zeta2
    } else {
        (0.5 * q * zeta2.ln_1p()).exp_m1()
    }
}

/// `zeta_q(X) = ||XV||_F^q - 1`.
pub fn zeta(x: &ObliqueMatrix, ctx: &PenaltyContext, q: f64) -> f64 {
    zeta_q_from_2(zeta2_raw(x.as_mat(), ctx), q)
}

/// Penalty value at a point together with the scalars its derivatives share.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyEval {
    /// `f + sigma (zeta + eps)^p`.
    pub value: f64,
    pub f_value: f64,
    /// `zeta_q`.
    pub zeta: f64,
    /// `||XV||_F`.
    pub s: f64,
    /// `p q (zeta + eps)^(p-1) s^(q-2)`, so that the penalty gradient is `c X VV^T`.
    pub c: f64,
    /// Derivative of `c` in `s`, divided by `s`.
    pub c_prime_over_s: f64,
}

/// The `(zeta + eps)^p` term and its scalars, without `f`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PenaltyTerm {
    pub pi: f64,
    pub zeta: f64,
    pub s: f64,
    pub c: f64,
    pub c_prime_over_s: f64,
}

pub(crate) fn penalty_term(x: &Mat, ctx: &PenaltyContext, params: &PenaltyParams) -> PenaltyTerm {
    let PenaltyParams { p, q, eps, .. } = *params;
    let zeta2 = zeta2_raw(x, ctx);
    let zeta = zeta_q_from_2(zeta2, q);
    let s = (1.0 + zeta2).max(0.0).sqrt();
    let base = zeta + eps;
    let (pi, c, c_prime_over_s) = if p == 1.0 {
        let c = q * s.powf(q - 2.0);
        (base, c, c * (q - 2.0) / (s * s))
    } else {
        let b = base.max(0.0);
        let c = p * q * b.powf(p - 1.0) * s.powf(q - 2.0);
        let cps = if b > 0.0 {
            c * ((p - 1.0) * q * s.powf(q - 2.0) / b + (q - 2.0) / (s * s))
        } else if p > 2.0 {
            0.0
        } else if p == 2.0 {
            2.0 * q * q * s.powf(2.0 * q - 4.0)
        } else {
            f64::INFINITY
        };
        (b.powf(p), c, cps)
    };
    PenaltyTerm { pi, zeta, s, c, c_prime_over_s }
}

/// Evaluates the penalty at `x`.
pub fn penalty_value<F: Objective + ?Sized>(
    x: &ObliqueMatrix,
    ctx: &PenaltyContext,
    params: &PenaltyParams,
    f: &F,
) -> Result<PenaltyEval> {
    let f_value = f.value(x.as_mat());
    if !f_value.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let t = penalty_term(x.as_mat(), ctx, params);
    Ok(PenaltyEval {
        value: f_value + params.sigma * t.pi,
        f_value,
        zeta: t.zeta,
        s: t.s,
        c: t.c,
        c_prime_over_s: t.c_prime_over_s,
    })
}

/// Riemannian gradient of the penalty given the Euclidean gradient of `f`:
/// `grad f + sigma c X (Off(VV^T) - Diag((X^T X - I) VV^T))`.
pub fn penalty_rgrad(
    x: &ObliqueMatrix,
    ctx: &PenaltyContext,
    params: &PenaltyParams,
    eval: &PenaltyEval,
    grad_f: &Mat,
) -> Mat {
    rgrad_closed_form(x.as_mat(), ctx, params.sigma * eval.c, grad_f)
}

fn rgrad_closed_form(x: &Mat, ctx: &PenaltyContext, scale: f64, grad_f: &Mat) -> Mat {
    let k = x.ncols();
    let w = ctx.vvt();
    let gram_minus_i = x.transpose() * x - Mat::identity(k, k);
    let mut mix = w.clone();
    for j in 0..k {
        mix[(j, j)] = -gram_minus_i.row(j).dot(&w.column(j).transpose());
    }
    let mut g = rgrad_unchecked(x, grad_f);
    g += x * mix * scale;
    g
}

/// Riemannian Hessian of the penalty applied to a tangent direction.
pub fn penalty_rhess_apply<F: Objective + ?Sized>(
    x: &ObliqueMatrix,
    ctx: &PenaltyContext,
    params: &PenaltyParams,
    eval: &PenaltyEval,
    f: &F,
    d: &TangentDirection,
) -> Result<Mat> {
    if !eval.c.is_finite() || !eval.c_prime_over_s.is_finite() {
        return Err(Error::SingularCurvature);
    }
    let xm = x.as_mat();
    let dm = d.as_mat();
    let xw = ctx.x_vvt(xm);
    let egrad = f.gradient(xm) + &xw * (params.sigma * eval.c);
    let mut ehess = f.hess_apply(xm, dm);
    ehess += ctx.x_vvt(dm) * (params.sigma * eval.c);
    ehess += &xw * (params.sigma * eval.c_prime_over_s * xw.dot(dm));
    Ok(rhess_unchecked(xm, &egrad, &ehess, dm))
}

/// `||min(X, grad P(X))||_F`; zero exactly at points with
/// `0 <= X` complementary to `grad P >= 0`.
pub fn kkt_residual_subproblem(
    x: &ObliqueMatrix,
    ctx: &PenaltyContext,
    params: &PenaltyParams,
    eval: &PenaltyEval,
    grad_f: &Mat,
) -> f64 {
    let g = penalty_rgrad(x, ctx, params, eval, grad_f);
    complementarity_residual(x.as_mat(), &g)
}

pub(crate) fn complementarity_residual(x: &Mat, rgrad: &Mat) -> f64 {
    x.zip_map(rgrad, f64::min).norm()
}

/// Outcome of [`check_stationarity_original`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stationarity {
    Stationary,
    WeaklyStationary,
    Neither,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub class: Stationarity,
    /// Largest `|[grad f]_ij|` on the support.
    pub support_violation: f64,
    /// Largest `-[grad f]_ij` (Euclidean) over the entries of all-zero rows.
    pub zero_row_violation: f64,
}

/// Classifies a feasible point of the original problem: the Riemannian
/// gradient must vanish on the support, and for stationarity the Euclidean
/// gradient must also be nonnegative on the all-zero rows.
pub fn check_stationarity_original<F: Objective + ?Sized>(
    x: &ObliqueMatrix,
    ctx: &PenaltyContext,
    f: &F,
    tol: f64,
) -> Result<StationarityReport> {
    let xm = x.as_mat();
    let zeta2 = zeta2_raw(xm, ctx);
    if zeta2 > FEASIBLE_ZETA_TOL {
        return Err(Error::NotFeasible { zeta: zeta2 });
    }
    let egrad = f.gradient(xm);
    let rgrad = rgrad_unchecked(xm, &egrad);
    let pattern = SupportPattern::of(xm, ZERO_TOL);
    let support_violation = pattern.supp.iter().map(|&(i, j)| rgrad[(i, j)].abs()).fold(0.0, f64::max);
    let zero_row_violation = pattern
        .omega0_dprime
        .iter()
        .map(|&(i, j)| (-egrad[(i, j)]).max(0.0))
        .fold(0.0, f64::max);
    let class = if support_violation > tol {
        Stationarity::Neither
    } else if zero_row_violation > tol {
        Stationarity::WeaklyStationary
    } else {
        Stationarity::Stationary
    };
    Ok(StationarityReport { class, support_violation, zero_row_violation })
}

/// `h = f + sigma (zeta_q + eps)^p` as an [`Objective`] for the inner solvers.
#[derive(Clone, Copy)]
pub struct PenaltyObjective<'a, F: ?Sized> {
    pub f: &'a F,
    pub ctx: &'a PenaltyContext,
    pub params: PenaltyParams,
}

impl<'a, F: Objective + ?Sized> PenaltyObjective<'a, F> {
    pub fn new(f: &'a F, ctx: &'a PenaltyContext, params: PenaltyParams) -> Self {
        Self { f, ctx, params }
    }

    /// `zeta_2` at `x`.
    pub fn zeta2(&self, x: &Mat) -> f64 {
        zeta2_raw(x, self.ctx)
    }

    /// Riemannian gradient via the closed form.
    pub fn rgrad(&self, x: &Mat) -> Mat {
        let t = penalty_term(x, self.ctx, &self.params);
        rgrad_closed_form(x, self.ctx, self.params.sigma * t.c, &self.f.gradient(x))
    }

    /// `||min(X, grad P)||_F`.
    pub fn kkt(&self, x: &Mat) -> f64 {
        complementarity_residual(x, &self.rgrad(x))
    }
}

impl<F: Objective + ?Sized> Objective for PenaltyObjective<'_, F> {
    fn value(&self, x: &Mat) -> f64 {
        self.f.value(x) + self.params.sigma * penalty_term(x, self.ctx, &self.params).pi
    }

    fn gradient(&self, x: &Mat) -> Mat {
        let t = penalty_term(x, self.ctx, &self.params);
        self.f.gradient(x) + self.ctx.x_vvt(x) * (self.params.sigma * t.c)
    }

    fn hess_apply(&self, x: &Mat, d: &Mat) -> Mat {
        let t = penalty_term(x, self.ctx, &self.params);
        let sigma = self.params.sigma;
        let xw = self.ctx.x_vvt(x);
        let mut out = self.f.hess_apply(x, d);
        out += self.ctx.x_vvt(d) * (sigma * t.c);
        if t.c_prime_over_s != 0.0 {
            out += &xw * (sigma * t.c_prime_over_s * xw.dot(d));
        }
        out
    }

    fn lipschitz(&self) -> Option<f64> {
        let PenaltyParams { sigma, p, q, .. } = self.params;
        if p == 1.0 && q == 2.0 {
            self.f.lipschitz().map(|lf| lf + 2.0 * sigma * self.ctx.lambda_max())
        } else {
            None
        }
    }
}
