//! K-indicators clustering: fit a rotation `U Y` of orthonormal features to a
//! nonnegative orthogonal indicator `X`.
//!
//! Each subproblem runs alternating updates: `Y` is the polar factor of
//! `U^T X`, then `X` takes a projected gradient step with a BB step size
//! capped at `10k`. Eliminating `Y` leaves
//! `f(X) = k + ||X||^2 - 2 ||U^T X||_*`, which the driver uses for its
//! anchor and descent checks.

use std::cell::Cell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{random_assignment, row_labels, Preset};
use crate::driver::{ep4orth_solve, postprocess, InnerHook, Refinement, SolveOptions};
use crate::error::{Error, Result};
use crate::manifold::{project_oblique_plus, project_orthogonal_group};
use crate::objective::Objective;
use crate::penalty::PenaltyObjective;
use crate::rounding::{feasibility_violation, FeasiblePoint};
use crate::subsolvers::gp::bb_step;
use crate::subsolvers::InnerReport;
use crate::types::{ContractStats, Mat, PenaltyContext, PenaltyParams, SolveReport, Termination};

#[derive(Clone, Debug, PartialEq)]
pub struct KindicatorsInstance {
    pub u: Mat,
    pub labels: Option<Vec<usize>>,
}

impl KindicatorsInstance {
    pub fn new(u: Mat, labels: Option<Vec<usize>>) -> Result<Self> {
        let k = u.ncols();
        if k == 0 || k > u.nrows() {
            return Err(Error::BadShape(format!("U is {:?}", u.shape())));
        }
        let err = (u.transpose() * &u - Mat::identity(k, k)).norm();
        if !(err <= 1e-10) {
            return Err(Error::InvalidParameter(format!("U^T U deviates from I by {err:e}")));
        }
        if let Some(l) = &labels {
            if l.len() != u.nrows() {
                return Err(Error::BadLabels(format!("{} labels for {} rows", l.len(), u.nrows())));
            }
        }
        Ok(Self { u, labels })
    }
}

/// Orthonormalized noisy cluster indicators: `U = qr(H + noise * G)` with
/// `H` a 0/1 indicator and `G` standard normal.
pub fn gen_kindicators(n: usize, k: usize, noise: f64, seed: u64) -> Result<KindicatorsInstance> {
    if !(noise >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise = {noise} must be nonnegative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = random_assignment(n, k, &mut rng)?;
    let h = Mat::from_fn(n, k, |i, j| if labels[i] == j { 1.0 } else { 0.0 });
    let g = Mat::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
    let u = (h + g * noise).qr().q();
    KindicatorsInstance::new(u, Some(labels))
}

/// `f(X) = min_Y ||U Y - X||_F^2` over orthogonal `Y`.
#[derive(Clone, Debug)]
pub struct IndicatorObjective<'a> {
    pub u: &'a Mat,
}

impl IndicatorObjective<'_> {
    /// `U polar(U^T X)`.
    pub fn rotated(&self, x: &Mat) -> Mat {
        self.u * project_orthogonal_group(&(self.u.transpose() * x))
    }
}

impl Objective for IndicatorObjective<'_> {
    fn value(&self, x: &Mat) -> f64 {
        let nuclear: f64 = (self.u.transpose() * x).singular_values().sum();
        self.u.ncols() as f64 + x.norm_squared() - 2.0 * nuclear
    }

    fn gradient(&self, x: &Mat) -> Mat {
        (x - self.rotated(x)) * 2.0
    }

    /// Central differences of the gradient; only the second-order solver
    /// calls this, and the preset keeps it off.
    fn hess_apply(&self, x: &Mat, d: &Mat) -> Mat {
        let h = 1e-6 * (1.0 + x.norm()) / d.norm().max(f64::MIN_POSITIVE);
        (self.gradient(&(x + d * h)) - self.gradient(&(x - d * h))) / (2.0 * h)
    }
}

/// Worst feasibility seen along the alternating iterations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct IterateFeasibility {
    /// `max |(||x_j|| - 1)| + max(-min X, 0)`.
    pub x: f64,
    /// `||Y^T Y - I||_F`.
    pub y: f64,
}

fn oblique_violation(x: &Mat) -> f64 {
    let norms = x.column_iter().map(|c| (c.norm() - 1.0).abs()).fold(0.0, f64::max);
    norms + (-x.min()).max(0.0)
}

/// Alternating updates on `-<U Y, X>/sigma + ||X V||^2 / 2` from `x0`.
fn palm(
    u: &Mat,
    ctx: &PenaltyContext,
    sigma: f64,
    x0: &Mat,
    tol: f64,
    max_iter: usize,
    worst: &Cell<IterateFeasibility>,
) -> (Mat, usize, f64) {
    let cap = 10.0 * ctx.k() as f64;
    let record = |x: &Mat, y: &Mat| {
        let k = y.ncols();
        let mut w = worst.get();
        w.x = w.x.max(oblique_violation(x));
        w.y = w.y.max((y.transpose() * y - Mat::identity(k, k)).norm());
        worst.set(w);
    };
    let grad = |x: &Mat| -> (Mat, Mat) {
        let y = project_orthogonal_group(&(u.transpose() * x));
        let g = ctx.x_vvt(x) - u * &y / sigma;
        (y, g)
    };
    let mut x = x0.clone();
    let (y, mut g) = grad(&x);
    record(&x, &y);
    let mut alpha = 1.0;
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let x_new = project_oblique_plus(&(&x - &g * alpha)).into_mat();
        let (y_new, g_new) = grad(&x_new);
        record(&x_new, &y_new);
        let s = &x_new - &x;
        last_step = s.norm();
        alpha = bb_step(&s, &(&g_new - &g), 1e-10, cap);
        x = x_new;
        g = g_new;
        if last_step <= tol {
            break;
        }
    }
    (x, iterations, last_step)
}

#[derive(Clone, Debug, Serialize)]
pub struct KindicatorsResult {
    pub report: SolveReport,
    pub labels: Vec<usize>,
    #[serde(skip)]
    pub y: Mat,
    pub iterate_feasibility: IterateFeasibility,
}

/// Solves from `Pi(U)`; labels are the row owners of the rounded output.
pub fn kindicators_solve(inst: &KindicatorsInstance, preset: &Preset) -> Result<KindicatorsResult> {
    let u = &inst.u;
    let k = u.ncols();
    let ctx = PenaltyContext::uniform(k);
    let f = IndicatorObjective { u };
    let x0 = project_oblique_plus(u).into_mat();
    let worst = Cell::new(IterateFeasibility::default());
    let max_iter = preset.gp.max_iter;
    let hook = |params: &PenaltyParams, x: &Mat, tol: f64| -> (Mat, InnerReport) {
        let (y, iterations, last_step) = palm(u, &ctx, params.sigma, x, tol, max_iter, &worst);
        let value = PenaltyObjective::new(&f, &ctx, *params).value(&y);
        let termination = if last_step <= tol { Termination::Converged } else { Termination::MaxIter };
        (y, InnerReport { value, iterations, termination, last_step, contracts: ContractStats::default() })
    };
    let mut driver = preset.driver.clone();
    let refine = driver.postprocess;
    driver.postprocess = false;
    let opts = SolveOptions {
        feasible_hint: Some(x0.clone()),
        x0: Some(x0),
        gp: preset.gp,
        newton: preset.newton,
        inner: Some(&hook as InnerHook),
        ..SolveOptions::default()
    };
    let mut report = ep4orth_solve(&f, &ctx, &driver, &opts)?;
    if refine {
        let xr = FeasiblePoint::from_feasible(report.x.clone());
        let c = f.rotated(xr.as_mat());
        let out = postprocess(&xr, &f, &Refinement::Linear { c }, &preset.gp)?;
        report.objective = f.value(out.as_mat());
        report.feasi = feasibility_violation(out.as_mat());
        report.x = out.into_mat();
    }
    let y = project_orthogonal_group(&(u.transpose() * &report.x));
    let labels = row_labels(&report.x);
    Ok(KindicatorsResult { report, labels, y, iterate_feasibility: worst.get() })
}
