//! The outer exact-penalty loop: schedules, solver switching, anchoring
//! against a feasible point, rounding and refinement.

use std::time::Instant;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifold::{project_column_masked, project_oblique_plus};
use crate::objective::Objective;
use crate::penalty::{zeta2_raw, PenaltyObjective};
use crate::rounding::{feasibility_violation, round, FeasiblePoint};
use crate::subsolvers::gp::gp_masked;
use crate::subsolvers::{gradient_projection_solve, newton_solve, GPConfig, InnerReport, NewtonConfig};
use crate::types::{ContractStats, DriverConfig, Mat, ObliqueMatrix, OuterRecord, PenaltyContext, PenaltyParams, SolveReport, Termination};

/// Penalty weight, smoothing and inner tolerance of the current outer
/// iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltySchedule {
    pub sigma: f64,
    pub eps: f64,
    pub eps_grad: f64,
}

impl PenaltySchedule {
    pub fn start(cfg: &DriverConfig) -> Self {
        Self { sigma: cfg.sigma0, eps: cfg.eps0, eps_grad: cfg.eps_grad0 }
    }

    /// Moves to the next outer iteration given `||X^t V||_F^2`.
    pub fn advance(&mut self, cfg: &DriverConfig, xv_sq: f64) {
        self.eps *= cfg.gamma1;
        self.sigma *= cfg.sigma_growth.factor(xv_sq);
        self.eps_grad = (cfg.eta * self.eps_grad).max(cfg.eps_grad_min);
    }

    pub fn params(&self, cfg: &DriverConfig) -> PenaltyParams {
        PenaltyParams { sigma: self.sigma, p: cfg.p, q: cfg.q, eps: self.eps }
    }
}

/// Structure of `f` used by the refinement step.
#[derive(Clone, Debug, Default)]
pub enum Refinement {
    /// Skip refinement even when the config enables it.
    #[default]
    None,
    /// `f = -<C, X> + const`.
    Linear { c: Mat },
    /// `f = -tr(X^T M X) + const`, `M` symmetric nonnegative.
    Quadratic { m: Mat },
    /// `f = -tr(X^T A A^T X) + const`, with `A A^T` never formed.
    Gram { a: Mat },
    /// Gradient projection restricted to the support.
    Generic,
}

/// Builds the subproblem objective from the start point of an outer
/// iteration.
pub type Surrogate<'a> = &'a dyn Fn(&Mat) -> Box<dyn Objective + 'a>;

/// Replaces the built-in subsolvers: receives the penalty parameters, the
/// start point and the tolerance, returns a point of the oblique set.
pub type InnerHook<'a> = &'a dyn Fn(&PenaltyParams, &Mat, f64) -> (Mat, InnerReport);

/// Everything besides the objective and the schedule.
#[derive(Clone, Default)]
pub struct SolveOptions<'a> {
    /// Start point; the feasible anchor when absent.
    pub x0: Option<Mat>,
    /// Matrix rounded to obtain the feasible anchor.
    pub feasible_hint: Option<Mat>,
    pub refinement: Refinement,
    pub gp: GPConfig,
    pub newton: NewtonConfig,
    pub surrogate: Option<Surrogate<'a>>,
    pub inner: Option<InnerHook<'a>>,
}

/// `round(Pi(hint))`, or the rounding of a seeded random nonnegative matrix.
pub fn feasible_init(n: usize, k: usize, hint: Option<&Mat>, seed: u64) -> Result<FeasiblePoint> {
    if k == 0 || k > n {
        return Err(Error::BadShape(format!("need 1 <= k <= n, got n={n}, k={k}")));
    }
    let base = match hint {
        Some(h) => {
            if h.shape() != (n, k) {
                return Err(Error::DimensionMismatch(format!("hint is {:?}, expected ({n}, {k})", h.shape())));
            }
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("hint".into()));
            }
            h.clone()
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Mat::from_fn(n, k, |_, _| rng.random::<f64>())
        }
    };
    Ok(round(&project_oblique_plus(&base)))
}

/// Refines a rounded point on its own support; keeps `xr` unless `f`
/// strictly improves.
pub fn postprocess<F: Objective + ?Sized>(
    xr: &FeasiblePoint,
    f: &F,
    kind: &Refinement,
    gp: &GPConfig,
) -> Result<FeasiblePoint> {
    let (n, k) = xr.as_mat().shape();
    let sign = xr.sign();
    let support = |j: usize| -> Result<Vec<usize>> {
        let rows: Vec<usize> = (0..n).filter(|&i| sign[(i, j)] > 0.0).collect();
        if rows.is_empty() {
            Err(Error::EmptyColumnSupport { col: j })
        } else {
            Ok(rows)
        }
    };
    let candidate = match kind {
        Refinement::None => return Ok(xr.clone()),
        Refinement::Linear { c } => {
            check_shape(c, n, k)?;
            let mut out = Mat::zeros(n, k);
            let mut mask = vec![false; n];
            for j in 0..k {
                support(j)?;
                for (i, m) in mask.iter_mut().enumerate() {
                    *m = sign[(i, j)] > 0.0;
                }
                let col = project_column_masked(c.column(j), Some(&mask)).ok_or(Error::EmptyColumnSupport { col: j })?;
                out.set_column(j, &col);
            }
            out
        }
        Refinement::Quadratic { m } => {
            if m.shape() != (n, n) {
                return Err(Error::DimensionMismatch(format!("M is {:?}, expected ({n}, {n})", m.shape())));
            }
            column_wise(n, k, &support, |rows| {
                let sub = Mat::from_fn(rows.len(), rows.len(), |a, b| m[(rows[a], rows[b])]);
                dominant_eigenvector(sub)
            })?
        }
        Refinement::Gram { a } => {
            if a.nrows() != n {
                return Err(Error::DimensionMismatch(format!("A has {} rows, expected {n}", a.nrows())));
            }
            column_wise(n, k, &support, |rows| {
                let sub = a.select_rows(rows);
                // top left singular vector of A_S via the smaller Gram matrix
                if rows.len() <= sub.ncols() {
                    dominant_eigenvector(&sub * sub.transpose())
                } else {
                    let w = dominant_eigenvector(sub.transpose() * &sub);
                    let u = &sub * w;
                    let nu = u.norm();
                    if nu > 0.0 {
                        u / nu
                    } else {
                        nalgebra::DVector::from_element(rows.len(), 1.0 / (rows.len() as f64).sqrt())
                    }
                }
            })?
        }
        Refinement::Generic => gp_masked(f, xr.as_mat(), Some(sign), gp).0,
    };
    // clean up negatives and round-off so the candidate is feasible
    let candidate = clamp_to_support(candidate, sign);
    if f.value(&candidate) < f.value(xr.as_mat()) {
        Ok(FeasiblePoint::from_feasible(candidate))
    } else {
        Ok(xr.clone())
    }
}

fn check_shape(c: &Mat, n: usize, k: usize) -> Result<()> {
    if c.shape() != (n, k) {
        return Err(Error::DimensionMismatch(format!("coefficient is {:?}, expected ({n}, {k})", c.shape())));
    }
    Ok(())
}

fn column_wise(
    n: usize,
    k: usize,
    support: &dyn Fn(usize) -> Result<Vec<usize>>,
    solve: impl Fn(&[usize]) -> nalgebra::DVector<f64>,
) -> Result<Mat> {
    let mut out = Mat::zeros(n, k);
    for j in 0..k {
        let rows = support(j)?;
        let v = solve(&rows);
        for (a, &i) in rows.iter().enumerate() {
            out[(i, j)] = v[a].abs();
        }
    }
    Ok(out)
}

/// Unit eigenvector of the largest eigenvalue of a symmetric matrix.
fn dominant_eigenvector(m: Mat) -> nalgebra::DVector<f64> {
    let eig = SymmetricEigen::new(m);
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    eig.eigenvectors.column(best).into_owned()
}

fn clamp_to_support(mut x: Mat, sign: &Mat) -> Mat {
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            if sign[(i, j)] == 0.0 || x[(i, j)] < 0.0 {
                x[(i, j)] = 0.0;
            }
        }
        let nrm = x.column(j).norm();
        if nrm > 0.0 {
            x.column_mut(j).scale_mut(1.0 / nrm);
        }
    }
    x
}

/// Runs the exact penalty method on `min f(X)` over the nonnegative Stiefel
/// set.
pub fn ep4orth_solve<F: Objective + ?Sized>(
    f: &F,
    ctx: &PenaltyContext,
    cfg: &DriverConfig,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let started = Instant::now();
    cfg.validate()?;
    let k = ctx.k();
    let n = match (&opts.x0, &opts.feasible_hint) {
        (Some(x), _) | (None, Some(x)) => x.nrows(),
        (None, None) => return Err(Error::InvalidParameter("either x0 or a feasible hint is required".into())),
    };
    let feasible = feasible_init(n, k, opts.feasible_hint.as_ref(), cfg.rng_seed)?;
    let mut x = match &opts.x0 {
        Some(x0) => {
            if x0.shape() != (n, k) {
                return Err(Error::DimensionMismatch(format!("x0 is {:?}, expected ({n}, {k})", x0.shape())));
            }
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("x0".into()));
            }
            project_oblique_plus(x0).into_mat()
        }
        None => feasible.as_mat().clone(),
    };

    let mut schedule = PenaltySchedule::start(cfg);
    schedule.params(cfg).validate()?;
    let mut trace = Vec::new();
    let mut inner_iterations = Vec::new();
    let mut contracts = ContractStats::default();
    let mut termination = Termination::MaxOuter;
    let mut zeta = zeta2_raw(&x, ctx);
    let mut kkt = f64::INFINITY;

    for _ in 0..cfg.t_max {
        let params = schedule.params(cfg);
        // anchor on the objective the subproblem actually minimizes
        let mut surrogate = opts.surrogate.map(|build| build(&x));
        let anchor_f: &dyn Objective = match &surrogate {
            Some(s) => s.as_ref(),
            None => &f,
        };
        let anchor_h = PenaltyObjective::new(anchor_f, ctx, params);
        let p_feasible = anchor_h.value(feasible.as_mat());
        let above_anchor = anchor_h.value(&x) > p_feasible;
        if above_anchor {
            contracts.anchor_violations += 1;
        }
        let anchored = above_anchor && cfg.restart_at_anchor;
        if anchored {
            x = feasible.as_mat().clone();
            surrogate = opts.surrogate.map(|build| build(&x));
        }
        let sub_f: &dyn Objective = match &surrogate {
            Some(s) => s.as_ref(),
            None => &f,
        };
        let h = PenaltyObjective::new(sub_f, ctx, params);
        let h_start = h.value(&x);
        let start_zeta = zeta2_raw(&x, ctx);
        let second_order = opts.inner.is_none() && cfg.zeta_switch > 0.0 && start_zeta <= cfg.zeta_switch;

        let (mut y, report) = if let Some(hook) = opts.inner {
            hook(&params, &x, schedule.eps_grad)
        } else {
            let x0 = ObliqueMatrix::from_projection(x.clone());
            let (y, r) = if second_order {
                newton_solve(&h, &x0, &NewtonConfig { tol: schedule.eps_grad, ..opts.newton })
            } else {
                gradient_projection_solve(&h, &x0, &GPConfig { tol: schedule.eps_grad, ..opts.gp })
            };
            (y.into_mat(), r)
        };
        contracts.merge(&report.contracts);
        let mut h_end = h.value(&y);
        if !h_end.is_finite() {
            return Err(Error::NonFiniteObjective);
        }
        if h_end > h_start {
            contracts.descent_violations += 1;
            y = x.clone();
            h_end = h_start;
        }
        x = y;
        zeta = zeta2_raw(&x, ctx);
        kkt = h.kkt(&x);
        inner_iterations.push(report.iterations);
        trace.push(OuterRecord {
            sigma: schedule.sigma,
            eps: schedule.eps,
            eps_grad: schedule.eps_grad,
            second_order,
            anchored,
            penalty_start: h_start,
            penalty_end: h_end,
            penalty_feasible: p_feasible,
            zeta,
            kkt,
            inner_iterations: report.iterations,
        });
        if zeta <= cfg.tol_feas {
            termination = Termination::FeasibilityTol;
            break;
        }
        schedule.advance(cfg, zeta + 1.0);
    }

    let rounded = round(&ObliqueMatrix::from_projection(x));
    let out = if cfg.postprocess { postprocess(&rounded, f, &opts.refinement, &opts.gp)? } else { rounded };
    let objective = f.value(out.as_mat());
    Ok(SolveReport {
        feasi: feasibility_violation(out.as_mat()),
        x: out.into_mat(),
        objective,
        zeta,
        kkt,
        outer_iterations: trace.len(),
        inner_iterations,
        seconds: started.elapsed().as_secs_f64(),
        termination,
        contracts,
        trace,
    })
}
