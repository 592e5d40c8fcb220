//! Adaptive quadratically regularized Newton method on the nonnegative
//! oblique set.
//!
//! Each iteration builds the model
//! `m(Y) = <G, Y - X> + <Y - X, H[Y - X]>/2 + tau ||Y - X||^2 / 2`
//! from the Euclidean gradient `G` and Hessian `H`, computes a direction
//! from the tangent-set QP, and accepts the projected trial point by the
//! ratio of actual to predicted decrease.

use serde::{Deserialize, Serialize};

use super::ssn::{solve_qp_subproblem, QuadraticModel, SsnConfig};
use super::InnerReport;
use crate::manifold::{project_oblique_plus, project_tangent_unchecked, rgrad_unchecked};
use crate::objective::Objective;
use crate::types::{ContractStats, Mat, ObliqueMatrix, Termination};

/// Past this value the curvature estimate is considered exhausted.
pub const KAPPA_CAP: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    pub eta1: f64,
    pub eta2: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub tau0: f64,
    pub c1: f64,
    pub c2: f64,
    pub kappa_hat: f64,
    pub max_iter: usize,
    /// Bound on `||X - max(X - grad h, 0)||_F`, and on the step length.
    pub tol: f64,
    /// Regularization raises allowed per iteration for the angle test.
    pub max_tau_raises: usize,
    pub ssn: SsnConfig,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            eta1: 0.01,
            eta2: 0.9,
            beta0: 0.98,
            beta1: 1.0,
            beta2: 1.3,
            tau0: 1e-3,
            c1: 0.1,
            c2: 0.5,
            kappa_hat: 10.0,
            max_iter: 500,
            tol: 1e-8,
            max_tau_raises: 10,
            ssn: SsnConfig::default(),
        }
    }
}

impl NewtonConfig {
    /// Constant `a = 2 c1^2 c2 (1 - c2)` of the sufficient-decrease bound.
    pub fn decrease_constant(&self) -> f64 {
        2.0 * self.c1 * self.c1 * self.c2 * (1.0 - self.c2)
    }

    /// Next regularization from the acceptance ratio.
    pub fn update_tau(&self, tau: f64, rho: f64) -> f64 {
        if rho >= self.eta2 {
            self.beta0 * tau
        } else if rho >= self.eta1 {
            self.beta1 * tau
        } else {
            self.beta2 * tau
        }
    }
}

/// Distance to stationarity `||X - max(X - grad h, 0)||_F`.
pub(crate) fn stationarity_residual(x: &Mat, rgrad: &Mat) -> f64 {
    x.zip_map(rgrad, |a, g| a - (a - g).max(0.0)).norm()
}

/// Runs the regularized Newton method from `x0`.
pub fn newton_solve<F: Objective + ?Sized>(h: &F, x0: &ObliqueMatrix, cfg: &NewtonConfig) -> (ObliqueMatrix, InnerReport) {
    let a = cfg.decrease_constant();
    let mut x = x0.as_mat().clone();
    let mut hx = h.value(&x);
    let mut eg = h.gradient(&x);
    let mut rg = rgrad_unchecked(&x, &eg);
    let mut tau = cfg.tau0;
    let mut kappa = cfg.kappa_hat;
    let mut stats = ContractStats::default();
    let mut termination = Termination::MaxIter;
    let mut iterations = 0;
    let mut last_step = f64::INFINITY;

    while iterations < cfg.max_iter {
        if stationarity_residual(&x, &rg) <= cfg.tol {
            termination = Termination::Converged;
            break;
        }
        let pt = project_tangent_unchecked(&x, &-&rg);
        let pt_norm = pt.norm();
        if pt_norm == 0.0 {
            termination = Termination::Converged;
            break;
        }
        iterations += 1;

        // direction from the QP, raising tau until the angle test passes
        let weingarten: Vec<f64> = (0..x.ncols()).map(|j| x.column(j).dot(&eg.column(j))).collect();
        let mut direction = None;
        for _ in 0..=cfg.max_tau_raises {
            let t = tau;
            let hess = |d: &Mat| {
                let mut out = h.hess_apply(&x, d);
                for (j, w) in weingarten.iter().enumerate() {
                    out.column_mut(j).axpy(t - w, &d.column(j), 1.0);
                }
                out
            };
            let model = QuadraticModel { base: &x, grad: rg.clone(), hess: &hess };
            let sol = solve_qp_subproblem(&model, 1.0 / (kappa + tau), &cfg.ssn);
            let d = sol.direction;
            let dn = d.norm();
            if dn > 0.0 && rg.dot(&d) <= -cfg.c1 * pt_norm * dn {
                direction = Some(d);
                break;
            }
            tau *= cfg.beta2;
        }
        let d = direction.unwrap_or_else(|| {
            stats.direction_fallbacks += 1;
            pt.clone()
        });
        let d_norm = d.norm();

        let model_value = |y: &Mat| {
            let s = y - &x;
            eg.dot(&s) + 0.5 * s.dot(&h.hess_apply(&x, &s)) + 0.5 * tau * s.norm_squared()
        };
        let full = project_oblique_plus(&(&x + &d)).into_mat();
        let m_full = model_value(&full);
        let (y, m_y) = loop {
            let step = 2.0 * cfg.c1 * (1.0 - cfg.c2) * pt_norm / ((kappa + tau) * d_norm);
            let short = project_oblique_plus(&(&x + &d * step)).into_mat();
            let m_short = model_value(&short);
            let (y, m_y) = if m_full <= m_short { (full.clone(), m_full) } else { (short, m_short) };
            if m_y <= -a / (kappa + tau) * pt_norm * pt_norm {
                break (y, m_y);
            }
            if kappa > KAPPA_CAP {
                stats.curvature_exhausted += 1;
                break (y, m_y);
            }
            kappa *= 2.0;
            stats.kappa_raises += 1;
        };

        let hy = h.value(&y);
        let rho = if m_y < 0.0 { (hy - hx) / m_y } else { f64::NEG_INFINITY };
        if rho >= cfg.eta1 {
            stats.accepted_trials += 1;
            if m_y > -a / (kappa + tau) * pt_norm * pt_norm {
                stats.trial_decrease_violations += 1;
            }
            last_step = (&y - &x).norm();
            x = y;
            hx = hy;
            eg = h.gradient(&x);
            rg = rgrad_unchecked(&x, &eg);
        }
        tau = cfg.update_tau(tau, rho);
        if rho >= cfg.eta1 && last_step <= cfg.tol {
            termination = Termination::Converged;
            break;
        }
    }
    let report = InnerReport { value: hx, iterations, termination, last_step, contracts: stats };
    (ObliqueMatrix::from_projection(x), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{HalfSquaredDistance, NegQuadraticForm};
    use crate::penalty::PenaltyObjective;
    use crate::subsolvers::gp::{gradient_projection_solve, GPConfig};
    use crate::types::{PenaltyContext, PenaltyParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ratio_rule() {
        let cfg = NewtonConfig::default();
        let rho = -0.95 / -1.0;
        assert!(rho >= cfg.eta2);
        assert!((cfg.update_tau(1.0, rho) - 0.98).abs() < 1e-15);
        assert_eq!(cfg.update_tau(1.0, 0.5), 1.0);
        assert_eq!(cfg.update_tau(1.0, 0.0), 1.3);
        assert!((cfg.decrease_constant() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn projected_gradient_passes_angle_test_with_unit_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let x = project_oblique_plus(&Mat::from_fn(6, 3, |_, _| {
                if rng.random::<f64>() < 0.4 { 0.0 } else { rng.random::<f64>() }
            }))
            .into_mat();
            let rg = rgrad_unchecked(&x, &Mat::from_fn(6, 3, |_, _| rng.random::<f64>() - 0.5));
            let pt = project_tangent_unchecked(&x, &-&rg);
            // <grad, P> <= -||P||^2 since P is the projection of -grad onto a
            // convex set containing 0
            assert!(rg.dot(&pt) <= -pt.norm_squared() + 1e-12);
        }
    }

    #[test]
    fn superlinear_on_interior_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (n, k) = (20, 3);
        let target = project_oblique_plus(&Mat::from_fn(n, k, |_, _| 0.2 + rng.random::<f64>())).into_mat();
        let h = HalfSquaredDistance { target: target.clone() };
        let x0 = project_oblique_plus(&(&target + Mat::from_fn(n, k, |_, _| 0.3 * rng.random::<f64>())));
        let cfg = NewtonConfig { tol: 1e-10, ..NewtonConfig::default() };
        let (x, rep) = newton_solve(&h, &x0, &cfg);
        assert!(rep.iterations <= 10, "{rep:?}");
        let rg = rgrad_unchecked(x.as_mat(), &h.gradient(x.as_mat()));
        assert!(stationarity_residual(x.as_mat(), &rg) <= 1e-10);
        // gradient projection lands on the same point
        let (y, _) = gradient_projection_solve(&h, &x0, &GPConfig { tol: 1e-13, ..GPConfig::default() });
        assert!((x.as_mat() - y.as_mat()).norm() < 1e-8);
    }

    #[test]
    fn accepted_trials_meet_decrease_bound_on_penalty_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let (n, k) = (12, 3);
            let a = Mat::from_fn(n, n, |_, _| rng.random::<f64>());
            let f = NegQuadraticForm { m: &a * a.transpose() / n as f64 };
            let ctx = PenaltyContext::uniform(k);
            let h = PenaltyObjective::new(&f, &ctx, PenaltyParams::default().with_sigma(5.0));
            let x0 = project_oblique_plus(&Mat::from_fn(n, k, |_, _| rng.random::<f64>()));
            let (x, rep) = newton_solve(&h, &x0, &NewtonConfig { max_iter: 100, ..NewtonConfig::default() });
            assert_eq!(rep.contracts.trial_decrease_violations, 0);
            assert!(rep.contracts.accepted_trials > 0);
            assert!(h.value(x.as_mat()) <= h.value(x0.as_mat()));
        }
    }
}
