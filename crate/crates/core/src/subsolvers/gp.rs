//! Gradient projection `X+ = Pi(X - alpha grad h(X))` with Barzilai-Borwein
//! steps and a nonmonotone max-type line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::InnerReport;
use crate::manifold::project_column_masked;
use crate::objective::Objective;
use crate::types::{ContractStats, Mat, ObliqueMatrix, Termination};

/// Step-size rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepRule {
    /// BB steps safeguarded by the nonmonotone line search.
    Bb,
    /// `alpha = scale / L` with `L` the objective's Lipschitz bound; monotone.
    /// Falls back to BB when no bound is available.
    Fixed { scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GPConfig {
    pub step: StepRule,
    pub bb_floor: f64,
    pub bb_cap: f64,
    pub initial_step: f64,
    pub window: usize,
    pub delta: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for GPConfig {
    fn default() -> Self {
        Self {
            step: StepRule::Bb,
            bb_floor: 1e-10,
            bb_cap: 1e10,
            initial_step: 1.0,
            window: 10,
            delta: 1e-4,
            backtrack: 0.5,
            max_backtracks: 20,
            max_iter: 5000,
            tol: 1e-8,
        }
    }
}

/// `<S,S>/|<S,Z>|` clipped to `[floor, cap]`; `cap` when `<S,Z> = 0`.
pub fn bb_step(s: &Mat, z: &Mat, floor: f64, cap: f64) -> f64 {
    let sz = s.dot(z).abs();
    if sz == 0.0 {
        return cap;
    }
    (s.norm_squared() / sz).clamp(floor, cap)
}

/// Column-wise projection onto the oblique set, optionally restricted to a
/// 0/1 support mask.
pub(crate) fn project_masked(c: &Mat, mask: Option<&Mat>) -> Mat {
    let (n, k) = c.shape();
    let mut out = Mat::zeros(n, k);
    let mut keep = vec![true; n];
    for j in 0..k {
        if let Some(m) = mask {
            for (i, flag) in keep.iter_mut().enumerate() {
                *flag = m[(i, j)] > 0.0;
            }
        }
        let col = project_column_masked(c.column(j), mask.map(|_| keep.as_slice())).expect("nonempty support");
        out.set_column(j, &col);
    }
    out
}

/// Runs gradient projection from `x0`.
///
/// The returned point never has a larger objective than `x0`.
pub fn gradient_projection_solve<F: Objective + ?Sized>(
    h: &F,
    x0: &ObliqueMatrix,
    cfg: &GPConfig,
) -> (ObliqueMatrix, InnerReport) {
    let (x, report) = gp_masked(h, x0.as_mat(), None, cfg);
    (ObliqueMatrix::from_projection(x), report)
}

/// Gradient projection over the oblique columns supported on `mask`.
pub(crate) fn gp_masked<F: Objective + ?Sized>(
    h: &F,
    x0: &Mat,
    mask: Option<&Mat>,
    cfg: &GPConfig,
) -> (Mat, InnerReport) {
    let fixed = match cfg.step {
        StepRule::Fixed { scale } => h.lipschitz().filter(|l| *l > 0.0).map(|l| scale / l),
        StepRule::Bb => None,
    };
    let h0 = h.value(x0);
    let mut x = x0.clone();
    let mut hx = h0;
    let mut g = h.gradient(&x);
    let mut alpha = fixed.unwrap_or(cfg.initial_step);
    let mut history: VecDeque<f64> = VecDeque::with_capacity(cfg.window + 1);
    history.push_back(hx);
    let mut termination = Termination::MaxIter;
    let mut iterations = 0;
    let mut last_step = f64::INFINITY;

    for _ in 0..cfg.max_iter {
        iterations += 1;
        let (y, hy) = if fixed.is_some() {
            let y = project_masked(&(&x - &g * alpha), mask);
            let hy = h.value(&y);
            (y, hy)
        } else {
            let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut a = alpha;
            let mut found = None;
            for _ in 0..=cfg.max_backtracks {
                let y = project_masked(&(&x - &g * a), mask);
                let hy = h.value(&y);
                let dist2 = (&y - &x).norm_squared();
                if hy <= reference - cfg.delta * dist2 / (2.0 * a) {
                    found = Some((y, hy));
                    break;
                }
                a *= cfg.backtrack;
            }
            match found {
                Some(pair) => pair,
                None => {
                    termination = Termination::LineSearchFailure;
                    break;
                }
            }
        };
        let s = &y - &x;
        last_step = s.norm();
        let gy = h.gradient(&y);
        if fixed.is_none() {
            alpha = bb_step(&s, &(&gy - &g), cfg.bb_floor, cfg.bb_cap);
        }
        x = y;
        hx = hy;
        g = gy;
        history.push_back(hx);
        if history.len() > cfg.window {
            history.pop_front();
        }
        if last_step <= cfg.tol {
            termination = Termination::Converged;
            break;
        }
    }
    if !(hx <= h0) {
        x = x0.clone();
        hx = h0;
    }
    let report = InnerReport { value: hx, iterations, termination, last_step, contracts: ContractStats::default() };
    (x, report)
}
