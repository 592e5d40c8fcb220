//! Projection onto the nonnegative Stiefel set, with generated instances
//! whose projection is known.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{random_stiefel_plus, Preset};
use crate::driver::{ep4orth_solve, Refinement, SolveOptions};
use crate::error::{Error, Result};
use crate::manifold::project_column_masked;
use crate::objective::Linear;
use crate::types::{Mat, PenaltyContext, SolveReport};

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionInstance {
    pub c: Mat,
    pub x_star: Option<Mat>,
    pub xi: Option<f64>,
}

/// Builds `C = X* L^T` with `L_ii = d_i`, `L_ij = xi sqrt(d_i d_j) u_ij`.
/// For `xi < 1` the projection of `C` is exactly `X*`.
pub fn gen_projection(n: usize, k: usize, xi: f64, seed: u64) -> Result<ProjectionInstance> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::InvalidParameter(format!("xi = {xi} must lie in [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = random_stiefel_plus(n, k, &mut rng)?;
    let mut x = b.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    for v in x.iter_mut() {
        if *v > 0.0 {
            *v += rng.random::<f64>();
        }
    }
    for mut col in x.column_iter_mut() {
        let nrm = col.norm();
        col /= nrm;
    }
    let d: Vec<f64> = (0..k).map(|_| 0.5 + 3.0 * rng.random::<f64>()).collect();
    let mut l = Mat::from_fn(k, k, |i, j| xi * (d[i] * d[j]).sqrt() * rng.random::<f64>());
    for (i, di) in d.iter().enumerate() {
        l[(i, i)] = *di;
    }
    let c = &x * l.transpose();
    Ok(ProjectionInstance { c, x_star: Some(x), xi: Some(xi) })
}

/// `||X - C||_F^2`, written as `k + ||C||^2 - 2 <C, X>` on the oblique set.
pub fn projection_objective(c: &Mat) -> Linear {
    Linear { coef: c * -2.0, offset: c.ncols() as f64 + c.norm_squared() }
}

/// `||X_out - C|| / ||X* - C|| - 1`.
pub fn gap(x_out: &Mat, x_star: &Mat, c: &Mat) -> f64 {
    let best = (x_star - c).norm();
    let got = (x_out - c).norm();
    if best == 0.0 {
        return if got == 0.0 { 0.0 } else { f64::INFINITY };
    }
    got / best - 1.0
}

/// Runs the exact penalty method from the rounding of `C`.
pub fn projection_solve(c: &Mat, preset: &Preset) -> Result<SolveReport> {
    let ctx = PenaltyContext::uniform(c.ncols());
    let f = projection_objective(c);
    let opts = SolveOptions {
        x0: None,
        feasible_hint: Some(c.clone()),
        refinement: Refinement::Linear { c: c.clone() },
        gp: preset.gp,
        newton: preset.newton,
        ..SolveOptions::default()
    };
    ep4orth_solve(&f, &ctx, &preset.driver, &opts)
}

/// Best point on a fixed row-to-column pattern (`None` marks a zero row):
/// each column is the normalized positive part of `C` on its rows.
/// Returns `None` if some column is empty.
pub fn best_on_pattern(c: &Mat, owner: &[Option<usize>]) -> Option<Mat> {
    let (n, k) = c.shape();
    let mut x = Mat::zeros(n, k);
    for j in 0..k {
        let mask: Vec<bool> = owner.iter().map(|o| *o == Some(j)).collect();
        if !mask.iter().any(|m| *m) {
            return None;
        }
        x.set_column(j, &project_column_masked(c.column(j), Some(&mask))?);
    }
    Some(x)
}

/// Exhaustive projection for tiny instances: enumerates all `(k+1)^n`
/// patterns. Returns the maximizer of `<C, X>` and how many patterns attain
/// the maximum within `tol`.
pub fn exhaustive_projection(c: &Mat, tol: f64) -> Result<(Mat, usize)> {
    let (n, k) = c.shape();
    let total = (k as u64 + 1).checked_pow(n as u32).filter(|t| *t <= 1 << 22);
    let Some(total) = total else {
        return Err(Error::BadShape(format!("{n}x{k} is too large to enumerate")));
    };
    let mut candidates: Vec<(f64, Mat)> = Vec::new();
    for code in 0..total {
        let mut rest = code;
        let owner: Vec<Option<usize>> = (0..n)
            .map(|_| {
                let digit = (rest % (k as u64 + 1)) as usize;
                rest /= k as u64 + 1;
                digit.checked_sub(1)
            })
            .collect();
        if let Some(x) = best_on_pattern(c, &owner) {
            candidates.push((c.dot(&x), x));
        }
    }
    let best = candidates.iter().map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
    // distinct maximizers: patterns that differ only in zero entries give
    // the same matrix
    let mut winners: Vec<&Mat> = Vec::new();
    for (v, x) in &candidates {
        if *v >= best - tol && !winners.iter().any(|w| (*w - x).norm() <= tol) {
            winners.push(x);
        }
    }
    Ok((winners[0].clone(), winners.len()))
}
