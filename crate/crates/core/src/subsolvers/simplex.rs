//! Projection onto the weighted simplex slice `{z >= 0 : x.z = 1}`.

use nalgebra::{DVector, DVectorView};

use crate::error::{Error, Result};

/// Euclidean projection of `c` onto `{z : x.z = 1, z >= 0}` for a unit,
/// nonnegative `x`.
///
/// The solution is `z_i = max(c_i - lambda x_i, 0)`, where entries with
/// `x_i = 0` are untouched by the hyperplane and reduce to `max(c_i, 0)`.
/// The multiplier is found by sorting the breakpoints `c_i / x_i`.
pub fn project_delta(x: DVectorView<'_, f64>, c: DVectorView<'_, f64>) -> Result<DVector<f64>> {
    let (z, _) = project_delta_with_multiplier(x, c)?;
    Ok(z)
}

pub(crate) fn project_delta_with_multiplier(
    x: DVectorView<'_, f64>,
    c: DVectorView<'_, f64>,
) -> Result<(DVector<f64>, f64)> {
    let n = x.len();
    debug_assert_eq!(n, c.len());
    let mut idx: Vec<usize> = (0..n).filter(|&i| x[i] > 0.0).collect();
    if idx.is_empty() {
        return Err(Error::InfeasibleSupport { col: 0 });
    }
    // descending breakpoints
    idx.sort_by(|&a, &b| (c[b] / x[b]).total_cmp(&(c[a] / x[a])));

    let mut xc = 0.0;
    let mut xx = 0.0;
    let mut lambda = f64::NAN;
    for (m, &i) in idx.iter().enumerate() {
        xc += x[i] * c[i];
        xx += x[i] * x[i];
        let cand = (xc - 1.0) / xx;
        let next = idx.get(m + 1).map(|&j| c[j] / x[j]);
        if next.is_none_or(|b| cand >= b) {
            lambda = cand;
            break;
        }
    }
    let z = DVector::from_fn(n, |i, _| {
        if x[i] > 0.0 {
            (c[i] - lambda * x[i]).max(0.0)
        } else {
            c[i].max(0.0)
        }
    });
    Ok((z, lambda))
}
