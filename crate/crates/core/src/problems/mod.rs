//! Application objectives, instance generators, presets and metrics.

pub mod kindicators;
pub mod metrics;
pub mod onmf;
pub mod projection;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subsolvers::{GPConfig, NewtonConfig, StepRule};
use crate::types::{DriverConfig, Mat, SigmaGrowth};

/// Solver settings for one application.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub driver: DriverConfig,
    pub gp: GPConfig,
    pub newton: NewtonConfig,
}

impl Preset {
    pub const NAMES: [&'static str; 4] = ["projection", "onmf", "hyperspectral", "kindicators"];

    /// Fixed step `0.99/L` gradient projection only.
    pub fn projection() -> Self {
        Self {
            name: "projection".into(),
            driver: DriverConfig {
                sigma0: 1e-2,
                sigma_growth: SigmaGrowth::Constant { factor: 5.0 },
                eta: 0.8,
                tol_feas: 1e-8,
                zeta_switch: 0.0,
                restart_at_anchor: false,
                ..DriverConfig::default()
            },
            gp: GPConfig { step: StepRule::Fixed { scale: 0.99 }, ..GPConfig::default() },
            newton: NewtonConfig::default(),
        }
    }

    pub fn onmf() -> Self {
        Self {
            name: "onmf".into(),
            driver: DriverConfig {
                sigma0: 1e-3,
                sigma_growth: SigmaGrowth::ByInfeasibility { scale: 1.0, high: 1.05, low: 1.03, threshold: 2.0 },
                eta: 0.98,
                tol_feas: 1e-8,
                zeta_switch: 5.0,
                ..DriverConfig::default()
            },
            gp: GPConfig::default(),
            newton: NewtonConfig::default(),
        }
    }

    pub fn hyperspectral() -> Self {
        let mut p = Self::onmf();
        p.name = "hyperspectral".into();
        p.driver.tol_feas = 0.3;
        p.driver.zeta_switch = 0.6;
        p.driver.sigma_growth = SigmaGrowth::ByInfeasibility { scale: 1.1, high: 1.05, low: 1.03, threshold: 2.0 };
        p
    }

    pub fn kindicators() -> Self {
        Self {
            name: "kindicators".into(),
            driver: DriverConfig {
                sigma0: 10.0,
                sigma_growth: SigmaGrowth::Constant { factor: 10.0 },
                eta: 0.5,
                tol_feas: 0.1,
                zeta_switch: 0.0,
                ..DriverConfig::default()
            },
            gp: GPConfig::default(),
            newton: NewtonConfig::default(),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "projection" => Ok(Self::projection()),
            "onmf" => Ok(Self::onmf()),
            "hyperspectral" => Ok(Self::hyperspectral()),
            "kindicators" => Ok(Self::kindicators()),
            other => Err(Error::InvalidParameter(format!(
                "unknown preset '{other}', expected one of {}",
                Self::NAMES.join(", ")
            ))),
        }
    }
}

/// Random point of the nonnegative Stiefel set: every row goes to one
/// column chosen uniformly (redrawn until no column is empty), magnitudes
/// are uniform on `[0, 1)`, columns are normalized.
pub fn random_stiefel_plus<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Mat> {
    let owner = random_assignment(n, k, rng)?;
    let mut b = Mat::zeros(n, k);
    for (i, &j) in owner.iter().enumerate() {
        // keep entries strictly positive so the pattern is exact
        b[(i, j)] = rng.random::<f64>().max(f64::MIN_POSITIVE);
    }
    for mut col in b.column_iter_mut() {
        let nrm = col.norm();
        col /= nrm;
    }
    Ok(b)
}

/// Uniform row-to-column assignment with no empty column.
pub(crate) fn random_assignment<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::BadShape(format!("need 1 <= k <= n, got n={n}, k={k}")));
    }
    loop {
        let owner: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut seen = vec![false; k];
        for &j in &owner {
            seen[j] = true;
        }
        if seen.iter().all(|s| *s) {
            return Ok(owner);
        }
    }
}

/// Row-wise argmax (smallest index on ties).
pub fn row_labels(x: &Mat) -> Vec<usize> {
    x.row_iter()
        .map(|row| {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
