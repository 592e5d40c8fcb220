//! Domain types shared by the manifold kernels, the penalty model and the
//! solvers.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense column-major real matrix used throughout the crate.
pub type Mat = DMatrix<f64>;

/// Tolerance on column norms accepted by [`ObliqueMatrix::new`].
pub const UNIT_TOL: f64 = 1e-12;

/// Default threshold below which an entry counts as zero when classifying
/// supports.
pub const ZERO_TOL: f64 = 1e-10;

/// A point of the nonnegative oblique set: an `n x k` matrix with
/// nonnegative entries and unit-norm columns.
///
/// Construction validates and never repairs; use
/// [`crate::manifold::project_oblique_plus`] to map an arbitrary matrix onto
/// the set.
#[derive(Clone, Debug, PartialEq)]
pub struct ObliqueMatrix {
    data: Mat,
}

impl ObliqueMatrix {
    pub fn new(data: Mat) -> Result<Self> {
        let (n, k) = data.shape();
        if k == 0 || n < k {
            return Err(Error::BadShape(format!("need n >= k >= 1, got {n}x{k}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries".into()));
        }
        for j in 0..k {
            for i in 0..n {
                let v = data[(i, j)];
                if v < 0.0 {
                    return Err(Error::NegativeEntry { row: i, col: j, value: v });
                }
            }
            let norm = data.column(j).norm();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::NonUnitColumn { col: j, norm });
            }
        }
        Ok(Self { data })
    }

    /// Wraps a matrix the caller has produced by a projection onto the set.
    pub(crate) fn from_projection(data: Mat) -> Self {
        debug_assert!(data.iter().all(|v| *v >= 0.0));
        Self { data }
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn k(&self) -> usize {
        self.data.ncols()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.data
    }

    pub fn into_mat(self) -> Mat {
        self.data
    }
}

impl AsRef<Mat> for ObliqueMatrix {
    fn as_ref(&self) -> &Mat {
        &self.data
    }
}

/// `I_{n,k}`: the first `k` columns of the `n x n` identity.
pub fn identity_nk(n: usize, k: usize) -> Mat {
    Mat::from_fn(n, k, |i, j| if i == j { 1.0 } else { 0.0 })
}

/// The constant matrix `V` of the penalty together with the cached products
/// every derivative needs.
#[derive(Clone, Debug)]
pub struct PenaltyContext {
    v: Mat,
    vvt: Mat,
    omega_min: f64,
    omega_max: f64,
    lambda_max: f64,
    uniform: bool,
}

impl PenaltyContext {
    /// Builds a context from an explicit `k x r` matrix `V` with unit
    /// Frobenius norm and an entrywise positive `VV^T`.
    pub fn new(v: Mat) -> Result<Self> {
        let (k, r) = v.shape();
        if k == 0 || r == 0 || r > k {
            return Err(Error::BadShape(format!("V must be k x r with 1 <= r <= k, got {k}x{r}")));
        }
        let fro = v.norm();
        if (fro - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("||V||_F = {fro}, expected 1")));
        }
        let vvt = &v * v.transpose();
        let omega_min = vvt.min();
        let omega_max = vvt.max();
        if omega_min <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "min entry of VV^T is {omega_min}, must be positive"
            )));
        }
        let lambda_max = vvt.clone().symmetric_eigenvalues().max();
        let uniform = r == 1 && (omega_max - omega_min) <= 1e-15 * omega_max.max(1.0);
        Ok(Self { v, vvt, omega_min, omega_max, lambda_max, uniform })
    }

    /// `V = e / sqrt(k)`, for which `VV^T` is the all-ones matrix over `k`.
    pub fn uniform(k: usize) -> Self {
        assert!(k >= 1, "k must be positive");
        let v = Mat::from_element(k, 1, 1.0 / (k as f64).sqrt());
        let w = 1.0 / k as f64;
        Self {
            v,
            vvt: Mat::from_element(k, k, w),
            omega_min: w,
            omega_max: w,
            lambda_max: 1.0,
            uniform: true,
        }
    }

    pub fn k(&self) -> usize {
        self.v.nrows()
    }

    pub fn v(&self) -> &Mat {
        &self.v
    }

    pub fn vvt(&self) -> &Mat {
        &self.vvt
    }

    pub fn omega_min(&self) -> f64 {
        self.omega_min
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    /// Largest eigenvalue of `VV^T`, the Lipschitz modulus of `X -> X VV^T`.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// `X VV^T`, using the rank-one row-sum form when `V = e/sqrt(k)`.
    pub fn x_vvt(&self, x: &Mat) -> Mat {
        if self.uniform {
            let k = x.ncols();
            let w = 1.0 / k as f64;
            let mut out = Mat::zeros(x.nrows(), k);
            for i in 0..x.nrows() {
                let s = x.row(i).sum() * w;
                out.row_mut(i).fill(s);
            }
            out
        } else {
            x * &self.vvt
        }
    }
}

/// Parameters `(sigma, p, q, eps)` of the penalty `f + sigma (zeta_q + eps)^p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub sigma: f64,
    pub p: f64,
    pub q: f64,
    pub eps: f64,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        Self { sigma: 1.0, p: 1.0, q: 2.0, eps: 0.0 }
    }
}

impl PenaltyParams {
    pub fn new(sigma: f64, p: f64, q: f64, eps: f64) -> Result<Self> {
        let params = Self { sigma, p, q, eps };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        if !(self.p > 0.0) || !(self.q > 0.0) {
            return bad("p and q must be positive");
        }
        if !(self.eps >= 0.0) {
            return bad("eps must be nonnegative");
        }
        if self.p >= 1.0 && self.eps != 0.0 {
            return bad("eps must be zero when p >= 1");
        }
        Ok(())
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }
}

/// Partition of the index set `[n] x [k]` induced by a matrix: its support,
/// the zeros lying in rows that carry a nonzero, and the zeros in all-zero
/// rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportPattern {
    pub supp: Vec<(usize, usize)>,
    pub omega0_prime: Vec<(usize, usize)>,
    pub omega0_dprime: Vec<(usize, usize)>,
    pub tol: f64,
}

impl SupportPattern {
    /// Classifies every entry of `x`; entries with `|x_ij| <= tol` are zeros.
    pub fn of(x: &Mat, tol: f64) -> Self {
        let (n, k) = x.shape();
        let mut supp = Vec::new();
        let mut omega0_prime = Vec::new();
        let mut omega0_dprime = Vec::new();
        for i in 0..n {
            let row_nonzero = (0..k).any(|j| x[(i, j)].abs() > tol);
            for j in 0..k {
                if x[(i, j)].abs() > tol {
                    supp.push((i, j));
                } else if row_nonzero {
                    omega0_prime.push((i, j));
                } else {
                    omega0_dprime.push((i, j));
                }
            }
        }
        Self { supp, omega0_prime, omega0_dprime, tol }
    }
}

/// Support and zero-pattern split of `x` (see [`SupportPattern`]).
pub fn support_pattern(x: &ObliqueMatrix, tol: f64) -> SupportPattern {
    SupportPattern::of(x.as_mat(), tol)
}

/// Rule for growing the penalty weight between outer iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SigmaGrowth {
    /// `sigma <- factor * sigma`.
    Constant { factor: f64 },
    /// `sigma <- scale * (high if ||XV||_F^2 > threshold else low) * sigma`.
    ByInfeasibility { scale: f64, high: f64, low: f64, threshold: f64 },
}

impl SigmaGrowth {
    /// Growth factor given `||X^t V||_F^2`.
    pub fn factor(&self, xv_sq: f64) -> f64 {
        match *self {
            SigmaGrowth::Constant { factor } => factor,
            SigmaGrowth::ByInfeasibility { scale, high, low, threshold } => {
                scale * if xv_sq > threshold { high } else { low }
            }
        }
    }

    fn min_factor(&self) -> f64 {
        match *self {
            SigmaGrowth::Constant { factor } => factor,
            SigmaGrowth::ByInfeasibility { scale, high, low, .. } => scale * high.min(low),
        }
    }
}

/// Outer-loop settings of the exact penalty method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriverConfig {
    pub sigma0: f64,
    pub sigma_growth: SigmaGrowth,
    /// Decay of the smoothing parameter `eps`; ignored when `p >= 1`.
    pub gamma1: f64,
    pub eps0: f64,
    pub p: f64,
    pub q: f64,
    /// Decay of the inner tolerance.
    pub eta: f64,
    pub eps_grad0: f64,
    pub eps_grad_min: f64,
    pub tol_feas: f64,
    pub t_max: usize,
    /// Subproblems starting with `zeta_2 > zeta_switch` use gradient
    /// projection, the others the regularized Newton method. A nonpositive
    /// threshold keeps every subproblem on gradient projection.
    pub zeta_switch: f64,
    pub rng_seed: u64,
    /// Restart a subproblem from the feasible anchor when its start is
    /// worse. Violations are counted either way.
    pub restart_at_anchor: bool,
    /// Run the refinement step after rounding.
    pub postprocess: bool,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            sigma0: 1e-2,
            sigma_growth: SigmaGrowth::Constant { factor: 5.0 },
            gamma1: 0.0,
            eps0: 0.0,
            p: 1.0,
            q: 2.0,
            eta: 0.8,
            eps_grad0: 1e-3,
            eps_grad_min: 1e-7,
            tol_feas: 1e-8,
            t_max: 300,
            zeta_switch: 0.0,
            rng_seed: 0,
            restart_at_anchor: true,
            postprocess: true,
        }
    }
}

impl DriverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.sigma0 > 0.0) {
            return bad("sigma0 must be positive");
        }
        if !(self.sigma_growth.min_factor() > 1.0) {
            return bad("sigma growth factor must exceed 1");
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("eta must lie in (0, 1)");
        }
        if self.t_max < 1 {
            return bad("t_max must be at least 1");
        }
        if !(0.0..1.0).contains(&self.gamma1) {
            return bad("gamma1 must lie in [0, 1)");
        }
        if !(self.eps_grad_min >= 0.0 && self.eps_grad0 >= 0.0) {
            return bad("inner tolerances must be nonnegative");
        }
        PenaltyParams::new(self.sigma0, self.p, self.q, if self.p >= 1.0 { 0.0 } else { self.eps0 })
            .map(|_| ())?;
        if self.p < 1.0 && !(self.eps0 > 0.0) {
            return bad("p < 1 needs a positive eps0");
        }
        Ok(())
    }
}

/// Why a solve stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// Outer loop: `||X V||_F^2 - 1 <= tol_feas`.
    FeasibilityTol,
    /// Outer loop ran `t_max` iterations.
    MaxOuter,
    /// No progress was possible.
    Stalled,
    /// Inner solver met its tolerance.
    Converged,
    /// Inner solver hit its iteration cap.
    MaxIter,
    /// Backtracking exhausted without an acceptable step.
    LineSearchFailure,
}

/// Counters for the checkable contracts of the inner and outer loops.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContractStats {
    /// Trial points accepted by the regularized Newton method.
    pub accepted_trials: usize,
    /// Trial points whose model decrease failed the sufficient-decrease bound.
    pub trial_decrease_violations: usize,
    /// Newton directions rejected by the angle test and replaced.
    pub direction_fallbacks: usize,
    /// Times the curvature estimate was raised.
    pub kappa_raises: usize,
    /// Times the curvature estimate passed its cap without meeting the bound.
    pub curvature_exhausted: usize,
    /// Outer iterations where the subproblem ended above its start value.
    pub descent_violations: usize,
    /// Outer iterations whose start was worse than the feasible anchor.
    pub anchor_violations: usize,
}

impl ContractStats {
    pub fn merge(&mut self, other: &ContractStats) {
        self.accepted_trials += other.accepted_trials;
        self.trial_decrease_violations += other.trial_decrease_violations;
        self.direction_fallbacks += other.direction_fallbacks;
        self.kappa_raises += other.kappa_raises;
        self.curvature_exhausted += other.curvature_exhausted;
        self.descent_violations += other.descent_violations;
        self.anchor_violations += other.anchor_violations;
    }
}

/// One row of the outer-loop trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub sigma: f64,
    pub eps: f64,
    pub eps_grad: f64,
    pub second_order: bool,
    pub anchored: bool,
    pub penalty_start: f64,
    pub penalty_end: f64,
    pub penalty_feasible: f64,
    pub zeta: f64,
    pub kkt: f64,
    pub inner_iterations: usize,
}

/// Result of a solve: final point, residuals, counters and timing.
#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub x: Mat,
    pub objective: f64,
    pub zeta: f64,
    pub kkt: f64,
    pub feasi: f64,
    pub outer_iterations: usize,
    pub inner_iterations: Vec<usize>,
    pub seconds: f64,
    pub termination: Termination,
    pub contracts: ContractStats,
    pub trace: Vec<OuterRecord>,
}

impl SolveReport {
    pub fn total_inner_iterations(&self) -> usize {
        self.inner_iterations.iter().sum()
    }
}
