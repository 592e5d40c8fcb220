//! Smooth objectives seen through their Euclidean derivatives.

use crate::types::Mat;

/// A smooth function on `n x k` matrices.
///
/// All derivatives are Euclidean; the oblique corrections live in
/// [`crate::manifold`].
pub trait Objective {
    fn value(&self, x: &Mat) -> f64;

    fn gradient(&self, x: &Mat) -> Mat;

    /// Euclidean Hessian at `x` applied to `d`.
    fn hess_apply(&self, x: &Mat, d: &Mat) -> Mat;

    /// A global Lipschitz bound for the gradient, when one is known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn value(&self, x: &Mat) -> f64 {
        (**self).value(x)
    }

    fn gradient(&self, x: &Mat) -> Mat {
        (**self).gradient(x)
    }

    fn hess_apply(&self, x: &Mat, d: &Mat) -> Mat {
        (**self).hess_apply(x, d)
    }

    fn lipschitz(&self) -> Option<f64> {
        (**self).lipschitz()
    }
}

/// `f = 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Zero;

impl Objective for Zero {
    fn value(&self, _x: &Mat) -> f64 {
        0.0
    }

    fn gradient(&self, x: &Mat) -> Mat {
        Mat::zeros(x.nrows(), x.ncols())
    }

    fn hess_apply(&self, x: &Mat, _d: &Mat) -> Mat {
        Mat::zeros(x.nrows(), x.ncols())
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `f(X) = <G, X> + offset`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub coef: Mat,
    pub offset: f64,
}

impl Linear {
    pub fn new(coef: Mat) -> Self {
        Self { coef, offset: 0.0 }
    }
}

impl Objective for Linear {
    fn value(&self, x: &Mat) -> f64 {
        self.coef.dot(x) + self.offset
    }

    fn gradient(&self, _x: &Mat) -> Mat {
        self.coef.clone()
    }

    fn hess_apply(&self, x: &Mat, _d: &Mat) -> Mat {
        Mat::zeros(x.nrows(), x.ncols())
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `f(X) = ||X - T||_F^2 / 2`.
#[derive(Clone, Debug)]
pub struct HalfSquaredDistance {
    pub target: Mat,
}

impl Objective for HalfSquaredDistance {
    fn value(&self, x: &Mat) -> f64 {
        0.5 * (x - &self.target).norm_squared()
    }

    fn gradient(&self, x: &Mat) -> Mat {
        x - &self.target
    }

    fn hess_apply(&self, _x: &Mat, d: &Mat) -> Mat {
        d.clone()
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// `f(X) = -tr(X^T M X)` for a symmetric `M`.
#[derive(Clone, Debug)]
pub struct NegQuadraticForm {
    pub m: Mat,
}

impl Objective for NegQuadraticForm {
    fn value(&self, x: &Mat) -> f64 {
        -x.dot(&(&self.m * x))
    }

    fn gradient(&self, x: &Mat) -> Mat {
        &self.m * x * -2.0
    }

    fn hess_apply(&self, _x: &Mat, d: &Mat) -> Mat {
        &self.m * d * -2.0
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(2.0 * self.m.clone().symmetric_eigenvalues().abs().max())
    }
}
