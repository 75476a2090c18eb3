//! Curve families applied to real regressors.
//!
//! Logistic curves are always upward sloping: the slope parameter enters
//! squared, so `a` and `-a` describe the same curve and the optimizer cannot
//! wander between sign-mirrored optima. Gaussian bumps depend on the width
//! only through its square, so the width is reported as a magnitude; a zero
//! width is rejected.

use crate::model::{CurveFamily, CurveSpec};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CurveError {
    #[error("gaussian curve width must be nonzero")]
    ZeroWidth,
}

/// Numerically stable logistic function.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic curve value: sigmoid(a^2 (x - b)).
pub fn eval_logistic(a: f64, b: f64, x: f64) -> f64 {
    sigmoid(a * a * (x - b))
}

/// Gradient of the logistic curve with respect to (a, b).
pub fn grad_logistic(a: f64, b: f64, x: f64) -> (f64, f64) {
    let c = eval_logistic(a, b, x);
    let s = c * (1.0 - c);
    (2.0 * a * (x - b) * s, -(a * a) * s)
}

/// Gaussian bump value: exp(-(x - a)^2 / (2 b^2)).
pub fn eval_gaussian(a: f64, b: f64, x: f64) -> Result<f64, CurveError> {
    if b == 0.0 {
        return Err(CurveError::ZeroWidth);
    }
    Ok(eval_gaussian_unchecked(a, b, x))
}

/// Gradient of the gaussian bump with respect to (a, b).
pub fn grad_gaussian(a: f64, b: f64, x: f64) -> Result<(f64, f64), CurveError> {
    if b == 0.0 {
        return Err(CurveError::ZeroWidth);
    }
    Ok(grad_gaussian_unchecked(a, b, x))
}

pub(crate) fn eval_gaussian_unchecked(a: f64, b: f64, x: f64) -> f64 {
    let d = x - a;
    (-d * d / (2.0 * b * b)).exp()
}

pub(crate) fn grad_gaussian_unchecked(a: f64, b: f64, x: f64) -> (f64, f64) {
    let d = x - a;
    let g = (-d * d / (2.0 * b * b)).exp();
    (d / (b * b) * g, d * d / (b * b * b) * g)
}

impl CurveSpec {
    /// Curve output at `x`. Requires a valid spec (gaussian width nonzero).
    pub fn eval(&self, x: f64) -> f64 {
        match self.family {
            CurveFamily::Logistic => eval_logistic(self.a, self.b, x),
            CurveFamily::Gaussian => {
                debug_assert!(self.b != 0.0, "gaussian width must be nonzero");
                eval_gaussian_unchecked(self.a, self.b, x)
            }
        }
    }

    /// Gradient of the curve output with respect to (a, b) at `x`.
    pub fn grad(&self, x: f64) -> (f64, f64) {
        match self.family {
            CurveFamily::Logistic => grad_logistic(self.a, self.b, x),
            CurveFamily::Gaussian => {
                debug_assert!(self.b != 0.0, "gaussian width must be nonzero");
                grad_gaussian_unchecked(self.a, self.b, x)
            }
        }
    }
}
