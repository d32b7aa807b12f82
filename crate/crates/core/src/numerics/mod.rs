//! Dense tensors, fully connected layers with hand-written backward passes,
//! losses, Adam, and a central-difference gradient checker.

mod adam;
mod gradcheck;
mod mlp;
mod params;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{check_gradient, finite_diff_grad, relative_error, GradCheckReport};
pub use mlp::{Activation, Linear, Mlp, MlpCache};
pub use params::Parameterized;
pub(crate) use params::join as params_join;
pub use tensor::{dot, linear_forward, Tensor2};

/// `|prediction - target|`.
#[inline]
pub fn absolute_error(prediction: f64, target: f64) -> f64 {
    libm::fabs(prediction - target)
}

/// `(target - prediction)^2`.
#[inline]
pub fn squared_error(target: f64, prediction: f64) -> f64 {
    let r = target - prediction;
    r * r
}

/// Subgradient of `|x|`, taking 0 at the kink.
#[inline]
pub fn abs_subgradient(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}
