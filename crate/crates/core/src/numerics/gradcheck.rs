use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::params::Parameterized;
use crate::error::{Error, Result};

/// Denominator floor for [`relative_error`]; gradients smaller than this are
/// compared absolutely.
const RELATIVE_FLOOR: f64 = 1e-6;

/// Central-difference estimate of the gradient of `f` at `point`.
pub fn finite_diff_grad<F>(mut f: F, point: &[f64], epsilon: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(epsilon > 0.0) {
        return Err(Error::Oracle(format!("finite-difference step must be positive, got {epsilon}")));
    }
    let mut probe = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        probe[i] = point[i] + epsilon;
        let plus = f(&probe);
        probe[i] = point[i] - epsilon;
        let minus = f(&probe);
        probe[i] = point[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Oracle(format!("non-finite evaluation around coordinate {i}")));
        }
        grad.push((plus - minus) / (2.0 * epsilon));
    }
    Ok(grad)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    libm::fabs(a - b) / libm::fabs(a).max(libm::fabs(b)).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Block name and offset of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares `analytic` against central differences of `loss` taken over
/// every coordinate of `params`.
pub fn check_gradient<P, F>(params: &P, mut loss: F, analytic: &P, epsilon: f64) -> Result<GradCheckReport>
where
    P: Parameterized + Clone,
    F: FnMut(&P) -> f64,
{
    let point = params.flatten();
    let mut probe = params.clone();
    let numeric = finite_diff_grad(
        |x| {
            probe.assign_flat(x).expect("probe has the layout of params");
            loss(&probe)
        },
        &point,
        epsilon,
    )?;
    let analytic_flat = analytic.flatten();
    if analytic_flat.len() != numeric.len() {
        return Err(Error::Oracle(format!(
            "analytic gradient has {} entries, parameters have {}",
            analytic_flat.len(),
            numeric.len()
        )));
    }
    let names: Vec<(String, usize)> = params
        .blocks()
        .into_iter()
        .flat_map(|(name, b)| (0..b.len()).map(move |i| (name.clone(), i)))
        .collect();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        checked: numeric.len(),
    };
    for (i, (&a, &n)) in analytic_flat.iter().zip(&numeric).enumerate() {
        let err = relative_error(a, n);
        if err > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = err;
            report.worst = Some(names[i].clone());
            report.analytic = a;
            report.numeric = n;
        }
    }
    Ok(report)
}
