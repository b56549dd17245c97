use crate::error::{Error, Result};

use super::ParamVector;

/// A scalar loss over a flat parameter vector with an analytic gradient.
pub trait Objective {
    fn num_params(&self) -> usize;

    fn value_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn value(&self, params: &[f64]) -> Result<f64> {
        Ok(self.value_and_gradient(params)?.0)
    }
}

/// Adapts a closure into an [`Objective`].
pub struct FnObjective<F> {
    pub num_params: usize,
    pub f: F,
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn num_params(&self) -> usize {
        self.num_params
    }

    fn value_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        (self.f)(params)
    }
}

/// Evaluates `objective` at `params`, rejecting non-finite values.
pub fn value_and_gradient(objective: &dyn Objective, params: &ParamVector) -> Result<(f64, ParamVector)> {
    if params.len() != objective.num_params() {
        return Err(Error::shape(format!(
            "objective takes {} parameters, got {}",
            objective.num_params(),
            params.len()
        )));
    }
    let (value, grad) = objective.value_and_gradient(params.values())?;
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss { batch_index: None });
    }
    let grad = ParamVector::with_layout(params.layout().to_vec(), grad)?;
    Ok((value, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|)` over
    /// coordinates with `|analytic| ≥ 1e-8`.
    pub max_relative_error: f64,
    /// Largest absolute error over coordinates with `|analytic| < 1e-8`.
    pub max_small_abs_error: f64,
    pub worst_index: Option<usize>,
    pub passed: bool,
}

/// Compares the analytic gradient with central differences of step `eps`.
pub fn check_gradient(objective: &dyn Objective, params: &[f64], eps: f64) -> Result<GradCheck> {
    let (_, analytic) = objective.value_and_gradient(params)?;
    let mut x = params.to_vec();
    let mut report = GradCheck {
        max_relative_error: 0.0,
        max_small_abs_error: 0.0,
        worst_index: None,
        passed: true,
    };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let up = objective.value(&x)?;
        x[i] = orig - eps;
        let down = objective.value(&x)?;
        x[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        if a.abs() < 1e-8 {
            let err = (a - numeric).abs();
            if err > report.max_small_abs_error {
                report.max_small_abs_error = err;
                if err >= 1e-7 {
                    report.worst_index = Some(i);
                }
            }
        } else {
            let err = (a - numeric).abs() / a.abs().max(numeric.abs());
            if err > report.max_relative_error {
                report.max_relative_error = err;
                if err >= 1e-4 {
                    report.worst_index = Some(i);
                }
            }
        }
    }
    report.passed = report.max_relative_error < 1e-4 && report.max_small_abs_error < 1e-7;
    Ok(report)
}
