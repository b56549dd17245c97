use crate::error::{Error, Result};

use super::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    SgdMomentum {
        momentum: f64,
    },
    /// First/second moment moving averages with bias correction.
    Adaptive {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Method {
    pub fn adaptive() -> Self {
        Method::Adaptive {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub method: Method,
    pub step_size: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    /// Per-coordinate step multipliers; empty means all ones.
    scales: Vec<f64>,
    step_count: u64,
}

impl OptimizerState {
    pub fn new(method: Method, step_size: f64, num_params: usize) -> Self {
        let second = match method {
            Method::Adaptive { .. } => vec![0.0; num_params],
            Method::SgdMomentum { .. } => Vec::new(),
        };
        Self {
            method,
            step_size,
            first: vec![0.0; num_params],
            second,
            scales: Vec::new(),
            step_count: 0,
        }
    }

    /// Multiplies the step of coordinate `i` by `scales[i]`.
    pub fn with_scales(mut self, scales: Vec<f64>) -> Result<Self> {
        if scales.len() != self.first.len() {
            return Err(Error::shape("one step multiplier per parameter"));
        }
        self.scales = scales;
        Ok(self)
    }

    pub fn sgd(step_size: f64, momentum: f64, num_params: usize) -> Self {
        Self::new(Method::SgdMomentum { momentum }, step_size, num_params)
    }

    pub fn adaptive(step_size: f64, num_params: usize) -> Self {
        Self::new(Method::adaptive(), step_size, num_params)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One in-place update of `params` against `grad`.
    pub fn apply(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.first.len() || grad.len() != params.len() {
            return Err(Error::shape(format!(
                "optimizer holds {} accumulators, got {} params and {} gradients",
                self.first.len(),
                params.len(),
                grad.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient coordinate {i}")));
        }
        self.step_count += 1;
        let lr = self.step_size;
        match self.method {
            Method::SgdMomentum { momentum } => {
                for (i, ((p, v), g)) in params.iter_mut().zip(&mut self.first).zip(grad).enumerate() {
                    *v = momentum * *v + g;
                    *p -= lr * self.scales.get(i).copied().unwrap_or(1.0) * *v;
                }
            }
            Method::Adaptive { beta1, beta2, eps } => {
                let t = self.step_count as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (i, (((p, m), v), g)) in params
                    .iter_mut()
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                    .zip(grad)
                    .enumerate()
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * self.scales.get(i).copied().unwrap_or(1.0) * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

/// Value-semantics wrapper around [`OptimizerState::apply`].
pub fn optimizer_step(
    state: &OptimizerState,
    params: &ParamVector,
    grad: &[f64],
) -> Result<(ParamVector, OptimizerState)> {
    let mut state = state.clone();
    let mut params = params.clone();
    state.apply(params.values_mut(), grad)?;
    params.check_finite()?;
    Ok((params, state))
}
