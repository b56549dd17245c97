use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::dataset::{SourceTag, TransitionDataset, TransitionSample};
use crate::dice::PolicyModel;
use crate::error::{Error, Result};
use crate::repr::AffineMean;
use crate::rng::{rng_from_seed, Rng};

/// `s' = A s + B a + ε`, `ε ~ N(0, σ²I)`, on the box `[low, high]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianSpec {
    pub mean: AffineMean,
    pub sigma: f64,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl LinearGaussianSpec {
    pub fn validate(&self) -> Result<()> {
        let (d, m) = (self.mean.state_dim, self.mean.action_dim);
        if d == 0 || self.mean.a.len() != d * d || self.mean.b.len() != d * m {
            return Err(Error::shape("linear-gaussian matrices"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid("sigma must be positive"));
        }
        if self.low.len() != d || self.high.len() != d || self.low.iter().zip(&self.high).any(|(l, h)| !(h > l)) {
            return Err(Error::invalid("state bounds must be a nonempty box"));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.mean.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.mean.action_dim
    }

    fn inside(&self, s: &[f64]) -> bool {
        s.iter()
            .zip(self.low.iter().zip(&self.high))
            .all(|(x, (l, h))| x >= l && x <= h)
    }

    fn uniform_state(&self, rng: &mut Rng) -> Vec<f64> {
        self.low
            .iter()
            .zip(&self.high)
            .map(|(l, h)| rng.random_range(*l..*h))
            .collect()
    }
}

/// One chain of `n` transitions under a Gaussian policy. A next state that
/// leaves the box is recorded as is, and the chain continues from a fresh
/// uniform state.
pub fn sample_linear_gaussian(
    spec: &LinearGaussianSpec,
    policy: &PolicyModel,
    n: usize,
    seed: u64,
) -> Result<TransitionDataset> {
    spec.validate()?;
    if policy.dims() != (spec.state_dim(), spec.action_dim()) || policy.is_discrete() {
        return Err(Error::shape("policy does not match the system dimensions"));
    }
    let mut rng = rng_from_seed(seed);
    let noise = Normal::new(0.0, spec.sigma).expect("positive sigma");
    let mut ds = TransitionDataset::new("linear-gaussian", spec.state_dim(), spec.action_dim());
    let mut s = spec.uniform_state(&mut rng);
    for _ in 0..n {
        let a = policy.sample_gaussian(&mut rng, &s)?;
        let next: Vec<f64> = spec
            .mean
            .apply(&s, &a)
            .into_iter()
            .map(|m| m + noise.sample(&mut rng))
            .collect();
        let continue_from = if spec.inside(&next) {
            next.clone()
        } else {
            spec.uniform_state(&mut rng)
        };
        ds.samples.push(TransitionSample {
            state: s,
            action: a,
            next_state: next,
            tag: SourceTag::General,
        });
        s = continue_from;
    }
    Ok(ds)
}
