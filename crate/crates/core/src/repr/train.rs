use std::fmt;

use rand::Rng as _;

use crate::approx::{Activation, Model, ModelSpec, OptimizerState};
use crate::dataset::{TransitionDataset, TransitionSample};
use crate::encoding::SpaceEncoding;
use crate::error::{Error, Result};
use crate::rng::{fnv1a, rng_from_seed};

use super::loss::{ReprBatch, ReprObjective};
use super::{DynamicsRepresentation, NoiseSource, ReprMetadata};

/// Which dataset supplies the noise states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseChoice {
    /// Next states of the general dataset.
    General,
    /// Next states of the expert dataset.
    Expert,
}

impl NoiseChoice {
    pub fn name(self) -> &'static str {
        match self {
            NoiseChoice::General => "general",
            NoiseChoice::Expert => "expert",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "general" => Some(NoiseChoice::General),
            "expert" => Some(NoiseChoice::Expert),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReprTrainConfig {
    pub k: usize,
    pub lambda: f64,
    pub batch_size_dyn: usize,
    pub batch_size_noise: usize,
    pub steps: usize,
    pub step_size: f64,
    /// Decay the step size linearly to zero over the run.
    pub decay: bool,
    pub seed: u64,
    /// Half-width of the uniform start for tabular weights.
    pub init_scale: f64,
    /// Hidden widths of the continuous feature networks.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub noise: NoiseChoice,
    pub log_every: usize,
}

impl Default for ReprTrainConfig {
    fn default() -> Self {
        Self {
            k: 64,
            lambda: 0.1,
            batch_size_dyn: 256,
            batch_size_noise: 256,
            steps: 3000,
            step_size: 0.01,
            decay: true,
            seed: 0,
            init_scale: 0.1,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            noise: NoiseChoice::General,
            log_every: 50,
        }
    }
}

impl ReprTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.batch_size_dyn == 0 || self.batch_size_noise == 0 || self.log_every == 0 {
            return Err(Error::invalid("representation counts must be positive"));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::invalid("lambda must be finite and nonnegative"));
        }
        if !(self.step_size >= 0.0) || !self.step_size.is_finite() {
            return Err(Error::invalid("step size must be finite and nonnegative"));
        }
        Ok(())
    }

    pub fn hash(&self) -> u64 {
        fnv1a(self.to_string().as_bytes())
    }
}

impl fmt::Display for ReprTrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        write!(
            f,
            "k={} lambda={} batch_dyn={} batch_noise={} steps={} step_size={} decay={} seed={} init_scale={} hidden={} activation={} noise={}",
            self.k,
            self.lambda,
            self.batch_size_dyn,
            self.batch_size_noise,
            self.steps,
            self.step_size,
            self.decay,
            self.seed,
            self.init_scale,
            hidden.join(","),
            self.activation.name(),
            self.noise.name()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainPoint {
    pub step: usize,
    pub loss: f64,
    pub regularizer: f64,
    pub clamped: usize,
}

#[derive(Debug, Clone)]
pub struct PretrainOutput {
    /// The final representation, or the last finite one if training diverged.
    pub repr: DynamicsRepresentation,
    pub curve: Vec<TrainPoint>,
    pub clamp_activations: usize,
    /// `(step, reason)` of the first non-finite loss or gradient.
    pub divergence: Option<(usize, String)>,
}

/// Builds the noise source for `choice`. Tabular sources aggregate to one
/// atom per state.
pub fn noise_source(
    encoding: &SpaceEncoding,
    general: &TransitionDataset,
    expert: &TransitionDataset,
    choice: NoiseChoice,
) -> Result<NoiseSource> {
    let ds = match choice {
        NoiseChoice::General => general,
        NoiseChoice::Expert => expert,
    };
    if ds.is_empty() {
        return Err(Error::invalid(format!("{} dataset is empty", choice.name())));
    }
    match *encoding {
        SpaceEncoding::Tabular { num_states, .. } => NoiseSource::tabular(&ds.empirical_next_states(num_states)?),
        SpaceEncoding::Continuous { .. } => NoiseSource::atoms(
            ds.samples.iter().map(|s| s.next_state.clone()).collect(),
            vec![1.0; ds.len()],
        ),
    }
}

/// Minibatch training of `J + λR` over `(φ, μ)`.
pub fn pretrain(
    dyn_dataset: &TransitionDataset,
    expert_dataset: &TransitionDataset,
    encoding: SpaceEncoding,
    config: &ReprTrainConfig,
) -> Result<PretrainOutput> {
    config.validate()?;
    if dyn_dataset.is_empty() {
        return Err(Error::invalid("dynamics dataset is empty"));
    }
    let mut rng = rng_from_seed(config.seed);
    let k = config.k;
    let (phi_spec, mu_spec) = if encoding.is_tabular() {
        (
            ModelSpec::linear(encoding.pair_input_dim(), k),
            ModelSpec::linear(encoding.state_input_dim(), k),
        )
    } else {
        (
            ModelSpec::multilayer(encoding.pair_input_dim(), &config.hidden, k, config.activation),
            ModelSpec::multilayer(encoding.state_input_dim(), &config.hidden, k, config.activation),
        )
    };
    let phi = Model::init_uniform(phi_spec, config.init_scale, &mut rng)?;
    let mu = Model::init_uniform(mu_spec, config.init_scale, &mut rng)?;
    let noise = noise_source(&encoding, dyn_dataset, expert_dataset, config.noise)?;
    let metadata = ReprMetadata {
        env_id: dyn_dataset.env_id.clone(),
        seed: config.seed,
        config_hash: config.hash(),
    };
    let mut repr = DynamicsRepresentation::new(phi, mu, encoding, noise, metadata)?;

    let np = repr.phi.num_params();
    let mut params: Vec<f64> = repr
        .phi
        .params()
        .values()
        .iter()
        .chain(repr.mu.params().values())
        .copied()
        .collect();
    let mut opt = OptimizerState::adaptive(config.step_size, params.len());
    let mut out_curve = Vec::new();
    let mut clamp_total = 0;
    let mut divergence = None;
    for step in 0..config.steps {
        let batch_samples: Vec<&TransitionSample> = (0..config.batch_size_dyn)
            .map(|_| &dyn_dataset.samples[rng.random_range(0..dyn_dataset.len())])
            .collect();
        let noise_states = repr.noise.sample(&mut rng, config.batch_size_noise);
        let batch = ReprBatch::from_samples(&repr, &batch_samples, &noise_states)?;
        let objective = ReprObjective {
            repr: &repr,
            batch: &batch,
            lambda: config.lambda,
        };
        let (parts, grad) = match objective.evaluate(&repr.phi, &repr.mu) {
            Ok(v) => v,
            Err(Error::NonFiniteLoss { .. }) => {
                divergence = Some((step, "non-finite loss".to_string()));
                break;
            }
            Err(e) => return Err(e),
        };
        if !parts.loss.is_finite() || !parts.regularizer.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            divergence = Some((step, "non-finite loss or gradient".to_string()));
            break;
        }
        clamp_total += parts.clamped;
        if step % config.log_every == 0 || step + 1 == config.steps {
            out_curve.push(TrainPoint {
                step,
                loss: parts.loss,
                regularizer: parts.regularizer,
                clamped: parts.clamped,
            });
        }
        if config.decay {
            opt.step_size = config.step_size * (1.0 - step as f64 / config.steps as f64);
        }
        let mut next = params.clone();
        opt.apply(&mut next, &grad)?;
        if next.iter().any(|v| !v.is_finite()) {
            divergence = Some((step, "non-finite parameters".to_string()));
            break;
        }
        params = next;
        repr.phi.set_params(&params[..np])?;
        repr.mu.set_params(&params[np..])?;
    }
    if let Some((step, reason)) = &divergence {
        log::warn!("representation training diverged at step {step}: {reason}");
    }
    Ok(PretrainOutput {
        repr,
        curve: out_curve,
        clamp_activations: clamp_total,
        divergence,
    })
}
