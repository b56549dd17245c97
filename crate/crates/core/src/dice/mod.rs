//! Distribution-matching imitation through the dual of the occupancy
//! divergence: the representation-constrained dual variable, the saddle-point
//! loss, alternating dual/policy training, baselines and evaluation.

mod engine;
mod eval;
mod objective;
mod policy;
mod train;

pub use engine::{close_support, gradient_penalty, DiceEval, DiceTerms, ExpertTerm};
pub use eval::{
    evaluate_policy, expected_return, occupancy_kl, population_ratio_readout, sample_ratio_readout, PolicyMetrics,
    RatioComparison,
};
pub use objective::{PolicyLogitObjective, ReprDualObjective, TableDualObjective};
pub use policy::{PolicyKind, PolicyModel, LOG_STD_MAX, LOG_STD_MIN};
pub use train::{
    fit_dual, train_bc, train_bc_population, train_repr_valuedice, train_valuedice, Diagnostics, DiceSource, DualFit,
    EvalContext, IlConfig, PolicyChoice, TrainOutput,
};

use crate::approx::{Model, ModelSpec};
use crate::dataset::TransitionSample;
use crate::divergence::DivergenceSpec;
use crate::error::{Error, Result};
use crate::oracle::dot;
use crate::repr::{DynamicsRepresentation, NoiseSource};
use crate::rng::Rng;

pub const DEFAULT_CLAMP_EPS: f64 = 1e-6;
pub const DEFAULT_EXPONENT_CAP: f64 = 20.0;

/// Weights of `Q(s,a) = f_ξ(s,a) + φ(s,a)ᵀω - log(μ(s)ᵀθ + 1 - γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualParams {
    pub omega: Vec<f64>,
    pub theta: Vec<f64>,
    /// Linear model over the pair encoding.
    pub xi: Model,
    pub gamma: f64,
    pub clamp_eps: f64,
    pub exponent_cap: f64,
}

impl DualParams {
    /// All weights zero, so `Q ≡ -log(1-γ)`.
    pub fn zeros(repr: &DynamicsRepresentation, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid(format!("discount must lie in (0,1), got {gamma}")));
        }
        Ok(Self {
            omega: vec![0.0; repr.k],
            theta: vec![0.0; repr.k],
            xi: Model::zeros(ModelSpec::linear(repr.encoding.pair_input_dim(), 1))?,
            gamma,
            clamp_eps: DEFAULT_CLAMP_EPS,
            exponent_cap: DEFAULT_EXPONENT_CAP,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clamp_eps > 0.0) {
            return Err(Error::invalid("clamp_eps must be positive"));
        }
        let finite = self
            .omega
            .iter()
            .chain(&self.theta)
            .chain(self.xi.params().values())
            .all(|v| v.is_finite());
        if !finite || !self.exponent_cap.is_finite() {
            return Err(Error::NonFinite("dual parameters".into()));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.omega.len() + self.theta.len() + self.xi.num_params()
    }

    /// `[ω | θ | ξ]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.omega
            .iter()
            .chain(&self.theta)
            .chain(self.xi.params().values())
            .copied()
            .collect()
    }

    pub fn set_from(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::shape("dual parameter length"));
        }
        let k = self.omega.len();
        self.omega.copy_from_slice(&values[..k]);
        self.theta.copy_from_slice(&values[k..2 * k]);
        self.xi.set_params(&values[2 * k..])
    }

    fn check(&self, repr: &DynamicsRepresentation) -> Result<()> {
        if self.omega.len() != repr.k || self.theta.len() != repr.k {
            return Err(Error::shape(format!(
                "dual has k={} / {}, representation has k={}",
                self.omega.len(),
                self.theta.len(),
                repr.k
            )));
        }
        if self.xi.spec().input_dim != repr.encoding.pair_input_dim() || self.xi.spec().output_dim != 1 {
            return Err(Error::shape("correction model does not match the pair encoding"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QValue {
    pub value: f64,
    /// The log argument fell below `clamp_eps`.
    pub clamped: bool,
}

/// The three-term dual variable at one pair.
pub fn q_value(dual: &DualParams, repr: &DynamicsRepresentation, state: &[f64], action: &[f64]) -> Result<QValue> {
    dual.check(repr)?;
    let pair = repr.encoding.pair(state, action)?;
    let xi = dual.xi.forward(&pair.as_input())?[0];
    let phi = repr.phi.forward(&pair.as_input())?;
    let mu = repr.mu(state)?;
    let arg = dot(&mu, &dual.theta) + 1.0 - dual.gamma;
    Ok(QValue {
        value: xi + dot(&phi, &dual.omega) - arg.max(dual.clamp_eps).ln(),
        clamped: arg < dual.clamp_eps,
    })
}

/// `E_{a'~π(·|s')} Q(s',a')`: exact for discrete policies, one
/// reparametrized draw (which needs `rng`) for Gaussian ones.
pub fn expected_next_q(
    dual: &DualParams,
    repr: &DynamicsRepresentation,
    policy: &PolicyModel,
    next: &[f64],
    rng: Option<&mut Rng>,
) -> Result<f64> {
    if policy.is_discrete() {
        let s = crate::dataset::index_of(next)?;
        let probs = policy.action_probs(s)?;
        let mut total = 0.0;
        for (a, p) in probs.iter().enumerate() {
            if *p > 0.0 {
                total += p * q_value(dual, repr, next, &[a as f64])?.value;
            }
        }
        Ok(total)
    } else {
        let rng = rng.ok_or_else(|| Error::invalid("a gaussian policy needs a random source"))?;
        let a = policy.sample_gaussian(rng, next)?;
        Ok(q_value(dual, repr, next, &a)?.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiceLossValue {
    pub value: f64,
    pub cap_activations: usize,
    pub clamp_activations: usize,
}

/// `(1-γ) mean_{s0} E_π Q(s0,·) + mean_{(s,a,s')} f*(min(γ E_π Q(s',·) - Q(s,a), cap))`
/// for a discrete-action policy.
pub fn dice_loss(
    dual: &DualParams,
    repr: &DynamicsRepresentation,
    policy: &PolicyModel,
    expert_batch: &[TransitionSample],
    init_batch: &[Vec<f64>],
    spec: &DivergenceSpec,
) -> Result<DiceLossValue> {
    if expert_batch.is_empty() || init_batch.is_empty() {
        return Err(Error::invalid("dice_loss needs nonempty expert and initial batches"));
    }
    if !policy.is_discrete() {
        return Err(Error::invalid("dice_loss evaluates discrete-action policies"));
    }
    let gamma = dual.gamma;
    let mut out = DiceLossValue {
        value: 0.0,
        cap_activations: 0,
        clamp_activations: 0,
    };
    let mut init = 0.0;
    for s in init_batch {
        init += expected_next_q(dual, repr, policy, s, None)?;
    }
    out.value += (1.0 - gamma) * init / init_batch.len() as f64;
    let mut residual_term = 0.0;
    for t in expert_batch {
        let q = q_value(dual, repr, &t.state, &t.action)?;
        out.clamp_activations += usize::from(q.clamped);
        let mut y = gamma * expected_next_q(dual, repr, policy, &t.next_state, None)? - q.value;
        if y > dual.exponent_cap {
            out.cap_activations += 1;
            y = dual.exponent_cap;
        }
        residual_term += spec.conjugate(y);
    }
    out.value += residual_term / expert_batch.len() as f64;
    if !out.value.is_finite() {
        return Err(Error::NonFiniteLoss { batch_index: None });
    }
    Ok(out)
}

/// `ν̂(s,a) = (f')⁻¹(γ E_{s'~P̂} E_π Q(s',·) - Q(s,a))` with the next-state
/// expectation taken under the representation's own transition estimate
/// `φ(s,a)ᵀμ(s') pₙ(s')` over the noise atoms.
pub fn recovered_density_ratio(
    dual: &DualParams,
    repr: &DynamicsRepresentation,
    policy: &PolicyModel,
    state: &[f64],
    action: &[f64],
    spec: &DivergenceSpec,
) -> Result<f64> {
    let NoiseSource::Atoms { states, weights } = &repr.noise else {
        return Err(Error::invalid("ratio readout needs a noise source made of atoms"));
    };
    let phi = repr.phi(state, action)?;
    let mut next_value = 0.0;
    for (n, w) in states.iter().zip(weights) {
        let p = dot(&phi, &repr.mu(n)?) * w;
        if p != 0.0 {
            next_value += p * expected_next_q(dual, repr, policy, n, None)?;
        }
    }
    let q = q_value(dual, repr, state, action)?.value;
    Ok(spec.derivative_inverse(dual.gamma * next_value - q))
}

#[cfg(test)]
mod tests;
