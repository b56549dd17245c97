//! Alternating dual/policy optimization for the representation-constrained
//! dual and for an unconstrained tabular dual, fixed-policy dual fitting,
//! and behavior cloning.

use std::borrow::Cow;
use std::collections::HashSet;
use std::fmt;

use rand::Rng as _;

use crate::approx::OptimizerState;
use crate::dataset::{index_of, TransitionDataset};
use crate::divergence::{kl_divergence_spec, KlVariant};
use crate::error::{Error, Result};
use crate::mdp::{SaTable, TabularMdp, TabularPolicy};
use crate::repr::DynamicsRepresentation;
use crate::rng::{derive_seed, rng_from_seed, Rng};

use super::engine::{
    close_support, evaluate_terms, gradient_penalty, DiceTerms, FreeTableDual, ReprTableDual, TableDual,
};
use super::eval::{expected_return, occupancy_kl};
use super::{DualParams, PolicyKind, PolicyModel, DEFAULT_CLAMP_EPS, DEFAULT_EXPONENT_CAP};

/// Policy class for the representation-based learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyChoice {
    /// Free logits per pair.
    Tabular,
    /// Logits linear in the frozen `φ(s,a)`.
    Features,
}

impl PolicyChoice {
    pub fn name(self) -> &'static str {
        match self {
            PolicyChoice::Tabular => "tabular",
            PolicyChoice::Features => "features",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tabular" => Some(PolicyChoice::Tabular),
            "features" => Some(PolicyChoice::Features),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlConfig {
    pub gamma: f64,
    pub dual_steps_per_policy_step: usize,
    /// Samples per minibatch; at or above the dataset size every step uses
    /// the whole dataset.
    pub batch_size: usize,
    pub dual_step_size: f64,
    /// Multiplier on the dual step for the representation weights `ω`, `θ`.
    pub feature_step_scale: f64,
    pub policy_step_size: f64,
    pub total_iterations: usize,
    pub gradient_penalty_weight: f64,
    pub divergence: KlVariant,
    pub seed: u64,
    pub log_every: usize,
    pub clamp_eps: f64,
    pub exponent_cap: f64,
    pub policy: PolicyChoice,
    /// Decay both step sizes linearly to zero.
    pub decay: bool,
}

impl Default for IlConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            dual_steps_per_policy_step: 4,
            batch_size: 256,
            dual_step_size: 0.01,
            feature_step_scale: 1.0,
            policy_step_size: 0.01,
            total_iterations: 2000,
            gradient_penalty_weight: 0.0,
            divergence: KlVariant::Normalized,
            seed: 0,
            log_every: 20,
            clamp_eps: DEFAULT_CLAMP_EPS,
            exponent_cap: DEFAULT_EXPONENT_CAP,
            policy: PolicyChoice::Tabular,
            decay: false,
        }
    }
}

impl IlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid(format!(
                "discount must lie in (0,1), got {}",
                self.gamma
            )));
        }
        if self.dual_steps_per_policy_step == 0 || self.batch_size == 0 || self.log_every == 0 {
            return Err(Error::invalid("imitation counts must be positive"));
        }
        for (name, v) in [
            ("dual step size", self.dual_step_size),
            ("feature step scale", self.feature_step_scale),
            ("policy step size", self.policy_step_size),
            ("gradient penalty weight", self.gradient_penalty_weight),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and nonnegative")));
            }
        }
        if !(self.clamp_eps > 0.0) || !self.exponent_cap.is_finite() {
            return Err(Error::invalid("clamp_eps must be positive and the exponent cap finite"));
        }
        Ok(())
    }

    fn step_scale(&self, iter: usize) -> f64 {
        if self.decay {
            1.0 - iter as f64 / self.total_iterations.max(1) as f64
        } else {
            1.0
        }
    }
}

/// Ground truth used only for diagnostics; no learner reads it.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalContext {
    pub mdp: TabularMdp,
    pub d_exp: SaTable,
    pub reward: Vec<f64>,
    pub horizon: usize,
}

impl EvalContext {
    fn metrics(&self, policy: &TabularPolicy) -> Result<(f64, f64)> {
        Ok((
            occupancy_kl(&self.mdp, policy, &self.d_exp)?,
            expected_return(&self.mdp, policy, &self.reward, self.horizon)?,
        ))
    }
}

/// A table of diagnostics, one row per logging interval. Missing values are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Diagnostics {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn last(&self, name: &str) -> Option<f64> {
        self.column(name)?.last().copied()
    }

    pub fn to_csv(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|v| if v.is_nan() { String::new() } else { v.to_string() })
                .collect();
            writeln!(f, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub policy: PolicyModel,
    pub diagnostics: Diagnostics,
    /// `(iteration, reason)` of the first non-finite quantity.
    pub divergence: Option<(usize, String)>,
    /// Fewer than two distinct expert pairs, or nothing survived support closure.
    pub degenerate_support: bool,
    /// Expert transitions removed by [`close_support`].
    pub dropped_samples: usize,
    pub dual: Option<DualParams>,
}

/// Where the saddle-point loss gets its expectations.
#[derive(Debug, Clone, Copy)]
pub enum DiceSource<'a> {
    /// Expert transitions: single-sample residuals, initial states drawn from
    /// expert states.
    Samples(&'a TransitionDataset),
    /// Exact expectations under `mdp` and `d_exp`, initial states weighted by
    /// the expert state marginal.
    Population { mdp: &'a TabularMdp, d_exp: &'a SaTable },
}

struct Sampler {
    full: Option<DiceTerms>,
    triples: Vec<(usize, usize, usize)>,
    init_states: Vec<usize>,
    batch: usize,
    degenerate: bool,
    dropped: usize,
}

impl Sampler {
    fn new(source: DiceSource<'_>, batch: usize) -> Result<Self> {
        match source {
            DiceSource::Population { mdp, d_exp } => Ok(Self {
                full: Some(DiceTerms::population(mdp, d_exp, &d_exp.state_marginal())?),
                triples: Vec::new(),
                init_states: Vec::new(),
                batch,
                degenerate: d_exp.values().iter().filter(|&&w| w > 0.0).count() < 2,
                dropped: 0,
            }),
            DiceSource::Samples(ds) => {
                if ds.is_empty() {
                    return Err(Error::invalid("expert dataset is empty"));
                }
                let all = ds.index_triples()?;
                let (kept, dropped) = close_support(&all);
                let (triples, closure_failed) = if kept.is_empty() { (all, true) } else { (kept, false) };
                let pairs: HashSet<(usize, usize)> = triples.iter().map(|t| (t.0, t.1)).collect();
                let degenerate = closure_failed || pairs.len() < 2;
                if degenerate {
                    log::warn!("expert data has degenerate support ({} distinct pairs)", pairs.len());
                }
                let init_states: Vec<usize> = triples.iter().map(|t| t.0).collect();
                let full = if batch >= triples.len() {
                    Some(DiceTerms::from_samples(&triples, &init_states)?)
                } else {
                    None
                };
                Ok(Self {
                    full,
                    triples,
                    init_states,
                    batch,
                    degenerate,
                    dropped: if closure_failed { 0 } else { dropped },
                })
            }
        }
    }

    fn draw(&self, rng: &mut Rng) -> Result<Cow<'_, DiceTerms>> {
        if let Some(full) = &self.full {
            return Ok(Cow::Borrowed(full));
        }
        let triples: Vec<_> = (0..self.batch)
            .map(|_| self.triples[rng.random_range(0..self.triples.len())])
            .collect();
        let init: Vec<_> = (0..self.batch)
            .map(|_| self.init_states[rng.random_range(0..self.init_states.len())])
            .collect();
        Ok(Cow::Owned(DiceTerms::from_samples(&triples, &init)?))
    }
}

fn finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

struct LoopOutcome {
    diagnostics: Diagnostics,
    divergence: Option<(usize, String)>,
}

fn run_alternating<D: TableDual>(
    dual: &mut D,
    policy: &mut PolicyModel,
    sampler: &Sampler,
    config: &IlConfig,
    ctx: Option<&EvalContext>,
) -> Result<LoopOutcome> {
    let spec = kl_divergence_spec(config.divergence);
    let mut rng = rng_from_seed(derive_seed(config.seed, "imitate"));
    let mut dual_params = dual.params();
    let mut dual_opt = OptimizerState::adaptive(config.dual_step_size, dual_params.len())
        .with_scales(dual.step_scales(config.feature_step_scale))?;
    let mut policy_opt = OptimizerState::adaptive(config.policy_step_size, policy.num_params());
    let with_gp = config.gradient_penalty_weight > 0.0;
    let mut columns = vec![
        "iter",
        "dice_loss",
        "policy_objective",
        "exact_kl",
        "mean_return",
        "cap_activations",
        "clamp_activations",
    ];
    if with_gp {
        columns.push("gradient_penalty");
    }
    let mut diagnostics = Diagnostics::new(&columns);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut divergence = None;
    let (mut cap_count, mut clamp_count) = (0usize, 0usize);
    let mut penalty_sum = 0.0;

    'outer: for iter in 0..config.total_iterations {
        let scale = config.step_scale(iter);
        dual_opt.step_size = config.dual_step_size * scale;
        policy_opt.step_size = config.policy_step_size * scale;
        let pi = policy.to_tabular()?;
        let mut loss_sum = 0.0;
        for _ in 0..config.dual_steps_per_policy_step {
            let terms = sampler.draw(&mut rng)?;
            let (q, clamped) = dual.q_table();
            clamp_count += clamped;
            let mut ev = evaluate_terms(&terms, &q, &pi, config.gamma, &spec, config.exponent_cap);
            cap_count += ev.cap_activations;
            if with_gp {
                penalty_sum += gradient_penalty(&terms, &q, &pi, config.gradient_penalty_weight, &mut ev.dq);
            }
            let grad = dual.backprop(&ev.dq);
            if !ev.loss.is_finite() || !finite(&grad) {
                divergence = Some((iter, "non-finite dual loss or gradient".to_string()));
                break 'outer;
            }
            let mut next = dual_params.clone();
            dual_opt.apply(&mut next, &grad)?;
            if !finite(&next) {
                divergence = Some((iter, "non-finite dual parameters".to_string()));
                break 'outer;
            }
            dual.set_params(&next)?;
            dual_params = next;
            loss_sum += ev.loss;
        }
        let terms = sampler.draw(&mut rng)?;
        let (q, _) = dual.q_table();
        let ev = evaluate_terms(&terms, &q, &pi, config.gamma, &spec, config.exponent_cap);
        let ascent: Vec<f64> = policy
            .backprop_logits(&ev.logit_gradient(&q, &pi))?
            .into_iter()
            .map(|g| -g)
            .collect();
        let mut next = policy.params().to_vec();
        policy_opt.apply(&mut next, &ascent)?;
        if !ev.loss.is_finite() || !finite(&next) {
            divergence = Some((iter, "non-finite policy update".to_string()));
            break;
        }
        policy.set_params(&next)?;

        if iter % config.log_every == 0 || iter + 1 == config.total_iterations {
            let (kl, ret) = match ctx {
                Some(c) => c.metrics(&policy.to_tabular()?)?,
                None => (f64::NAN, f64::NAN),
            };
            if !kl.is_nan() && best.as_ref().is_none_or(|(b, _)| kl < *b) {
                best = Some((kl, policy.params().to_vec()));
            }
            let mut row = vec![
                iter as f64,
                loss_sum / config.dual_steps_per_policy_step as f64,
                ev.loss,
                kl,
                ret,
                cap_count as f64,
                clamp_count as f64,
            ];
            if with_gp {
                row.push(penalty_sum);
            }
            diagnostics.rows.push(row);
            cap_count = 0;
            clamp_count = 0;
            penalty_sum = 0.0;
        }
    }
    if let Some((iter, reason)) = &divergence {
        log::warn!("imitation diverged at iteration {iter}: {reason}");
        if let Some((_, params)) = best {
            policy.set_params(&params)?;
        }
    }
    Ok(LoopOutcome {
        diagnostics,
        divergence,
    })
}

/// Alternates dual minimization over `(ω, θ, ξ)` with policy ascent; `φ` and
/// `μ` are read once and never modified.
pub fn train_repr_valuedice(
    repr: &DynamicsRepresentation,
    source: DiceSource<'_>,
    config: &IlConfig,
    ctx: Option<&EvalContext>,
) -> Result<TrainOutput> {
    config.validate()?;
    let mut params = DualParams::zeros(repr, config.gamma)?;
    params.clamp_eps = config.clamp_eps;
    params.exponent_cap = config.exponent_cap;
    let mut dual = ReprTableDual::new(repr, params)?;
    let phi = repr.phi_table()?;
    let num_actions = phi.rows() / repr.mu_table()?.rows();
    let mut policy = match config.policy {
        PolicyChoice::Features => PolicyModel::feature_softmax(phi, num_actions)?,
        PolicyChoice::Tabular => PolicyModel::tabular_softmax(phi.rows() / num_actions, num_actions),
    };
    let sampler = Sampler::new(source, config.batch_size)?;
    let outcome = run_alternating(&mut dual, &mut policy, &sampler, config, ctx)?;
    Ok(TrainOutput {
        policy,
        diagnostics: outcome.diagnostics,
        divergence: outcome.divergence,
        degenerate_support: sampler.degenerate,
        dropped_samples: sampler.dropped,
        dual: Some(dual.dual),
    })
}

/// The same alternation with an unconstrained `Q` table and a tabular
/// softmax policy.
pub fn train_valuedice(
    source: DiceSource<'_>,
    num_states: usize,
    num_actions: usize,
    config: &IlConfig,
    ctx: Option<&EvalContext>,
) -> Result<TrainOutput> {
    config.validate()?;
    let mut dual = FreeTableDual {
        q: SaTable::zeros(num_states, num_actions),
    };
    let mut policy = PolicyModel::tabular_softmax(num_states, num_actions);
    let sampler = Sampler::new(source, config.batch_size)?;
    let outcome = run_alternating(&mut dual, &mut policy, &sampler, config, ctx)?;
    Ok(TrainOutput {
        policy,
        diagnostics: outcome.diagnostics,
        divergence: outcome.divergence,
        degenerate_support: sampler.degenerate,
        dropped_samples: sampler.dropped,
        dual: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualFit {
    pub dual: DualParams,
    pub q: SaTable,
    /// Loss at every logging interval.
    pub losses: Vec<f64>,
    pub cap_activations: usize,
    pub clamp_activations: usize,
    /// Expert triples used after support closure (empty in population mode).
    pub triples: Vec<(usize, usize, usize)>,
}

/// Minimizes the saddle-point loss over `(ω, θ, ξ)` with the policy held fixed.
pub fn fit_dual(
    repr: &DynamicsRepresentation,
    policy: &TabularPolicy,
    source: DiceSource<'_>,
    config: &IlConfig,
) -> Result<DualFit> {
    config.validate()?;
    let spec = kl_divergence_spec(config.divergence);
    let mut params = DualParams::zeros(repr, config.gamma)?;
    params.clamp_eps = config.clamp_eps;
    params.exponent_cap = config.exponent_cap;
    let mut dual = ReprTableDual::new(repr, params)?;
    let sampler = Sampler::new(source, config.batch_size)?;
    let mut rng = rng_from_seed(derive_seed(config.seed, "dual"));
    let mut values = dual.params();
    let mut opt = OptimizerState::adaptive(config.dual_step_size, values.len())
        .with_scales(dual.step_scales(config.feature_step_scale))?;
    let mut losses = Vec::new();
    let (mut caps, mut clamps) = (0, 0);
    for iter in 0..config.total_iterations {
        opt.step_size = config.dual_step_size * config.step_scale(iter);
        let terms = sampler.draw(&mut rng)?;
        let (q, clamped) = dual.q_table();
        clamps += clamped;
        let ev = evaluate_terms(&terms, &q, policy, config.gamma, &spec, config.exponent_cap);
        caps += ev.cap_activations;
        let grad = dual.backprop(&ev.dq);
        if !ev.loss.is_finite() || !finite(&grad) {
            return Err(Error::Divergence {
                step: iter,
                reason: "non-finite dual loss".into(),
            });
        }
        if iter % config.log_every == 0 || iter + 1 == config.total_iterations {
            losses.push(ev.loss);
        }
        opt.apply(&mut values, &grad)?;
        dual.set_params(&values)?;
    }
    let (q, _) = dual.q_table();
    Ok(DualFit {
        dual: dual.dual,
        q,
        losses,
        cap_activations: caps,
        clamp_activations: clamps,
        triples: sampler.triples,
    })
}

enum BcData<'a> {
    Discrete(Vec<(usize, usize, f64)>),
    Continuous(&'a TransitionDataset),
}

fn run_bc(
    data: BcData<'_>,
    mut policy: PolicyModel,
    config: &IlConfig,
    ctx: Option<&EvalContext>,
) -> Result<TrainOutput> {
    config.validate()?;
    let mut rng = rng_from_seed(derive_seed(config.seed, "bc"));
    let n = match &data {
        BcData::Discrete(v) => v.len(),
        BcData::Continuous(ds) => ds.len(),
    };
    if n == 0 {
        return Err(Error::invalid("behavior cloning needs a nonempty dataset"));
    }
    let full = config.batch_size >= n;
    let mut opt = OptimizerState::adaptive(config.policy_step_size, policy.num_params());
    let mut diagnostics = Diagnostics::new(&["iter", "log_likelihood", "exact_kl", "mean_return"]);
    let mut divergence = None;
    for iter in 0..config.total_iterations {
        opt.step_size = config.policy_step_size * config.step_scale(iter);
        let idx: Vec<usize> = if full {
            (0..n).collect()
        } else {
            (0..config.batch_size).map(|_| rng.random_range(0..n)).collect()
        };
        let mut grad = vec![0.0; policy.num_params()];
        let mut ll = 0.0;
        let mut total_w = 0.0;
        for &i in &idx {
            let mut g = vec![0.0; policy.num_params()];
            let (lp, w) = match &data {
                BcData::Discrete(v) => {
                    let (s, a, w) = v[i];
                    (policy.log_prob_discrete(s, a, &mut g)?, if full { w } else { 1.0 })
                }
                BcData::Continuous(ds) => {
                    let t = &ds.samples[i];
                    (policy.log_prob_gaussian(&t.state, &t.action, &mut g)?, 1.0)
                }
            };
            ll += w * lp;
            total_w += w;
            for (acc, gi) in grad.iter_mut().zip(&g) {
                *acc -= w * gi;
            }
        }
        ll /= total_w;
        for g in grad.iter_mut() {
            *g /= total_w;
        }
        let mut next = policy.params().to_vec();
        opt.apply(&mut next, &grad)?;
        if !ll.is_finite() || !finite(&next) {
            divergence = Some((iter, "non-finite log-likelihood".to_string()));
            break;
        }
        policy.set_params(&next)?;
        if iter % config.log_every == 0 || iter + 1 == config.total_iterations {
            let (kl, ret) = match (ctx, policy.is_discrete()) {
                (Some(c), true) => c.metrics(&policy.to_tabular()?)?,
                _ => (f64::NAN, f64::NAN),
            };
            diagnostics.rows.push(vec![iter as f64, ll, kl, ret]);
        }
    }
    Ok(TrainOutput {
        policy,
        diagnostics,
        divergence,
        degenerate_support: false,
        dropped_samples: 0,
        dual: None,
    })
}

/// Maximum likelihood of the expert actions, starting from `policy`.
pub fn train_bc(
    expert: &TransitionDataset,
    policy: PolicyModel,
    config: &IlConfig,
    ctx: Option<&EvalContext>,
) -> Result<TrainOutput> {
    if expert.is_empty() {
        return Err(Error::invalid("behavior cloning needs a nonempty dataset"));
    }
    let data = if policy.kind() == PolicyKind::Gaussian {
        BcData::Continuous(expert)
    } else {
        let w = 1.0 / expert.len() as f64;
        BcData::Discrete(
            expert
                .samples
                .iter()
                .map(|t| Ok((index_of(&t.state)?, index_of(&t.action)?, w)))
                .collect::<Result<_>>()?,
        )
    };
    run_bc(data, policy, config, ctx)
}

/// Weighted maximum likelihood over every pair of `d_exp` (full-batch).
pub fn train_bc_population(
    d_exp: &SaTable,
    policy: PolicyModel,
    config: &IlConfig,
    ctx: Option<&EvalContext>,
) -> Result<TrainOutput> {
    let na = d_exp.num_actions();
    let pairs: Vec<(usize, usize, f64)> = d_exp
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(i, &w)| (i / na, i % na, w))
        .collect();
    let config = IlConfig {
        batch_size: pairs.len().max(1),
        ..config.clone()
    };
    run_bc(BcData::Discrete(pairs), policy, &config, ctx)
}
