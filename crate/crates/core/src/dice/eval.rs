//! Policy evaluation against the environment's diagnostic reward and exact
//! occupancy divergences, plus density-ratio readouts from a fitted dual.

use crate::dataset::sample_trajectories;
use crate::dataset::SourceTag;
use crate::divergence::{f_divergence, kl_divergence_spec, DivergenceSpec, KlVariant};
use crate::error::{Error, Result};
use crate::mdp::{state_values, SaTable, TabularMdp, TabularPolicy};
use crate::oracle::exact_occupancy;

use super::PolicyModel;

/// Expected undiscounted return of `horizon` steps from `ρ`, where the reward
/// is collected on every visited state.
pub fn expected_return(mdp: &TabularMdp, policy: &TabularPolicy, reward: &[f64], horizon: usize) -> Result<f64> {
    policy.check_compatible(mdp)?;
    if reward.len() != mdp.num_states() {
        return Err(Error::shape("reward length"));
    }
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut v = vec![0.0; ns];
    for _ in 0..horizon {
        let next: Vec<f64> = (0..ns)
            .map(|s| {
                let cont: f64 = (0..na)
                    .map(|a| {
                        let p = policy.prob(s, a);
                        if p == 0.0 {
                            0.0
                        } else {
                            p * mdp.row(s, a).iter().zip(&v).map(|(t, x)| t * x).sum::<f64>()
                        }
                    })
                    .sum();
                reward[s] + cont
            })
            .collect();
        v = next;
    }
    Ok(mdp.initial().iter().zip(&v).map(|(r, x)| r * x).sum())
}

/// `KL(dπ ‖ d_exp)`, infinite when `dπ` leaves the expert support.
pub fn occupancy_kl(mdp: &TabularMdp, policy: &TabularPolicy, d_exp: &SaTable) -> Result<f64> {
    let d = exact_occupancy(mdp, policy)?;
    match f_divergence(d.table(), d_exp, &kl_divergence_spec(KlVariant::Normalized)) {
        Ok(v) => Ok(v.max(0.0)),
        Err(Error::SupportViolation { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMetrics {
    /// One entry per rollout.
    pub returns: Vec<f64>,
    pub mean_return: f64,
    pub std_return: f64,
    /// The same return computed exactly by dynamic programming.
    pub exact_return: f64,
    pub exact_kl: f64,
}

/// Monte Carlo rollouts under the diagnostic reward plus the exact return and
/// occupancy divergence to `d_exp`.
pub fn evaluate_policy(
    mdp: &TabularMdp,
    policy: &PolicyModel,
    reward: &[f64],
    d_exp: &SaTable,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<PolicyMetrics> {
    let table = policy.to_tabular()?;
    if reward.len() != mdp.num_states() {
        return Err(Error::shape("reward length"));
    }
    let mut returns = Vec::with_capacity(episodes);
    if episodes > 0 {
        let rollouts = sample_trajectories(mdp, &table, episodes, horizon, seed, "eval", SourceTag::General)?;
        for episode in rollouts.samples.chunks(horizon) {
            returns.push(
                episode
                    .iter()
                    .map(|t| reward[t.indices().map(|i| i.0).unwrap_or(0)])
                    .sum(),
            );
        }
    }
    let n = returns.len() as f64;
    let mean = if returns.is_empty() {
        0.0
    } else {
        returns.iter().sum::<f64>() / n
    };
    let std = if returns.is_empty() {
        0.0
    } else {
        (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt()
    };
    Ok(PolicyMetrics {
        mean_return: mean,
        std_return: std,
        exact_return: expected_return(mdp, &table, reward, horizon)?,
        exact_kl: occupancy_kl(mdp, &table, d_exp)?,
        returns,
    })
}

/// `ν̂(s,a) = (f')⁻¹(γ Σ_{s'} P(s'|s,a) V(s') - Q(s,a))` on every pair.
pub fn population_ratio_readout(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    q: &SaTable,
    gamma: f64,
    spec: &DivergenceSpec,
) -> SaTable {
    let v = state_values(policy, q);
    SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        let next: f64 = mdp.row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
        spec.derivative_inverse(gamma * next - q.get(s, a))
    })
}

/// Per pair, the mean over its samples of `(f')⁻¹(γ V(s'_i) - Q(s,a))`;
/// zero on pairs without samples.
pub fn sample_ratio_readout(
    triples: &[(usize, usize, usize)],
    policy: &TabularPolicy,
    q: &SaTable,
    gamma: f64,
    spec: &DivergenceSpec,
) -> SaTable {
    let v = state_values(policy, q);
    let (ns, na) = (q.num_states(), q.num_actions());
    let mut sum = SaTable::zeros(ns, na);
    let mut count = SaTable::zeros(ns, na);
    for &(s, a, n) in triples {
        let r = spec.derivative_inverse(gamma * v[n] - q.get(s, a));
        sum.set(s, a, sum.get(s, a) + r);
        count.set(s, a, count.get(s, a) + 1.0);
    }
    SaTable::from_fn(ns, na, |s, a| {
        let c = count.get(s, a);
        if c > 0.0 {
            sum.get(s, a) / c
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioComparison {
    /// `Σ w |ν̂ - ν*| / Σ w ν*` over pairs with `w > 0`.
    pub relative_l1: f64,
    pub max_abs: f64,
}

impl RatioComparison {
    pub fn new(estimate: &SaTable, oracle: &SaTable, weights: &SaTable) -> Self {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut max_abs: f64 = 0.0;
        for ((e, o), w) in estimate.values().iter().zip(oracle.values()).zip(weights.values()) {
            if *w > 0.0 {
                num += w * (e - o).abs();
                den += w * o;
                max_abs = max_abs.max((e - o).abs());
            }
        }
        Self {
            relative_l1: num / den,
            max_abs,
        }
    }
}
