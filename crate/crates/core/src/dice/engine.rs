//! Whole-table evaluation of the saddle-point loss on discrete problems.
//!
//! The loss is written as weighted initial-state terms and weighted
//! expert terms, each expert term carrying its own next-state distribution
//! (one atom when sampled, the true row when exact). Gradients come back as
//! `∂L/∂Q` over the full table plus `∂L/∂V` per state.

use std::collections::HashSet;

use crate::divergence::DivergenceSpec;
use crate::error::{Error, Result};
use crate::mdp::{state_values, SaTable, TabularMdp, TabularPolicy};
use crate::oracle::{dot, FeatureTable};
use crate::repr::DynamicsRepresentation;

use super::DualParams;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertTerm {
    pub state: usize,
    pub action: usize,
    pub next: Vec<(usize, f64)>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiceTerms {
    pub init: Vec<(usize, f64)>,
    pub expert: Vec<ExpertTerm>,
}

impl DiceTerms {
    /// Uniform weights over sampled triples and sampled initial states.
    pub fn from_samples(triples: &[(usize, usize, usize)], init_states: &[usize]) -> Result<Self> {
        if triples.is_empty() || init_states.is_empty() {
            return Err(Error::invalid("dice batches must be nonempty"));
        }
        let w = 1.0 / triples.len() as f64;
        let wi = 1.0 / init_states.len() as f64;
        Ok(Self {
            init: init_states.iter().map(|&s| (s, wi)).collect(),
            expert: triples
                .iter()
                .map(|&(s, a, n)| ExpertTerm {
                    state: s,
                    action: a,
                    next: vec![(n, 1.0)],
                    weight: w,
                })
                .collect(),
        })
    }

    /// Exact expectations: expert pairs weighted by `d_exp` with their true
    /// transition rows, initial states weighted by `init`.
    pub fn population(mdp: &TabularMdp, d_exp: &SaTable, init: &[f64]) -> Result<Self> {
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        if d_exp.num_states() != ns || d_exp.num_actions() != na || init.len() != ns {
            return Err(Error::shape("population terms"));
        }
        let mut expert = Vec::new();
        for s in 0..ns {
            for a in 0..na {
                let w = d_exp.get(s, a);
                if w > 0.0 {
                    expert.push(ExpertTerm {
                        state: s,
                        action: a,
                        next: mdp
                            .row(s, a)
                            .iter()
                            .enumerate()
                            .filter(|(_, &p)| p > 0.0)
                            .map(|(n, &p)| (n, p))
                            .collect(),
                        weight: w,
                    });
                }
            }
        }
        let init: Vec<(usize, f64)> = init
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(s, &w)| (s, w))
            .collect();
        if expert.is_empty() || init.is_empty() {
            return Err(Error::invalid("population terms are empty"));
        }
        Ok(Self { init, expert })
    }
}

/// Drops triples whose next state never occurs as a current state, repeating
/// until every remaining next state is also a current state. Returns the kept
/// triples and the number dropped.
pub fn close_support(triples: &[(usize, usize, usize)]) -> (Vec<(usize, usize, usize)>, usize) {
    let mut kept = triples.to_vec();
    loop {
        let states: HashSet<usize> = kept.iter().map(|t| t.0).collect();
        let before = kept.len();
        kept.retain(|t| states.contains(&t.2));
        if kept.len() == before {
            break;
        }
    }
    let dropped = triples.len() - kept.len();
    (kept, dropped)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiceEval {
    pub loss: f64,
    pub cap_activations: usize,
    /// Total `∂L/∂Q`, including the path through `V = Σ π Q`.
    pub dq: SaTable,
    /// `∂L/∂V(s)`.
    pub dv: Vec<f64>,
}

impl DiceEval {
    /// `∂L/∂logit(s,b) = ∂L/∂V(s) · π(b|s) (Q(s,b) - V(s))` for softmax policies.
    pub fn logit_gradient(&self, q: &SaTable, policy: &TabularPolicy) -> SaTable {
        let v = state_values(policy, q);
        SaTable::from_fn(q.num_states(), q.num_actions(), |s, b| {
            self.dv[s] * policy.prob(s, b) * (q.get(s, b) - v[s])
        })
    }
}

pub(crate) fn evaluate_terms(
    terms: &DiceTerms,
    q: &SaTable,
    policy: &TabularPolicy,
    gamma: f64,
    spec: &DivergenceSpec,
    cap: f64,
) -> DiceEval {
    let (ns, na) = (q.num_states(), q.num_actions());
    let v = state_values(policy, q);
    let mut dv = vec![0.0; ns];
    let mut dq = SaTable::zeros(ns, na);
    let mut loss = 0.0;
    let mut cap_activations = 0;
    for &(s, w) in &terms.init {
        loss += (1.0 - gamma) * w * v[s];
        dv[s] += (1.0 - gamma) * w;
    }
    for t in &terms.expert {
        let next: f64 = t.next.iter().map(|&(n, p)| p * v[n]).sum();
        let mut y = gamma * next - q.get(t.state, t.action);
        let g = if y > cap {
            cap_activations += 1;
            y = cap;
            0.0
        } else {
            spec.derivative_inverse(y)
        };
        loss += t.weight * spec.conjugate(y);
        let cell = dq.get(t.state, t.action);
        dq.set(t.state, t.action, cell - t.weight * g);
        for &(n, p) in &t.next {
            dv[n] += t.weight * g * gamma * p;
        }
    }
    for s in 0..ns {
        if dv[s] != 0.0 {
            for a in 0..na {
                let cell = dq.get(s, a);
                dq.set(s, a, cell + dv[s] * policy.prob(s, a));
            }
        }
    }
    DiceEval {
        loss,
        cap_activations,
        dq,
        dv,
    }
}

/// One-sided Lipschitz penalty on one-hot pair inputs: for each expert pair
/// `(s,a)` and every other action `b`, weighted by `π(b|s)`,
/// `max(0, |Q(s,a) - Q(s,b)|/√2 - 1)²`. Adds its gradient into `dq` and
/// returns the penalty value.
pub fn gradient_penalty(terms: &DiceTerms, q: &SaTable, policy: &TabularPolicy, weight: f64, dq: &mut SaTable) -> f64 {
    let na = q.num_actions();
    let root2 = std::f64::consts::SQRT_2;
    let mut total = 0.0;
    for t in &terms.expert {
        for b in (0..na).filter(|&b| b != t.action) {
            let gap = (q.get(t.state, t.action) - q.get(t.state, b)) / root2;
            let excess = gap.abs() - 1.0;
            if excess <= 0.0 {
                continue;
            }
            let c = t.weight * policy.prob(t.state, b);
            total += c * excess * excess;
            let g = weight * c * 2.0 * excess * gap.signum() / root2;
            let (qa, qb) = (dq.get(t.state, t.action), dq.get(t.state, b));
            dq.set(t.state, t.action, qa + g);
            dq.set(t.state, b, qb - g);
        }
    }
    weight * total
}

/// A dual variable over a discrete problem that can produce its full `Q`
/// table and pull table gradients back to its parameters.
pub(crate) trait TableDual {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, values: &[f64]) -> Result<()>;
    /// Per-parameter optimizer step multipliers.
    fn step_scales(&self, _feature_scale: f64) -> Vec<f64> {
        vec![1.0; self.params().len()]
    }
    /// The table and the number of clamped log arguments.
    fn q_table(&self) -> (SaTable, usize);
    fn backprop(&self, dq: &SaTable) -> Vec<f64>;
}

/// The representation-constrained dual over cached `φ`, `μ` tables.
pub(crate) struct ReprTableDual {
    pub dual: DualParams,
    phi: FeatureTable,
    mu: FeatureTable,
    num_actions: usize,
}

impl ReprTableDual {
    pub fn new(repr: &DynamicsRepresentation, dual: DualParams) -> Result<Self> {
        dual.check(repr)?;
        let phi = repr.phi_table()?;
        let mu = repr.mu_table()?;
        let num_actions = phi.rows() / mu.rows();
        Ok(Self {
            dual,
            phi,
            mu,
            num_actions,
        })
    }

    fn log_arg(&self, s: usize) -> f64 {
        dot(self.mu.row(s), &self.dual.theta) + 1.0 - self.dual.gamma
    }
}

impl TableDual for ReprTableDual {
    fn params(&self) -> Vec<f64> {
        self.dual.to_vec()
    }

    fn set_params(&mut self, values: &[f64]) -> Result<()> {
        self.dual.set_from(values)
    }

    /// ω and θ steps are divided by the largest feature row L1 norm (and θ's
    /// additionally by the log argument's resting value `1 - γ`) so a unit
    /// step moves any `Q` entry by about as much as a unit step on `ξ`.
    fn step_scales(&self, feature_scale: f64) -> Vec<f64> {
        let k = self.dual.omega.len();
        let widest = |t: &FeatureTable| {
            (0..t.rows())
                .map(|i| t.row(i).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let (phi_norm, mu_norm) = (widest(&self.phi), widest(&self.mu));
        let omega_scale = if phi_norm > 0.0 {
            feature_scale / phi_norm
        } else {
            feature_scale
        };
        let theta_scale = if mu_norm > 0.0 {
            feature_scale * (1.0 - self.dual.gamma) / mu_norm
        } else {
            feature_scale
        };
        let mut scales = vec![omega_scale; k];
        scales.resize(2 * k, theta_scale);
        scales.resize(2 * k + self.dual.xi.num_params(), 1.0);
        scales
    }

    fn q_table(&self) -> (SaTable, usize) {
        let (ns, na) = (self.mu.rows(), self.num_actions);
        let xi = self.dual.xi.params().values();
        let mut clamped = 0;
        let mut q = SaTable::zeros(ns, na);
        for s in 0..ns {
            let arg = self.log_arg(s);
            if arg < self.dual.clamp_eps {
                clamped += na;
            }
            let log_term = arg.max(self.dual.clamp_eps).ln();
            for a in 0..na {
                let i = s * na + a;
                q.set(s, a, xi[i] + dot(self.phi.row(i), &self.dual.omega) - log_term);
            }
        }
        (q, clamped)
    }

    fn backprop(&self, dq: &SaTable) -> Vec<f64> {
        let k = self.dual.omega.len();
        let na = self.num_actions;
        let mut g = vec![0.0; 2 * k + self.dual.xi.num_params()];
        for s in 0..self.mu.rows() {
            let arg = self.log_arg(s);
            let mut row_total = 0.0;
            for a in 0..na {
                let i = s * na + a;
                let d = dq.get(s, a);
                if d == 0.0 {
                    continue;
                }
                row_total += d;
                for (gj, fj) in g[..k].iter_mut().zip(self.phi.row(i)) {
                    *gj += d * fj;
                }
                g[2 * k + i] += d;
            }
            if row_total != 0.0 && arg >= self.dual.clamp_eps {
                for (gj, mj) in g[k..2 * k].iter_mut().zip(self.mu.row(s)) {
                    *gj -= row_total * mj / arg;
                }
            }
        }
        g
    }
}

/// An unconstrained table `Q(s,a)`.
pub(crate) struct FreeTableDual {
    pub q: SaTable,
}

impl TableDual for FreeTableDual {
    fn params(&self) -> Vec<f64> {
        self.q.values().to_vec()
    }

    fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.q.values().len() {
            return Err(Error::shape("table dual length"));
        }
        self.q.values_mut().copy_from_slice(values);
        Ok(())
    }

    fn q_table(&self) -> (SaTable, usize) {
        (self.q.clone(), 0)
    }

    fn backprop(&self, dq: &SaTable) -> Vec<f64> {
        dq.values().to_vec()
    }
}
