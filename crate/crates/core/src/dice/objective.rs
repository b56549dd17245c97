//! The saddle-point loss as [`Objective`]s over each player's parameters.

use crate::approx::Objective;
use crate::divergence::DivergenceSpec;
use crate::error::Result;
use crate::mdp::{SaTable, TabularPolicy};
use crate::repr::DynamicsRepresentation;

use super::engine::{evaluate_terms, FreeTableDual, ReprTableDual, TableDual};
use super::{gradient_penalty, DiceTerms, DualParams, PolicyModel};

/// Loss over the flattened `(ω, θ, ξ)` of `base`, policy held fixed. A
/// positive `penalty_weight` adds the gradient penalty.
pub struct ReprDualObjective<'a> {
    pub repr: &'a DynamicsRepresentation,
    pub base: DualParams,
    pub terms: &'a DiceTerms,
    pub policy: &'a TabularPolicy,
    pub spec: &'a DivergenceSpec,
    pub penalty_weight: f64,
}

impl Objective for ReprDualObjective<'_> {
    fn num_params(&self) -> usize {
        self.base.num_params()
    }

    fn value_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut dual = self.base.clone();
        dual.set_from(params)?;
        let (gamma, cap) = (dual.gamma, dual.exponent_cap);
        let table = ReprTableDual::new(self.repr, dual)?;
        table_loss(
            &table,
            self.terms,
            self.policy,
            self.spec,
            gamma,
            cap,
            self.penalty_weight,
        )
    }
}

/// Loss over an unconstrained `Q` table (row-major `s·A + a`).
pub struct TableDualObjective<'a> {
    pub terms: &'a DiceTerms,
    pub policy: &'a TabularPolicy,
    pub gamma: f64,
    pub spec: &'a DivergenceSpec,
    pub exponent_cap: f64,
    pub penalty_weight: f64,
}

impl Objective for TableDualObjective<'_> {
    fn num_params(&self) -> usize {
        self.policy.num_states() * self.policy.num_actions()
    }

    fn value_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let q = SaTable::from_vec(self.policy.num_states(), self.policy.num_actions(), params.to_vec())?;
        let table = FreeTableDual { q };
        table_loss(
            &table,
            self.terms,
            self.policy,
            self.spec,
            self.gamma,
            self.exponent_cap,
            self.penalty_weight,
        )
    }
}

fn table_loss(
    table: &impl TableDual,
    terms: &DiceTerms,
    policy: &TabularPolicy,
    spec: &DivergenceSpec,
    gamma: f64,
    cap: f64,
    penalty_weight: f64,
) -> Result<(f64, Vec<f64>)> {
    let (q, _) = table.q_table();
    let ev = evaluate_terms(terms, &q, policy, gamma, spec, cap);
    let mut dq = ev.dq;
    let gp = if penalty_weight > 0.0 {
        gradient_penalty(terms, &q, policy, penalty_weight, &mut dq)
    } else {
        0.0
    };
    Ok((ev.loss + gp, table.backprop(&dq)))
}

/// Loss over the logits of a tabular softmax policy, `Q` held fixed.
pub struct PolicyLogitObjective<'a> {
    pub terms: &'a DiceTerms,
    pub q: &'a SaTable,
    pub gamma: f64,
    pub spec: &'a DivergenceSpec,
    pub exponent_cap: f64,
}

impl Objective for PolicyLogitObjective<'_> {
    fn num_params(&self) -> usize {
        self.q.values().len()
    }

    fn value_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut model = PolicyModel::tabular_softmax(self.q.num_states(), self.q.num_actions());
        model.set_params(params)?;
        let pi = model.to_tabular()?;
        let ev = evaluate_terms(self.terms, self.q, &pi, self.gamma, self.spec, self.exponent_cap);
        Ok((ev.loss, model.backprop_logits(&ev.logit_gradient(self.q, &pi))?))
    }
}
