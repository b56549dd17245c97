//! Finite MDPs, tabular policies, state-action tables and the transition
//! operators that act on them.

use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Tolerance used when checking stochasticity of constructed objects.
pub const CONSTRUCT_TOL: f64 = 1e-12;
/// Tolerance used when checking stochasticity of linear-algebra results.
pub const SOLVE_TOL: f64 = 1e-10;

/// A finite MDP with transition tensor `P(s'|s,a)` stored s-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    transition: Vec<f64>,
    initial: Vec<f64>,
    gamma: f64,
}

impl TabularMdp {
    /// Builds an MDP, checking only shapes. Use [`TabularMdp::validate`] for the
    /// probabilistic invariants.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        initial: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::shape("MDP needs at least one state and one action"));
        }
        if transition.len() != num_states * num_actions * num_states {
            return Err(Error::shape(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                num_states * num_actions * num_states
            )));
        }
        if initial.len() != num_states {
            return Err(Error::shape(format!(
                "initial distribution has {} entries, expected {num_states}",
                initial.len()
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            transition,
            initial,
            gamma,
        })
    }

    /// Like [`TabularMdp::new`] but also rejects any invariant violation.
    pub fn new_validated(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        initial: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let mdp = Self::new(num_states, num_actions, transition, initial, gamma)?;
        let report = mdp.validate();
        if !report.is_pass() {
            return Err(Error::invalid(report.to_string()));
        }
        Ok(mdp)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Same dynamics, different discount.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self { gamma, ..self.clone() }
    }

    /// Same dynamics, different initial distribution.
    pub fn with_initial(&self, initial: Vec<f64>) -> Result<Self> {
        Self::new(
            self.num_states,
            self.num_actions,
            self.transition.clone(),
            initial,
            self.gamma,
        )
    }

    /// `P(·|s,a)` as a slice of length `num_states`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a)[next]
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            violations.push(Violation::DiscountOutOfRange { gamma: self.gamma });
        }
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.row(s, a);
                for (next, &p) in row.iter().enumerate() {
                    if !(p >= 0.0) || !p.is_finite() {
                        violations.push(Violation::NegativeProbability {
                            state: s,
                            action: a,
                            next_state: next,
                            value: p,
                        });
                    }
                }
                let sum: f64 = row.iter().sum();
                if !((sum - 1.0).abs() <= CONSTRUCT_TOL) {
                    violations.push(Violation::RowNotNormalized {
                        state: s,
                        action: a,
                        sum,
                    });
                }
            }
        }
        for (s, &p) in self.initial.iter().enumerate() {
            if !(p >= 0.0) || !p.is_finite() {
                violations.push(Violation::NegativeInitial { state: s, value: p });
            }
        }
        let sum: f64 = self.initial.iter().sum();
        if !((sum - 1.0).abs() <= CONSTRUCT_TOL) {
            violations.push(Violation::InitialNotNormalized { sum });
        }
        ValidationReport { violations }
    }

    /// Text format: `tabular_mdp v1 S A gamma`, then ρ on one line, then S·A
    /// rows of S floats in s-major order. Floats use shortest round-trip form.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "tabular_mdp v1 {} {} {}",
            self.num_states, self.num_actions, self.gamma
        )?;
        writeln!(w, "{}", join_floats(&self.initial))?;
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                writeln!(w, "{}", join_floats(self.row(s, a)))?;
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Parses the text format. Shapes are checked; stochasticity is not, so a
    /// tampered file loads and then fails [`TabularMdp::validate`].
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::parse("empty MDP file"))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "tabular_mdp" {
            return Err(Error::parse(format!("bad MDP header: {header:?}")));
        }
        if fields[1] != "v1" {
            return Err(Error::Version(fields[1].to_string()));
        }
        let num_states: usize = parse_field(fields[2])?;
        let num_actions: usize = parse_field(fields[3])?;
        let gamma: f64 = parse_field(fields[4])?;
        let initial_line = lines
            .next()
            .ok_or_else(|| Error::parse("missing initial distribution"))??;
        let initial = parse_floats(&initial_line)?;
        let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
        for row in 0..num_states * num_actions {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(format!("missing transition row {row}")))??;
            let values = parse_floats(&line)?;
            if values.len() != num_states {
                return Err(Error::parse(format!(
                    "transition row {row} has {} entries, expected {num_states}",
                    values.len()
                )));
            }
            transition.extend(values);
        }
        Self::new(num_states, num_actions, transition, initial, gamma)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read_text(text.as_bytes())
    }
}

pub(crate) fn join_floats(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_floats(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace().map(parse_field).collect()
}

pub(crate) fn parse_field<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(format!("cannot parse {s:?}")))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DiscountOutOfRange {
        gamma: f64,
    },
    RowNotNormalized {
        state: usize,
        action: usize,
        sum: f64,
    },
    NegativeProbability {
        state: usize,
        action: usize,
        next_state: usize,
        value: f64,
    },
    InitialNotNormalized {
        sum: f64,
    },
    NegativeInitial {
        state: usize,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DiscountOutOfRange { gamma } => {
                write!(f, "discount out of range: gamma = {gamma}")
            }
            Violation::RowNotNormalized { state, action, sum } => {
                write!(f, "row (s={state}, a={action}) sums to {sum}")
            }
            Violation::NegativeProbability {
                state,
                action,
                next_state,
                value,
            } => write!(
                f,
                "P(s'={next_state}|s={state}, a={action}) = {value} is not a probability"
            ),
            Violation::InitialNotNormalized { sum } => {
                write!(f, "initial distribution sums to {sum}")
            }
            Violation::NegativeInitial { state, value } => {
                write!(f, "initial probability of state {state} is {value}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_pass() {
            return write!(f, "pass");
        }
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

pub fn validate_mdp(mdp: &TabularMdp) -> ValidationReport {
    mdp.validate()
}

/// A stochastic policy `π(a|s)` over a finite MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(Error::shape(format!(
                "policy table has {} entries, expected {}",
                probs.len(),
                num_states * num_actions
            )));
        }
        for s in 0..num_states {
            let row = &probs[s * num_actions..(s + 1) * num_actions];
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::invalid(format!("negative probability in state {s}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > CONSTRUCT_TOL {
                return Err(Error::invalid(format!("policy row {s} sums to {sum}")));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::shape(format!("action {a} out of range in state {s}")));
            }
            probs[s * num_actions + a] = 1.0;
        }
        Ok(Self {
            num_states: actions.len(),
            num_actions,
            probs,
        })
    }

    /// Row-wise softmax of `logits / temperature`.
    pub fn softmax(num_states: usize, num_actions: usize, logits: &[f64], temperature: f64) -> Result<Self> {
        if logits.len() != num_states * num_actions {
            return Err(Error::shape("logit table size"));
        }
        let mut probs = Vec::with_capacity(logits.len());
        for row in logits.chunks(num_actions) {
            probs.extend(softmax(row, temperature));
        }
        Self::new(num_states, num_actions, probs)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn check_compatible(&self, mdp: &TabularMdp) -> Result<()> {
        if self.num_states != mdp.num_states() || self.num_actions != mdp.num_actions() {
            return Err(Error::shape(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.num_states,
                self.num_actions,
                mdp.num_states(),
                mdp.num_actions()
            )));
        }
        Ok(())
    }
}

/// Numerically stable softmax of `values / temperature`.
pub fn softmax(values: &[f64], temperature: f64) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|&v| ((v - max) / temperature).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// A real-valued table over state-action pairs, s-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SaTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl SaTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::filled(num_states, num_actions, 0.0)
    }

    pub fn filled(num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![value; num_states * num_actions],
        }
    }

    pub fn from_vec(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::shape(format!(
                "table has {} entries, expected {}",
                values.len(),
                num_states * num_actions
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            values,
        })
    }

    pub fn from_fn(num_states: usize, num_actions: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                values.push(f(s, a));
            }
        }
        Self {
            num_states,
            num_actions,
            values,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.num_actions + a] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn dot(&self, other: &SaTable) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, other: &SaTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `Σ_a table(s, a)` for every state.
    pub fn state_marginal(&self) -> Vec<f64> {
        self.values
            .chunks(self.num_actions)
            .map(|row| row.iter().sum())
            .collect()
    }

    fn check_shape(&self, num_states: usize, num_actions: usize, what: &str) -> Result<()> {
        if self.num_states != num_states || self.num_actions != num_actions {
            return Err(Error::shape(format!(
                "{what} is {}x{}, expected {num_states}x{num_actions}",
                self.num_states, self.num_actions
            )));
        }
        Ok(())
    }
}

/// A normalized, nonnegative distribution over state-action pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure(SaTable);

impl OccupancyMeasure {
    pub fn new(table: SaTable) -> Result<Self> {
        if table.values.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::invalid("occupancy has a negative entry"));
        }
        let sum = table.sum();
        if (sum - 1.0).abs() > SOLVE_TOL {
            return Err(Error::invalid(format!("occupancy sums to {sum}")));
        }
        Ok(Self(table))
    }

    pub fn table(&self) -> &SaTable {
        &self.0
    }

    pub fn into_table(self) -> SaTable {
        self.0
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.0.get(s, a)
    }

    pub fn state_marginal(&self) -> Vec<f64> {
        self.0.state_marginal()
    }
}

impl std::ops::Deref for OccupancyMeasure {
    type Target = SaTable;

    fn deref(&self) -> &SaTable {
        &self.0
    }
}

/// `(P^π_* d)(s', a') = π(a'|s') Σ_{s,a} P(s'|s,a) d(s,a)`.
pub fn transpose_operator(mdp: &TabularMdp, policy: &TabularPolicy, d: &SaTable) -> Result<SaTable> {
    policy.check_compatible(mdp)?;
    d.check_shape(mdp.num_states(), mdp.num_actions(), "input table")?;
    let n = mdp.num_states();
    let mut next_state_mass = vec![0.0; n];
    for s in 0..n {
        for a in 0..mdp.num_actions() {
            let w = d.get(s, a);
            if w == 0.0 {
                continue;
            }
            for (acc, &p) in next_state_mass.iter_mut().zip(mdp.row(s, a)) {
                *acc += p * w;
            }
        }
    }
    Ok(SaTable::from_fn(n, mdp.num_actions(), |s, a| {
        policy.prob(s, a) * next_state_mass[s]
    }))
}

/// `(P^π Q)(s, a) = Σ_{s'} P(s'|s,a) Σ_{a'} π(a'|s') Q(s',a')`.
pub fn adjoint_operator(mdp: &TabularMdp, policy: &TabularPolicy, q: &SaTable) -> Result<SaTable> {
    policy.check_compatible(mdp)?;
    q.check_shape(mdp.num_states(), mdp.num_actions(), "Q table")?;
    let v = state_values(policy, q);
    Ok(SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        mdp.row(s, a).iter().zip(&v).map(|(p, v)| p * v).sum()
    }))
}

/// `V(s) = Σ_a π(a|s) Q(s,a)`.
pub fn state_values(policy: &TabularPolicy, q: &SaTable) -> Vec<f64> {
    (0..policy.num_states())
        .map(|s| policy.row(s).iter().enumerate().map(|(a, p)| p * q.get(s, a)).sum())
        .collect()
}

/// One application of the flow map `d ↦ (1-γ) ρ⊗π + γ P^π_* d`.
pub fn occupancy_recursion_step(mdp: &TabularMdp, policy: &TabularPolicy, d: &SaTable) -> Result<SaTable> {
    let mut out = transpose_operator(mdp, policy, d)?;
    let gamma = mdp.gamma();
    let rho = mdp.initial();
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let v = (1.0 - gamma) * rho[s] * policy.prob(s, a) + gamma * out.get(s, a);
            out.set(s, a, v);
        }
    }
    Ok(out)
}
