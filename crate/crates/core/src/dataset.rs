//! Transition samples and datasets, shared by tabular and continuous settings.
//!
//! Tabular states and actions are stored as a single coordinate holding the
//! integer index; continuous ones as fixed-length real vectors.

use std::io::{BufRead, Write};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::mdp::{parse_field, SaTable, TabularMdp, TabularPolicy};
use crate::rng::{rng_from_seed, sample_categorical};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceTag {
    Expert,
    General,
}

impl SourceTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::Expert => "expert",
            SourceTag::General => "general",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "expert" => Ok(SourceTag::Expert),
            "general" => Ok(SourceTag::General),
            other => Err(Error::parse(format!("unknown source tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSample {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub tag: SourceTag,
}

impl TransitionSample {
    pub fn tabular(s: usize, a: usize, next: usize, tag: SourceTag) -> Self {
        Self {
            state: vec![s as f64],
            action: vec![a as f64],
            next_state: vec![next as f64],
            tag,
        }
    }

    /// `(s, a, s')` as indices. Fails for non-integral encodings.
    pub fn indices(&self) -> Result<(usize, usize, usize)> {
        Ok((
            index_of(&self.state)?,
            index_of(&self.action)?,
            index_of(&self.next_state)?,
        ))
    }
}

pub(crate) fn index_of(x: &[f64]) -> Result<usize> {
    match x {
        [v] if *v >= 0.0 && v.fract() == 0.0 => Ok(*v as usize),
        _ => Err(Error::invalid(format!("{x:?} is not a tabular index"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDataset {
    pub env_id: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub samples: Vec<TransitionSample>,
}

impl TransitionDataset {
    pub fn new(env_id: impl Into<String>, state_dim: usize, action_dim: usize) -> Self {
        Self {
            env_id: env_id.into(),
            state_dim,
            action_dim,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, sample: TransitionSample) -> Result<()> {
        if sample.state.len() != self.state_dim
            || sample.next_state.len() != self.state_dim
            || sample.action.len() != self.action_dim
        {
            return Err(Error::shape("sample dimensions do not match dataset"));
        }
        if sample
            .state
            .iter()
            .chain(&sample.action)
            .chain(&sample.next_state)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("transition sample".into()));
        }
        self.samples.push(sample);
        Ok(())
    }

    /// The D^exp subset, recovered by tag.
    pub fn expert_subset(&self) -> TransitionDataset {
        TransitionDataset {
            env_id: self.env_id.clone(),
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            samples: self
                .samples
                .iter()
                .filter(|s| s.tag == SourceTag::Expert)
                .cloned()
                .collect(),
        }
    }

    pub fn retagged(mut self, tag: SourceTag) -> Self {
        for s in &mut self.samples {
            s.tag = tag;
        }
        self
    }

    pub fn index_triples(&self) -> Result<Vec<(usize, usize, usize)>> {
        self.samples.iter().map(|s| s.indices()).collect()
    }

    /// Empirical distribution of `(s, a)` pairs.
    pub fn empirical_pairs(&self, num_states: usize, num_actions: usize) -> Result<SaTable> {
        if self.is_empty() {
            return Err(Error::invalid("empty dataset"));
        }
        let mut t = SaTable::zeros(num_states, num_actions);
        let w = 1.0 / self.len() as f64;
        for (s, a, _) in self.index_triples()? {
            if s >= num_states || a >= num_actions {
                return Err(Error::shape(format!("pair ({s}, {a}) out of range")));
            }
            t.set(s, a, t.get(s, a) + w);
        }
        Ok(t)
    }

    /// Empirical distribution of next states.
    pub fn empirical_next_states(&self, num_states: usize) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::invalid("empty dataset"));
        }
        let mut p = vec![0.0; num_states];
        let w = 1.0 / self.len() as f64;
        for (_, _, next) in self.index_triples()? {
            if next >= num_states {
                return Err(Error::shape(format!("state {next} out of range")));
            }
            p[next] += w;
        }
        Ok(p)
    }

    /// Header `transitions v1 env_id state_dim action_dim count`, then one
    /// comma-separated line per sample.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "transitions v1 {} {} {} {}",
            self.env_id,
            self.state_dim,
            self.action_dim,
            self.len()
        )?;
        let mut line = String::new();
        for s in &self.samples {
            line.clear();
            line.push_str(s.tag.as_str());
            for v in s.state.iter().chain(&s.action).chain(&s.next_state) {
                line.push(',');
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::parse("empty dataset file"))??;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 6 || f[0] != "transitions" {
            return Err(Error::parse(format!("bad dataset header: {header:?}")));
        }
        if f[1] != "v1" {
            return Err(Error::Version(f[1].to_string()));
        }
        let mut ds = TransitionDataset::new(f[2], parse_field(f[3])?, parse_field(f[4])?);
        let count: usize = parse_field(f[5])?;
        let width = 1 + 2 * ds.state_dim + ds.action_dim;
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != width {
                return Err(Error::parse(format!(
                    "sample line has {} fields, expected {width}",
                    parts.len()
                )));
            }
            let tag = SourceTag::parse(parts[0])?;
            let nums = parts[1..]
                .iter()
                .map(|p| parse_field::<f64>(p))
                .collect::<Result<Vec<_>>>()?;
            let (state, rest) = nums.split_at(ds.state_dim);
            let (action, next) = rest.split_at(ds.action_dim);
            ds.push(TransitionSample {
                state: state.to_vec(),
                action: action.to_vec(),
                next_state: next.to_vec(),
                tag,
            })?;
        }
        if ds.len() != count {
            return Err(Error::parse(format!(
                "header declares {count} samples, found {}",
                ds.len()
            )));
        }
        Ok(ds)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read_text(text.as_bytes())
    }
}

/// Undiscounted rollouts of `policy` from `ρ`, each `horizon` steps long.
pub fn sample_trajectories(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    num_trajectories: usize,
    horizon: usize,
    seed: u64,
    env_id: &str,
    tag: SourceTag,
) -> Result<TransitionDataset> {
    sample_restarting_trajectories(mdp, policy, num_trajectories, horizon, 0.0, seed, env_id, tag)
}

/// Rollouts that, after each recorded transition, restart from `ρ` with
/// probability `restart_prob`. With `restart_prob = 1 - γ` the current states
/// are distributed as the discounted occupancy in the long run.
#[allow(clippy::too_many_arguments)]
pub fn sample_restarting_trajectories(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    num_trajectories: usize,
    horizon: usize,
    restart_prob: f64,
    seed: u64,
    env_id: &str,
    tag: SourceTag,
) -> Result<TransitionDataset> {
    policy.check_compatible(mdp)?;
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if !(0.0..=1.0).contains(&restart_prob) {
        return Err(Error::invalid("restart probability must lie in [0,1]"));
    }
    let mut rng = rng_from_seed(seed);
    let mut ds = TransitionDataset::new(env_id, 1, 1);
    ds.samples.reserve(num_trajectories * horizon);
    for _ in 0..num_trajectories {
        let mut s = sample_categorical(&mut rng, mdp.initial());
        for _ in 0..horizon {
            let a = sample_categorical(&mut rng, policy.row(s));
            let next = sample_categorical(&mut rng, mdp.row(s, a));
            ds.samples.push(TransitionSample::tabular(s, a, next, tag));
            s = if restart_prob > 0.0 && rng.random::<f64>() < restart_prob {
                sample_categorical(&mut rng, mdp.initial())
            } else {
                next
            };
        }
    }
    Ok(ds)
}
