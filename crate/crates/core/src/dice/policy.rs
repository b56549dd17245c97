//! Policy classes: softmax over per-pair logits, softmax over linear
//! functions of frozen features, and a linear-mean Gaussian.

use std::fs;
use std::io::{BufRead, Cursor, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::binio::{keyed_line, read_f64s, seal, unseal, write_f64s};
use crate::error::{Error, Result};
use crate::mdp::{softmax, SaTable, TabularPolicy};
use crate::oracle::{dot, FeatureTable};
use crate::rng::Rng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    TabularSoftmax,
    FeatureSoftmax,
    Gaussian,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::TabularSoftmax => "tabular_softmax",
            PolicyKind::FeatureSoftmax => "feature_softmax",
            PolicyKind::Gaussian => "gaussian",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tabular_softmax" => Some(PolicyKind::TabularSoftmax),
            "feature_softmax" => Some(PolicyKind::FeatureSoftmax),
            "gaussian" => Some(PolicyKind::Gaussian),
            _ => None,
        }
    }
}

/// A parametric policy. Discrete kinds use `dims = (S, A)`; the Gaussian uses
/// `dims = (state_dim, action_dim)` with parameters `[W | b | log σ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    kind: PolicyKind,
    dims: (usize, usize),
    features: Option<FeatureTable>,
    params: Vec<f64>,
}

impl PolicyModel {
    /// Uniform start: all logits zero.
    pub fn tabular_softmax(num_states: usize, num_actions: usize) -> Self {
        Self {
            kind: PolicyKind::TabularSoftmax,
            dims: (num_states, num_actions),
            features: None,
            params: vec![0.0; num_states * num_actions],
        }
    }

    /// Logits `φ(s,a)ᵀw` over a feature table with rows `s·A + a`.
    pub fn feature_softmax(features: FeatureTable, num_actions: usize) -> Result<Self> {
        if num_actions == 0 || features.rows() % num_actions != 0 {
            return Err(Error::shape("feature rows are not a multiple of the action count"));
        }
        Ok(Self {
            kind: PolicyKind::FeatureSoftmax,
            dims: (features.rows() / num_actions, num_actions),
            params: vec![0.0; features.k()],
            features: Some(features),
        })
    }

    /// Zero mean map, unit standard deviation.
    pub fn gaussian(state_dim: usize, action_dim: usize) -> Self {
        Self {
            kind: PolicyKind::Gaussian,
            dims: (state_dim, action_dim),
            features: None,
            params: vec![0.0; action_dim * state_dim + 2 * action_dim],
        }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn is_discrete(&self) -> bool {
        self.kind != PolicyKind::Gaussian
    }

    pub fn features(&self) -> Option<&FeatureTable> {
        self.features.as_ref()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::shape(format!(
                "policy has {} parameters, got {}",
                self.params.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy parameters".into()));
        }
        self.params.copy_from_slice(values);
        Ok(())
    }

    fn require_discrete(&self) -> Result<()> {
        if self.is_discrete() {
            Ok(())
        } else {
            Err(Error::invalid("operation needs a discrete-action policy"))
        }
    }

    pub fn logits(&self, state: usize) -> Result<Vec<f64>> {
        self.require_discrete()?;
        let (ns, na) = self.dims;
        if state >= ns {
            return Err(Error::invalid(format!("state {state} out of range for {ns} states")));
        }
        Ok(match &self.features {
            None => self.params[state * na..(state + 1) * na].to_vec(),
            Some(f) => (0..na).map(|a| dot(f.row(state * na + a), &self.params)).collect(),
        })
    }

    pub fn action_probs(&self, state: usize) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(state)?, 1.0))
    }

    pub fn to_tabular(&self) -> Result<TabularPolicy> {
        self.require_discrete()?;
        let (ns, na) = self.dims;
        let mut probs = Vec::with_capacity(ns * na);
        for s in 0..ns {
            probs.extend(self.action_probs(s)?);
        }
        TabularPolicy::new(ns, na, probs)
    }

    /// Pulls a gradient with respect to every logit back to the parameters.
    pub fn backprop_logits(&self, grad_logits: &SaTable) -> Result<Vec<f64>> {
        self.require_discrete()?;
        let (ns, na) = self.dims;
        if grad_logits.num_states() != ns || grad_logits.num_actions() != na {
            return Err(Error::shape("logit gradient table"));
        }
        Ok(match &self.features {
            None => grad_logits.values().to_vec(),
            Some(f) => {
                let mut g = vec![0.0; f.k()];
                for (i, &d) in grad_logits.values().iter().enumerate() {
                    if d != 0.0 {
                        for (gj, fj) in g.iter_mut().zip(f.row(i)) {
                            *gj += d * fj;
                        }
                    }
                }
                g
            }
        })
    }

    /// `log π(a|s)` and its gradient, accumulated into `grad`.
    pub fn log_prob_discrete(&self, state: usize, action: usize, grad: &mut [f64]) -> Result<f64> {
        let probs = self.action_probs(state)?;
        let na = self.dims.1;
        if action >= na {
            return Err(Error::invalid(format!("action {action} out of range")));
        }
        match &self.features {
            None => {
                for (b, p) in probs.iter().enumerate() {
                    grad[state * na + b] += f64::from(u8::from(b == action)) - p;
                }
            }
            Some(f) => {
                for (b, p) in probs.iter().enumerate() {
                    let c = f64::from(u8::from(b == action)) - p;
                    for (gj, fj) in grad.iter_mut().zip(f.row(state * na + b)) {
                        *gj += c * fj;
                    }
                }
            }
        }
        Ok(probs[action].max(f64::MIN_POSITIVE).ln())
    }

    fn gaussian_parts(&self) -> (&[f64], &[f64], &[f64]) {
        let (d, m) = self.dims;
        let (w, rest) = self.params.split_at(m * d);
        let (b, log_std) = rest.split_at(m);
        (w, b, log_std)
    }

    pub fn gaussian_mean(&self, state: &[f64]) -> Result<Vec<f64>> {
        if self.kind != PolicyKind::Gaussian {
            return Err(Error::invalid("not a gaussian policy"));
        }
        let (d, m) = self.dims;
        if state.len() != d {
            return Err(Error::shape("state dimension"));
        }
        let (w, b, _) = self.gaussian_parts();
        Ok((0..m).map(|r| dot(&w[r * d..(r + 1) * d], state) + b[r]).collect())
    }

    /// Per-coordinate log standard deviation, clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn gaussian_log_std(&self) -> Vec<f64> {
        self.gaussian_parts()
            .2
            .iter()
            .map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect()
    }

    /// Sets `a = W s + b` exactly and the log standard deviation.
    pub fn set_gaussian(&mut self, w: &[f64], b: &[f64], log_std: &[f64]) -> Result<()> {
        let (d, m) = self.dims;
        if self.kind != PolicyKind::Gaussian || w.len() != m * d || b.len() != m || log_std.len() != m {
            return Err(Error::shape("gaussian parameter blocks"));
        }
        let values: Vec<f64> = w.iter().chain(b).chain(log_std).copied().collect();
        self.set_params(&values)
    }

    pub fn sample_gaussian(&self, rng: &mut Rng, state: &[f64]) -> Result<Vec<f64>> {
        let mean = self.gaussian_mean(state)?;
        Ok(mean
            .iter()
            .zip(self.gaussian_log_std())
            .map(|(mu, ls)| {
                let z: f64 = StandardNormal.sample(rng);
                mu + ls.exp() * z
            })
            .collect())
    }

    /// Gaussian `log π(a|s)` and its gradient, accumulated into `grad`.
    pub fn log_prob_gaussian(&self, state: &[f64], action: &[f64], grad: &mut [f64]) -> Result<f64> {
        let mean = self.gaussian_mean(state)?;
        let (d, m) = self.dims;
        if action.len() != m {
            return Err(Error::shape("action dimension"));
        }
        let raw_log_std = self.gaussian_parts().2.to_vec();
        let mut lp = 0.0;
        for r in 0..m {
            let ls = raw_log_std[r].clamp(LOG_STD_MIN, LOG_STD_MAX);
            let var = (2.0 * ls).exp();
            let diff = action[r] - mean[r];
            lp += -0.5 * diff * diff / var - ls - 0.5 * (2.0 * std::f64::consts::PI).ln();
            let d_mean = diff / var;
            for c in 0..d {
                grad[r * d + c] += d_mean * state[c];
            }
            grad[m * d + r] += d_mean;
            if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_log_std[r]) {
                grad[m * d + m + r] += diff * diff / var - 1.0;
            }
        }
        Ok(lp)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "policy v1")?;
        writeln!(buf, "kind {}", self.kind.name())?;
        writeln!(buf, "dims {} {}", self.dims.0, self.dims.1)?;
        match &self.features {
            Some(f) => {
                writeln!(buf, "features {} {}", f.rows(), f.k())?;
                write_f64s(&mut buf, f.values())?;
            }
            None => writeln!(buf, "features none")?,
        }
        writeln!(buf, "params {}", self.params.len())?;
        write_f64s(&mut buf, &self.params)?;
        w.write_all(&seal(buf))?;
        Ok(())
    }

    pub fn read(bytes: &[u8]) -> Result<Self> {
        let data = unseal(bytes)?;
        let mut r = Cursor::new(data);
        let mut magic = String::new();
        r.read_line(&mut magic)?;
        let magic = magic.trim_end();
        if magic != "policy v1" {
            return Err(if magic.starts_with("policy ") {
                Error::Version(magic.to_string())
            } else {
                Error::parse(format!("not a policy file: `{magic}`"))
            });
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| Error::parse(format!("bad count `{s}`")));
        let kind_name = keyed_line(&mut r, "kind")?;
        let kind =
            PolicyKind::parse(&kind_name).ok_or_else(|| Error::parse(format!("unknown policy kind `{kind_name}`")))?;
        let dims_line = keyed_line(&mut r, "dims")?;
        let (a, b) = dims_line.split_once(' ').ok_or_else(|| Error::parse("bad dims line"))?;
        let dims = (num(a)?, num(b)?);
        let features_line = keyed_line(&mut r, "features")?;
        let features = if features_line == "none" {
            None
        } else {
            let (rows, k) = features_line
                .split_once(' ')
                .ok_or_else(|| Error::parse("bad features line"))?;
            let (rows, k) = (num(rows)?, num(k)?);
            Some(FeatureTable::from_vec(rows, k, read_f64s(&mut r, rows * k)?)?)
        };
        let n = num(&keyed_line(&mut r, "params")?)?;
        let params = read_f64s(&mut r, n)?;
        let mut model = match (kind, features) {
            (PolicyKind::TabularSoftmax, None) => Self::tabular_softmax(dims.0, dims.1),
            (PolicyKind::FeatureSoftmax, Some(f)) => Self::feature_softmax(f, dims.1)?,
            (PolicyKind::Gaussian, None) => Self::gaussian(dims.0, dims.1),
            _ => return Err(Error::parse("feature block does not match the policy kind")),
        };
        if model.dims != dims {
            return Err(Error::parse("policy dims disagree with the feature table"));
        }
        model.set_params(&params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(&fs::read(path)?)
    }
}
