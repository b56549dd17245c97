//! Dynamics representations `P(s'|s,a) ≈ φ(s,a)ᵀ μ(s') pₙ(s')`: the
//! contrastive pre-training loss, its training loop, random Fourier feature
//! constructions and checkpoints.

mod checkpoint;
mod loss;
mod rff;
mod train;

pub use checkpoint::{load_representation, read_representation, save_representation, write_representation};
pub use loss::{
    population_repr_objective, repr_loss, repr_regularizer, RegularizerValue, ReprBatch, ReprLossParts, ReprObjective,
    REGULARIZER_FLOOR,
};
pub use rff::{gaussian_density, rff_representation, AffineMean};
pub use train::{noise_source, pretrain, NoiseChoice, PretrainOutput, ReprTrainConfig, TrainPoint};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use crate::approx::Model;
use crate::encoding::SpaceEncoding;
use crate::error::{Error, Result};
use crate::oracle::{dot, FactorizationTables, FeatureTable};
use crate::rng::Rng;

/// Where noise states come from and what density they carry.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSource {
    /// Weighted atoms. Tabular sources keep one atom per state with nonzero mass.
    Atoms { states: Vec<Vec<f64>>, weights: Vec<f64> },
    /// Uniform density on an axis-aligned box.
    UniformBox { low: Vec<f64>, high: Vec<f64> },
}

impl NoiseSource {
    pub fn atoms(states: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if states.is_empty() || states.len() != weights.len() {
            return Err(Error::invalid(
                "noise source needs one weight per state and at least one state",
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("noise weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("noise weights sum to zero"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(NoiseSource::Atoms { states, weights })
    }

    /// A tabular distribution over `0..S`; states with zero mass are dropped.
    pub fn tabular(dist: &[f64]) -> Result<Self> {
        let (states, weights): (Vec<_>, Vec<_>) = dist
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(s, &p)| (vec![s as f64], p))
            .unzip();
        Self::atoms(states, weights)
    }

    pub fn uniform_box(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.is_empty() || low.len() != high.len() || low.iter().zip(&high).any(|(l, h)| !(h > l)) {
            return Err(Error::invalid(
                "noise box must have positive extent in every coordinate",
            ));
        }
        Ok(NoiseSource::UniformBox { low, high })
    }

    pub fn len(&self) -> usize {
        match self {
            NoiseSource::Atoms { states, .. } => states.len(),
            NoiseSource::UniformBox { .. } => usize::MAX,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Draws `n` states i.i.d. from the noise distribution.
    pub fn sample(&self, rng: &mut Rng, n: usize) -> Vec<Vec<f64>> {
        match self {
            NoiseSource::Atoms { states, weights } => {
                let dist = WeightedIndex::new(weights).expect("weights validated at construction");
                (0..n).map(|_| states[dist.sample(rng)].clone()).collect()
            }
            NoiseSource::UniformBox { low, high } => (0..n)
                .map(|_| low.iter().zip(high).map(|(l, h)| rng.random_range(*l..*h)).collect())
                .collect(),
        }
    }

    /// `pₙ(s)` as a probability (atoms) or a density (box).
    pub fn density(&self, state: &[f64]) -> f64 {
        match self {
            NoiseSource::Atoms { states, weights } => states
                .iter()
                .zip(weights)
                .filter(|(s, _)| s.as_slice() == state)
                .map(|(_, w)| w)
                .sum(),
            NoiseSource::UniformBox { low, high } => {
                let inside = state
                    .iter()
                    .zip(low.iter().zip(high))
                    .all(|(x, (l, h))| x >= l && x <= h);
                if inside {
                    1.0 / low.iter().zip(high).map(|(l, h)| h - l).product::<f64>()
                } else {
                    0.0
                }
            }
        }
    }

    /// The noise probability vector over `0..num_states` for tabular atoms.
    pub fn tabular_distribution(&self, num_states: usize) -> Option<Vec<f64>> {
        let NoiseSource::Atoms { states, weights } = self else {
            return None;
        };
        let mut p = vec![0.0; num_states];
        for (s, w) in states.iter().zip(weights) {
            match s[..] {
                [v] if v >= 0.0 && v.fract() == 0.0 && (v as usize) < num_states => p[v as usize] += w,
                _ => return None,
            }
        }
        Some(p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReprMetadata {
    pub env_id: String,
    pub seed: u64,
    pub config_hash: u64,
}

/// Paired feature maps `φ: S×A → R^k`, `μ: S → R^k` and the noise source.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsRepresentation {
    pub phi: Model,
    pub mu: Model,
    pub k: usize,
    pub encoding: SpaceEncoding,
    pub noise: NoiseSource,
    pub metadata: ReprMetadata,
}

impl DynamicsRepresentation {
    pub fn new(
        phi: Model,
        mu: Model,
        encoding: SpaceEncoding,
        noise: NoiseSource,
        metadata: ReprMetadata,
    ) -> Result<Self> {
        let k = phi.spec().output_dim;
        if mu.spec().output_dim != k {
            return Err(Error::shape(format!(
                "phi has {k} outputs but mu has {}",
                mu.spec().output_dim
            )));
        }
        if phi.spec().input_dim != encoding.pair_input_dim() || mu.spec().input_dim != encoding.state_input_dim() {
            return Err(Error::shape("feature model inputs do not match the encoding"));
        }
        if noise.is_empty() {
            return Err(Error::invalid("noise source is empty"));
        }
        Ok(Self {
            phi,
            mu,
            k,
            encoding,
            noise,
            metadata,
        })
    }

    /// Wraps exact tables as linear models over one-hot encodings.
    pub fn from_factorization(fact: &FactorizationTables, metadata: ReprMetadata) -> Result<Self> {
        let (ns, na, k) = (fact.num_states, fact.num_actions, fact.k);
        let encoding = SpaceEncoding::Tabular {
            num_states: ns,
            num_actions: na,
        };
        let phi = table_model(&fact.phi, ns * na, k)?;
        let mu = table_model(&fact.mu, ns, k)?;
        Self::new(phi, mu, encoding, NoiseSource::tabular(&fact.noise_dist)?, metadata)
    }

    pub fn expect_k(&self, k: usize) -> Result<()> {
        if self.k != k {
            return Err(Error::shape(format!("representation has k={}, expected k={k}", self.k)));
        }
        Ok(())
    }

    pub fn phi(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        self.phi.forward(&self.encoding.pair(state, action)?.as_input())
    }

    pub fn mu(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.mu.forward(&self.encoding.state(state)?.as_input())
    }

    /// `φ(s,a)ᵀ μ(s') pₙ(s')`.
    pub fn transition_density(&self, state: &[f64], action: &[f64], next: &[f64]) -> Result<f64> {
        Ok(dot(&self.phi(state, action)?, &self.mu(next)?) * self.noise.density(next))
    }

    fn tabular_dims(&self) -> Result<(usize, usize)> {
        match self.encoding {
            SpaceEncoding::Tabular {
                num_states,
                num_actions,
            } => Ok((num_states, num_actions)),
            SpaceEncoding::Continuous { .. } => Err(Error::invalid("representation is not tabular")),
        }
    }

    /// `φ` evaluated at every pair, row `s·A + a`.
    pub fn phi_table(&self) -> Result<FeatureTable> {
        let (ns, na) = self.tabular_dims()?;
        let mut values = Vec::with_capacity(ns * na * self.k);
        for i in 0..ns * na {
            values.extend(
                self.phi
                    .forward(&crate::approx::Input::OneHot { index: i, dim: ns * na })?,
            );
        }
        FeatureTable::from_vec(ns * na, self.k, values)
    }

    pub fn mu_table(&self) -> Result<FeatureTable> {
        let (ns, _) = self.tabular_dims()?;
        let mut values = Vec::with_capacity(ns * self.k);
        for s in 0..ns {
            values.extend(self.mu.forward(&crate::approx::Input::OneHot { index: s, dim: ns })?);
        }
        FeatureTable::from_vec(ns, self.k, values)
    }

    pub fn noise_distribution(&self) -> Result<Vec<f64>> {
        let (ns, _) = self.tabular_dims()?;
        self.noise
            .tabular_distribution(ns)
            .ok_or_else(|| Error::invalid("noise source is not a tabular distribution"))
    }
}

/// A linear one-hot model whose weight for input `i`, output `j` is `table[i][j]`.
fn table_model(table: &FeatureTable, rows: usize, k: usize) -> Result<Model> {
    let spec = crate::approx::ModelSpec::linear(rows, k);
    let mut w = vec![0.0; rows * k];
    for i in 0..rows {
        for (j, v) in table.row(i).iter().enumerate() {
            w[j * rows + i] = *v;
        }
    }
    let mut model = Model::zeros(spec)?;
    model.set_params(&w)?;
    Ok(model)
}
