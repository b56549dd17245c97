//! The contrastive representation objective
//!
//! `J = -2 E_D[φ(s,a)ᵀμ(s')] + E_{D×pₙ}[(φ(s,a)ᵀμ(sₙ))²]`
//!
//! and the log-normalization regularizer `E_D[(log Ê_{pₙ}[φ(s,a)ᵀμ(sₙ)])²]`.

use crate::approx::{Model, Objective};
use crate::dataset::TransitionSample;
use crate::encoding::Encoded;
use crate::error::{Error, Result};
use crate::mdp::{SaTable, TabularMdp};
use crate::oracle::{dot, FeatureTable};

use super::DynamicsRepresentation;

/// Inner estimates below this are clamped before the logarithm.
pub const REGULARIZER_FLOOR: f64 = 1e-8;

/// A weighted batch of `(s,a,s')` triples and a weighted batch of noise states.
///
/// The squared term pairs every triple with every noise state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprBatch {
    pub pairs: Vec<Encoded>,
    pub next: Vec<Encoded>,
    pub weights: Vec<f64>,
    pub noise: Vec<Encoded>,
    pub noise_weights: Vec<f64>,
}

impl ReprBatch {
    /// Uniform weights over the given samples and noise states.
    pub fn from_samples(
        repr: &DynamicsRepresentation,
        samples: &[&TransitionSample],
        noise_states: &[Vec<f64>],
    ) -> Result<Self> {
        if samples.is_empty() || noise_states.is_empty() {
            return Err(Error::invalid("representation batches must be nonempty"));
        }
        let enc = &repr.encoding;
        let pairs = samples
            .iter()
            .map(|s| enc.pair(&s.state, &s.action))
            .collect::<Result<Vec<_>>>()?;
        let next = samples
            .iter()
            .map(|s| enc.state(&s.next_state))
            .collect::<Result<Vec<_>>>()?;
        let noise = noise_states.iter().map(|s| enc.state(s)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            weights: vec![1.0 / samples.len() as f64; samples.len()],
            noise_weights: vec![1.0 / noise.len() as f64; noise.len()],
            pairs,
            next,
            noise,
        })
    }

    /// Every `(s,a,s')` with `q(s,a)P(s'|s,a) > 0` weighted by that mass, and
    /// every state with `pₙ > 0` weighted by `pₙ`.
    pub fn population(mdp: &TabularMdp, q: &SaTable, noise: &[f64]) -> Result<Self> {
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        let mut batch = Self {
            pairs: Vec::new(),
            next: Vec::new(),
            weights: Vec::new(),
            noise: Vec::new(),
            noise_weights: Vec::new(),
        };
        for s in 0..ns {
            for a in 0..na {
                for (next, &p) in mdp.row(s, a).iter().enumerate() {
                    let w = q.get(s, a) * p;
                    if w > 0.0 {
                        batch.pairs.push(Encoded::OneHot {
                            index: s * na + a,
                            dim: ns * na,
                        });
                        batch.next.push(Encoded::OneHot { index: next, dim: ns });
                        batch.weights.push(w);
                    }
                }
            }
        }
        for (s, &p) in noise.iter().enumerate() {
            if p > 0.0 {
                batch.noise.push(Encoded::OneHot { index: s, dim: ns });
                batch.noise_weights.push(p);
            }
        }
        if batch.pairs.is_empty() || batch.noise.is_empty() {
            return Err(Error::invalid("population batch is empty"));
        }
        Ok(batch)
    }

    fn check(&self) -> Result<()> {
        if self.pairs.is_empty() || self.noise.is_empty() {
            return Err(Error::invalid("representation batches must be nonempty"));
        }
        if self.pairs.len() != self.next.len()
            || self.pairs.len() != self.weights.len()
            || self.noise.len() != self.noise_weights.len()
        {
            return Err(Error::shape("representation batch fields differ in length"));
        }
        Ok(())
    }
}

struct Features {
    phi: Vec<Vec<f64>>,
    mu_next: Vec<Vec<f64>>,
    mu_noise: Vec<Vec<f64>>,
}

fn features(phi: &Model, mu: &Model, batch: &ReprBatch) -> Result<Features> {
    let eval =
        |m: &Model, xs: &[Encoded]| -> Result<Vec<Vec<f64>>> { xs.iter().map(|x| m.forward(&x.as_input())).collect() };
    Ok(Features {
        phi: eval(phi, &batch.pairs)?,
        mu_next: eval(mu, &batch.next)?,
        mu_noise: eval(mu, &batch.noise)?,
    })
}

/// `Σ_j v_j μ_j μ_jᵀ`, row-major `k × k`.
fn second_moment(vectors: &[Vec<f64>], weights: &[f64], k: usize) -> Vec<f64> {
    let mut m = vec![0.0; k * k];
    for (v, &w) in vectors.iter().zip(weights) {
        for r in 0..k {
            let wr = w * v[r];
            for c in 0..k {
                m[r * k + c] += wr * v[c];
            }
        }
    }
    m
}

fn quad(m: &[f64], x: &[f64]) -> f64 {
    let k = x.len();
    let mut total = 0.0;
    for r in 0..k {
        total += x[r] * dot(&m[r * k..(r + 1) * k], x);
    }
    total
}

fn matvec(m: &[f64], x: &[f64]) -> Vec<f64> {
    let k = x.len();
    (0..k).map(|r| dot(&m[r * k..(r + 1) * k], x)).collect()
}

fn weighted_mean(vectors: &[Vec<f64>], weights: &[f64], k: usize) -> Vec<f64> {
    let mut m = vec![0.0; k];
    for (v, &w) in vectors.iter().zip(weights) {
        for (mi, vi) in m.iter_mut().zip(v) {
            *mi += w * vi;
        }
    }
    m
}

/// Sample estimate of the contrastive objective on `batch`.
pub fn repr_loss(repr: &DynamicsRepresentation, batch: &ReprBatch) -> Result<f64> {
    batch.check()?;
    let f = features(&repr.phi, &repr.mu, batch)?;
    let m = second_moment(&f.mu_noise, &batch.noise_weights, repr.k);
    let mut total = 0.0;
    for i in 0..batch.pairs.len() {
        total += batch.weights[i] * (-2.0 * dot(&f.phi[i], &f.mu_next[i]) + quad(&m, &f.phi[i]));
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerValue {
    pub value: f64,
    /// Number of pairs whose inner estimate fell to the floor.
    pub clamped: usize,
}

/// `Σ_i w_i (log max(φ_iᵀ μ̄, floor))²` with `μ̄` the weighted noise mean of `μ`.
pub fn repr_regularizer(repr: &DynamicsRepresentation, batch: &ReprBatch) -> Result<RegularizerValue> {
    batch.check()?;
    let f = features(&repr.phi, &repr.mu, batch)?;
    let mean = weighted_mean(&f.mu_noise, &batch.noise_weights, repr.k);
    let mut out = RegularizerValue { value: 0.0, clamped: 0 };
    for (phi, &w) in f.phi.iter().zip(&batch.weights) {
        let u = dot(phi, &mean);
        if u <= REGULARIZER_FLOOR {
            out.clamped += 1;
        }
        out.value += w * u.max(REGULARIZER_FLOOR).ln().powi(2);
    }
    Ok(out)
}

/// `J + λ·R` over the concatenated `(φ, μ)` parameters.
pub struct ReprObjective<'a> {
    pub repr: &'a DynamicsRepresentation,
    pub batch: &'a ReprBatch,
    pub lambda: f64,
}

/// Loss pieces reported alongside the combined value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReprLossParts {
    pub loss: f64,
    pub regularizer: f64,
    pub clamped: usize,
}

impl ReprObjective<'_> {
    pub(crate) fn evaluate(&self, phi: &Model, mu: &Model) -> Result<(ReprLossParts, Vec<f64>)> {
        let batch = self.batch;
        batch.check()?;
        let k = self.repr.k;
        let f = features(phi, mu, batch)?;
        let m = second_moment(&f.mu_noise, &batch.noise_weights, k);
        let mean = weighted_mean(&f.mu_noise, &batch.noise_weights, k);
        let mut parts = ReprLossParts {
            loss: 0.0,
            regularizer: 0.0,
            clamped: 0,
        };
        let np = phi.num_params();
        let mut grad = vec![0.0; np + mu.num_params()];
        let (g_phi, g_mu) = grad.split_at_mut(np);
        // G = Σ w φφᵀ and the regularizer's pull Σ w c φ feed the noise-side gradients
        let mut gram = vec![0.0; k * k];
        let mut reg_pull = vec![0.0; k];
        for i in 0..batch.pairs.len() {
            let w = batch.weights[i];
            let phi_i = &f.phi[i];
            let m_phi = matvec(&m, phi_i);
            let term = -2.0 * dot(phi_i, &f.mu_next[i]) + dot(phi_i, &m_phi);
            if !term.is_finite() {
                return Err(Error::NonFiniteLoss { batch_index: Some(i) });
            }
            parts.loss += w * term;
            let u = dot(phi_i, &mean);
            let c = if u > REGULARIZER_FLOOR {
                2.0 * u.ln() / u
            } else {
                parts.clamped += 1;
                0.0
            };
            parts.regularizer += w * u.max(REGULARIZER_FLOOR).ln().powi(2);

            let d_phi: Vec<f64> = (0..k)
                .map(|j| w * (-2.0 * f.mu_next[i][j] + 2.0 * m_phi[j] + self.lambda * c * mean[j]))
                .collect();
            phi.backward(&batch.pairs[i].as_input(), &d_phi, g_phi)?;
            let d_next: Vec<f64> = phi_i.iter().map(|p| -2.0 * w * p).collect();
            mu.backward(&batch.next[i].as_input(), &d_next, g_mu)?;
            for r in 0..k {
                let wr = w * phi_i[r];
                for cc in 0..k {
                    gram[r * k + cc] += wr * phi_i[cc];
                }
                reg_pull[r] += self.lambda * w * c * phi_i[r];
            }
        }
        for (j, mu_j) in f.mu_noise.iter().enumerate() {
            let v = batch.noise_weights[j];
            let g_mu_j = matvec(&gram, mu_j);
            let d: Vec<f64> = (0..k).map(|r| v * (2.0 * g_mu_j[r] + reg_pull[r])).collect();
            mu.backward(&batch.noise[j].as_input(), &d, g_mu)?;
        }
        Ok((parts, grad))
    }
}

impl Objective for ReprObjective<'_> {
    fn num_params(&self) -> usize {
        self.repr.phi.num_params() + self.repr.mu.num_params()
    }

    fn value_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let np = self.repr.phi.num_params();
        if params.len() != self.num_params() {
            return Err(Error::shape("representation parameter length"));
        }
        let mut phi = self.repr.phi.clone();
        let mut mu = self.repr.mu.clone();
        phi.set_params(&params[..np])?;
        mu.set_params(&params[np..])?;
        let (parts, grad) = self.evaluate(&phi, &mu)?;
        Ok((parts.loss + self.lambda * parts.regularizer, grad))
    }
}

/// Population value of the contrastive objective for tables `φ`, `μ`:
/// `-2 Σ q Σ_{s'} P φᵀμ(s') + Σ q Σ_n pₙ (φᵀμ(n))²`.
pub fn population_repr_objective(
    mdp: &TabularMdp,
    q: &SaTable,
    noise: &[f64],
    phi: &FeatureTable,
    mu: &FeatureTable,
) -> f64 {
    let na = mdp.num_actions();
    let mut total = 0.0;
    for s in 0..mdp.num_states() {
        for a in 0..na {
            let w = q.get(s, a);
            if w == 0.0 {
                continue;
            }
            let f = phi.row(s * na + a);
            let mut cross = 0.0;
            let mut square = 0.0;
            for (next, (&p, &pn)) in mdp.row(s, a).iter().zip(noise).enumerate() {
                let v = dot(f, mu.row(next));
                cross += p * v;
                square += pn * v * v;
            }
            total += w * (-2.0 * cross + square);
        }
    }
    total
}
