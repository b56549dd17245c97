//! Random Fourier features for Gaussian transition noise.
//!
//! For `s' = g(s,a) + ε` with `ε ~ N(0, σ²I)` the transition density is a
//! Gaussian kernel in `s' - g(s,a)`. Drawing frequencies `ω ~ N(0, σ⁻²I)`
//! gives `E[cos(ωᵀδ)] = exp(-‖δ‖²/2σ²)`, so real cos/sin feature pairs yield an
//! explicit factorization.

use rand_distr::{Distribution, Normal};

use crate::approx::{Model, ModelSpec};
use crate::encoding::SpaceEncoding;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

use super::{DynamicsRepresentation, NoiseSource, ReprMetadata};

/// `g(s,a) = A s + B a`, with `A` (`d×d`) and `B` (`d×m`) row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMean {
    pub state_dim: usize,
    pub action_dim: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl AffineMean {
    pub fn apply(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let (d, m) = (self.state_dim, self.action_dim);
        (0..d)
            .map(|r| {
                let sa: f64 = (0..d).map(|c| self.a[r * d + c] * state[c]).sum();
                let ba: f64 = (0..m).map(|c| self.b[r * m + c] * action[c]).sum();
                sa + ba
            })
            .collect()
    }
}

/// `N(x; mean, σ²I)`.
pub fn gaussian_density(x: &[f64], mean: &[f64], sigma: f64) -> f64 {
    let d = x.len() as f64;
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b).powi(2)).sum();
    (2.0 * std::f64::consts::PI * sigma * sigma).powf(-d / 2.0) * (-sq / (2.0 * sigma * sigma)).exp()
}

/// Builds `φ(s,a) = c·√(2/k)·[cos(Ω g(s,a)), sin(Ω g(s,a))]` with
/// `c = (2πσ²)^{-d/2}` and `μ(s') = √(2/k)·[cos(Ω s'), sin(Ω s')] / pₙ(s')`,
/// `pₙ` uniform on the box `[low, high]`.
pub fn rff_representation(
    mean: &AffineMean,
    sigma: f64,
    k: usize,
    seed: u64,
    low: Vec<f64>,
    high: Vec<f64>,
) -> Result<DynamicsRepresentation> {
    if k == 0 || k % 2 != 0 {
        return Err(Error::invalid(format!("k must be a positive even number, got {k}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("sigma must be positive"));
    }
    let (d, m) = (mean.state_dim, mean.action_dim);
    if mean.a.len() != d * d || mean.b.len() != d * m || low.len() != d {
        return Err(Error::shape("affine map or box does not match the state dimension"));
    }
    let noise = NoiseSource::uniform_box(low, high)?;
    let volume = match &noise {
        NoiseSource::UniformBox { low, high } => low.iter().zip(high).map(|(l, h)| h - l).product::<f64>(),
        NoiseSource::Atoms { .. } => unreachable!(),
    };
    let half = k / 2;
    let normal = Normal::new(0.0, 1.0 / sigma).expect("positive scale");
    let mut rng = rng_from_seed(seed);
    let omega: Vec<f64> = (0..half * d).map(|_| normal.sample(&mut rng)).collect();

    // rows of [ΩA | ΩB] so that the φ frequencies act on the concatenated (s, a)
    let mut phi_freq = vec![0.0; half * (d + m)];
    for i in 0..half {
        let w = &omega[i * d..(i + 1) * d];
        for c in 0..d {
            phi_freq[i * (d + m) + c] = (0..d).map(|r| w[r] * mean.a[r * d + c]).sum();
        }
        for c in 0..m {
            phi_freq[i * (d + m) + d + c] = (0..d).map(|r| w[r] * mean.b[r * m + c]).sum();
        }
    }
    let root = (2.0 / k as f64).sqrt();
    let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-(d as f64) / 2.0);

    let mut phi = Model::zeros(ModelSpec::fourier(d + m, k))?;
    let mut phi_params = phi_freq;
    phi_params.push(norm * root);
    phi.set_params(&phi_params)?;
    let mut mu = Model::zeros(ModelSpec::fourier(d, k))?;
    let mut mu_params = omega;
    mu_params.push(root * volume);
    mu.set_params(&mu_params)?;

    DynamicsRepresentation::new(
        phi,
        mu,
        SpaceEncoding::Continuous {
            state_dim: d,
            action_dim: m,
        },
        noise,
        ReprMetadata {
            env_id: "rff".into(),
            seed,
            config_hash: 0,
        },
    )
}
