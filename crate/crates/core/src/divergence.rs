//! KL-family f-divergence generators and their convex conjugates.

use crate::error::{Error, Result};
use crate::mdp::SaTable;

/// Which KL generator to use.
///
/// `Normalized` is `f(x) = x log x - x + 1`, whose conjugate is `exp(y) - 1` and
/// whose derivative vanishes at 1. `Shifted` is the plain `f(x) = x log x` with
/// conjugate `exp(y - 1)`. On normalized measures both give the same divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KlVariant {
    #[default]
    Normalized,
    Shifted,
}

impl KlVariant {
    pub fn name(self) -> &'static str {
        match self {
            KlVariant::Normalized => "normalized",
            KlVariant::Shifted => "shifted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "normalized" => Some(KlVariant::Normalized),
            "shifted" => Some(KlVariant::Shifted),
            _ => None,
        }
    }
}

/// A convex generator `f` together with `f'`, `f*` and `(f')⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DivergenceSpec {
    variant: KlVariant,
}

pub fn kl_divergence_spec(variant: KlVariant) -> DivergenceSpec {
    DivergenceSpec { variant }
}

impl DivergenceSpec {
    pub fn variant(&self) -> KlVariant {
        self.variant
    }

    pub fn name(&self) -> String {
        format!("kl-{}", self.variant.name())
    }

    /// `f(x)`, with the continuous extension at `x = 0`.
    pub fn generator(&self, x: f64) -> f64 {
        let xlogx = if x == 0.0 { 0.0 } else { x * x.ln() };
        match self.variant {
            KlVariant::Normalized => xlogx - x + 1.0,
            KlVariant::Shifted => xlogx,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self.variant {
            KlVariant::Normalized => x.ln(),
            KlVariant::Shifted => x.ln() + 1.0,
        }
    }

    pub fn conjugate(&self, y: f64) -> f64 {
        match self.variant {
            KlVariant::Normalized => y.exp() - 1.0,
            KlVariant::Shifted => (y - 1.0).exp(),
        }
    }

    /// `(f')⁻¹(y)`, which is also the derivative of `f*`.
    pub fn derivative_inverse(&self, y: f64) -> f64 {
        match self.variant {
            KlVariant::Normalized => y.exp(),
            KlVariant::Shifted => (y - 1.0).exp(),
        }
    }
}

/// `E_{d_exp}[f(d / d_exp)]`, summing only over pairs where `d_exp > 0`.
pub fn f_divergence(d: &SaTable, d_exp: &SaTable, spec: &DivergenceSpec) -> Result<f64> {
    if d.num_states() != d_exp.num_states() || d.num_actions() != d_exp.num_actions() {
        return Err(Error::shape("f_divergence arguments differ in shape"));
    }
    let mut total = 0.0;
    for s in 0..d.num_states() {
        for a in 0..d.num_actions() {
            let (p, q) = (d.get(s, a), d_exp.get(s, a));
            if q > 0.0 {
                total += q * spec.generator(p / q);
            } else if p > 0.0 {
                return Err(Error::SupportViolation { state: s, action: a });
            }
        }
    }
    Ok(total)
}
