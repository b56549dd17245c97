//! Tabular and function-approximation building blocks for learning a
//! low-rank dynamics representation from transition data and using it for
//! distribution-matching imitation.

pub mod approx;
mod binio;
pub mod dataset;
pub mod dice;
pub mod divergence;
pub mod encoding;
pub mod envs;
pub mod error;
pub mod mdp;
pub mod oracle;
pub mod repr;
pub mod rng;

pub use error::{Error, Result};
