//! Desk-scale environments and dataset generation: a slippery gridworld with
//! soft-optimal experts, a linear-Gaussian system, and expert/auxiliary
//! dataset bundles.

mod bundle;
mod gridworld;
mod linear_gaussian;
mod random;

pub use bundle::{generate_bundle, BundleManifest, DatasetBundle, EXPERT_FILE, GENERAL_FILE, MANIFEST_FILE};
pub use gridworld::{build_gridworld, gridworld_expert, soft_q_values, GridworldSpec, ACTION_NAMES};
pub use linear_gaussian::{sample_linear_gaussian, LinearGaussianSpec};
pub use random::{low_rank_mdp, random_mdp};
