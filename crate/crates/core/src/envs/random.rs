use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::rng::{rng_from_seed, Rng};

fn simplex(rng: &mut Rng, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

/// Rows and `ρ` drawn uniformly from the simplex.
pub fn random_mdp(num_states: usize, num_actions: usize, gamma: f64, seed: u64) -> Result<TabularMdp> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::invalid("random MDP needs states and actions"));
    }
    let mut rng = rng_from_seed(seed);
    let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        transition.extend(simplex(&mut rng, num_states));
    }
    let initial = simplex(&mut rng, num_states);
    TabularMdp::new_validated(num_states, num_actions, transition, initial, gamma)
}

/// Every row is a mixture of `rank` shared base distributions, so the
/// transition matrix has rank at most `rank`.
pub fn low_rank_mdp(num_states: usize, num_actions: usize, rank: usize, gamma: f64, seed: u64) -> Result<TabularMdp> {
    if rank == 0 || rank > num_states {
        return Err(Error::invalid(format!("rank must lie in 1..={num_states}")));
    }
    let mut rng = rng_from_seed(seed);
    let bases: Vec<Vec<f64>> = (0..rank).map(|_| simplex(&mut rng, num_states)).collect();
    let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        let mix = simplex(&mut rng, rank);
        transition.extend((0..num_states).map(|n| mix.iter().zip(&bases).map(|(w, b)| w * b[n]).sum::<f64>()));
    }
    let initial = simplex(&mut rng, num_states);
    TabularMdp::new_validated(num_states, num_actions, transition, initial, gamma)
}
