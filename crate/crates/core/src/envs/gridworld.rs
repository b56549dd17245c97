use crate::error::{Error, Result};
use crate::mdp::{SaTable, TabularMdp, TabularPolicy};

/// Action order: north (`y-1`), south (`y+1`), east (`x+1`), west (`x-1`).
pub const ACTION_NAMES: [&str; 4] = ["N", "S", "E", "W"];
const MOVES: [(i64, i64); 4] = [(0, -1), (0, 1), (1, 0), (-1, 0)];

/// A slippery grid. State index is `y·width + x`; the initial distribution is
/// uniform. The reward is diagnostic only and never enters a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub goal: (usize, usize),
    pub slip_prob: f64,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub gamma: f64,
}

impl GridworldSpec {
    /// Goal in the far corner, slip 0.1, reward 1 at the goal.
    pub fn square(size: usize) -> Self {
        Self {
            width: size,
            height: size,
            goal: (size.saturating_sub(1), size.saturating_sub(1)),
            slip_prob: 0.1,
            step_reward: 0.0,
            goal_reward: 1.0,
            gamma: 0.95,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("gridworld needs positive width and height"));
        }
        if self.goal.0 >= self.width || self.goal.1 >= self.height {
            return Err(Error::invalid(format!("goal {:?} outside the grid", self.goal)));
        }
        if !(0.0..1.0).contains(&self.slip_prob) {
            return Err(Error::invalid("slip probability must lie in [0,1)"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid("discount must lie in (0,1)"));
        }
        if !self.step_reward.is_finite() || !self.goal_reward.is_finite() {
            return Err(Error::invalid("rewards must be finite"));
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.width * self.height
    }

    pub fn state(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn goal_state(&self) -> usize {
        self.state(self.goal.0, self.goal.1)
    }

    /// Per-state diagnostic reward.
    pub fn reward(&self) -> Vec<f64> {
        let goal = self.goal_state();
        (0..self.num_states())
            .map(|s| if s == goal { self.goal_reward } else { self.step_reward })
            .collect()
    }

    pub fn env_id(&self) -> String {
        format!(
            "gridworld-{}x{}-goal{}.{}-slip{}-gamma{}",
            self.width, self.height, self.goal.0, self.goal.1, self.slip_prob, self.gamma
        )
    }

    fn step(&self, s: usize, m: usize) -> usize {
        let (x, y) = ((s % self.width) as i64, (s / self.width) as i64);
        let (nx, ny) = (x + MOVES[m].0, y + MOVES[m].1);
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            s
        } else {
            self.state(nx as usize, ny as usize)
        }
    }
}

pub fn build_gridworld(spec: &GridworldSpec) -> Result<TabularMdp> {
    spec.validate()?;
    let ns = spec.num_states();
    let mut transition = vec![0.0; ns * 4 * ns];
    for s in 0..ns {
        for a in 0..4 {
            let row = &mut transition[(s * 4 + a) * ns..(s * 4 + a + 1) * ns];
            for (m, _) in MOVES.iter().enumerate() {
                let p = if m == a {
                    1.0 - spec.slip_prob
                } else {
                    spec.slip_prob / 3.0
                };
                row[spec.step(s, m)] += p;
            }
        }
    }
    TabularMdp::new_validated(ns, 4, transition, vec![1.0 / ns as f64; ns], spec.gamma)
}

/// Soft value iteration `Q = r + γ P V`, `V = τ log Σ_a exp(Q/τ)`, iterated to
/// a sup-norm change below `1e-10`.
pub fn soft_q_values(mdp: &TabularMdp, reward: &[f64], temperature: f64) -> Result<SaTable> {
    if !(temperature > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    if reward.len() != mdp.num_states() {
        return Err(Error::shape("reward length"));
    }
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let gamma = mdp.gamma();
    let mut v = vec![0.0; ns];
    let mut q = SaTable::zeros(ns, na);
    for _ in 0..100_000 {
        for s in 0..ns {
            for a in 0..na {
                let next: f64 = mdp.row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                q.set(s, a, reward[s] + gamma * next);
            }
        }
        let mut change: f64 = 0.0;
        for (s, vs) in v.iter_mut().enumerate() {
            let max = (0..na).map(|a| q.get(s, a)).fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = (0..na).map(|a| ((q.get(s, a) - max) / temperature).exp()).sum();
            let new = max + temperature * sum.ln();
            change = change.max((new - *vs).abs());
            *vs = new;
        }
        if change < 1e-10 {
            return Ok(q);
        }
    }
    Err(Error::Divergence {
        step: 100_000,
        reason: "soft value iteration did not converge".into(),
    })
}

/// Softmax over soft-optimal `Q` at the given temperature.
pub fn gridworld_expert(mdp: &TabularMdp, spec: &GridworldSpec, temperature: f64) -> Result<TabularPolicy> {
    let q = soft_q_values(mdp, &spec.reward(), temperature)?;
    TabularPolicy::softmax(mdp.num_states(), mdp.num_actions(), q.values(), temperature)
}
