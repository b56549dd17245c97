//! Flat `section.key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use reprdice::approx::Activation;
use reprdice::dice::{IlConfig, PolicyChoice};
use reprdice::divergence::KlVariant;
use reprdice::envs::GridworldSpec;
use reprdice::repr::{NoiseChoice, ReprTrainConfig};

use crate::CliError;

/// Every accepted key with its default.
const SCHEMA: &[(&str, &str)] = &[
    ("seed", "0"),
    ("env.kind", "gridworld"),
    ("env.width", "5"),
    ("env.height", "5"),
    ("env.slip", "0.1"),
    ("env.gamma", "0.95"),
    ("env.goal_reward", "1"),
    ("env.step_reward", "0"),
    ("env.expert_temperature", "0.1"),
    ("env.medium_temperature", "1"),
    ("env.num_states", "20"),
    ("env.num_actions", "4"),
    ("env.count", "10"),
    ("env.file", ""),
    ("data.expert_trajectories", "1"),
    ("data.general_multiplier", "40"),
    ("data.horizon", "1000"),
    ("data.restart_prob", "0"),
    ("data.behavior", "uniform"),
    ("repr.k", "0"),
    ("repr.lambda", "0.1"),
    ("repr.batch_size_dyn", "256"),
    ("repr.batch_size_noise", "256"),
    ("repr.steps", "3000"),
    ("repr.step_size", "0.01"),
    ("repr.decay", "true"),
    ("repr.init_scale", "0.1"),
    ("repr.hidden", "64,64"),
    ("repr.activation", "tanh"),
    ("repr.noise", "general"),
    ("repr.log_every", "50"),
    ("il.dual_steps_per_policy_step", "4"),
    ("il.batch_size", "256"),
    ("il.dual_step_size", "0.01"),
    ("il.feature_step_scale", "1"),
    ("il.policy_step_size", "0.01"),
    ("il.total_iterations", "2000"),
    ("il.gradient_penalty_weight", "0"),
    ("il.divergence", "normalized"),
    ("il.log_every", "20"),
    ("il.clamp_eps", "1e-6"),
    ("il.exponent_cap", "20"),
    ("il.policy", "tabular"),
    ("il.decay", "false"),
    ("eval.episodes", "20"),
    ("eval.horizon", "100"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Gridworld,
    Random,
    TabularFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    Uniform,
    Medium,
}

impl Behavior {
    pub fn name(self) -> &'static str {
        match self {
            Behavior::Uniform => "uniform",
            Behavior::Medium => "medium",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub gridworld: GridworldSpec,
    pub expert_temperature: f64,
    pub medium_temperature: f64,
    pub num_states: usize,
    pub num_actions: usize,
    pub count: usize,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub expert_trajectories: usize,
    pub general_multiplier: usize,
    pub horizon: usize,
    pub restart_prob: f64,
    pub behavior: Behavior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub episodes: usize,
    pub horizon: usize,
}

/// Resolved configuration; `repr.k = 0` means one feature per state.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub env: EnvConfig,
    pub data: DataConfig,
    pub repr: ReprTrainConfig,
    pub il: IlConfig,
    pub eval: EvalConfig,
    values: BTreeMap<String, String>,
}

struct Values(BTreeMap<String, String>);

impl Values {
    fn raw(&self, key: &str) -> &str {
        &self.0[key]
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{raw}`")))
    }

    fn float(&self, key: &str) -> Result<f64, CliError> {
        let v: f64 = self.parse(key)?;
        if !v.is_finite() {
            return Err(CliError::Config(format!("`{key}` must be finite")));
        }
        Ok(v)
    }

    fn choice<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<T, CliError> {
        let raw = self.raw(key);
        parse(raw).ok_or_else(|| CliError::Config(format!("`{key}`: unknown value `{raw}`")))
    }
}

impl RunConfig {
    pub fn defaults() -> Self {
        Self::parse("").expect("defaults are valid")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines; `#` starts a comment. Unknown keys and
    /// repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, String> = SCHEMA.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let mut seen = std::collections::HashSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !values.contains_key(key) {
                return Err(CliError::Config(format!("unknown config key `{key}`")));
            }
            if !seen.insert(key.to_string()) {
                return Err(CliError::Config(format!("config key `{key}` given twice")));
            }
            values.insert(key.to_string(), value.to_string());
        }
        Self::resolve(Values(values))
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.values.insert("seed".into(), seed.to_string());
    }

    fn resolve(v: Values) -> Result<Self, CliError> {
        let kind = v.choice("env.kind", |s| match s {
            "gridworld" => Some(EnvKind::Gridworld),
            "random" => Some(EnvKind::Random),
            "tabular_file" => Some(EnvKind::TabularFile),
            _ => None,
        })?;
        let (width, height): (usize, usize) = (v.parse("env.width")?, v.parse("env.height")?);
        let gridworld = GridworldSpec {
            width,
            height,
            goal: (width.saturating_sub(1), height.saturating_sub(1)),
            slip_prob: v.float("env.slip")?,
            step_reward: v.float("env.step_reward")?,
            goal_reward: v.float("env.goal_reward")?,
            gamma: v.float("env.gamma")?,
        };
        let file = match v.raw("env.file") {
            "" => None,
            p => Some(PathBuf::from(p)),
        };
        let env = EnvConfig {
            kind,
            gridworld,
            expert_temperature: v.float("env.expert_temperature")?,
            medium_temperature: v.float("env.medium_temperature")?,
            num_states: v.parse("env.num_states")?,
            num_actions: v.parse("env.num_actions")?,
            count: v.parse("env.count")?,
            file,
        };
        let data = DataConfig {
            expert_trajectories: v.parse("data.expert_trajectories")?,
            general_multiplier: v.parse("data.general_multiplier")?,
            horizon: v.parse("data.horizon")?,
            restart_prob: v.float("data.restart_prob")?,
            behavior: v.choice("data.behavior", |s| match s {
                "uniform" => Some(Behavior::Uniform),
                "medium" => Some(Behavior::Medium),
                _ => None,
            })?,
        };
        let hidden = v
            .raw("repr.hidden")
            .split(',')
            .map(|h| h.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::Config("`repr.hidden`: expected comma-separated widths".into()))?;
        let repr = ReprTrainConfig {
            k: v.parse("repr.k")?,
            lambda: v.float("repr.lambda")?,
            batch_size_dyn: v.parse("repr.batch_size_dyn")?,
            batch_size_noise: v.parse("repr.batch_size_noise")?,
            steps: v.parse("repr.steps")?,
            step_size: v.float("repr.step_size")?,
            decay: v.parse("repr.decay")?,
            seed: 0,
            init_scale: v.float("repr.init_scale")?,
            hidden,
            activation: v.choice("repr.activation", Activation::parse)?,
            noise: v.choice("repr.noise", NoiseChoice::parse)?,
            log_every: v.parse("repr.log_every")?,
        };
        let il = IlConfig {
            gamma: env.gridworld.gamma,
            dual_steps_per_policy_step: v.parse("il.dual_steps_per_policy_step")?,
            batch_size: v.parse("il.batch_size")?,
            dual_step_size: v.float("il.dual_step_size")?,
            feature_step_scale: v.float("il.feature_step_scale")?,
            policy_step_size: v.float("il.policy_step_size")?,
            total_iterations: v.parse("il.total_iterations")?,
            gradient_penalty_weight: v.float("il.gradient_penalty_weight")?,
            divergence: v.choice("il.divergence", KlVariant::parse)?,
            seed: 0,
            log_every: v.parse("il.log_every")?,
            clamp_eps: v.float("il.clamp_eps")?,
            exponent_cap: v.float("il.exponent_cap")?,
            policy: v.choice("il.policy", PolicyChoice::parse)?,
            decay: v.parse("il.decay")?,
        };
        let eval = EvalConfig {
            episodes: v.parse("eval.episodes")?,
            horizon: v.parse("eval.horizon")?,
        };
        let config = Self {
            seed: v.parse("seed")?,
            env,
            data,
            repr,
            il,
            eval,
            values: v.0,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |e: reprdice::Error| CliError::Config(e.to_string());
        if self.env.kind == EnvKind::Gridworld {
            self.env.gridworld.validate().map_err(bad)?;
        }
        if !(self.env.gridworld.gamma > 0.0 && self.env.gridworld.gamma < 1.0) {
            return Err(CliError::Config("`env.gamma` must lie in (0,1)".into()));
        }
        for (key, t) in [
            ("env.expert_temperature", self.env.expert_temperature),
            ("env.medium_temperature", self.env.medium_temperature),
        ] {
            if !(t > 0.0) {
                return Err(CliError::Config(format!("`{key}` must be positive")));
            }
        }
        if self.env.kind == EnvKind::TabularFile && self.env.file.is_none() {
            return Err(CliError::Config("`env.kind = tabular_file` needs `env.file`".into()));
        }
        if self.env.kind == EnvKind::Random
            && (self.env.num_states == 0 || self.env.num_actions == 0 || self.env.count == 0)
        {
            return Err(CliError::Config(
                "random environments need positive sizes and count".into(),
            ));
        }
        if self.data.expert_trajectories == 0 || self.data.horizon == 0 {
            return Err(CliError::Config(
                "`data.expert_trajectories` and `data.horizon` must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.data.restart_prob) {
            return Err(CliError::Config("`data.restart_prob` must lie in [0,1]".into()));
        }
        let repr = ReprTrainConfig {
            k: self.repr.k.max(1),
            ..self.repr.clone()
        };
        repr.validate().map_err(bad)?;
        self.il.validate().map_err(bad)?;
        if self.eval.horizon == 0 {
            return Err(CliError::Config("`eval.horizon` must be positive".into()));
        }
        Ok(())
    }

    /// `repr.k`, or the number of states when it is 0.
    pub fn feature_dim(&self, num_states: usize) -> usize {
        if self.repr.k == 0 {
            num_states
        } else {
            self.repr.k
        }
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.values {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
