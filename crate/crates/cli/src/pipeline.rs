//! The experiment stages shared by the commands and the acceptance suite.

use reprdice::dice::{
    train_bc, train_repr_valuedice, train_valuedice, DiceSource, EvalContext, PolicyModel, TrainOutput,
};
use reprdice::encoding::SpaceEncoding;
use reprdice::envs::{build_gridworld, generate_bundle, gridworld_expert, DatasetBundle, GridworldSpec};
use reprdice::mdp::{TabularMdp, TabularPolicy};
use reprdice::oracle::exact_occupancy;
use reprdice::repr::{pretrain, DynamicsRepresentation, PretrainOutput, ReprTrainConfig};
use reprdice::rng::derive_seed;

use crate::config::{Behavior, EnvKind, RunConfig};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Bc,
    ValueDice,
    ReprValueDice,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bc => "bc",
            Algorithm::ValueDice => "valuedice",
            Algorithm::ReprValueDice => "repr_valuedice",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bc" => Some(Algorithm::Bc),
            "valuedice" => Some(Algorithm::ValueDice),
            "repr_valuedice" => Some(Algorithm::ReprValueDice),
            _ => None,
        }
    }
}

/// Per-stage seeds derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub master: u64,
    pub gen: u64,
    pub pretrain: u64,
    pub imitate: u64,
    pub eval: u64,
}

impl StageSeeds {
    pub fn new(master: u64) -> Self {
        Self {
            master,
            gen: derive_seed(master, "gen"),
            pretrain: derive_seed(master, "pretrain"),
            imitate: derive_seed(master, "imitate"),
            eval: derive_seed(master, "eval"),
        }
    }
}

/// The gridworld, its expert and behavior policies, and the ground truth
/// used for diagnostics.
pub struct Environment {
    pub spec: GridworldSpec,
    pub mdp: TabularMdp,
    pub expert: TabularPolicy,
    pub behavior: TabularPolicy,
    pub ctx: EvalContext,
}

impl Environment {
    pub fn from_config(config: &RunConfig) -> Result<Self, CliError> {
        if config.env.kind != EnvKind::Gridworld {
            return Err(CliError::Config(
                "data generation and imitation need `env.kind = gridworld`".into(),
            ));
        }
        let spec = config.env.gridworld.clone();
        let mdp = build_gridworld(&spec).map_err(|e| CliError::Config(e.to_string()))?;
        let expert = gridworld_expert(&mdp, &spec, config.env.expert_temperature).map_err(CliError::from_core)?;
        let behavior = match config.data.behavior {
            Behavior::Uniform => TabularPolicy::uniform(spec.num_states(), 4),
            Behavior::Medium => {
                gridworld_expert(&mdp, &spec, config.env.medium_temperature).map_err(CliError::from_core)?
            }
        };
        let d_exp = exact_occupancy(&mdp, &expert)
            .map_err(CliError::from_core)?
            .into_table();
        let ctx = EvalContext {
            mdp: mdp.clone(),
            d_exp,
            reward: spec.reward(),
            horizon: config.eval.horizon,
        };
        Ok(Self {
            spec,
            mdp,
            expert,
            behavior,
            ctx,
        })
    }

    pub fn env_id(&self) -> String {
        self.spec.env_id()
    }

    pub fn encoding(&self) -> SpaceEncoding {
        SpaceEncoding::Tabular {
            num_states: self.spec.num_states(),
            num_actions: 4,
        }
    }

    /// The expert as a softmax policy with log-probability logits.
    pub fn expert_model(&self) -> Result<PolicyModel, CliError> {
        let mut model = PolicyModel::tabular_softmax(self.spec.num_states(), 4);
        let logits: Vec<f64> = self.expert.probs().iter().map(|p| p.max(1e-300).ln()).collect();
        model.set_params(&logits).map_err(CliError::from_core)?;
        Ok(model)
    }
}

pub fn generate(config: &RunConfig, env: &Environment, seeds: StageSeeds) -> Result<DatasetBundle, CliError> {
    generate_bundle(
        &env.mdp,
        &env.env_id(),
        ("expert", &env.expert),
        (config.data.behavior.name(), &env.behavior),
        config.data.expert_trajectories,
        config.data.general_multiplier,
        config.data.horizon,
        config.data.restart_prob,
        seeds.gen,
    )
    .map_err(|e| CliError::Config(e.to_string()))
}

pub fn repr_config(config: &RunConfig, env: &Environment, seeds: StageSeeds) -> ReprTrainConfig {
    ReprTrainConfig {
        k: config.feature_dim(env.spec.num_states()),
        seed: seeds.pretrain,
        ..config.repr.clone()
    }
}

pub fn pretrain_stage(
    config: &RunConfig,
    env: &Environment,
    bundle: &DatasetBundle,
    seeds: StageSeeds,
) -> Result<PretrainOutput, CliError> {
    pretrain(
        &bundle.general,
        &bundle.expert,
        env.encoding(),
        &repr_config(config, env, seeds),
    )
    .map_err(CliError::from_core)
}

/// Trains one algorithm on the expert part of `bundle`.
pub fn imitate_stage(
    config: &RunConfig,
    env: &Environment,
    bundle: &DatasetBundle,
    algorithm: Algorithm,
    repr: Option<&DynamicsRepresentation>,
    seeds: StageSeeds,
) -> Result<TrainOutput, CliError> {
    let il = reprdice::dice::IlConfig {
        seed: seeds.imitate,
        ..config.il.clone()
    };
    let source = DiceSource::Samples(&bundle.expert);
    let ns = env.spec.num_states();
    let out = match algorithm {
        Algorithm::Bc => train_bc(&bundle.expert, PolicyModel::tabular_softmax(ns, 4), &il, Some(&env.ctx)),
        Algorithm::ValueDice => train_valuedice(source, ns, 4, &il, Some(&env.ctx)),
        Algorithm::ReprValueDice => {
            let repr = repr.ok_or_else(|| CliError::Config("repr_valuedice needs --repr".into()))?;
            train_repr_valuedice(repr, source, &il, Some(&env.ctx))
        }
    };
    out.map_err(CliError::from_core)
}
