use std::fmt;
use std::fs;
use std::path::Path;

use crate::dataset::{sample_restarting_trajectories, SourceTag, TransitionDataset};
use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, TabularPolicy};
use crate::rng::derive_seed;

/// Sizes, seeds and policy names behind a bundle. Stored as `key=value` lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundleManifest {
    pub env_id: String,
    pub seed: u64,
    pub expert_seed: u64,
    pub general_seed: u64,
    pub expert_policy: String,
    pub behavior_policy: String,
    pub expert_trajectories: usize,
    pub general_multiplier: usize,
    pub horizon: usize,
    pub restart_prob_bits: u64,
    pub expert_count: usize,
    pub general_count: usize,
}

impl BundleManifest {
    pub fn restart_prob(&self) -> f64 {
        f64::from_bits(self.restart_prob_bits)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("manifest line without `=`: `{line}`")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            map.get(k)
                .cloned()
                .ok_or_else(|| Error::parse(format!("manifest lacks `{k}`")))
        };
        let num = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| Error::parse(format!("bad manifest value for `{k}`")))
        };
        Ok(Self {
            env_id: get("env_id")?,
            seed: num("seed")?,
            expert_seed: num("expert_seed")?,
            general_seed: num("general_seed")?,
            expert_policy: get("expert_policy")?,
            behavior_policy: get("behavior_policy")?,
            expert_trajectories: num("expert_trajectories")? as usize,
            general_multiplier: num("general_multiplier")? as usize,
            horizon: num("horizon")? as usize,
            restart_prob_bits: get("restart_prob")?
                .parse::<f64>()
                .map_err(|_| Error::parse("bad restart_prob"))?
                .to_bits(),
            expert_count: num("expert_count")? as usize,
            general_count: num("general_count")? as usize,
        })
    }
}

impl fmt::Display for BundleManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "env_id={}", self.env_id)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "expert_seed={}", self.expert_seed)?;
        writeln!(f, "general_seed={}", self.general_seed)?;
        writeln!(f, "expert_policy={}", self.expert_policy)?;
        writeln!(f, "behavior_policy={}", self.behavior_policy)?;
        writeln!(f, "expert_trajectories={}", self.expert_trajectories)?;
        writeln!(f, "general_multiplier={}", self.general_multiplier)?;
        writeln!(f, "horizon={}", self.horizon)?;
        writeln!(f, "restart_prob={}", self.restart_prob())?;
        writeln!(f, "expert_count={}", self.expert_count)?;
        writeln!(f, "general_count={}", self.general_count)
    }
}

/// Expert transitions and the general dataset that contains them.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub expert: TransitionDataset,
    /// The expert samples first, in order, then the behavior samples.
    pub general: TransitionDataset,
    pub manifest: BundleManifest,
}

pub const EXPERT_FILE: &str = "expert.txt";
pub const GENERAL_FILE: &str = "general.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";

impl DatasetBundle {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(EXPERT_FILE), self.expert.to_text())?;
        fs::write(dir.join(GENERAL_FILE), self.general.to_text())?;
        fs::write(dir.join(MANIFEST_FILE), self.manifest.to_string())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let expert = TransitionDataset::from_text(&fs::read_to_string(dir.join(EXPERT_FILE))?)?;
        let general = TransitionDataset::from_text(&fs::read_to_string(dir.join(GENERAL_FILE))?)?;
        let manifest = BundleManifest::parse(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.expert_count != expert.len() || manifest.general_count != general.len() {
            return Err(Error::parse("manifest counts do not match the dataset files"));
        }
        Ok(Self {
            expert,
            general,
            manifest,
        })
    }
}

/// `expert_trajectories` rollouts of the expert plus
/// `general_multiplier × expert_trajectories` rollouts of the behavior policy.
/// Rollouts restart from `ρ` with probability `restart_prob` after each step.
#[allow(clippy::too_many_arguments)]
pub fn generate_bundle(
    mdp: &TabularMdp,
    env_id: &str,
    expert_policy: (&str, &TabularPolicy),
    behavior_policy: (&str, &TabularPolicy),
    expert_trajectories: usize,
    general_multiplier: usize,
    horizon: usize,
    restart_prob: f64,
    seed: u64,
) -> Result<DatasetBundle> {
    if expert_trajectories == 0 || horizon == 0 {
        return Err(Error::invalid("expert trajectories and horizon must be positive"));
    }
    let expert_seed = derive_seed(seed, "expert");
    let general_seed = derive_seed(seed, "general");
    let expert = sample_restarting_trajectories(
        mdp,
        expert_policy.1,
        expert_trajectories,
        horizon,
        restart_prob,
        expert_seed,
        env_id,
        SourceTag::Expert,
    )?;
    let behavior = sample_restarting_trajectories(
        mdp,
        behavior_policy.1,
        general_multiplier * expert_trajectories,
        horizon,
        restart_prob,
        general_seed,
        env_id,
        SourceTag::General,
    )?;
    let mut general = expert.clone();
    general.samples.extend(behavior.samples);
    let manifest = BundleManifest {
        env_id: env_id.to_string(),
        seed,
        expert_seed,
        general_seed,
        expert_policy: expert_policy.0.to_string(),
        behavior_policy: behavior_policy.0.to_string(),
        expert_trajectories,
        general_multiplier,
        horizon,
        restart_prob_bits: restart_prob.to_bits(),
        expert_count: expert.len(),
        general_count: general.len(),
    };
    Ok(DatasetBundle {
        expert,
        general,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{build_gridworld, gridworld_expert, GridworldSpec};

    fn bundle(seed: u64, multiplier: usize) -> DatasetBundle {
        let spec = GridworldSpec::square(5);
        let mdp = build_gridworld(&spec).unwrap();
        let expert = gridworld_expert(&mdp, &spec, 0.1).unwrap();
        let uniform = TabularPolicy::uniform(25, 4);
        generate_bundle(
            &mdp,
            &spec.env_id(),
            ("expert", &expert),
            ("uniform", &uniform),
            1,
            multiplier,
            1000,
            0.05,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn sizes_follow_the_regimes() {
        let b = bundle(1, 40);
        assert_eq!(b.expert.len(), 1000);
        assert_eq!(b.general.len(), 41 * 1000);
        assert_eq!(b.general.samples[..1000], b.expert.samples[..]);
        assert!(b.general.samples[1000..].iter().all(|t| t.tag == SourceTag::General));
        assert_eq!(b.manifest.expert_count, 1000);
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (bundle(7, 2), bundle(7, 2));
        a.save(&dir.path().join("a")).unwrap();
        b.save(&dir.path().join("b")).unwrap();
        for f in [EXPERT_FILE, GENERAL_FILE, MANIFEST_FILE] {
            assert_eq!(
                fs::read(dir.path().join("a").join(f)).unwrap(),
                fs::read(dir.path().join("b").join(f)).unwrap()
            );
        }
        assert_eq!(DatasetBundle::load(&dir.path().join("a")).unwrap(), a);
        assert!(generate_bundle(
            &build_gridworld(&GridworldSpec::square(3)).unwrap(),
            "x",
            ("u", &TabularPolicy::uniform(9, 4)),
            ("u", &TabularPolicy::uniform(9, 4)),
            0,
            1,
            10,
            0.0,
            0
        )
        .is_err());
    }
}
