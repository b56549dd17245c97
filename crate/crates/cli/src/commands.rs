use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use reprdice::dice::{evaluate_policy, PolicyModel, TrainOutput};
use reprdice::envs::DatasetBundle;
use reprdice::oracle::svd_factorization;
use reprdice::repr::{load_representation, population_repr_objective, save_representation, DynamicsRepresentation};

use crate::config::RunConfig;
use crate::oracle_check::{run_suite, Outcome};
use crate::pipeline::{imitate_stage, pretrain_stage, Algorithm, Environment, StageSeeds};
use crate::report::{build_report, collect_runs, DIAGNOSTICS_FILE, POLICY_FILE, RUN_FILE};
use crate::{CliError, Command, CommonArgs};

pub const CONFIG_FILE: &str = "config.txt";
pub const EXPERT_POLICY_FILE: &str = "expert_policy.bin";
pub const CHECKPOINT_FILE: &str = "repr.ckpt";
pub const CURVE_FILE: &str = "repr_curve.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const THREADS_VAR: &str = "DICE_REPR_THREADS";

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Gen { common, out } => gen(&load_config(&common)?, &out),
        Command::Pretrain { common, bundle, out } => pretrain(&load_config(&common)?, &bundle, &out),
        Command::Imitate {
            common,
            bundle,
            algorithm,
            repr,
            seeds,
            out,
        } => {
            let algorithm = Algorithm::parse(&algorithm).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown algorithm `{algorithm}` (bc, valuedice, repr_valuedice)"
                ))
            })?;
            if algorithm == Algorithm::ReprValueDice && repr.is_none() {
                return Err(CliError::Config(
                    "repr_valuedice needs a checkpoint (--repr PATH)".into(),
                ));
            }
            let config = load_config(&common)?;
            let seeds = match seeds {
                Some(range) => Some(parse_seed_range(&range)?),
                None => None,
            };
            imitate(&config, &bundle, algorithm, repr.as_deref(), seeds, &out)
        }
        Command::Eval {
            common,
            policy,
            episodes,
            out,
        } => eval(&load_config(&common)?, &policy, episodes, &out),
        Command::OracleCheck { common } => oracle_check(&load_config(&common)?),
        Command::Report { runs, out } => report(&runs, &out),
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::defaults(),
    };
    if let Some(seed) = common.seed {
        config.set_seed(seed);
    }
    Ok(config)
}

/// `A..B` with `A < B`.
pub fn parse_seed_range(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Config(format!("--seeds expects `A..B` with A < B, got `{s}`"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let (a, b): (u64, u64) = (
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    );
    if a >= b {
        return Err(bad());
    }
    Ok((a..b).collect())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}", dir.display()), e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))
}

fn load_bundle(dir: &Path, env: &Environment) -> Result<DatasetBundle, CliError> {
    let bundle =
        DatasetBundle::load(dir).map_err(|e| CliError::io(format!("cannot load bundle {}", dir.display()), e))?;
    if bundle.manifest.env_id != env.env_id() {
        return Err(CliError::Config(format!(
            "bundle is for {} but the config describes {}",
            bundle.manifest.env_id,
            env.env_id()
        )));
    }
    Ok(bundle)
}

pub fn gen(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let env = Environment::from_config(config)?;
    let seeds = StageSeeds::new(config.seed);
    let bundle = crate::pipeline::generate(config, &env, seeds)?;
    let expert = env.expert_model()?;
    create_dir(out)?;
    bundle
        .save(out)
        .map_err(|e| CliError::io(format!("cannot write bundle to {}", out.display()), e))?;
    expert
        .save(&out.join(EXPERT_POLICY_FILE))
        .map_err(|e| CliError::io("cannot write expert policy", e))?;
    write_file(&out.join(CONFIG_FILE), config.to_string())?;
    let m = &bundle.manifest;
    println!("env {}  seed {}", m.env_id, m.seed);
    println!(
        "expert: {} trajector{} of {} steps ({} transitions, policy {})",
        m.expert_trajectories,
        if m.expert_trajectories == 1 { "y" } else { "ies" },
        m.horizon,
        m.expert_count,
        m.expert_policy
    );
    println!(
        "general: expert + {}x{} {} trajectories ({} transitions)",
        m.general_multiplier, m.expert_trajectories, m.behavior_policy, m.general_count
    );
    Ok(())
}

/// Population objective of `repr` and of the rank-k SVD optimum, both under
/// the general pair distribution and the checkpoint's noise distribution.
pub fn population_gap(
    env: &Environment,
    bundle: &DatasetBundle,
    repr: &DynamicsRepresentation,
) -> Result<(f64, f64), CliError> {
    let ns = env.spec.num_states();
    let q = bundle.general.empirical_pairs(ns, 4).map_err(CliError::from_core)?;
    let noise = repr.noise_distribution().map_err(CliError::from_core)?;
    let (phi, mu) = (
        repr.phi_table().map_err(CliError::from_core)?,
        repr.mu_table().map_err(CliError::from_core)?,
    );
    let learned = population_repr_objective(&env.mdp, &q, &noise, &phi, &mu);
    let fact = svd_factorization(&env.mdp, &q, &noise, phi.k()).map_err(CliError::from_core)?;
    let optimum = population_repr_objective(&env.mdp, &q, &noise, &fact.phi, &fact.mu);
    Ok((learned, optimum))
}

pub fn pretrain(config: &RunConfig, bundle_dir: &Path, out: &Path) -> Result<(), CliError> {
    let env = Environment::from_config(config)?;
    let bundle = load_bundle(bundle_dir, &env)?;
    let seeds = StageSeeds::new(config.seed);
    let result = pretrain_stage(config, &env, &bundle, seeds)?;
    let mut curve = String::from("step,loss,regularizer,clamped\n");
    for p in &result.curve {
        writeln!(curve, "{},{},{},{}", p.step, p.loss, p.regularizer, p.clamped).unwrap();
    }
    create_dir(out)?;
    write_file(&out.join(CURVE_FILE), curve)?;
    if let Some((step, reason)) = result.divergence {
        let last = result.curve.last().map_or("none".to_string(), |p| p.step.to_string());
        return Err(CliError::Divergence(format!(
            "pretraining hit {reason} at step {step}; last finite logged step {last}"
        )));
    }
    let path = out.join(CHECKPOINT_FILE);
    save_representation(&result.repr, &path).map_err(|e| CliError::io("cannot write checkpoint", e))?;
    let bytes = fs::read(&path).map_err(|e| CliError::io("cannot reread checkpoint", e))?;
    let (learned, optimum) = population_gap(&env, &bundle, &result.repr)?;
    println!("checkpoint {}  crc32 {:08x}", path.display(), crc32fast::hash(&bytes));
    println!(
        "k {}  steps {}  clamp activations {}",
        result.repr.k, config.repr.steps, result.clamp_activations
    );
    if let Some(p) = result.curve.last() {
        println!("final minibatch loss {:.6}  regularizer {:.6}", p.loss, p.regularizer);
    }
    println!(
        "population objective {learned:.6}  svd optimum {optimum:.6}  gap {:.3}%",
        100.0 * (learned - optimum) / optimum.abs().max(1e-300)
    );
    Ok(())
}

struct RunResult {
    seed: u64,
    dir: PathBuf,
    output: TrainOutput,
}

fn worker_count(jobs: usize) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0);
    cap.unwrap_or(available).min(jobs).max(1)
}

/// Runs `f` on every job with at most `workers` threads; results come back in
/// job order.
pub fn fan_out<T: Sync, R: Send>(jobs: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = Mutex::new(0usize);
    let slots: Vec<Mutex<Option<R>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1) {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().unwrap();
                    let i = *n;
                    *n += 1;
                    i
                };
                if i >= jobs.len() {
                    break;
                }
                let r = f(&jobs[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every job ran"))
        .collect()
}

pub fn imitate(
    config: &RunConfig,
    bundle_dir: &Path,
    algorithm: Algorithm,
    repr_path: Option<&Path>,
    seeds: Option<Vec<u64>>,
    out: &Path,
) -> Result<(), CliError> {
    let env = Environment::from_config(config)?;
    let bundle = load_bundle(bundle_dir, &env)?;
    let repr = match (algorithm, repr_path) {
        (Algorithm::ReprValueDice, Some(p)) => {
            let repr = load_representation(p).map_err(|e| CliError::io(format!("cannot load {}", p.display()), e))?;
            repr.expect_k(config.feature_dim(env.spec.num_states()))
                .map_err(CliError::from_core)?;
            Some(repr)
        }
        (Algorithm::ReprValueDice, None) => {
            return Err(CliError::Config(
                "repr_valuedice needs a checkpoint (--repr PATH)".into(),
            ))
        }
        _ => None,
    };
    let jobs: Vec<(u64, PathBuf)> = match seeds {
        Some(seeds) => seeds.into_iter().map(|s| (s, out.join(format!("seed-{s}")))).collect(),
        None => vec![(config.seed, out.to_path_buf())],
    };
    let results = fan_out(&jobs, worker_count(jobs.len()), |(seed, dir)| {
        imitate_stage(config, &env, &bundle, algorithm, repr.as_ref(), StageSeeds::new(*seed)).map(|output| RunResult {
            seed: *seed,
            dir: dir.clone(),
            output,
        })
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut diverged = Vec::new();
    for r in &results {
        write_run(r, &env, algorithm, config)?;
        let ret = r.output.diagnostics.last("mean_return").unwrap_or(f64::NAN);
        let kl = r.output.diagnostics.last("exact_kl").unwrap_or(f64::NAN);
        println!(
            "{} seed {}  final return {ret:.4}  exact_kl {kl:.6}{}",
            algorithm.name(),
            r.seed,
            if r.output.dropped_samples > 0 {
                format!(
                    "  ({} expert transitions dropped by support closure)",
                    r.output.dropped_samples
                )
            } else {
                String::new()
            }
        );
        if let Some((step, reason)) = &r.output.divergence {
            diverged.push(format!("seed {}: {reason} at iteration {step}", r.seed));
        }
    }
    if !diverged.is_empty() {
        return Err(CliError::Divergence(diverged.join("; ")));
    }
    Ok(())
}

fn write_run(r: &RunResult, env: &Environment, algorithm: Algorithm, config: &RunConfig) -> Result<(), CliError> {
    create_dir(&r.dir)?;
    r.output
        .policy
        .save(&r.dir.join(POLICY_FILE))
        .map_err(|e| CliError::io("cannot write policy", e))?;
    write_file(&r.dir.join(DIAGNOSTICS_FILE), r.output.diagnostics.to_csv())?;
    let mut meta = String::new();
    writeln!(meta, "env_id={}", env.env_id()).unwrap();
    writeln!(meta, "algorithm={}", algorithm.name()).unwrap();
    writeln!(meta, "seed={}", r.seed).unwrap();
    writeln!(meta, "imitate_seed={}", StageSeeds::new(r.seed).imitate).unwrap();
    writeln!(meta, "iterations={}", config.il.total_iterations).unwrap();
    writeln!(meta, "dropped_samples={}", r.output.dropped_samples).unwrap();
    writeln!(meta, "degenerate_support={}", r.output.degenerate_support).unwrap();
    if let Some((step, reason)) = &r.output.divergence {
        writeln!(meta, "divergence={reason} at iteration {step}").unwrap();
    }
    write_file(&r.dir.join(RUN_FILE), meta)
}

pub fn eval(config: &RunConfig, policy_path: &Path, episodes: Option<usize>, out: &Path) -> Result<(), CliError> {
    let env = Environment::from_config(config)?;
    let policy = PolicyModel::load(policy_path)
        .map_err(|e| CliError::io(format!("cannot load {}", policy_path.display()), e))?;
    if !policy.is_discrete() || policy.dims() != (env.spec.num_states(), 4) {
        return Err(CliError::Config(format!(
            "policy shape {:?} does not match {}",
            policy.dims(),
            env.env_id()
        )));
    }
    let episodes = episodes.unwrap_or(config.eval.episodes);
    let m = evaluate_policy(
        &env.mdp,
        &policy,
        &env.ctx.reward,
        &env.ctx.d_exp,
        episodes,
        config.eval.horizon,
        StageSeeds::new(config.seed).eval,
    )
    .map_err(CliError::from_core)?;
    let mut csv = String::from("metric,value\n");
    writeln!(csv, "episodes,{episodes}").unwrap();
    writeln!(csv, "horizon,{}", config.eval.horizon).unwrap();
    writeln!(csv, "mean_return,{}", m.mean_return).unwrap();
    writeln!(csv, "std_return,{}", m.std_return).unwrap();
    writeln!(csv, "exact_return,{}", m.exact_return).unwrap();
    writeln!(csv, "exact_kl,{}", m.exact_kl).unwrap();
    for (i, r) in m.returns.iter().enumerate() {
        writeln!(csv, "return_{i},{r}").unwrap();
    }
    create_dir(out)?;
    write_file(&out.join(METRICS_FILE), csv)?;
    println!("{:<14} {:>12}", "metric", "value");
    println!("{:<14} {:>12}", "episodes", episodes);
    println!("{:<14} {:>12.4}", "mean_return", m.mean_return);
    println!("{:<14} {:>12.4}", "std_return", m.std_return);
    println!("{:<14} {:>12.4}", "exact_return", m.exact_return);
    println!("{:<14} {:>12.3e}", "exact_kl", m.exact_kl);
    Ok(())
}

pub fn oracle_check(config: &RunConfig) -> Result<(), CliError> {
    let results = run_suite(config)?;
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<String> = results
        .iter()
        .filter(|r| r.outcome == Outcome::Fail)
        .map(|r| format!("{} on {}", r.identity, r.instance))
        .collect();
    if failed.is_empty() {
        println!("all identities hold ({} checks)", results.len());
        Ok(())
    } else {
        Err(CliError::Oracle(failed.join(", ")))
    }
}

pub fn report(runs: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let runs = collect_runs(runs)?;
    let report = build_report(&runs)?;
    create_dir(out)?;
    write_file(&out.join("curves.csv"), &report.curves)?;
    write_file(&out.join("summary.csv"), &report.summary)?;
    print!("{}", report.summary);
    Ok(())
}
