use super::engine::{evaluate_terms, ReprTableDual, TableDual};
use super::*;
use crate::approx::{check_gradient, FnObjective};
use crate::dataset::{sample_trajectories, SourceTag};
use crate::divergence::{kl_divergence_spec, KlVariant};
use crate::envs::{build_gridworld, gridworld_expert, random_mdp, GridworldSpec};
use crate::mdp::{SaTable, TabularMdp, TabularPolicy};
use crate::oracle::{exact_density_ratio, exact_dual_q, exact_occupancy, svd_factorization};
use crate::repr::ReprMetadata;
use crate::rng::rng_from_seed;
use rand::Rng as _;

fn kl() -> crate::divergence::DivergenceSpec {
    kl_divergence_spec(KlVariant::Normalized)
}

fn exact_repr(mdp: &TabularMdp, noise: &[f64]) -> DynamicsRepresentation {
    let q = SaTable::filled(mdp.num_states(), mdp.num_actions(), 1.0 / mdp.num_pairs() as f64);
    let fact = svd_factorization(mdp, &q, noise, mdp.num_states()).unwrap();
    DynamicsRepresentation::from_factorization(&fact, ReprMetadata::default()).unwrap()
}

fn softish_policy(s: usize, a: usize, seed: u64) -> TabularPolicy {
    let mut rng = rng_from_seed(seed);
    let logits: Vec<f64> = (0..s * a).map(|_| rng.random_range(-1.0..1.0)).collect();
    TabularPolicy::softmax(s, a, &logits, 1.0).unwrap()
}

#[test]
fn q_value_closed_forms() {
    let mdp = random_mdp(3, 2, 0.9, 0).unwrap();
    let repr = exact_repr(&mdp, &[1.0 / 3.0; 3]);
    let mut dual = DualParams::zeros(&repr, 0.9).unwrap();
    let q = q_value(&dual, &repr, &[1.0], &[0.0]).unwrap();
    assert!((q.value - std::f64::consts::LN_10).abs() < 1e-6 && !q.clamped);

    // pick θ so μ(s)ᵀθ hits a target through the first nonzero μ coordinate
    let mu = repr.mu(&[1.0]).unwrap();
    let j = mu.iter().position(|m| m.abs() > 1e-3).unwrap();
    dual.theta[j] = 0.9 / mu[j];
    let q = q_value(&dual, &repr, &[1.0], &[1.0]).unwrap();
    assert!(q.value.abs() < 1e-12);
    dual.theta[j] = -0.1 / mu[j];
    let q = q_value(&dual, &repr, &[1.0], &[1.0]).unwrap();
    assert!(q.clamped);
    assert!((q.value + DEFAULT_CLAMP_EPS.ln()).abs() < 1e-9);
}

#[test]
fn expected_next_q_is_the_policy_average() {
    let mdp = random_mdp(2, 2, 0.9, 1).unwrap();
    let repr = exact_repr(&mdp, &[0.5, 0.5]);
    let mut dual = DualParams::zeros(&repr, 0.9).unwrap();
    // Q(s',·) = (1, 3) at state 1 through ξ alone
    let base = -(1.0f64 - 0.9).ln();
    dual.xi.set_params(&[0.0, 0.0, 1.0 - base, 3.0 - base]).unwrap();
    let uniform = PolicyModel::tabular_softmax(2, 2);
    assert!((expected_next_q(&dual, &repr, &uniform, &[1.0], None).unwrap() - 2.0).abs() < 1e-12);
    let mut greedy = PolicyModel::tabular_softmax(2, 2);
    greedy.set_params(&[0.0, 0.0, 0.0, 800.0]).unwrap();
    assert!((expected_next_q(&dual, &repr, &greedy, &[1.0], None).unwrap() - 3.0).abs() < 1e-12);

    let mdp4 = random_mdp(2, 4, 0.9, 2).unwrap();
    let repr4 = exact_repr(&mdp4, &[0.5, 0.5]);
    let mut dual4 = DualParams::zeros(&repr4, 0.9).unwrap();
    dual4
        .xi
        .set_params(&[0.0, 0.0, 0.0, 0.0, 0.5, -1.0, 2.0, 0.25])
        .unwrap();
    let mut pi = PolicyModel::tabular_softmax(2, 4);
    pi.set_params(
        &[0.0; 4]
            .iter()
            .chain(&[0.3, -0.2, 1.1, 0.0])
            .copied()
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let z: f64 = [0.3f64, -0.2, 1.1, 0.0].iter().map(|l| l.exp()).sum();
    let manual: f64 = [(0.3f64, 0.5), (-0.2, -1.0), (1.1, 2.0), (0.0, 0.25)]
        .iter()
        .map(|(l, x)| l.exp() / z * (x + base))
        .sum();
    assert!((expected_next_q(&dual4, &repr4, &pi, &[1.0], None).unwrap() - manual).abs() < 1e-12);
}

fn zero_q_dual(repr: &DynamicsRepresentation, gamma: f64) -> DualParams {
    let mut dual = DualParams::zeros(repr, gamma).unwrap();
    let n = dual.xi.num_params();
    dual.xi.set_params(&vec![(1.0 - gamma).ln(); n]).unwrap();
    dual
}

#[test]
fn dice_loss_vanishes_at_zero_q_and_ratio_is_one() {
    let mdp = random_mdp(4, 2, 0.9, 3).unwrap();
    let repr = exact_repr(&mdp, &[0.25; 4]);
    let dual = zero_q_dual(&repr, 0.9);
    let pi = PolicyModel::tabular_softmax(4, 2);
    let data = sample_trajectories(&mdp, &TabularPolicy::uniform(4, 2), 3, 10, 1, "r", SourceTag::Expert).unwrap();
    let init: Vec<Vec<f64>> = data.samples.iter().map(|t| t.state.clone()).collect();
    let loss = dice_loss(&dual, &repr, &pi, &data.samples, &init, &kl()).unwrap();
    assert!(loss.value.abs() < 1e-12);
    let r = recovered_density_ratio(&dual, &repr, &pi, &[2.0], &[1.0], &kl()).unwrap();
    assert!((r - 1.0).abs() < 1e-9);
    assert!(dice_loss(&dual, &repr, &pi, &[], &init, &kl()).is_err());
}

#[test]
fn constant_q_ratio_closed_form() {
    let mdp = random_mdp(3, 2, 0.8, 4).unwrap();
    let repr = exact_repr(&mdp, &[0.2, 0.3, 0.5]);
    let mut dual = DualParams::zeros(&repr, 0.8).unwrap();
    let c: f64 = 3.0;
    // Q = ξ - log(1-γ) ≡ -log c
    dual.xi.set_params(&[-c.ln() + 0.2f64.ln(); 6]).unwrap();
    let pi = PolicyModel::tabular_softmax(3, 2);
    let r = recovered_density_ratio(&dual, &repr, &pi, &[0.0], &[1.0], &kl()).unwrap();
    assert!((r - c.powf(0.2)).abs() < 1e-9, "{r}");
}

#[test]
fn table_engine_matches_per_sample_loss() {
    let mdp = random_mdp(5, 3, 0.9, 5).unwrap();
    let repr = exact_repr(&mdp, &[0.2; 5]);
    let mut rng = rng_from_seed(8);
    let mut dual = DualParams::zeros(&repr, 0.9).unwrap();
    let values: Vec<f64> = (0..dual.num_params()).map(|_| rng.random_range(-0.3..0.3)).collect();
    dual.set_from(&values).unwrap();
    let mut pi = PolicyModel::tabular_softmax(5, 3);
    pi.set_params(&(0..15).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
        .unwrap();
    let data = sample_trajectories(&mdp, &TabularPolicy::uniform(5, 3), 2, 20, 3, "r", SourceTag::Expert).unwrap();
    let triples = data.index_triples().unwrap();
    let init: Vec<usize> = triples.iter().map(|t| t.0).collect();
    let terms = DiceTerms::from_samples(&triples, &init).unwrap();
    let table = ReprTableDual::new(&repr, dual.clone()).unwrap();
    let (q, _) = table.q_table();
    let ev = evaluate_terms(&terms, &q, &pi.to_tabular().unwrap(), 0.9, &kl(), 20.0);
    let init_states: Vec<Vec<f64>> = init.iter().map(|&s| vec![s as f64]).collect();
    let direct = dice_loss(&dual, &repr, &pi, &data.samples, &init_states, &kl()).unwrap();
    assert!((ev.loss - direct.value).abs() < 1e-10);
}

#[test]
fn dual_and_policy_gradients_match_finite_differences() {
    let mut rng = rng_from_seed(21);
    for trial in 0..5 {
        let mdp = random_mdp(4, 3, 0.9, 100 + trial).unwrap();
        let repr = exact_repr(&mdp, &[0.25; 4]);
        let base = DualParams::zeros(&repr, 0.9).unwrap();
        let d_exp = exact_occupancy(&mdp, &softish_policy(4, 3, trial))
            .unwrap()
            .into_table();
        let terms = DiceTerms::population(&mdp, &d_exp, &d_exp.state_marginal()).unwrap();
        let logits: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut pi_model = PolicyModel::tabular_softmax(4, 3);
        pi_model.set_params(&logits).unwrap();
        let pi = pi_model.to_tabular().unwrap();
        let start: Vec<f64> = (0..base.num_params()).map(|_| rng.random_range(-0.3..0.3)).collect();

        let dual_obj = FnObjective {
            num_params: base.num_params(),
            f: |p: &[f64]| {
                let mut d = base.clone();
                d.set_from(p)?;
                let t = ReprTableDual::new(&repr, d)?;
                let (q, _) = t.q_table();
                let ev = evaluate_terms(&terms, &q, &pi, 0.9, &kl(), 20.0);
                Ok((ev.loss, t.backprop(&ev.dq)))
            },
        };
        let check = check_gradient(&dual_obj, &start, 1e-6).unwrap();
        assert!(check.passed, "dual trial {trial}: {check:?}");

        let mut fixed = base.clone();
        fixed.set_from(&start).unwrap();
        let (q, _) = ReprTableDual::new(&repr, fixed).unwrap().q_table();
        let policy_obj = FnObjective {
            num_params: 12,
            f: |p: &[f64]| {
                let mut m = PolicyModel::tabular_softmax(4, 3);
                m.set_params(p)?;
                let pi = m.to_tabular()?;
                let ev = evaluate_terms(&terms, &q, &pi, 0.9, &kl(), 20.0);
                Ok((ev.loss, m.backprop_logits(&ev.logit_gradient(&q, &pi))?))
            },
        };
        let check = check_gradient(&policy_obj, &logits, 1e-6).unwrap();
        assert!(check.passed, "policy trial {trial}: {check:?}");
    }
}

#[test]
fn saddle_value_and_readout_match_the_oracle() {
    for seed in 0..10 {
        let mdp = random_mdp(6, 3, 0.9, 200 + seed).unwrap();
        let expert = softish_policy(6, 3, 300 + seed);
        let policy = softish_policy(6, 3, 400 + seed);
        let d_exp = exact_occupancy(&mdp, &expert).unwrap().into_table();
        let spec = kl();
        let q_star = exact_dual_q(&mdp, &policy, &d_exp, &spec).unwrap();
        let ratio = exact_density_ratio(&mdp, &policy, &d_exp).unwrap();

        let readout = population_ratio_readout(&mdp, &policy, &q_star, 0.9, &spec);
        for i in 0..18 {
            assert!((readout.values()[i] - ratio.values()[i]).abs() < 1e-6);
        }

        // the loss under the initial distribution ρ equals (1-γ)E[Q*] + E_dexp[f*(f'(ν*))]
        let terms = DiceTerms::population(&mdp, &d_exp, mdp.initial()).unwrap();
        let ev = evaluate_terms(&terms, &q_star, &policy, 0.9, &spec, 20.0);
        assert_eq!(ev.cap_activations, 0);
        let v = crate::mdp::state_values(&policy, &q_star);
        let init: f64 = mdp.initial().iter().zip(&v).map(|(r, x)| r * x).sum();
        let fenchel: f64 = (0..18)
            .map(|i| {
                let nu = ratio.values()[i];
                d_exp.values()[i] * (nu * spec.derivative(nu) - spec.generator(nu))
            })
            .sum();
        assert!((ev.loss - (0.1 * init + fenchel)).abs() < 1e-8, "seed {seed}");
        // and ∂L/∂Q vanishes there
        assert!(ev.dq.values().iter().all(|g| g.abs() < 1e-9));
    }
}

#[test]
fn representation_readout_at_the_saddle() {
    let mdp = random_mdp(5, 2, 0.9, 9).unwrap();
    let expert = softish_policy(5, 2, 1);
    let policy = softish_policy(5, 2, 2);
    let d_exp = exact_occupancy(&mdp, &expert).unwrap().into_table();
    let repr = exact_repr(&mdp, &[0.2; 5]);
    let q_star = exact_dual_q(&mdp, &policy, &d_exp, &kl()).unwrap();
    let ratio = exact_density_ratio(&mdp, &policy, &d_exp).unwrap();
    // realize Q* exactly through ξ
    let mut dual = zero_q_dual(&repr, 0.9);
    let xi: Vec<f64> = q_star.values().iter().map(|q| q + 0.1f64.ln()).collect();
    dual.xi.set_params(&xi).unwrap();
    let mut pm = PolicyModel::tabular_softmax(5, 2);
    pm.set_params(&policy.probs().iter().map(|p| p.ln()).collect::<Vec<_>>())
        .unwrap();
    for s in 0..5 {
        for a in 0..2 {
            let r = recovered_density_ratio(&dual, &repr, &pm, &[s as f64], &[a as f64], &kl()).unwrap();
            assert!((r - ratio.get(s, a)).abs() < 1e-6);
        }
    }
}

fn two_state_mdp() -> TabularMdp {
    TabularMdp::new(2, 2, vec![0.9, 0.1, 0.2, 0.8, 0.7, 0.3, 0.1, 0.9], vec![0.5, 0.5], 0.9).unwrap()
}

fn ctx_for(mdp: &TabularMdp, expert: &TabularPolicy) -> EvalContext {
    EvalContext {
        mdp: mdp.clone(),
        d_exp: exact_occupancy(mdp, expert).unwrap().into_table(),
        reward: vec![0.0; mdp.num_states()],
        horizon: 10,
    }
}

#[test]
fn population_alternation_lowers_the_divergence() {
    let mdp = two_state_mdp();
    let expert = TabularPolicy::new(2, 2, vec![0.9, 0.1, 0.2, 0.8]).unwrap();
    let ctx = ctx_for(&mdp, &expert);
    let repr = exact_repr(&mdp, &[0.5, 0.5]);
    let config = IlConfig {
        gamma: 0.9,
        total_iterations: 500,
        log_every: 10,
        policy: PolicyChoice::Tabular,
        ..Default::default()
    };
    let source = DiceSource::Population {
        mdp: &mdp,
        d_exp: &ctx.d_exp,
    };
    let out = train_repr_valuedice(&repr, source, &config, Some(&ctx)).unwrap();
    let kl = out.diagnostics.column("exact_kl").unwrap();
    let initial = occupancy_kl(&mdp, &TabularPolicy::uniform(2, 2), &ctx.d_exp).unwrap();
    assert!(*kl.last().unwrap() < initial, "{initial} -> {:?}", kl.last());
    assert_eq!(out.diagnostics.last("cap_activations"), Some(0.0));

    let vd = train_valuedice(source, 2, 2, &config, Some(&ctx)).unwrap();
    assert!(vd.diagnostics.last("exact_kl").unwrap() < 0.05 * initial);
}

#[test]
fn training_is_deterministic_and_leaves_features_untouched() {
    let spec = GridworldSpec::square(3);
    let mdp = build_gridworld(&spec).unwrap();
    let expert = gridworld_expert(&mdp, &spec, 0.1).unwrap();
    let data = sample_trajectories(&mdp, &expert, 1, 200, 4, "g", SourceTag::Expert).unwrap();
    let repr = exact_repr(&mdp, &[1.0 / 9.0; 9]);
    let before = {
        let mut b = Vec::new();
        crate::repr::write_representation(&mut b, &repr).unwrap();
        b
    };
    let config = IlConfig {
        total_iterations: 60,
        batch_size: 32,
        log_every: 5,
        ..Default::default()
    };
    let a = train_repr_valuedice(&repr, DiceSource::Samples(&data), &config, None).unwrap();
    let b = train_repr_valuedice(&repr, DiceSource::Samples(&data), &config, None).unwrap();
    assert_eq!(a.diagnostics.to_csv(), b.diagnostics.to_csv());
    assert_eq!(a.policy, b.policy);
    let mut after = Vec::new();
    crate::repr::write_representation(&mut after, &repr).unwrap();
    assert_eq!(before, after);
}

#[test]
fn single_transition_is_flagged_degenerate() {
    let mdp = two_state_mdp();
    let mut data = crate::dataset::TransitionDataset::new("t", 1, 1);
    data.push(crate::dataset::TransitionSample::tabular(0, 1, 1, SourceTag::Expert))
        .unwrap();
    let repr = exact_repr(&mdp, &[0.5, 0.5]);
    let config = IlConfig {
        total_iterations: 10,
        log_every: 1,
        ..Default::default()
    };
    let out = train_repr_valuedice(&repr, DiceSource::Samples(&data), &config, None).unwrap();
    assert!(out.degenerate_support);
    assert_eq!(out.diagnostics.rows.len(), 10);
}

#[test]
fn gradient_penalty_adds_a_column() {
    let mdp = two_state_mdp();
    let expert = TabularPolicy::new(2, 2, vec![0.9, 0.1, 0.2, 0.8]).unwrap();
    let data = sample_trajectories(&mdp, &expert, 1, 100, 2, "t", SourceTag::Expert).unwrap();
    for weight in [0.0, 10.0] {
        let config = IlConfig {
            total_iterations: 20,
            gradient_penalty_weight: weight,
            ..Default::default()
        };
        let out = train_valuedice(DiceSource::Samples(&data), 2, 2, &config, None).unwrap();
        assert_eq!(out.diagnostics.column("gradient_penalty").is_some(), weight > 0.0);
    }
}

#[test]
fn behavior_cloning_contracts() {
    let config = IlConfig {
        total_iterations: 300,
        policy_step_size: 0.05,
        ..Default::default()
    };
    let mut one = crate::dataset::TransitionDataset::new("t", 1, 1);
    one.push(crate::dataset::TransitionSample::tabular(1, 2, 0, SourceTag::Expert))
        .unwrap();
    let out = train_bc(&one, PolicyModel::tabular_softmax(3, 4), &config, None).unwrap();
    let probs = out.policy.action_probs(1).unwrap();
    assert!((0..4).all(|b| b == 2 || probs[b] < probs[2]));
    assert!(out.diagnostics.column("log_likelihood").is_some());

    let empty = crate::dataset::TransitionDataset::new("t", 1, 1);
    assert!(train_bc(&empty, PolicyModel::tabular_softmax(3, 4), &config, None).is_err());

    let spec = GridworldSpec::square(3);
    let mdp = build_gridworld(&spec).unwrap();
    let greedy = gridworld_expert(&mdp, &spec, 1e-6).unwrap();
    let actions: Vec<usize> = (0..9)
        .map(|s| {
            (0..4)
                .max_by(|&a, &b| greedy.prob(s, a).total_cmp(&greedy.prob(s, b)))
                .unwrap()
        })
        .collect();
    let deterministic = TabularPolicy::deterministic(4, &actions).unwrap();
    let mut data = crate::dataset::TransitionDataset::new("g", 1, 1);
    for (s, &a) in actions.iter().enumerate() {
        data.push(crate::dataset::TransitionSample::tabular(s, a, s, SourceTag::Expert))
            .unwrap();
    }
    let out = train_bc(&data, PolicyModel::tabular_softmax(9, 4), &config, None).unwrap();
    let learned = out.policy.to_tabular().unwrap();
    for s in 0..9 {
        let best = (0..4)
            .max_by(|&a, &b| learned.prob(s, a).total_cmp(&learned.prob(s, b)))
            .unwrap();
        assert_eq!(best, actions[s]);
        assert_eq!(deterministic.prob(s, best), 1.0);
    }
}

#[test]
fn population_bc_matches_expert_conditionals() {
    let spec = GridworldSpec::square(4);
    let mdp = build_gridworld(&spec).unwrap();
    let expert = gridworld_expert(&mdp, &spec, 0.5).unwrap();
    let d_exp = exact_occupancy(&mdp, &expert).unwrap().into_table();
    let config = IlConfig {
        total_iterations: 3000,
        policy_step_size: 0.05,
        ..Default::default()
    };
    let out = train_bc_population(&d_exp, PolicyModel::tabular_softmax(16, 4), &config, None).unwrap();
    let learned = out.policy.to_tabular().unwrap();
    for s in 0..16 {
        let tv: f64 = (0..4)
            .map(|a| (learned.prob(s, a) - expert.prob(s, a)).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 1e-3, "state {s}: tv {tv}");
    }
}

#[test]
fn evaluation_contracts() {
    let spec = GridworldSpec::square(5);
    let mdp = build_gridworld(&spec).unwrap();
    let expert = gridworld_expert(&mdp, &spec, 0.1).unwrap();
    let d_exp = exact_occupancy(&mdp, &expert).unwrap().into_table();
    let mut model = PolicyModel::tabular_softmax(25, 4);
    model
        .set_params(&expert.probs().iter().map(|p| p.ln()).collect::<Vec<_>>())
        .unwrap();
    let m = evaluate_policy(&mdp, &model, &spec.reward(), &d_exp, 20, 100, 0).unwrap();
    assert_eq!(m.returns.len(), 20);
    assert!(m.exact_kl.abs() < 1e-10);

    // uniform policy: KL against a power-iterated occupancy
    let uniform = PolicyModel::tabular_softmax(25, 4);
    let m = evaluate_policy(&mdp, &uniform, &spec.reward(), &d_exp, 20, 100, 0).unwrap();
    let pi = TabularPolicy::uniform(25, 4);
    let mut d = SaTable::zeros(25, 4);
    for _ in 0..2000 {
        d = crate::mdp::occupancy_recursion_step(&mdp, &pi, &d).unwrap();
    }
    let independent: f64 = d
        .values()
        .iter()
        .zip(d_exp.values())
        .map(|(p, q)| p * (p / q).ln())
        .sum();
    assert!((m.exact_kl - independent).abs() < 1e-9);
    let expert_return = expected_return(&mdp, &expert, &spec.reward(), 100).unwrap();
    assert!(expert_return > m.exact_return);
}
