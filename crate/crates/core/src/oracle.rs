//! Exact ground truth on tabular MDPs: occupancies, density ratios, the
//! optimal dual variable, and the globally optimal dynamics factorization.
//!
//! Everything here is a dense direct computation (LU with partial pivoting or
//! a full SVD). Problem sizes stay in the low thousands of unknowns.

use nalgebra::{DMatrix, DVector};

use crate::divergence::{kl_divergence_spec, DivergenceSpec, KlVariant};
use crate::error::{Error, Result};
use crate::mdp::{state_values, OccupancyMeasure, SaTable, TabularMdp, TabularPolicy};

/// Probabilities at or below this are treated as structural zeros when
/// checking supports, so round-off in a linear solve cannot fake support.
pub const SUPPORT_EPS: f64 = 1e-14;

/// A dense `rows × k` table of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    rows: usize,
    k: usize,
    values: Vec<f64>,
}

impl FeatureTable {
    pub fn zeros(rows: usize, k: usize) -> Self {
        Self {
            rows,
            k,
            values: vec![0.0; rows * k],
        }
    }

    pub fn from_vec(rows: usize, k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * k {
            return Err(Error::shape(format!(
                "feature table has {} entries, expected {rows}x{k}",
                values.len()
            )));
        }
        Ok(Self { rows, k, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Discounted state-action occupancy of `policy`, by a direct linear solve of
/// the flow equations.
pub fn exact_occupancy(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<OccupancyMeasure> {
    policy.check_compatible(mdp)?;
    let n = mdp.num_states();
    let gamma = mdp.gamma();
    // (I - γ P_πᵀ) d_s = (1-γ) ρ, with P_π(s'|s) = Σ_a π(a|s) P(s'|s,a)
    let mut lhs = DMatrix::<f64>::identity(n, n);
    for s in 0..n {
        for a in 0..mdp.num_actions() {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for (next, &p) in mdp.row(s, a).iter().enumerate() {
                lhs[(next, s)] -= gamma * w * p;
            }
        }
    }
    let rhs = DVector::from_iterator(n, mdp.initial().iter().map(|r| (1.0 - gamma) * r));
    let ds = lhs.lu().solve(&rhs).ok_or(Error::Singular("exact_occupancy"))?;
    let mut table = SaTable::from_fn(n, mdp.num_actions(), |s, a| ds[s].max(0.0) * policy.prob(s, a));
    let total = table.sum();
    for v in table.values_mut() {
        *v /= total;
    }
    OccupancyMeasure::new(table)
}

/// `ν*(s,a) = dπ(s,a) / d_exp(s,a)`, zero where both vanish.
pub fn exact_density_ratio(mdp: &TabularMdp, policy: &TabularPolicy, d_exp: &SaTable) -> Result<SaTable> {
    let d = exact_occupancy(mdp, policy)?;
    density_ratio(d.table(), d_exp)
}

pub fn density_ratio(d: &SaTable, d_exp: &SaTable) -> Result<SaTable> {
    if d.num_states() != d_exp.num_states() || d.num_actions() != d_exp.num_actions() {
        return Err(Error::shape("density ratio operands differ in shape"));
    }
    let mut out = SaTable::zeros(d.num_states(), d.num_actions());
    for s in 0..d.num_states() {
        for a in 0..d.num_actions() {
            let (p, q) = (d.get(s, a), d_exp.get(s, a));
            if q > 0.0 {
                out.set(s, a, p / q);
            } else if p > SUPPORT_EPS {
                return Err(Error::SupportViolation { state: s, action: a });
            }
        }
    }
    Ok(out)
}

/// Solves `Q = -f'(ν*) + γ P^π Q` for the saddle-point dual variable.
///
/// Pairs outside the expert support carry zero reward. A pair inside the
/// support with `ν* = 0` makes the dual unbounded and is reported as an error.
pub fn exact_dual_q(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    d_exp: &SaTable,
    spec: &DivergenceSpec,
) -> Result<SaTable> {
    let ratio = exact_density_ratio(mdp, policy, d_exp)?;
    let reward = SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        if d_exp.get(s, a) > 0.0 {
            -spec.derivative(ratio.get(s, a))
        } else {
            0.0
        }
    });
    if let Some(i) = reward.values().iter().position(|r| !r.is_finite()) {
        return Err(Error::invalid(format!(
            "density ratio vanishes on expert support at pair (s={}, a={}); the dual is unbounded",
            i / mdp.num_actions(),
            i % mdp.num_actions()
        )));
    }
    policy_evaluation(mdp, policy, &reward)
}

/// Solves `Q = r + γ P^π Q` directly.
pub fn policy_evaluation(mdp: &TabularMdp, policy: &TabularPolicy, reward: &SaTable) -> Result<SaTable> {
    policy.check_compatible(mdp)?;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let m = ns * na;
    let gamma = mdp.gamma();
    let mut lhs = DMatrix::<f64>::identity(m, m);
    for s in 0..ns {
        for a in 0..na {
            let row = s * na + a;
            for (next, &p) in mdp.row(s, a).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for b in 0..na {
                    lhs[(row, next * na + b)] -= gamma * p * policy.prob(next, b);
                }
            }
        }
    }
    let rhs = DVector::from_column_slice(reward.values());
    let q = lhs.lu().solve(&rhs).ok_or(Error::Singular("policy_evaluation"))?;
    SaTable::from_vec(ns, na, q.as_slice().to_vec())
}

/// `θπ = Σ_{s,a} φ(s,a) d(s,a)`.
pub fn exact_theta(occupancy: &SaTable, phi: &FeatureTable) -> Result<Vec<f64>> {
    if phi.rows() != occupancy.values().len() {
        return Err(Error::shape(format!(
            "phi has {} rows, occupancy has {} pairs",
            phi.rows(),
            occupancy.values().len()
        )));
    }
    let mut theta = vec![0.0; phi.k()];
    for (i, &w) in occupancy.values().iter().enumerate() {
        for (t, f) in theta.iter_mut().zip(phi.row(i)) {
            *t += w * f;
        }
    }
    Ok(theta)
}

/// A factorization `P(s'|s,a) ≈ φ(s,a)ᵀ μ(s') pₙ(s')` with its data weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationTables {
    pub k: usize,
    pub num_states: usize,
    pub num_actions: usize,
    /// `(S·A) × k`, row `s·A + a`.
    pub phi: FeatureTable,
    /// `S × k`.
    pub mu: FeatureTable,
    pub noise_dist: Vec<f64>,
    pub data_dist: SaTable,
    /// `Σ_{s,a} q(s,a) Σ_{s'} (P/√pₙ - φᵀμ √pₙ)²` at construction.
    pub residual: f64,
    /// Full singular spectrum of the weighted matrix, descending.
    pub singular_values: Vec<f64>,
}

impl FactorizationTables {
    pub fn phi_row(&self, s: usize, a: usize) -> &[f64] {
        self.phi.row(s * self.num_actions + a)
    }

    pub fn transition_estimate(&self, s: usize, a: usize, next: usize) -> f64 {
        dot(self.phi_row(s, a), self.mu.row(next)) * self.noise_dist[next]
    }

    /// Recomputes the weighted squared reconstruction error from the tables.
    pub fn reconstruction_residual(&self, mdp: &TabularMdp) -> f64 {
        square_form_residual(mdp, &self.data_dist, &self.noise_dist, &self.phi, &self.mu)
    }
}

/// `Σ_{s,a} q(s,a) Σ_{s'} (P(s'|s,a)/√pₙ(s') - φ(s,a)ᵀμ(s')·√pₙ(s'))²`.
pub fn square_form_residual(
    mdp: &TabularMdp,
    q: &SaTable,
    noise: &[f64],
    phi: &FeatureTable,
    mu: &FeatureTable,
) -> f64 {
    let na = mdp.num_actions();
    let mut total = 0.0;
    for s in 0..mdp.num_states() {
        for a in 0..na {
            let w = q.get(s, a);
            if w == 0.0 {
                continue;
            }
            let f = phi.row(s * na + a);
            let mut row = 0.0;
            for (next, &p) in mdp.row(s, a).iter().enumerate() {
                let sq = noise[next].sqrt();
                let e = p / sq - dot(f, mu.row(next)) * sq;
                row += e * e;
            }
            total += w * row;
        }
    }
    total
}

/// The constant `C = E_q[Σ_{s'} P(s'|s,a)² / pₙ(s')]` separating the
/// contrastive objective from its square form.
pub fn square_form_constant(mdp: &TabularMdp, q: &SaTable, noise: &[f64]) -> f64 {
    let mut total = 0.0;
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let w = q.get(s, a);
            if w == 0.0 {
                continue;
            }
            total += w * mdp.row(s, a).iter().zip(noise).map(|(p, n)| p * p / n).sum::<f64>();
        }
    }
    total
}

/// Best rank-`k` factorization of `P` under the `q`-weighted, `pₙ`-scaled
/// square loss, from the SVD of `M[(s,a), s'] = √q(s,a) P(s'|s,a) / √pₙ(s')`.
pub fn svd_factorization(mdp: &TabularMdp, q: &SaTable, noise: &[f64], k: usize) -> Result<FactorizationTables> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    if noise.len() != ns {
        return Err(Error::shape("noise distribution length"));
    }
    if q.num_states() != ns || q.num_actions() != na {
        return Err(Error::shape("data distribution shape"));
    }
    if let Some(s) = noise.iter().position(|&p| !(p > 0.0)) {
        return Err(Error::NoFullSupport(s));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let max_rank = (ns * na).min(ns);
    let k = if k > max_rank {
        log::warn!("requested k={k} exceeds max rank {max_rank}; clamping");
        max_rank
    } else {
        k
    };

    let scaled_row =
        |s: usize, a: usize| -> Vec<f64> { mdp.row(s, a).iter().zip(noise).map(|(p, n)| p / n.sqrt()).collect() };
    let mut m = DMatrix::<f64>::zeros(ns * na, ns);
    for s in 0..ns {
        for a in 0..na {
            let w = q.get(s, a).max(0.0).sqrt();
            for (j, v) in scaled_row(s, a).into_iter().enumerate() {
                m[(s * na + a, j)] = w * v;
            }
        }
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::Singular("svd_factorization"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let top = &order[..k];
    let spectral_floor = sigma[0] * 1e-13;

    // μ(s') = Σ^{1/2} V_k(s',:) / √pₙ(s');  φ(s,a) = Σ^{-1/2} V_kᵀ m(s,a)
    let mut mu = FeatureTable::zeros(ns, k);
    for next in 0..ns {
        let row = mu.row_mut(next);
        for (c, &i) in top.iter().enumerate() {
            let sv = svd.singular_values[i];
            if sv > spectral_floor {
                row[c] = sv.sqrt() * v_t[(i, next)] / noise[next].sqrt();
            }
        }
    }
    let mut phi = FeatureTable::zeros(ns * na, k);
    for s in 0..ns {
        for a in 0..na {
            let m_row = scaled_row(s, a);
            let row = phi.row_mut(s * na + a);
            for (c, &i) in top.iter().enumerate() {
                let sv = svd.singular_values[i];
                if sv > spectral_floor {
                    let proj: f64 = (0..ns).map(|j| v_t[(i, j)] * m_row[j]).sum();
                    row[c] = proj / sv.sqrt();
                }
            }
        }
    }
    let residual = sigma[k..].iter().map(|s| s * s).sum();
    Ok(FactorizationTables {
        k,
        num_states: ns,
        num_actions: na,
        phi,
        mu,
        noise_dist: noise.to_vec(),
        data_dist: q.clone(),
        residual,
        singular_values: sigma,
    })
}

/// Max over states of `|dπ(s')/pₙ(s') - (1-γ)ρ(s')/pₙ(s') - γ⟨μ(s'), θπ⟩|`.
///
/// Exact factorizations make this vanish; truncated ones generally do not.
pub fn verify_linear_density_identity(
    fact: &FactorizationTables,
    mdp: &TabularMdp,
    policy: &TabularPolicy,
) -> Result<f64> {
    let d = exact_occupancy(mdp, policy)?;
    let theta = exact_theta(d.table(), &fact.phi)?;
    let marginal = d.state_marginal();
    let gamma = mdp.gamma();
    let mut worst: f64 = 0.0;
    for next in 0..mdp.num_states() {
        let pn = fact.noise_dist[next];
        let lhs = marginal[next] / pn;
        let rhs = (1.0 - gamma) * mdp.initial()[next] / pn + gamma * dot(fact.mu.row(next), &theta);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// The linear-in-representation form of the optimal dual, built from exact
/// quantities:
///
/// `Q(s,a) = c(s,a) + φ(s,a)ᵀω - log(μ(s)ᵀθ + (1-γ)ρ(s)/pₙ(s))`
///
/// with `ω = γ Σ_{s'} μ(s') pₙ(s') V*(s')`, `θ = γ θπ` and the offline term
/// `c(s,a) = -log ζ(s,a) - log(pₙ(s)/d_exp(s))`, `ζ = π / π_exp`.
#[derive(Debug, Clone)]
pub struct DualRepresentation {
    pub omega: Vec<f64>,
    pub theta: Vec<f64>,
    pub q: SaTable,
    /// Expert-support mask the representation is claimed on.
    pub support: Vec<bool>,
}

pub fn dual_representation(
    fact: &FactorizationTables,
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    expert: &TabularPolicy,
) -> Result<DualRepresentation> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let gamma = mdp.gamma();
    let d_exp = exact_occupancy(mdp, expert)?;
    let spec = kl_divergence_spec(KlVariant::Normalized);
    let q_star = exact_dual_q(mdp, policy, d_exp.table(), &spec)?;
    let v_star = state_values(policy, &q_star);
    let d = exact_occupancy(mdp, policy)?;
    let theta: Vec<f64> = exact_theta(d.table(), &fact.phi)?
        .into_iter()
        .map(|t| gamma * t)
        .collect();
    let mut omega = vec![0.0; fact.k];
    for next in 0..ns {
        let w = gamma * fact.noise_dist[next] * v_star[next];
        for (o, m) in omega.iter_mut().zip(fact.mu.row(next)) {
            *o += w * m;
        }
    }
    let d_exp_s = d_exp.state_marginal();
    let mut q = SaTable::zeros(ns, na);
    let mut support = vec![false; ns * na];
    for s in 0..ns {
        let pn = fact.noise_dist[s];
        let log_arg = dot(fact.mu.row(s), &theta) + (1.0 - gamma) * mdp.initial()[s] / pn;
        for a in 0..na {
            if d_exp.get(s, a) <= 0.0 {
                continue;
            }
            support[s * na + a] = true;
            let zeta = policy.prob(s, a) / expert.prob(s, a);
            let offline = -zeta.ln() - (pn / d_exp_s[s]).ln();
            q.set(s, a, offline + dot(fact.phi_row(s, a), &omega) - log_arg.ln());
        }
    }
    Ok(DualRepresentation {
        omega,
        theta,
        q,
        support,
    })
}

/// Max absolute gap between [`dual_representation`] and [`exact_dual_q`] on
/// the expert support.
pub fn verify_dual_representation_identity(
    fact: &FactorizationTables,
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    expert: &TabularPolicy,
) -> Result<f64> {
    let rep = dual_representation(fact, mdp, policy, expert)?;
    let d_exp = exact_occupancy(mdp, expert)?;
    let q_star = exact_dual_q(mdp, policy, d_exp.table(), &kl_divergence_spec(KlVariant::Normalized))?;
    Ok(rep
        .support
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(i, _)| (rep.q.values()[i] - q_star.values()[i]).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{adjoint_operator, occupancy_recursion_step};

    fn swap_chain() -> TabularMdp {
        TabularMdp::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], vec![1.0, 0.0], 0.5).unwrap()
    }

    #[test]
    fn single_cell_occupancy() {
        let mdp = TabularMdp::new(1, 1, vec![1.0], vec![1.0], 0.9).unwrap();
        let d = exact_occupancy(&mdp, &TabularPolicy::uniform(1, 1)).unwrap();
        assert_eq!(d.values(), &[1.0]);
    }

    #[test]
    fn swap_chain_occupancy_is_geometric() {
        // (1-γ) Σ γ^t alternates: state 0 gets (1-γ)/(1-γ²) = 1/(1+γ) = 2/3
        let d = exact_occupancy(&swap_chain(), &TabularPolicy::uniform(2, 1)).unwrap();
        assert!((d.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.get(1, 0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn swap_chain_density_ratio_and_dual() {
        let mdp = swap_chain();
        let pi = TabularPolicy::uniform(2, 1);
        let d_exp = SaTable::from_vec(2, 1, vec![0.5, 0.5]).unwrap();
        let nu = exact_density_ratio(&mdp, &pi, &d_exp).unwrap();
        assert!((nu.get(0, 0) - 4.0 / 3.0).abs() < 1e-14);
        assert!((nu.get(1, 0) - 2.0 / 3.0).abs() < 1e-14);

        // Q0 = -ln(4/3) + γ Q1, Q1 = -ln(2/3) + γ Q0, solved by hand
        let spec = kl_divergence_spec(KlVariant::Normalized);
        let q = exact_dual_q(&mdp, &pi, &d_exp, &spec).unwrap();
        let (r0, r1, g): (f64, f64, f64) = (-(4.0f64 / 3.0).ln(), -(2.0f64 / 3.0).ln(), 0.5);
        let q0 = (r0 + g * r1) / (1.0 - g * g);
        let q1 = (r1 + g * r0) / (1.0 - g * g);
        assert!((q.get(0, 0) - q0).abs() < 1e-14);
        assert!((q.get(1, 0) - q1).abs() < 1e-14);
    }

    #[test]
    fn ratio_support_violation() {
        let mdp = swap_chain();
        let d_exp = SaTable::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            exact_density_ratio(&mdp, &TabularPolicy::uniform(2, 1), &d_exp),
            Err(Error::SupportViolation { state: 1, action: 0 })
        ));
    }

    #[test]
    fn self_ratio_gives_zero_dual() {
        let mdp = swap_chain();
        let pi = TabularPolicy::uniform(2, 1);
        let d = exact_occupancy(&mdp, &pi).unwrap();
        let nu = exact_density_ratio(&mdp, &pi, d.table()).unwrap();
        assert!(nu.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
        let q = exact_dual_q(&mdp, &pi, d.table(), &kl_divergence_spec(KlVariant::Normalized)).unwrap();
        assert!(q.values().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn myopic_dual_is_negative_log_ratio() {
        let mdp = swap_chain().with_gamma(1e-12);
        let pi = TabularPolicy::uniform(2, 1);
        let d_exp = SaTable::from_vec(2, 1, vec![0.3, 0.7]).unwrap();
        let spec = kl_divergence_spec(KlVariant::Normalized);
        let nu = exact_density_ratio(&mdp, &pi, &d_exp).unwrap();
        let q = exact_dual_q(&mdp, &pi, &d_exp, &spec).unwrap();
        for i in 0..2 {
            assert!((q.values()[i] + nu.values()[i].ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn flow_residual_is_tiny() {
        let mdp = TabularMdp::new(
            3,
            2,
            vec![
                0.2, 0.5, 0.3, 0.1, 0.1, 0.8, 0.6, 0.2, 0.2, 0.0, 1.0, 0.0, 0.3, 0.3, 0.4, 0.5, 0.0, 0.5,
            ],
            vec![0.2, 0.3, 0.5],
            0.9,
        )
        .unwrap();
        let pi = TabularPolicy::new(3, 2, vec![0.3, 0.7, 0.5, 0.5, 0.9, 0.1]).unwrap();
        let d = exact_occupancy(&mdp, &pi).unwrap();
        let step = occupancy_recursion_step(&mdp, &pi, d.table()).unwrap();
        assert!(step.max_abs_diff(d.table()) < 1e-12);

        let d_exp = SaTable::filled(3, 2, 1.0 / 6.0);
        let spec = kl_divergence_spec(KlVariant::Normalized);
        let q = exact_dual_q(&mdp, &pi, &d_exp, &spec).unwrap();
        let nu = exact_density_ratio(&mdp, &pi, &d_exp).unwrap();
        let pq = adjoint_operator(&mdp, &pi, &q).unwrap();
        for i in 0..6 {
            let r = q.values()[i] + spec.derivative(nu.values()[i]) - mdp.gamma() * pq.values()[i];
            assert!(r.abs() < 1e-10);
        }
    }

    #[test]
    fn rank_one_kernel_factorizes_exactly() {
        let p = [0.2, 0.5, 0.3];
        let mut t = Vec::new();
        for _ in 0..3 * 2 {
            t.extend_from_slice(&p);
        }
        let mdp = TabularMdp::new(3, 2, t, vec![1.0, 0.0, 0.0], 0.9).unwrap();
        let q = SaTable::filled(3, 2, 1.0 / 6.0);
        let f = svd_factorization(&mdp, &q, &[0.3, 0.3, 0.4], 1).unwrap();
        assert!(f.residual < 1e-24);
        assert!(f.reconstruction_residual(&mdp) < 1e-20);
        assert!((f.transition_estimate(2, 1, 1) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn zero_noise_entry_rejected() {
        let mdp = swap_chain();
        let q = SaTable::filled(2, 1, 0.5);
        assert!(matches!(
            svd_factorization(&mdp, &q, &[1.0, 0.0], 1),
            Err(Error::NoFullSupport(1))
        ));
    }

    #[test]
    fn oversized_k_is_clamped() {
        let mdp = swap_chain();
        let q = SaTable::filled(2, 1, 0.5);
        let f = svd_factorization(&mdp, &q, &[0.5, 0.5], 10).unwrap();
        assert_eq!(f.k, 2);
        assert!(f.residual < 1e-24);
    }

    #[test]
    fn theta_of_constant_features_is_one() {
        let d = SaTable::from_vec(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let ones = FeatureTable::from_vec(4, 1, vec![1.0; 4]).unwrap();
        assert!((exact_theta(&d, &ones).unwrap()[0] - 1.0).abs() < 1e-15);
        let zeros = FeatureTable::zeros(4, 3);
        assert_eq!(exact_theta(&d, &zeros).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn single_state_density_identity_is_exact() {
        let mdp = TabularMdp::new(1, 2, vec![1.0, 1.0], vec![1.0], 0.9).unwrap();
        let q = SaTable::filled(1, 2, 0.5);
        let f = svd_factorization(&mdp, &q, &[1.0], 1).unwrap();
        let pi = TabularPolicy::new(1, 2, vec![0.4, 0.6]).unwrap();
        assert!(verify_linear_density_identity(&f, &mdp, &pi).unwrap() < 1e-15);
    }
}
