//! Natural policy gradients for tabular MDPs.
//!
//! Policies are parametrized by `θ ↦ π_θ`; the induced state-action
//! distribution `d_θ` is differentiated through the occupancy system. Two
//! preconditioners are provided: the Fisher information of `d_θ` itself
//! (the state-action geometry) and the state-weighted Fisher information of
//! the policy rows (Kakade's choice).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::flow::fisher_rao_gradient;
use crate::linalg::{pinv_symmetric, Lu, Matrix};
use crate::lp_geometry::{enumerate_vertices, face_projection, optimal_face, SimplexLp};
use crate::math::{dot, exp, log_sum_exp, norm_inf, powf, sqrt};
use crate::mdp::{occupancy, occupancy_system, optimal_values, state_action_lp, Mdp, Policy, StateActionDistribution};
use crate::measures::{chi2_divergence, kl_divergence, Distribution};

/// Default relative cutoff for the spectral pseudo-inverse.
pub const PINV_REL_TOL: f64 = 1e-10;
/// Escort parameters closer to zero than this are singular.
pub const ESCORT_FLOOR: f64 = 1e-8;
/// Parameter sup-norm at which an iteration is declared divergent.
pub const BLOWUP_NORM: f64 = 1e8;

/// Differentiable map `θ ↦ π_θ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Parametrization {
    /// `π(a|s) ∝ exp θ_{s,a}`.
    TabularSoftmax { num_states: usize, num_actions: usize },
    /// `π(a|s) ∝ |θ_{s,a}|^power`, `power ≥ 1`.
    Escort {
        num_states: usize,
        num_actions: usize,
        power: f64,
    },
    /// `π(a|s) ∝ exp(θ·φ(s,a))`; `features` has one row per pair `s·A + a`.
    LogLinear {
        num_states: usize,
        num_actions: usize,
        features: Matrix,
    },
}

impl Parametrization {
    pub fn softmax(mdp: &Mdp) -> Self {
        Self::TabularSoftmax {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
        }
    }

    pub fn escort(mdp: &Mdp, power: f64) -> Result<Self> {
        if !(power >= 1.0) || !power.is_finite() {
            return Err(Error::InvalidInput("escort power must be at least 1"));
        }
        Ok(Self::Escort {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            power,
        })
    }

    pub fn log_linear(mdp: &Mdp, features: Matrix) -> Result<Self> {
        if features.rows() != mdp.num_pairs() {
            return Err(Error::DimensionMismatch {
                expected: mdp.num_pairs(),
                found: features.rows(),
            });
        }
        if features.cols() == 0 {
            return Err(Error::InvalidInput("need at least one feature"));
        }
        Ok(Self::LogLinear {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            features,
        })
    }

    fn shape(&self) -> (usize, usize) {
        match self {
            Self::TabularSoftmax { num_states, num_actions }
            | Self::Escort {
                num_states, num_actions, ..
            }
            | Self::LogLinear {
                num_states, num_actions, ..
            } => (*num_states, *num_actions),
        }
    }

    pub fn parameter_dim(&self) -> usize {
        match self {
            Self::LogLinear { features, .. } => features.cols(),
            _ => {
                let (s, a) = self.shape();
                s * a
            }
        }
    }

    fn check(&self, mdp: &Mdp, theta: &[f64]) -> Result<()> {
        if self.shape() != (mdp.num_states(), mdp.num_actions()) {
            return Err(Error::DimensionMismatch {
                expected: mdp.num_pairs(),
                found: self.shape().0 * self.shape().1,
            });
        }
        if theta.len() != self.parameter_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.parameter_dim(),
                found: theta.len(),
            });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("parameters must be finite"));
        }
        Ok(())
    }
}

fn softmax_row(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| exp(v - lse)).collect()
}

/// `π_θ` and its Jacobian (one row per pair `s·A + a`, one column per parameter).
pub fn policy_and_jacobian(par: &Parametrization, theta: &[f64]) -> Result<(Policy, Matrix)> {
    let (s_n, a_n) = par.shape();
    let p = par.parameter_dim();
    if theta.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: theta.len(),
        });
    }
    let mut probs = vec![0.0; s_n * a_n];
    let mut jac = Matrix::zeros(s_n * a_n, p);
    match par {
        Parametrization::TabularSoftmax { .. } => {
            for s in 0..s_n {
                let row = softmax_row(&theta[s * a_n..(s + 1) * a_n]);
                for a in 0..a_n {
                    probs[s * a_n + a] = row[a];
                    for b in 0..a_n {
                        let kron = if a == b { 1.0 } else { 0.0 };
                        jac[(s * a_n + a, s * a_n + b)] = row[a] * (kron - row[b]);
                    }
                }
            }
        }
        Parametrization::Escort { power, .. } => {
            if let Some(index) = theta.iter().position(|t| t.abs() < ESCORT_FLOOR) {
                return Err(Error::EscortSingularity { index });
            }
            for s in 0..s_n {
                let th = &theta[s * a_n..(s + 1) * a_n];
                // |θ|^p through logs so large exponents cannot overflow
                let logs: Vec<f64> = th.iter().map(|t| power * crate::math::ln(t.abs())).collect();
                let row = softmax_row(&logs);
                for a in 0..a_n {
                    probs[s * a_n + a] = row[a];
                    for b in 0..a_n {
                        let kron = if a == b { 1.0 } else { 0.0 };
                        jac[(s * a_n + a, s * a_n + b)] = power / th[b] * row[a] * (kron - row[b]);
                    }
                }
            }
        }
        Parametrization::LogLinear { features, .. } => {
            let logits = features.mul_vec(theta);
            for s in 0..s_n {
                let row = softmax_row(&logits[s * a_n..(s + 1) * a_n]);
                let mut mean = vec![0.0; p];
                for a in 0..a_n {
                    for (m, f) in mean.iter_mut().zip(features.row(s * a_n + a)) {
                        *m += row[a] * f;
                    }
                }
                for a in 0..a_n {
                    let x = s * a_n + a;
                    probs[x] = row[a];
                    for i in 0..p {
                        jac[(x, i)] = row[a] * (features[(x, i)] - mean[i]);
                    }
                }
            }
        }
    }
    Ok((Policy::new(s_n, a_n, probs)?, jac))
}

/// Everything downstream needs at one parameter value.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub policy: Policy,
    pub policy_jacobian: Matrix,
    pub state_occupancy: Vec<f64>,
    pub occupancy: StateActionDistribution,
    pub occupancy_jacobian: Matrix,
}

/// `d_θ` and `∂d_θ/∂θ` by implicit differentiation of
/// `(I − γP_πᵀ)ρ = (1−γ)μ`, `d(s,a) = ρ(s)π(a|s)`.
pub fn linearize(mdp: &Mdp, par: &Parametrization, theta: &[f64]) -> Result<Linearization> {
    par.check(mdp, theta)?;
    let (policy, jp) = policy_and_jacobian(par, theta)?;
    let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
    let p = par.parameter_dim();
    let lu = Lu::factor(&occupancy_system(mdp, &policy)).ok_or(Error::SingularSystem)?;
    let g = mdp.discount();
    let rhs: Vec<f64> = mdp.initial().weights().iter().map(|m| (1.0 - g) * m).collect();
    let rho = lu.solve(&rhs);
    let mut jd = Matrix::zeros(s_n * a_n, p);
    let mut src = vec![0.0; s_n];
    for i in 0..p {
        // γ (∂P_π)ᵀ ρ
        src.iter_mut().for_each(|v| *v = 0.0);
        for s in 0..s_n {
            for a in 0..a_n {
                let dp = jp[(s * a_n + a, i)];
                if dp == 0.0 {
                    continue;
                }
                for (sp, q) in mdp.next_states(s, a).iter().enumerate() {
                    src[sp] += g * rho[s] * dp * q;
                }
            }
        }
        let drho = lu.solve(&src);
        for s in 0..s_n {
            for a in 0..a_n {
                let x = s * a_n + a;
                jd[(x, i)] = drho[s] * policy.prob(s, a) + rho[s] * jp[(x, i)];
            }
        }
    }
    let occupancy = occupancy(mdp, &policy)?;
    Ok(Linearization {
        policy,
        policy_jacobian: jp,
        state_occupancy: rho,
        occupancy,
        occupancy_jacobian: jd,
    })
}

pub fn occupancy_jacobian(mdp: &Mdp, par: &Parametrization, theta: &[f64]) -> Result<Matrix> {
    Ok(linearize(mdp, par, theta)?.occupancy_jacobian)
}

/// Choice of Fisher information preconditioner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preconditioner {
    /// `G_M = Σ ∂d ∂dᵀ / d`, the Fisher information of `d_θ`.
    StateAction,
    /// `G_K = Σ_s ρ(s) Σ_a ∂π ∂πᵀ / π`.
    Kakade,
}

impl Preconditioner {
    pub fn name(&self) -> &'static str {
        match self {
            Self::StateAction => "state_action",
            Self::Kakade => "kakade",
        }
    }
}

fn fisher_from(lin: &Linearization, kind: Preconditioner) -> Matrix {
    match kind {
        Preconditioner::StateAction => {
            let w: Vec<f64> = lin.occupancy.weights().iter().map(|d| 1.0 / d).collect();
            lin.occupancy_jacobian.weighted_gram(&w)
        }
        Preconditioner::Kakade => {
            let a_n = lin.policy.num_actions();
            let w: Vec<f64> = lin
                .policy
                .as_slice()
                .iter()
                .enumerate()
                .map(|(x, p)| lin.state_occupancy[x / a_n] / p)
                .collect();
            lin.policy_jacobian.weighted_gram(&w)
        }
    }
}

pub fn fisher_matrix(mdp: &Mdp, par: &Parametrization, theta: &[f64], kind: Preconditioner) -> Result<Matrix> {
    let lin = linearize(mdp, par, theta)?;
    Ok(fisher_from(&lin, kind))
}

/// `∇R(θ) = (∂d/∂θ)ᵀ r`.
pub fn reward_gradient(mdp: &Mdp, par: &Parametrization, theta: &[f64]) -> Result<Vec<f64>> {
    Ok(linearize(mdp, par, theta)?.occupancy_jacobian.tr_mul_vec(mdp.rewards()))
}

/// Minimizer of the compatible least-squares loss and its minimal value.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibleFit {
    pub w: Vec<f64>,
    pub eps_sq: f64,
}

/// `E_d[(wᵀ∇log d − g)²] = Σ (Jw − d⊙g)² / d`.
pub fn compatible_loss(lin: &Linearization, g: &[f64], w: &[f64]) -> f64 {
    let jw = lin.occupancy_jacobian.mul_vec(w);
    lin.occupancy
        .weights()
        .iter()
        .zip(&jw)
        .zip(g)
        .map(|((d, j), g)| {
            let r = j - d * g;
            r * r / d
        })
        .sum()
}

fn compatible_from(lin: &Linearization, g: &[f64], tol: f64) -> CompatibleFit {
    let fisher = fisher_from(lin, Preconditioner::StateAction);
    let rhs = lin.occupancy_jacobian.tr_mul_vec(g);
    let w = pinv_symmetric(&fisher, tol).mul_vec(&rhs);
    let eps_sq = compatible_loss(lin, g, &w);
    CompatibleFit { w, eps_sq }
}

/// Regresses `objective_gradient` onto the score features `∇_θ log d_θ`.
pub fn compatible_fa(mdp: &Mdp, par: &Parametrization, theta: &[f64], objective_gradient: &[f64]) -> Result<CompatibleFit> {
    if objective_gradient.len() != mdp.num_pairs() {
        return Err(Error::DimensionMismatch {
            expected: mdp.num_pairs(),
            found: objective_gradient.len(),
        });
    }
    let lin = linearize(mdp, par, theta)?;
    Ok(compatible_from(&lin, objective_gradient, PINV_REL_TOL))
}

/// Fisher-Rao norm of `v` at `base`.
fn fr_norm(v: &[f64], base: &[f64]) -> f64 {
    sqrt(v.iter().zip(base).map(|(v, b)| v * v / b).sum::<f64>())
}

/// `‖(∂d/∂θ) v − ∇^FR r‖` at `d_θ`: how far the induced velocity is from the
/// Fisher-Rao gradient of the reward on the state-action polytope.
pub fn projection_residual(lp: &SimplexLp, lin: &Linearization, direction: &[f64]) -> Result<f64> {
    let grad = fisher_rao_gradient(lp, lin.occupancy.distribution())?;
    let jv = lin.occupancy_jacobian.mul_vec(direction);
    let diff: Vec<f64> = jv.iter().zip(&grad).map(|(a, b)| a - b).collect();
    Ok(fr_norm(&diff, lin.occupancy.weights()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpgConfig {
    pub preconditioner: Preconditioner,
    pub stepsize: f64,
    pub pinv_rel_tol: f64,
    pub max_iters: usize,
}

impl Default for NpgConfig {
    fn default() -> Self {
        Self {
            preconditioner: Preconditioner::StateAction,
            stepsize: 1e-2,
            pinv_rel_tol: PINV_REL_TOL,
            max_iters: 3000,
        }
    }
}

/// Diagnostics of one iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpgRecord {
    pub k: usize,
    pub theta_norm: f64,
    pub reward: f64,
    pub gap: f64,
    /// `KL(d⋆, d_k)`.
    pub kl: f64,
    /// Fisher-Rao distance between the induced velocity and the Fisher-Rao
    /// gradient; zero for regular tabular models with the state-action
    /// preconditioner.
    pub eps: f64,
    /// `χ²(d⋆, d_k)`.
    pub chi2: f64,
    /// Minimal compatible least-squares loss, an upper bound on `eps²`.
    pub compat_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    pub stepsize: f64,
    pub preconditioner: Preconditioner,
    pub records: Vec<NpgRecord>,
    pub occupancies: Vec<Distribution>,
    pub final_theta: Vec<f64>,
    /// Limit the occupancies are compared against: the optimal occupancy, or
    /// its information projection from `d_{θ₀}` when optima are not unique.
    pub reference: Distribution,
    pub optimal_reward: f64,
    /// Number of escort coordinates pushed away from zero.
    pub clamp_events: usize,
}

fn clamp_escort(theta: &mut [f64]) -> usize {
    let mut n = 0;
    for t in theta.iter_mut() {
        if t.abs() < ESCORT_FLOOR {
            *t = if *t < 0.0 { -ESCORT_FLOOR } else { ESCORT_FLOOR };
            n += 1;
        }
    }
    n
}

/// `θ_{k+1} = θ_k + η G(θ_k)⁺ ∇R(θ_k)` for `max_iters` steps.
pub fn run_npg(mdp: &Mdp, par: &Parametrization, cfg: &NpgConfig, theta0: &[f64]) -> Result<TrajectoryLog> {
    if !(cfg.stepsize > 0.0) || !(cfg.pinv_rel_tol > 0.0) {
        return Err(Error::InvalidInput("stepsize and pinv_rel_tol must be positive"));
    }
    par.check(mdp, theta0)?;
    let lp = state_action_lp(mdp)?;
    let mut theta = theta0.to_vec();
    let is_escort = matches!(par, Parametrization::Escort { .. });
    let mut clamp_events = 0;
    if is_escort {
        clamp_events += clamp_escort(&mut theta);
    }
    let first = linearize(mdp, par, &theta)?;
    let values = optimal_values(mdp);
    let optimal_reward = values.optimal_reward(mdp);
    let reference = if values.is_unique() {
        occupancy(mdp, &Policy::deterministic(mdp.num_actions(), &values.greedy))?.into_distribution()
    } else {
        let vertices = enumerate_vertices(&lp)?;
        let face = optimal_face(&lp, &vertices);
        face_projection(&lp, &vertices, &face, first.occupancy.distribution())?
    };
    let mut records = Vec::with_capacity(cfg.max_iters + 1);
    let mut occupancies = Vec::with_capacity(cfg.max_iters + 1);
    let mut lin = first;
    for k in 0..=cfg.max_iters {
        let d = lin.occupancy.distribution();
        let reward = dot(mdp.rewards(), d.weights());
        let grad = lin.occupancy_jacobian.tr_mul_vec(mdp.rewards());
        let fisher = fisher_from(&lin, cfg.preconditioner);
        let direction = pinv_symmetric(&fisher, cfg.pinv_rel_tol).mul_vec(&grad);
        let fit = compatible_from(&lin, mdp.rewards(), cfg.pinv_rel_tol);
        records.push(NpgRecord {
            k,
            theta_norm: norm_inf(&theta),
            reward,
            gap: optimal_reward - reward,
            kl: kl_divergence(&reference, d)?,
            eps: projection_residual(&lp, &lin, &direction)?,
            chi2: chi2_divergence(&reference, d)?,
            compat_loss: fit.eps_sq,
        });
        occupancies.push(d.clone());
        if k == cfg.max_iters {
            break;
        }
        for (t, v) in theta.iter_mut().zip(&direction) {
            *t += cfg.stepsize * v;
        }
        if norm_inf(&theta) > BLOWUP_NORM || theta.iter().any(|t| !t.is_finite()) {
            log::warn!("parameters diverged at iteration {}", k + 1);
            return Err(Error::NumericalBlowup { iteration: k + 1 });
        }
        if is_escort {
            let n = clamp_escort(&mut theta);
            if n > 0 {
                log::warn!("clamped {n} escort parameters away from zero at iteration {}", k + 1);
                clamp_events += n;
            }
        }
        lin = linearize(mdp, par, &theta)?;
    }
    Ok(TrajectoryLog {
        stepsize: cfg.stepsize,
        preconditioner: cfg.preconditioner,
        records,
        occupancies,
        final_theta: theta,
        reference,
        optimal_reward,
        clamp_events,
    })
}

/// One row of the perturbed sublinear bound along a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbedBoundTerm {
    pub k: usize,
    pub t: f64,
    pub eps: f64,
    /// `sqrt χ²(d⋆, d_k)`.
    pub delta: f64,
    pub gap: f64,
    /// `KL(d⋆, d₀)/t + t⁻¹ ∫₀ᵗ δ ε`; infinite at `t = 0`.
    pub rhs: f64,
    pub satisfied: bool,
}

/// Evaluates the perturbed sublinear bound with `t_k = η k` and the
/// integral by the trapezoid rule on the iteration grid.
pub fn perturbed_bound_terms(mdp: &Mdp, log: &TrajectoryLog, d_star: &Distribution) -> Result<Vec<PerturbedBoundTerm>> {
    let Some(d0) = log.occupancies.first() else {
        return Ok(Vec::new());
    };
    let kl0 = kl_divergence(d_star, d0)?;
    let r_star = dot(mdp.rewards(), d_star.weights());
    let mut out = Vec::with_capacity(log.records.len());
    let mut integral = 0.0;
    let mut prev = 0.0;
    for (i, (rec, d)) in log.records.iter().zip(&log.occupancies).enumerate() {
        let delta = sqrt(chi2_divergence(d_star, d)?);
        let integrand = delta * rec.eps;
        if i > 0 {
            integral += 0.5 * log.stepsize * (prev + integrand);
        }
        prev = integrand;
        let t = log.stepsize * rec.k as f64;
        let gap = r_star - dot(mdp.rewards(), d.weights());
        let rhs = if t > 0.0 { (kl0 + integral) / t } else { f64::INFINITY };
        out.push(PerturbedBoundTerm {
            k: rec.k,
            t,
            eps: rec.eps,
            delta,
            gap,
            rhs,
            satisfied: gap <= rhs,
        });
    }
    Ok(out)
}

/// Escort parameters reproducing a strictly positive policy: `θ = π^{1/p}`.
pub fn escort_parameters_for(policy: &Policy, power: f64) -> Vec<f64> {
    policy.as_slice().iter().map(|p| powf(*p, 1.0 / power)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bandit() -> Mdp {
        Mdp::new(1, 3, vec![1.0; 3], vec![1.0, 0.0, 0.5], 0.5, Distribution::dirac(1, 0)).unwrap()
    }

    #[test]
    fn softmax_at_zero_is_uniform() {
        let mdp = bandit();
        let par = Parametrization::softmax(&mdp);
        let (pi, jac) = policy_and_jacobian(&par, &[0.0; 3]).unwrap();
        for a in 0..3 {
            assert!((pi.prob(0, a) - 1.0 / 3.0).abs() < 1e-15);
        }
        for i in 0..3 {
            let col: f64 = (0..3).map(|a| jac[(a, i)]).sum();
            assert!(col.abs() < 1e-15);
        }
    }

    #[test]
    fn single_state_fisher_is_categorical() {
        let mdp = bandit();
        let par = Parametrization::softmax(&mdp);
        let theta = [0.3, -0.2, 0.9];
        let g = fisher_matrix(&mdp, &par, &theta, Preconditioner::StateAction).unwrap();
        let (pi, _) = policy_and_jacobian(&par, &theta).unwrap();
        let p = pi.row(0);
        for i in 0..3 {
            for j in 0..3 {
                let kron = if i == j { p[i] } else { 0.0 };
                assert!((g[(i, j)] - (kron - p[i] * p[j])).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn constant_feature_has_zero_fisher() {
        let mdp = bandit();
        let par = Parametrization::log_linear(&mdp, Matrix::from_vec(3, 1, vec![1.0; 3])).unwrap();
        for kind in [Preconditioner::StateAction, Preconditioner::Kakade] {
            let g = fisher_matrix(&mdp, &par, &[0.7], kind).unwrap();
            assert!(g.max_abs() < 1e-15);
        }
    }

    #[test]
    fn escort_rejects_zero() {
        let mdp = bandit();
        let par = Parametrization::escort(&mdp, 2.0).unwrap();
        assert_eq!(
            policy_and_jacobian(&par, &[1.0, 0.0, 1.0]).unwrap_err(),
            Error::EscortSingularity { index: 1 }
        );
    }

    #[test]
    fn stationary_when_gradient_vanishes() {
        let mdp = Mdp::new(1, 2, vec![1.0; 2], vec![1.0, 1.0], 0.5, Distribution::dirac(1, 0)).unwrap();
        let par = Parametrization::softmax(&mdp);
        let cfg = NpgConfig {
            max_iters: 5,
            ..NpgConfig::default()
        };
        // every policy is optimal here, so the reference is a face projection
        let log = run_npg(&mdp, &par, &cfg, &[0.0, 0.0]).unwrap();
        assert!(log.final_theta.iter().all(|t| *t == 0.0));
        assert!(log.records.iter().all(|r| r.gap.abs() < 1e-15));
    }
}
