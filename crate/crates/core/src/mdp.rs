//! Finite discounted Markov decision processes.
//!
//! Rewards are normalized throughout: `R(π) = (1−γ) Σ_t γ^t E[r(s_t, a_t)]`,
//! which equals `r·d^π` for the discounted state-action distribution `d^π`.
//! Values and advantages use the same normalization so that the performance
//! difference identity reads `R⋆ − R(π) = −(1−γ)⁻¹ Σ d^π A⋆`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Lu, Matrix};
use crate::lp_geometry::{enumerate_vertices, gap_constants, optimal_face, SimplexLp, VertexSet};
use crate::math::dot;
use crate::measures::{tv_slices, Distribution, MASS_TOL};

/// Cap on the number of deterministic policies enumerated.
pub const POLICY_BUDGET: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    /// `P(s'|s,a)` at `(s·A + a)·S + s'`.
    transition: Vec<f64>,
    /// `r(s,a)` at `s·A + a`.
    reward: Vec<f64>,
    discount: f64,
    initial: Distribution,
}

impl Mdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        initial: Distribution,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidInput("need at least one state and one action"));
        }
        let sa = num_states * num_actions;
        for (expected, found) in [
            (sa * num_states, transition.len()),
            (sa, reward.len()),
            (num_states, initial.len()),
        ] {
            if expected != found {
                return Err(Error::DimensionMismatch { expected, found });
            }
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidInput("discount must lie in [0, 1)"));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidInput("rewards must be finite"));
        }
        for col in transition.chunks(num_states) {
            if col.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidInput("transition probabilities must be non-negative"));
            }
            if (col.iter().sum::<f64>() - 1.0).abs() > MASS_TOL {
                return Err(Error::InvalidInput("transition rows must sum to one"));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            transition,
            reward,
            discount,
            initial,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial(&self) -> &Distribution {
        &self.initial
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    /// `P(·|s,a)`.
    pub fn next_states(&self, s: usize, a: usize) -> &[f64] {
        let k = (s * self.num_actions + a) * self.num_states;
        &self.transition[k..k + self.num_states]
    }

    /// Copy with a different reward table.
    pub fn with_rewards(&self, reward: Vec<f64>) -> Result<Self> {
        Self::new(
            self.num_states,
            self.num_actions,
            self.transition.clone(),
            reward,
            self.discount,
            self.initial.clone(),
        )
    }
}

/// Stationary policy `π(a|s)`, stored row-major by state.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(Error::DimensionMismatch {
                expected: num_states * num_actions,
                found: probs.len(),
            });
        }
        for row in probs.chunks(num_actions) {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidInput("policy entries must be non-negative"));
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > MASS_TOL {
                return Err(Error::InvalidInput("policy rows must sum to one"));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    /// Plays `actions[s]` in state `s`.
    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * num_actions + a] = 1.0;
        }
        Self {
            num_states: actions.len(),
            num_actions,
            probs,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

/// Discounted state-action distribution, indexed by `s·A + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateActionDistribution {
    num_states: usize,
    num_actions: usize,
    dist: Distribution,
}

impl StateActionDistribution {
    /// Validates the flow constraints of `mdp` within `1e-9`.
    pub fn new(mdp: &Mdp, dist: Distribution) -> Result<Self> {
        if dist.len() != mdp.num_pairs() {
            return Err(Error::DimensionMismatch {
                expected: mdp.num_pairs(),
                found: dist.len(),
            });
        }
        if flow_residual(mdp, dist.weights()) > 1e-9 {
            return Err(Error::InvalidInput("not a discounted state-action distribution"));
        }
        Ok(Self {
            num_states: mdp.num_states,
            num_actions: mdp.num_actions,
            dist,
        })
    }

    pub fn distribution(&self) -> &Distribution {
        &self.dist
    }

    pub fn into_distribution(self) -> Distribution {
        self.dist
    }

    pub fn weights(&self) -> &[f64] {
        self.dist.weights()
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.dist.weights()[s * self.num_actions + a]
    }

    /// `ρ(s) = Σ_a d(s,a)`.
    pub fn state_marginal(&self) -> Vec<f64> {
        self.dist.weights().chunks(self.num_actions).map(|r| r.iter().sum()).collect()
    }
}

/// Largest violation of `Σ_a d(s,a) − γ Σ P(s|s',a') d(s',a') = (1−γ) μ(s)`.
pub fn flow_residual(mdp: &Mdp, d: &[f64]) -> f64 {
    let (s_n, a_n) = (mdp.num_states, mdp.num_actions);
    let mut inflow = vec![0.0; s_n];
    for sp in 0..s_n {
        for ap in 0..a_n {
            let w = d[sp * a_n + ap];
            for (s, p) in mdp.next_states(sp, ap).iter().enumerate() {
                inflow[s] += p * w;
            }
        }
    }
    (0..s_n)
        .map(|s| {
            let out: f64 = d[s * a_n..(s + 1) * a_n].iter().sum();
            (out - mdp.discount * inflow[s] - (1.0 - mdp.discount) * mdp.initial.weights()[s]).abs()
        })
        .fold(0.0, f64::max)
}

fn check_policy(mdp: &Mdp, pi: &Policy) -> Result<()> {
    if pi.num_states != mdp.num_states || pi.num_actions != mdp.num_actions {
        return Err(Error::DimensionMismatch {
            expected: mdp.num_pairs(),
            found: pi.probs.len(),
        });
    }
    Ok(())
}

/// `P_π(s, s') = Σ_a π(a|s) P(s'|s,a)`.
fn state_kernel(mdp: &Mdp, pi: &Policy) -> Matrix {
    let n = mdp.num_states;
    let mut k = Matrix::zeros(n, n);
    for s in 0..n {
        for a in 0..mdp.num_actions {
            let p = pi.prob(s, a);
            if p == 0.0 {
                continue;
            }
            for (sp, q) in mdp.next_states(s, a).iter().enumerate() {
                k[(s, sp)] += p * q;
            }
        }
    }
    k
}

/// `I − γ P_πᵀ`, the matrix of the state-occupancy system.
pub(crate) fn occupancy_system(mdp: &Mdp, pi: &Policy) -> Matrix {
    let n = mdp.num_states;
    let k = state_kernel(mdp, pi);
    let mut m = Matrix::identity(n);
    for s in 0..n {
        for sp in 0..n {
            m[(sp, s)] -= mdp.discount * k[(s, sp)];
        }
    }
    m
}

/// Discounted state occupancy `ρ = (1−γ)(I − γP_πᵀ)⁻¹ μ`.
pub fn state_occupancy(mdp: &Mdp, pi: &Policy) -> Result<Vec<f64>> {
    check_policy(mdp, pi)?;
    let lu = Lu::factor(&occupancy_system(mdp, pi)).ok_or(Error::SingularSystem)?;
    let rhs: Vec<f64> = mdp.initial.weights().iter().map(|m| (1.0 - mdp.discount) * m).collect();
    Ok(lu.solve(&rhs))
}

pub fn occupancy(mdp: &Mdp, pi: &Policy) -> Result<StateActionDistribution> {
    let rho = state_occupancy(mdp, pi)?;
    let a_n = mdp.num_actions;
    let mut d = vec![0.0; mdp.num_pairs()];
    for (s, r) in rho.iter().enumerate() {
        for a in 0..a_n {
            d[s * a_n + a] = r.max(0.0) * pi.prob(s, a);
        }
    }
    Ok(StateActionDistribution {
        num_states: mdp.num_states,
        num_actions: a_n,
        dist: Distribution::from_numerical(d),
    })
}

/// Normalized discounted reward `r·d^π`.
pub fn reward_of(mdp: &Mdp, pi: &Policy) -> Result<f64> {
    Ok(dot(&mdp.reward, occupancy(mdp, pi)?.weights()))
}

/// `π(a|s) = d(s,a) / Σ_a' d(s,a')`.
pub fn policy_from_occupancy(d: &StateActionDistribution) -> Result<Policy> {
    let a_n = d.num_actions;
    let mut probs = Vec::with_capacity(d.dist.len());
    for (s, row) in d.weights().chunks(a_n).enumerate() {
        let m: f64 = row.iter().sum();
        if m <= 1e-12 {
            return Err(Error::ExplorationViolation { state: s });
        }
        probs.extend(row.iter().map(|v| v / m));
    }
    Ok(Policy {
        num_states: d.num_states,
        num_actions: a_n,
        probs,
    })
}

/// A state that some policy never visits, if any.
///
/// For each target state this computes the set of states from which the
/// controller can avoid it forever (a greatest fixed point over transition
/// supports); the target is avoidable iff every initial state lies there.
pub fn unexplored_state(mdp: &Mdp) -> Option<usize> {
    let (s_n, a_n) = (mdp.num_states, mdp.num_actions);
    let mu = mdp.initial.weights();
    if mu.iter().all(|&m| m > 0.0) {
        return None;
    }
    for target in 0..s_n {
        let mut safe: Vec<bool> = (0..s_n).map(|s| s != target).collect();
        loop {
            let mut changed = false;
            for s in 0..s_n {
                if !safe[s] {
                    continue;
                }
                let can_stay = (0..a_n).any(|a| mdp.next_states(s, a).iter().enumerate().all(|(sp, &p)| p == 0.0 || safe[sp]));
                if !can_stay {
                    safe[s] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if (0..s_n).all(|s| mu[s] == 0.0 || safe[s]) {
            return Some(target);
        }
    }
    None
}

/// Whether every policy visits every state with positive discounted weight.
pub fn check_exploration(mdp: &Mdp) -> bool {
    unexplored_state(mdp).is_none()
}

/// The dual LP over the state-action polytope with the reward as cost.
pub fn state_action_lp(mdp: &Mdp) -> Result<SimplexLp> {
    if let Some(state) = unexplored_state(mdp) {
        return Err(Error::ExplorationViolation { state });
    }
    let (s_n, a_n) = (mdp.num_states, mdp.num_actions);
    let n = mdp.num_pairs();
    let mut lhs = Matrix::zeros(s_n, n);
    for sp in 0..s_n {
        for ap in 0..a_n {
            let x = sp * a_n + ap;
            lhs[(sp, x)] += 1.0;
            for (s, p) in mdp.next_states(sp, ap).iter().enumerate() {
                lhs[(s, x)] -= mdp.discount * p;
            }
        }
    }
    let rhs: Vec<f64> = mdp.initial.weights().iter().map(|m| (1.0 - mdp.discount) * m).collect();
    SimplexLp::new(lhs, rhs, mdp.reward.clone())
}

/// All deterministic policies as action indices, the first state varying slowest.
pub fn deterministic_policies(mdp: &Mdp) -> Result<Vec<Vec<usize>>> {
    let (s_n, a_n) = (mdp.num_states, mdp.num_actions);
    let mut required: u128 = 1;
    for _ in 0..s_n {
        required = required.saturating_mul(a_n as u128);
    }
    if required > POLICY_BUDGET {
        return Err(Error::SizeLimitExceeded {
            required,
            budget: POLICY_BUDGET,
        });
    }
    let mut out = Vec::with_capacity(required as usize);
    let mut cur = vec![0usize; s_n];
    loop {
        out.push(cur.clone());
        let mut i = s_n;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < a_n {
                break;
            }
            cur[i] = 0;
        }
    }
}

/// Normalized optimal values, action values and advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalValues {
    pub values: Vec<f64>,
    /// `Q⋆(s,a) = (1−γ) r(s,a) + γ Σ P(s'|s,a) V⋆(s')`, at `s·A + a`.
    pub action_values: Vec<f64>,
    pub advantages: Vec<f64>,
    /// Actions attaining the maximum in each state, ascending.
    pub optimal_actions: Vec<Vec<usize>>,
    /// Lowest-index optimal action per state.
    pub greedy: Vec<usize>,
}

impl OptimalValues {
    /// `R⋆ = Σ μ(s) V⋆(s)`.
    pub fn optimal_reward(&self, mdp: &Mdp) -> f64 {
        dot(mdp.initial.weights(), &self.values)
    }

    pub fn is_unique(&self) -> bool {
        self.optimal_actions.iter().all(|a| a.len() == 1)
    }
}

fn bellman_q(mdp: &Mdp, v: &[f64]) -> Vec<f64> {
    let g = mdp.discount;
    let mut q = Vec::with_capacity(mdp.num_pairs());
    for s in 0..mdp.num_states {
        for a in 0..mdp.num_actions {
            q.push((1.0 - g) * mdp.reward(s, a) + g * dot(mdp.next_states(s, a), v));
        }
    }
    q
}

fn greedy_from(q: &[f64], a_n: usize) -> Vec<usize> {
    q.chunks(a_n)
        .map(|row| {
            let mut best = 0;
            for a in 1..a_n {
                if row[a] > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// Normalized value of a policy in every state.
pub fn policy_values(mdp: &Mdp, pi: &Policy) -> Result<Vec<f64>> {
    check_policy(mdp, pi)?;
    let n = mdp.num_states;
    let k = state_kernel(mdp, pi);
    let mut m = Matrix::identity(n);
    for s in 0..n {
        for sp in 0..n {
            m[(s, sp)] -= mdp.discount * k[(s, sp)];
        }
    }
    let r: Vec<f64> = (0..n)
        .map(|s| (1.0 - mdp.discount) * dot(pi.row(s), &mdp.reward[s * mdp.num_actions..(s + 1) * mdp.num_actions]))
        .collect();
    let lu = Lu::factor(&m).ok_or(Error::SingularSystem)?;
    Ok(lu.solve(&r))
}

/// Value iteration to a tight residual followed by exact policy-iteration
/// polishing, so the greedy policy and values are exact up to rounding.
pub fn optimal_values(mdp: &Mdp) -> OptimalValues {
    let g = mdp.discount;
    let a_n = mdp.num_actions;
    let scale = mdp.reward.iter().fold(1.0f64, |m, r| m.max(r.abs()));
    let tol = if g > 0.0 {
        (1.0 - g) * 1e-12 / (2.0 * g) * scale
    } else {
        f64::INFINITY
    };
    let mut v = vec![0.0; mdp.num_states];
    for _ in 0..1_000_000 {
        let q = bellman_q(mdp, &v);
        let next: Vec<f64> = q
            .chunks(a_n)
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let res = next.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v = next;
        if res <= tol {
            break;
        }
    }
    let mut greedy = greedy_from(&bellman_q(mdp, &v), a_n);
    for _ in 0..100 {
        let pi = Policy::deterministic(a_n, &greedy);
        let Ok(vp) = policy_values(mdp, &pi) else {
            break;
        };
        let q = bellman_q(mdp, &vp);
        // switch only on strict improvement so ties keep the current action
        let mut next = greedy.clone();
        for s in 0..mdp.num_states {
            let row = &q[s * a_n..(s + 1) * a_n];
            let cur = row[greedy[s]];
            for a in 0..a_n {
                if row[a] > cur + 1e-14 * scale && row[a] > row[next[s]] {
                    next[s] = a;
                }
            }
        }
        v = vp;
        if next == greedy {
            break;
        }
        greedy = next;
    }
    let action_values = bellman_q(mdp, &v);
    let advantages: Vec<f64> = action_values.iter().enumerate().map(|(x, q)| q - v[x / a_n]).collect();
    let tie = 1e-9 * scale;
    let optimal_actions: Vec<Vec<usize>> = (0..mdp.num_states)
        .map(|s| (0..a_n).filter(|&a| advantages[s * a_n + a] >= -tie).collect())
        .collect();
    let greedy = optimal_actions.iter().map(|a| a[0]).collect();
    OptimalValues {
        values: v,
        action_values,
        advantages,
        optimal_actions,
        greedy,
    }
}

/// `Δ`, `δ` and the advantage-gap constant `Δ_K` of an MDP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdpRateConstants {
    pub delta_rate: f64,
    pub delta_lower: f64,
    pub delta_kakade: f64,
    pub unique_optimum: bool,
}

/// `Δ_K = −(1−γ)⁻¹ max { A⋆(s,a) : a not optimal in s }`.
pub fn advantage_gap(mdp: &Mdp, values: &OptimalValues) -> Result<f64> {
    let a_n = mdp.num_actions;
    let mut worst = f64::NEG_INFINITY;
    for s in 0..mdp.num_states {
        for a in 0..a_n {
            if !values.optimal_actions[s].contains(&a) {
                worst = worst.max(values.advantages[s * a_n + a]);
            }
        }
    }
    if worst == f64::NEG_INFINITY {
        return Err(Error::TrivialProgram);
    }
    Ok(-worst / (1.0 - mdp.discount))
}

/// Edge slope `Δ` over deterministic policies differing from `greedy` in one state.
pub fn one_state_deviation_rate(mdp: &Mdp, greedy: &[usize]) -> Result<f64> {
    let a_n = mdp.num_actions;
    let star = occupancy(mdp, &Policy::deterministic(a_n, greedy))?;
    let r_star = dot(&mdp.reward, star.weights());
    let mut best = f64::INFINITY;
    for s in 0..mdp.num_states {
        for a in 0..a_n {
            if a == greedy[s] {
                continue;
            }
            let mut dev = greedy.to_vec();
            dev[s] = a;
            let d = occupancy(mdp, &Policy::deterministic(a_n, &dev))?;
            let gap = r_star - dot(&mdp.reward, d.weights());
            let tv = tv_slices(star.weights(), d.weights());
            best = best.min(if tv > 0.0 { gap / tv } else { f64::INFINITY });
        }
    }
    Ok(best)
}

pub fn mdp_rate_constants(mdp: &Mdp) -> Result<MdpRateConstants> {
    let lp = state_action_lp(mdp)?;
    let vertices = enumerate_vertices(&lp)?;
    mdp_rate_constants_with(mdp, &lp, &vertices)
}

/// [`mdp_rate_constants`] with the state-action LP and its vertices precomputed.
pub fn mdp_rate_constants_with(mdp: &Mdp, lp: &SimplexLp, vertices: &VertexSet) -> Result<MdpRateConstants> {
    let face = optimal_face(lp, vertices);
    let gaps = gap_constants(lp, vertices, &face)?;
    let values = optimal_values(mdp);
    let delta_kakade = advantage_gap(mdp, &values)?;
    let unique_optimum = face.is_unique();
    if !unique_optimum {
        return Ok(MdpRateConstants {
            delta_rate: gaps.delta_rate,
            delta_lower: gaps.delta_lower,
            delta_kakade,
            unique_optimum,
        });
    }
    let delta_rate = one_state_deviation_rate(mdp, &values.greedy)?;
    let slack = 1e-9 * delta_rate.abs().max(1.0);
    if gaps.delta_lower > delta_rate + slack || delta_rate > delta_kakade + slack {
        return Err(Error::InvariantViolation(
            "expected delta_lower <= delta_rate <= delta_kakade",
        ));
    }
    Ok(MdpRateConstants {
        delta_rate,
        delta_lower: gaps.delta_lower,
        delta_kakade,
        unique_optimum,
    })
}
