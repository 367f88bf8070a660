//! Independence models for `n` players sharing a separable payoff.
//!
//! If the payoff on `X^n` is a sum of per-player terms `c(x) = Σ_i c_i(x_i)`,
//! the Fisher-Rao flow from a product measure stays a product measure and
//! each factor evolves as its own softmax flow. Joint tensors are stored
//! flat with player 0 as the most significant index.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{pinv_symmetric, Matrix};
use crate::math::{exp, ln, log_sum_exp, norm_inf, softmax_in_place};
use crate::measures::Distribution;
use crate::npg::{BLOWUP_NORM, PINV_REL_TOL};

/// Cap on the joint size `|X|^n`.
pub const JOINT_BUDGET: u128 = 1_000_000;

fn joint_size(num_players: usize, num_actions: usize) -> Result<usize> {
    let mut size: u128 = 1;
    for _ in 0..num_players {
        size = size.saturating_mul(num_actions as u128);
    }
    if size > JOINT_BUDGET {
        return Err(Error::SizeLimitExceeded {
            required: size,
            budget: JOINT_BUDGET,
        });
    }
    Ok(size as usize)
}

/// `n(|X| − 1)`, the parameter count of the independence model.
pub fn independence_parameter_count(num_players: usize, num_actions: usize) -> u128 {
    num_players as u128 * (num_actions as u128).saturating_sub(1)
}

/// `|X|^n − 1`, the parameter count of a softmax on the joint space.
pub fn joint_parameter_count(num_players: usize, num_actions: usize) -> u128 {
    let mut size: u128 = 1;
    for _ in 0..num_players {
        size = size.saturating_mul(num_actions as u128);
    }
    size.saturating_sub(1)
}

/// Per-player action of joint index `x`.
fn digits(mut x: usize, num_players: usize, num_actions: usize, out: &mut [usize]) {
    for i in (0..num_players).rev() {
        out[i] = x % num_actions;
        x /= num_actions;
    }
}

/// A payoff `c(x) = Σ_i c_i(x_i)`; every factor but the first has mean zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedCost {
    num_actions: usize,
    factors: Vec<Vec<f64>>,
}

impl FactorizedCost {
    pub fn new(factors: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = factors.first() else {
            return Err(Error::InvalidInput("need at least one player"));
        };
        let m = first.len();
        if m == 0 {
            return Err(Error::InvalidInput("need at least one action"));
        }
        if let Some(f) = factors.iter().find(|f| f.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: f.len(),
            });
        }
        if factors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("payoff entries must be finite"));
        }
        Ok(Self { num_actions: m, factors })
    }

    pub fn num_players(&self) -> usize {
        self.factors.len()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn factor(&self, i: usize) -> &[f64] {
        &self.factors[i]
    }

    pub fn factors(&self) -> &[Vec<f64>] {
        &self.factors
    }

    /// The joint payoff tensor.
    pub fn assembled(&self) -> Result<Vec<f64>> {
        let (n, m) = (self.num_players(), self.num_actions);
        let size = joint_size(n, m)?;
        let mut idx = vec![0; n];
        Ok((0..size)
            .map(|x| {
                digits(x, n, m, &mut idx);
                idx.iter().enumerate().map(|(i, &a)| self.factors[i][a]).sum()
            })
            .collect())
    }
}

fn check_shape(cost: &[f64], num_players: usize, num_actions: usize) -> Result<usize> {
    let size = joint_size(num_players, num_actions)?;
    if num_players == 0 || num_actions == 0 {
        return Err(Error::InvalidInput("need at least one player and one action"));
    }
    if cost.len() != size {
        return Err(Error::DimensionMismatch {
            expected: size,
            found: cost.len(),
        });
    }
    Ok(size)
}

/// Slice means per player; the grand mean is kept in the first factor only.
fn centered_slice_means(values: &[f64], num_players: usize, num_actions: usize) -> Vec<Vec<f64>> {
    let size = values.len();
    let per_slice = (size / num_actions) as f64;
    let mut sums = vec![vec![0.0; num_actions]; num_players];
    let mut idx = vec![0; num_players];
    for (x, &c) in values.iter().enumerate() {
        digits(x, num_players, num_actions, &mut idx);
        for (i, &a) in idx.iter().enumerate() {
            sums[i][a] += c;
        }
    }
    let grand = values.iter().sum::<f64>() / size as f64;
    for (i, f) in sums.iter_mut().enumerate() {
        for v in f.iter_mut() {
            *v /= per_slice;
            if i > 0 {
                *v -= grand;
            }
        }
    }
    sums
}

/// Factors read off along the axes through the all-zero profile, and what
/// they leave unexplained. Only additions and subtractions of entries are
/// involved, so the remainder of an integer-valued separable payoff is exactly
/// zero.
fn anchored_split(cost: &[f64], num_players: usize, num_actions: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let origin = cost[0];
    let mut stride = 1;
    let mut anchored = vec![vec![0.0; num_actions]; num_players];
    for f in anchored.iter_mut().rev() {
        for (a, v) in f.iter_mut().enumerate() {
            *v = cost[a * stride] - origin;
        }
        stride *= num_actions;
    }
    anchored[0].iter_mut().for_each(|v| *v += origin);
    let fit = FactorizedCost::new(anchored.clone())?.assembled()?;
    let remainder = cost.iter().zip(&fit).map(|(c, f)| c - f).collect();
    Ok((anchored, remainder))
}

/// Sup-norm distance from `cost` to the separable payoffs. The orthogonal
/// projection fixes the anchored fit, so the residual is the orthogonal
/// residual of the anchored remainder.
pub fn factorization_residual(cost: &[f64], num_players: usize, num_actions: usize) -> Result<f64> {
    check_shape(cost, num_players, num_actions)?;
    let (_, remainder) = anchored_split(cost, num_players, num_actions)?;
    Ok(orthogonal_residual(&remainder, num_players, num_actions)?.1)
}

fn orthogonal_residual(values: &[f64], num_players: usize, num_actions: usize) -> Result<(Vec<Vec<f64>>, f64)> {
    let means = centered_slice_means(values, num_players, num_actions);
    let fit = FactorizedCost::new(means.clone())?.assembled()?;
    let residual = values.iter().zip(&fit).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok((means, residual))
}

/// Projects a joint payoff onto separable payoffs (main effects plus the
/// grand mean, which is folded into the first factor).
pub fn factorize_cost(cost: &[f64], num_players: usize, num_actions: usize) -> Result<FactorizedCost> {
    check_shape(cost, num_players, num_actions)?;
    let (mut factors, remainder) = anchored_split(cost, num_players, num_actions)?;
    let (correction, residual) = orthogonal_residual(&remainder, num_players, num_actions)?;
    if residual > 1e-9 * norm_inf(cost) {
        return Err(Error::NotFactorizable { residual });
    }
    for (f, c) in factors.iter_mut().zip(&correction) {
        f.iter_mut().zip(c).for_each(|(v, c)| *v += c);
    }
    let (first, rest) = factors.split_at_mut(1);
    for f in rest {
        let mean = f.iter().sum::<f64>() / num_actions as f64;
        f.iter_mut().for_each(|v| *v -= mean);
        first[0].iter_mut().for_each(|v| *v += mean);
    }
    FactorizedCost::new(factors)
}

/// Product of per-player distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependenceState {
    pub factors: Vec<Distribution>,
}

impl IndependenceState {
    /// The product measure on `X^n`.
    pub fn joint(&self) -> Result<Distribution> {
        let n = self.factors.len();
        let m = self.factors.first().map_or(0, |f| f.len());
        let size = joint_size(n, m)?;
        let mut idx = vec![0; n];
        let w = (0..size)
            .map(|x| {
                digits(x, n, m, &mut idx);
                idx.iter().enumerate().map(|(i, &a)| self.factors[i].weights()[a]).product()
            })
            .collect();
        Ok(Distribution::from_numerical(w))
    }
}

fn tilt(base: &[f64], payoff: &[f64], t: f64) -> Distribution {
    let z: Vec<f64> = base.iter().zip(payoff).map(|(b, c)| b + t * c).collect();
    let lse = log_sum_exp(&z);
    Distribution::from_numerical(z.iter().map(|v| exp(v - lse)).collect())
}

/// Flow from the uniform product measure, `μ_t ∝ e^{t c}`, built factor-wise.
pub fn closed_form_product_flow(fc: &FactorizedCost, t: f64) -> Result<Distribution> {
    let zeros = vec![0.0; fc.num_actions];
    let state = IndependenceState {
        factors: fc.factors.iter().map(|c| tilt(&zeros, c, t)).collect(),
    };
    state.joint()
}

/// Flow from a product measure `⊗ μ_i`, `μ_t ∝ (⊗ μ_i) e^{t c}`.
pub fn closed_form_product_flow_from(fc: &FactorizedCost, init: &[Distribution], t: f64) -> Result<IndependenceState> {
    if init.len() != fc.num_players() {
        return Err(Error::DimensionMismatch {
            expected: fc.num_players(),
            found: init.len(),
        });
    }
    let mut factors = Vec::with_capacity(init.len());
    for (mu, c) in init.iter().zip(&fc.factors) {
        if mu.len() != fc.num_actions || !mu.is_strictly_positive() {
            return Err(Error::InvalidInput(
                "initial factors must be strictly positive on the action set",
            ));
        }
        let logs: Vec<f64> = mu.weights().iter().map(|w| ln(*w)).collect();
        factors.push(tilt(&logs, c, t));
    }
    Ok(IndependenceState { factors })
}

fn softmax_state(theta: &[Vec<f64>]) -> IndependenceState {
    IndependenceState {
        factors: theta
            .iter()
            .map(|th| {
                let mut p = th.clone();
                softmax_in_place(&mut p);
                Distribution::from_numerical(p)
            })
            .collect(),
    }
}

/// Expected payoff of each own action with the other players held at `state`.
fn marginal_payoffs(joint_cost: &[f64], state: &IndependenceState) -> Vec<Vec<f64>> {
    let n = state.factors.len();
    let m = state.factors[0].len();
    let mut out = vec![vec![0.0; m]; n];
    let mut idx = vec![0; n];
    for (x, &c) in joint_cost.iter().enumerate() {
        digits(x, n, m, &mut idx);
        for i in 0..n {
            let w: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| state.factors[j].weights()[idx[j]])
                .product();
            out[i][idx[i]] += w * c;
        }
    }
    out
}

/// Explicit Euler steps of the per-player softmax natural gradient on the
/// joint payoff. Returns the states at steps `0..=iters`.
pub fn simulate_factor_flow(
    fc: &FactorizedCost,
    theta0: &[Vec<f64>],
    stepsize: f64,
    iters: usize,
) -> Result<Vec<IndependenceState>> {
    if theta0.len() != fc.num_players() {
        return Err(Error::DimensionMismatch {
            expected: fc.num_players(),
            found: theta0.len(),
        });
    }
    if let Some(th) = theta0.iter().find(|th| th.len() != fc.num_actions) {
        return Err(Error::DimensionMismatch {
            expected: fc.num_actions,
            found: th.len(),
        });
    }
    if !(stepsize > 0.0) {
        return Err(Error::InvalidInput("stepsize must be positive"));
    }
    let joint_cost = fc.assembled()?;
    let m = fc.num_actions;
    let mut theta = theta0.to_vec();
    let mut out = Vec::with_capacity(iters + 1);
    let mut state = softmax_state(&theta);
    for k in 0..=iters {
        out.push(state.clone());
        if k == iters {
            break;
        }
        let payoffs = marginal_payoffs(&joint_cost, &state);
        for (i, th) in theta.iter_mut().enumerate() {
            let p = state.factors[i].weights();
            // categorical Fisher matrix diag(p) − ppᵀ; gradient is F·payoff
            let mut fisher = Matrix::zeros(m, m);
            for a in 0..m {
                for b in 0..m {
                    fisher[(a, b)] = if a == b { p[a] } else { 0.0 } - p[a] * p[b];
                }
            }
            let grad = fisher.mul_vec(&payoffs[i]);
            let dir = pinv_symmetric(&fisher, PINV_REL_TOL).mul_vec(&grad);
            for (t, d) in th.iter_mut().zip(&dir) {
                *t += stepsize * d;
            }
            if norm_inf(th) > BLOWUP_NORM {
                return Err(Error::NumericalBlowup { iteration: k + 1 });
            }
        }
        state = softmax_state(&theta);
    }
    Ok(out)
}
