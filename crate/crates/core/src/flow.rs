//! Fisher-Rao gradient flow of a linear objective over `P`.
//!
//! The flow started at `μ₀` coincides with the KL-regularized central path
//! `μ_t = argmax { c·μ − KL(μ, μ₀)/t : μ ∈ P }`, so trajectories are computed
//! by solving for the dual multipliers at each requested time. Closed forms
//! for the full simplex and the a-priori convergence bounds live here too.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, pinv_symmetric, Matrix};
use crate::lp_geometry::{
    enumerate_vertices, face_projection, gap_constants, onset_time, optimal_face, RateConstants, SimplexLp, VertexSet,
};
use crate::math::{dot, exp, ln, log_sum_exp, powf};
use crate::measures::{entropy, kl_divergence, tilted_solve, Distribution, DualNewtonConfig};

/// Newton settings for the central-path solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralPathConfig {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Reuse the multipliers of the previous grid time as the starting point.
    pub warm_start: bool,
}

impl Default for CentralPathConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-12,
            newton_max_iter: 200,
            warm_start: true,
        }
    }
}

impl CentralPathConfig {
    fn dual(&self) -> Result<DualNewtonConfig> {
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::InvalidInput("newton_tol and newton_max_iter must be positive"));
        }
        Ok(DualNewtonConfig {
            tol: self.newton_tol,
            max_iter: self.newton_max_iter,
            ..DualNewtonConfig::default()
        })
    }
}

fn log_weights(mu0: &Distribution) -> Vec<f64> {
    mu0.weights().iter().map(|&w| ln(w)).collect()
}

fn tilted_log_base(log_mu0: &[f64], cost: &[f64], t: f64) -> Vec<f64> {
    log_mu0.iter().zip(cost).map(|(l, c)| l + t * c).collect()
}

const PATH_ATTEMPTS: usize = 200;

/// Solves the central path at `t`, continuing from a solved point
/// `(t_prev, λ_prev)` with `t_prev < t`.
///
/// The multipliers grow roughly linearly in `t`, so the previous ones are
/// rescaled as a predictor. When Newton fails from the prediction, the time
/// step is halved until it succeeds, within a budget of [`PATH_ATTEMPTS`]
/// solves.
fn continue_path(
    log_mu0: &[f64],
    lp: &SimplexLp,
    t: f64,
    start: Option<(f64, Vec<f64>)>,
    dual: &DualNewtonConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut t_prev, mut lambda) = start.unwrap_or((0.0, vec![0.0; lp.system().q.rows()]));
    let mut target = t;
    let mut last = Error::NonConvergence {
        iterations: 0,
        residual: f64::INFINITY,
        time_index: None,
    };
    for _ in 0..PATH_ATTEMPTS {
        let scale = if t_prev > 0.0 { target / t_prev } else { 0.0 };
        let guess: Vec<f64> = lambda.iter().map(|l| l * scale).collect();
        let base = tilted_log_base(log_mu0, lp.cost(), target);
        match tilted_solve(&base, lp.system(), Some(&guess), dual) {
            Ok((mu, l)) if target == t => return Ok((mu, l)),
            Ok((_, l)) => {
                t_prev = target;
                lambda = l;
                target = t;
            }
            Err(e @ Error::NonConvergence { .. }) if target - t_prev > 1e-9 * t => {
                last = e;
                target = t_prev + 0.5 * (target - t_prev);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// The point of the flow at time `t`.
pub fn central_path_point(lp: &SimplexLp, mu0: &Distribution, t: f64, cfg: &CentralPathConfig) -> Result<Distribution> {
    lp.check_interior(mu0)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput("time must be finite and non-negative"));
    }
    if t == 0.0 {
        return Ok(mu0.clone());
    }
    let (mu, _) = continue_path(&log_weights(mu0), lp, t, None, &cfg.dual()?)?;
    Ok(Distribution::from_numerical(mu))
}

/// `μ_t(x) ∝ μ₀(x) e^{t c(x)}`, the flow on the full simplex.
pub fn closed_form_simplex_flow(cost: &[f64], mu0: &Distribution, t: f64) -> Result<Distribution> {
    if cost.len() != mu0.len() {
        return Err(Error::DimensionMismatch {
            expected: mu0.len(),
            found: cost.len(),
        });
    }
    let z: Vec<f64> = mu0
        .weights()
        .iter()
        .zip(cost)
        .map(|(&w, &c)| if w > 0.0 { ln(w) + t * c } else { f64::NEG_INFINITY })
        .collect();
    let lse = log_sum_exp(&z);
    Ok(Distribution::from_numerical(z.iter().map(|v| exp(v - lse)).collect()))
}

/// Equality rows of `P` with the normalization row first.
fn equality_rows(lp: &SimplexLp) -> Matrix {
    lp.system().with_normalization().0
}

/// Fisher-Rao gradient of `μ ↦ c·μ` on `P` at an interior point.
///
/// Returns `w = μ ⊙ (c − Eᵀν)` where `ν` makes `w` tangent to `P`; this is
/// the velocity of the flow through `μ`.
pub fn fisher_rao_gradient(lp: &SimplexLp, mu: &Distribution) -> Result<Vec<f64>> {
    let e = equality_rows(lp);
    let mu_w = mu.weights();
    let c = lp.cost();
    let gram = e.weighted_gram_rows(mu_w);
    let mc: Vec<f64> = mu_w.iter().zip(c).map(|(m, c)| m * c).collect();
    let rhs = e.mul_vec(&mc);
    let nu = lu_solve(&gram, &rhs).unwrap_or_else(|| pinv_symmetric(&gram, 1e-12).mul_vec(&rhs));
    let shift = e.tr_mul_vec(&nu);
    Ok(mu_w.iter().zip(c).zip(&shift).map(|((m, c), s)| m * (c - s)).collect())
}

/// Explicit Euler on the dual multipliers of the central path.
///
/// Along the flow `μ_t ∝ μ₀ exp(t c + Qᵀλ_t)` with `λ` solving
/// `Cov_μ(Q, Q) λ' = −Cov_μ(Q, c)`. Only useful as an independent check of
/// [`central_path_point`]; the constraint residual drifts at `O(h)`.
pub fn euler_dual_flow(lp: &SimplexLp, mu0: &Distribution, t_end: f64, steps: usize) -> Result<Distribution> {
    lp.check_interior(mu0)?;
    if steps == 0 || !(t_end >= 0.0) {
        return Err(Error::InvalidInput("need a positive step count and non-negative end time"));
    }
    let sys = lp.system();
    let q = &sys.q;
    let m = q.rows();
    let n = lp.ground_set_size();
    let log_mu0 = log_weights(mu0);
    let c = lp.cost();
    let h = t_end / steps as f64;
    let mut lambda = vec![0.0; m];
    let measure = |t: f64, lambda: &[f64]| -> Vec<f64> {
        let shift = q.tr_mul_vec(lambda);
        let z: Vec<f64> = (0..n).map(|x| log_mu0[x] + t * c[x] + shift[x]).collect();
        let lse = log_sum_exp(&z);
        z.iter().map(|v| exp(v - lse)).collect()
    };
    for k in 0..steps {
        if m == 0 {
            break;
        }
        let mu = measure(k as f64 * h, &lambda);
        let qm = q.mul_vec(&mu);
        let mean_c = dot(&mu, c);
        let mut cov = q.weighted_gram_rows(&mu);
        for i in 0..m {
            for j in 0..m {
                cov[(i, j)] -= qm[i] * qm[j];
            }
        }
        let mc: Vec<f64> = mu.iter().zip(c).map(|(a, b)| a * b).collect();
        let cross: Vec<f64> = q.mul_vec(&mc).iter().zip(&qm).map(|(a, b)| -(a - b * mean_c)).collect();
        let dl = lu_solve(&cov, &cross).ok_or(Error::SingularSystem)?;
        for (l, d) in lambda.iter_mut().zip(&dl) {
            *l += h * d;
        }
    }
    Ok(Distribution::from_numerical(measure(t_end, &lambda)))
}

/// A-priori bounds at a single time; `None` where a bound does not apply.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConvergenceBounds {
    /// `KL(μ⋆, μ₀)/t`, bounding the optimality gap.
    pub sublinear: Option<f64>,
    pub linear_kl: Option<f64>,
    pub linear_value: Option<f64>,
    /// Same shape with the entropic radius in place of `KL(μ⋆, μ₀)`; applies
    /// to the entropy-regularized program, i.e. the flow from the
    /// maximum-entropy point.
    pub regularization_kl: Option<f64>,
    pub regularization_value: Option<f64>,
}

/// `exp(−Δ(t − t₀) + 2t₀Δ log((t + t₀)/(2t₀)))`.
pub fn linear_rate_factor(delta_rate: f64, t0: f64, t: f64) -> f64 {
    if t0 == 0.0 {
        return exp(-delta_rate * t);
    }
    exp(-delta_rate * (t - t0) + 2.0 * t0 * delta_rate * ln((t + t0) / (2.0 * t0)))
}

/// `max_P H − min_P H`; the minimum of a concave function sits at a vertex.
pub fn entropic_radius(lp: &SimplexLp, vertices: &VertexSet) -> f64 {
    let hmax = entropy(lp.max_entropy_point());
    let hmin = vertices.vertices().iter().map(entropy).fold(f64::INFINITY, f64::min);
    hmax - hmin
}

pub fn convergence_bounds(
    lp: &SimplexLp,
    vertices: &VertexSet,
    mu0: &Distribution,
    mu_star: &Distribution,
    rc: &RateConstants,
    t: f64,
) -> Result<ConvergenceBounds> {
    if !(t > 0.0) {
        return Err(Error::BoundNotApplicable("bounds need t > 0"));
    }
    let kl0 = kl_divergence(mu_star, mu0)?;
    let mut out = ConvergenceBounds {
        sublinear: Some(kl0 / t),
        ..ConvergenceBounds::default()
    };
    if !rc.unique_optimum {
        return Ok(out);
    }
    if let Some(t0) = rc.t0 {
        if t >= t0 {
            let kl = kl0 * linear_rate_factor(rc.delta_rate, t0, t);
            out.linear_kl = Some(kl);
            out.linear_value = Some(rc.delta_rate * kl);
        }
    }
    let t0_reg = onset_time(mu_star, lp.max_entropy_point(), rc.delta_rate)?;
    if t >= t0_reg {
        let r = entropic_radius(lp, vertices) * linear_rate_factor(rc.delta_rate, t0_reg, t);
        out.regularization_kl = Some(r);
        out.regularization_value = Some(rc.delta_rate * r);
    }
    Ok(out)
}

/// Bound shape for a non-unique optimum with a caller-chosen rate `κ < Δ`
/// and onset `t_κ`. Neither is determined by the theory, so the result is
/// not a certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonUniqueBound {
    pub kl: f64,
    pub value: f64,
    pub certified: bool,
}

pub fn non_unique_bound(kl0: f64, kappa: f64, t_kappa: f64, delta_rate: f64, t: f64) -> Result<NonUniqueBound> {
    if !(kappa > 0.0 && kappa < delta_rate) {
        return Err(Error::BoundNotApplicable("need 0 < kappa < delta_rate"));
    }
    if t < t_kappa {
        return Err(Error::BoundNotApplicable("t precedes t_kappa"));
    }
    let kl = kl0 * exp(-kappa * (t - t_kappa));
    Ok(NonUniqueBound {
        kl,
        value: kappa * kl,
        certified: false,
    })
}

/// Limit of the flow: the information projection of `μ₀` onto the optimal face.
pub fn implicit_bias_limit(lp: &SimplexLp, vertices: &VertexSet, mu0: &Distribution) -> Result<Distribution> {
    let face = optimal_face(lp, vertices);
    face_projection(lp, vertices, &face, mu0)
}

/// `0` followed by `points − 1` geometrically spaced times in `[1e-2, 100/Δ]`.
pub fn default_time_grid(delta_rate: f64, points: usize) -> Vec<f64> {
    let lo: f64 = 1e-2;
    let hi = if delta_rate.is_finite() && delta_rate > 0.0 {
        100.0 / delta_rate
    } else {
        100.0
    };
    let mut out = vec![0.0];
    let k = points.saturating_sub(1);
    for i in 0..k {
        let s = if k > 1 { i as f64 / (k - 1) as f64 } else { 1.0 };
        out.push(lo * powf(hi / lo, s));
    }
    out
}

/// Per-time diagnostics of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowDiagnostics {
    pub gap: f64,
    pub kl_to_optimum: f64,
    pub sublinear_bound: Option<f64>,
    pub linear_bound_kl: Option<f64>,
    pub linear_bound_value: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub iterates: Vec<Distribution>,
    pub diagnostics: Vec<FlowDiagnostics>,
    /// Flow limit used as reference in the diagnostics.
    pub reference: Distribution,
    pub rate_constants: Option<RateConstants>,
}

pub fn integrate_flow(lp: &SimplexLp, mu0: &Distribution, times: &[f64], cfg: &CentralPathConfig) -> Result<FlowTrajectory> {
    let vertices = enumerate_vertices(lp)?;
    integrate_flow_with(lp, &vertices, mu0, times, cfg)
}

/// [`integrate_flow`] with a precomputed vertex set.
pub fn integrate_flow_with(
    lp: &SimplexLp,
    vertices: &VertexSet,
    mu0: &Distribution,
    times: &[f64],
    cfg: &CentralPathConfig,
) -> Result<FlowTrajectory> {
    lp.check_interior(mu0)?;
    let dual = cfg.dual()?;
    if times.first() != Some(&0.0) {
        return Err(Error::InvalidInput("time grid must start at 0"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("time grid must be finite and strictly increasing"));
    }
    let face = optimal_face(lp, vertices);
    let reference = face_projection(lp, vertices, &face, mu0)?;
    let rate_constants = match gap_constants(lp, vertices, &face) {
        Ok(g) => Some(RateConstants {
            delta_rate: g.delta_rate,
            delta_lower: g.delta_lower,
            t0: if face.is_unique() {
                Some(onset_time(&reference, mu0, g.delta_rate)?)
            } else {
                None
            },
            unique_optimum: face.is_unique(),
        }),
        Err(Error::TrivialProgram) => None,
        Err(e) => return Err(e),
    };
    let kl0 = kl_divergence(&reference, mu0)?;
    let log_mu0 = log_weights(mu0);
    let mut solved: Option<(f64, Vec<f64>)> = None;
    let mut iterates = Vec::with_capacity(times.len());
    let mut diagnostics = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let mu = if t == 0.0 {
            mu0.clone()
        } else {
            let warm = if cfg.warm_start { solved.take() } else { None };
            let (mu, l) = continue_path(&log_mu0, lp, t, warm, &dual).map_err(|e| match e {
                Error::NonConvergence {
                    iterations, residual, ..
                } => Error::NonConvergence {
                    iterations,
                    residual,
                    time_index: Some(k),
                },
                e => e,
            })?;
            solved = Some((t, l));
            Distribution::from_numerical(mu)
        };
        let gap = (face.optimal_value - lp.value(mu.weights())).max(0.0);
        let kl_to_optimum = kl_divergence(&reference, &mu)?;
        let mut d = FlowDiagnostics {
            gap,
            kl_to_optimum,
            sublinear_bound: None,
            linear_bound_kl: None,
            linear_bound_value: None,
        };
        if t > 0.0 {
            d.sublinear_bound = Some(kl0 / t);
            if let Some(rc) = &rate_constants {
                if let (true, Some(t0)) = (rc.unique_optimum, rc.t0) {
                    if t >= t0 {
                        let kl = kl0 * linear_rate_factor(rc.delta_rate, t0, t);
                        d.linear_bound_kl = Some(kl);
                        d.linear_bound_value = Some(rc.delta_rate * kl);
                    }
                }
            }
        }
        iterates.push(mu);
        diagnostics.push(d);
    }
    Ok(FlowTrajectory {
        times: times.to_vec(),
        iterates,
        diagnostics,
        reference,
        rate_constants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_two_atoms() {
        let mu = closed_form_simplex_flow(&[1.0, 0.0], &Distribution::uniform(2), ln(3.0)).unwrap();
        assert!((mu.weights()[0] - 0.75).abs() < 1e-15);
        assert!((mu.weights()[1] - 0.25).abs() < 1e-15);
        let mu0 = Distribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        let same = closed_form_simplex_flow(&[2.0, 2.0, 2.0], &mu0, 7.0).unwrap();
        for (a, b) in same.weights().iter().zip(mu0.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rate_factor_is_one_at_onset() {
        assert!((linear_rate_factor(0.7, 3.0, 3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grid_shape() {
        let g = default_time_grid(0.5, 200);
        assert_eq!(g.len(), 200);
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 1e-2).abs() < 1e-15);
        assert!((g[199] - 200.0).abs() < 1e-9);
    }

    #[test]
    fn simplex_flow_matches_central_path() {
        let lp = SimplexLp::on_simplex(vec![1.0, 0.0]).unwrap();
        let mu0 = Distribution::uniform(2);
        let traj = integrate_flow(&lp, &mu0, &[0.0, 1.0, 5.0], &CentralPathConfig::default()).unwrap();
        for (t, mu) in traj.times.iter().zip(&traj.iterates) {
            let e = exp(*t);
            assert!((mu.weights()[0] - e / (e + 1.0)).abs() < 1e-14);
        }
    }
}
