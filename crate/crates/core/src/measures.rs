//! Probability measures on finite sets.
//!
//! Divergences (KL, total variation, χ²), Shannon entropy, the Fisher-Rao
//! inner product and information projections onto affine slices of the
//! simplex. The projection is computed in the dual: the minimizer of
//! `KL(μ, μ₀)` over `{μ ∈ Δ : Aμ = b}` has the exponential-family form
//! `μ(x) ∝ μ₀(x) exp((Aᵀλ)(x))`, and `λ` is found by damped Newton on the
//! concave dual objective `λᵀb − log Σ μ₀ exp(Aᵀλ)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{reduce_rows, Lu, Matrix};
use crate::math::{dot, exp, ln, log_sum_exp, norm_inf};
use crate::simplex::{maximize, LpOutcome};

/// Absolute tolerance on the total mass of a [`Distribution`].
pub const MASS_TOL: f64 = 1e-12;
/// Absolute tolerance on the total mass of a [`TangentVector`].
pub const TANGENT_TOL: f64 = 1e-10;
/// Coordinates at or below this value count as outside the support.
pub const SUPPORT_TOL: f64 = 1e-10;

/// A probability vector on `{0, .., n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Validates non-negativity, finiteness and unit mass.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("empty distribution"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be finite and non-negative"));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidInput("weights must sum to one"));
        }
        Ok(Self(weights))
    }

    /// Rescales non-negative weights to unit mass.
    pub fn from_unnormalized(mut weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be finite and non-negative"));
        }
        let s: f64 = weights.iter().sum();
        if !(s > 0.0) {
            return Err(Error::InvalidInput("weights have zero mass"));
        }
        for w in weights.iter_mut() {
            *w /= s;
        }
        Ok(Self(weights))
    }

    /// Clamps tiny negative round-off to zero and renormalizes.
    pub(crate) fn from_numerical(mut weights: Vec<f64>) -> Self {
        for w in weights.iter_mut() {
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let s: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= s;
        }
        Self(weights)
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0);
        Self(vec![1.0 / n as f64; n])
    }

    pub fn dirac(n: usize, at: usize) -> Self {
        let mut w = vec![0.0; n];
        w[at] = 1.0;
        Self(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Indices with weight above [`SUPPORT_TOL`].
    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > SUPPORT_TOL).collect()
    }

    /// Smallest strictly positive weight.
    pub fn min_positive(&self) -> f64 {
        self.0.iter().copied().filter(|&w| w > 0.0).fold(f64::INFINITY, f64::min)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.0.iter().all(|&w| w > 0.0)
    }

    fn check_same_len(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(())
    }
}

/// A direction tangent to the simplex: components summing to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector(Vec<f64>);

impl TangentVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("tangent components must be finite"));
        }
        let s: f64 = components.iter().sum();
        if s.abs() > TANGENT_TOL {
            return Err(Error::InvalidInput("tangent components must sum to zero"));
        }
        Ok(Self(components))
    }

    /// `mu − nu`.
    pub fn between(mu: &Distribution, nu: &Distribution) -> Result<Self> {
        mu.check_same_len(nu)?;
        Ok(Self(mu.weights().iter().zip(nu.weights()).map(|(a, b)| a - b).collect()))
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn kl_slices(mu: &[f64], nu: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for (i, (&m, &n)) in mu.iter().zip(nu).enumerate() {
        if n <= 0.0 {
            if m > 1e-15 {
                return Err(Error::AbsoluteContinuityViolation { index: i });
            }
            continue;
        }
        // 0·log(0/ν) = 0
        if m > 0.0 {
            s += m * ln(m / n);
        }
    }
    Ok(s.max(0.0))
}

/// `Σ μ(x) log(μ(x)/ν(x))` with the convention `0·log(0/0) = 0`.
pub fn kl_divergence(mu: &Distribution, nu: &Distribution) -> Result<f64> {
    mu.check_same_len(nu)?;
    kl_slices(mu.weights(), nu.weights())
}

pub(crate) fn tv_slices(mu: &[f64], nu: &[f64]) -> f64 {
    0.5 * mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Half the ℓ¹ distance.
pub fn tv_distance(mu: &Distribution, nu: &Distribution) -> Result<f64> {
    mu.check_same_len(nu)?;
    Ok(tv_slices(mu.weights(), nu.weights()))
}

/// `Σ v(x)² / w(x)`, skipping coordinates where both `v` and `w` vanish.
/// Shared by χ² and the Fisher-Rao norm so both use the same summation.
fn inverse_weighted_square_sum(v: &[f64], w: &[f64], on_zero: impl Fn(usize) -> Error) -> Result<f64> {
    let mut s = 0.0;
    for (i, (&vi, &wi)) in v.iter().zip(w).enumerate() {
        if wi <= 0.0 {
            if vi.abs() > 1e-15 {
                return Err(on_zero(i));
            }
            continue;
        }
        s += vi * vi / wi;
    }
    Ok(s)
}

/// `Σ (μ(x) − ν(x))² / ν(x)`.
pub fn chi2_divergence(mu: &Distribution, nu: &Distribution) -> Result<f64> {
    mu.check_same_len(nu)?;
    let diff: Vec<f64> = mu.weights().iter().zip(nu.weights()).map(|(a, b)| a - b).collect();
    inverse_weighted_square_sum(&diff, nu.weights(), |index| Error::AbsoluteContinuityViolation { index })
}

/// Shannon entropy `−Σ μ log μ` in nats.
pub fn entropy(mu: &Distribution) -> f64 {
    -mu.weights().iter().filter(|&&w| w > 0.0).map(|&w| w * ln(w)).sum::<f64>()
}

/// `g_μ(v, w) = Σ v(x) w(x) / μ(x)`, the Hessian of negative entropy at `μ`.
pub fn fisher_rao_inner(v: &TangentVector, w: &TangentVector, base: &Distribution) -> Result<f64> {
    let n = base.len();
    for t in [v, w] {
        if t.0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: t.0.len(),
            });
        }
    }
    if let Some(index) = base.weights().iter().position(|&b| b <= 1e-300) {
        return Err(Error::SingularBase { index });
    }
    if core::ptr::eq(v, w) || v == w {
        return inverse_weighted_square_sum(&v.0, base.weights(), |index| Error::SingularBase { index });
    }
    Ok(v.0.iter().zip(&w.0).zip(base.weights()).map(|((a, b), m)| a * b / m).sum())
}

/// The affine slice `{μ : Aμ = b}` intersected with the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraints {
    lhs: Matrix,
    rhs: Vec<f64>,
}

impl AffineConstraints {
    pub fn new(lhs: Matrix, rhs: Vec<f64>) -> Result<Self> {
        if lhs.rows() != rhs.len() {
            return Err(Error::DimensionMismatch {
                expected: lhs.rows(),
                found: rhs.len(),
            });
        }
        if lhs.as_slice().iter().chain(&rhs).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("constraint entries must be finite"));
        }
        Ok(Self { lhs, rhs })
    }

    /// No constraints besides the simplex itself.
    pub fn whole_simplex(n: usize) -> Self {
        Self {
            lhs: Matrix::zeros(0, n),
            rhs: Vec::new(),
        }
    }

    pub fn ground_set_size(&self) -> usize {
        self.lhs.cols()
    }

    pub fn lhs(&self) -> &Matrix {
        &self.lhs
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }
}

/// Stopping rule and line search for the dual Newton iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualNewtonConfig {
    /// Bound on the constraint residual (orthonormalized rows, sup norm).
    pub tol: f64,
    pub max_iter: usize,
    /// Sufficient-increase parameter of the backtracking line search.
    pub armijo: f64,
}

impl Default for DualNewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
            armijo: 1e-4,
        }
    }
}

/// `{μ ∈ Δ_n : Aμ = b}` with redundant rows removed and the remaining rows
/// orthonormalized and orthogonal to the all-ones vector.
#[derive(Debug, Clone)]
pub(crate) struct SimplexSystem {
    pub q: Matrix,
    pub rhs: Vec<f64>,
}

impl SimplexSystem {
    pub fn new(a: &Matrix, b: &[f64]) -> Result<Self> {
        let n = a.cols();
        let mut rows = Vec::with_capacity(a.rows() + 1);
        rows.push(vec![1.0; n]);
        for i in 0..a.rows() {
            rows.push(a.row(i).to_vec());
        }
        let mut rhs = Vec::with_capacity(b.len() + 1);
        rhs.push(1.0);
        rhs.extend_from_slice(b);
        let full = Matrix::from_rows(&rows, n);
        let red = reduce_rows(&full, &rhs, 1e-10).ok_or(Error::InfeasibleConstraints)?;
        // row 0 is the normalization; drop it, the partition function handles it
        let m = red.q.rows() - 1;
        let mut q = Matrix::zeros(m, n);
        for i in 0..m {
            q.row_mut(i).copy_from_slice(red.q.row(i + 1));
        }
        Ok(Self {
            q,
            rhs: red.rhs[1..].to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.q.cols()
    }

    /// All equality rows including the normalization, for LP use.
    pub fn with_normalization(&self) -> (Matrix, Vec<f64>) {
        let n = self.dim();
        let mut rows = Vec::with_capacity(self.q.rows() + 1);
        rows.push(vec![1.0; n]);
        for i in 0..self.q.rows() {
            rows.push(self.q.row(i).to_vec());
        }
        let mut rhs = vec![1.0];
        rhs.extend_from_slice(&self.rhs);
        (Matrix::from_rows(&rows, n), rhs)
    }

    pub fn residual(&self, mu: &[f64]) -> f64 {
        let qm = self.q.mul_vec(mu);
        let r: Vec<f64> = qm.iter().zip(&self.rhs).map(|(a, b)| a - b).collect();
        let mass: f64 = mu.iter().sum();
        norm_inf(&r).max((mass - 1.0).abs())
    }
}

/// Maximizes `λᵀb − log Σ exp(ℓ + Aᵀλ)`; returns the tilted measure and `λ`.
/// Largest change of any log-weight in one Newton step. Longer steps can
/// pass the Armijo test yet land where the covariance has underflowed.
const MAX_LOG_STEP: f64 = 5.0;

/// Newton steps taken after the residual first meets the tolerance.
const POLISH_STEPS: usize = 2;

pub(crate) fn tilted_solve(
    log_base: &[f64],
    sys: &SimplexSystem,
    lambda0: Option<&[f64]>,
    cfg: &DualNewtonConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = sys.q.rows();
    let n = sys.dim();
    let mut lambda = match lambda0 {
        Some(l) if l.len() == m => l.to_vec(),
        _ => vec![0.0; m],
    };
    let tilt = |lambda: &[f64]| -> (Vec<f64>, f64) {
        let shift = sys.q.tr_mul_vec(lambda);
        let z: Vec<f64> = log_base.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let lse = log_sum_exp(&z);
        (z.iter().map(|v| exp(v - lse)).collect(), lse)
    };
    let (mut mu, mut lse) = tilt(&lambda);
    if m == 0 {
        return Ok((mu, lambda));
    }
    // Exponents of size |z| carry an absolute error near ε|z|, which bounds
    // the attainable residual once t·c dominates them.
    let floor = f64::EPSILON * log_base.iter().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = cfg.tol.max(floor);
    let mut residual = f64::INFINITY;
    let mut polish = 0;
    for _ in 0..cfg.max_iter {
        let qm = sys.q.mul_vec(&mu);
        let grad: Vec<f64> = sys.rhs.iter().zip(&qm).map(|(b, a)| b - a).collect();
        residual = norm_inf(&grad);
        if residual <= tol {
            // inside the quadratic region extra steps are cheap and remove
            // the residual left at the tolerance
            if polish == POLISH_STEPS || residual <= f64::EPSILON {
                return Ok((mu, lambda));
            }
            polish += 1;
        }
        // covariance of the rows under mu
        let mut h = Matrix::zeros(m, m);
        for x in 0..n {
            let w = mu[x];
            if w == 0.0 {
                continue;
            }
            for i in 0..m {
                let a = w * sys.q[(i, x)];
                for j in i..m {
                    h[(i, j)] += a * sys.q[(j, x)];
                }
            }
        }
        for i in 0..m {
            for j in i..m {
                h[(i, j)] -= qm[i] * qm[j];
                h[(j, i)] = h[(i, j)];
            }
        }
        let mut step = match Lu::factor(&h) {
            Some(lu) => lu.solve(&grad),
            None => crate::linalg::pinv_symmetric(&h, 1e-14).mul_vec(&grad),
        };
        let log_change = norm_inf(&sys.q.tr_mul_vec(&step));
        if log_change > MAX_LOG_STEP {
            step.iter_mut().for_each(|d| *d *= MAX_LOG_STEP / log_change);
        }
        let slope = dot(&grad, &step);
        let d0 = dot(&lambda, &sys.rhs) - lse;
        let mut s = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = lambda.iter().zip(&step).map(|(l, d)| l + s * d).collect();
            let (tmu, tlse) = tilt(&trial);
            let d1 = dot(&trial, &sys.rhs) - tlse;
            if d1 >= d0 + cfg.armijo * s * slope - 1e-15 * (1.0 + d0.abs()) {
                accepted = Some((trial, tmu, tlse));
                break;
            }
            s *= 0.5;
        }
        match accepted {
            Some((l, tmu, tlse)) => {
                lambda = l;
                mu = tmu;
                lse = tlse;
            }
            None => break,
        }
    }
    let qm = sys.q.mul_vec(&mu);
    let final_res = sys.rhs.iter().zip(&qm).fold(0.0f64, |r, (b, a)| r.max((b - a).abs()));
    if final_res <= tol {
        return Ok((mu, lambda));
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual: final_res.min(residual),
        time_index: None,
    })
}

/// Coordinates that are positive somewhere on `{x ≥ 0 : E x = f}`.
pub(crate) fn maximal_support(eq: &Matrix, rhs: &[f64]) -> Result<Vec<bool>> {
    let n = eq.cols();
    let mut positive = vec![false; n];
    for x in 0..n {
        if positive[x] {
            continue;
        }
        let mut c = vec![0.0; n];
        c[x] = 1.0;
        match maximize(eq, rhs, &c) {
            LpOutcome::Optimal { x: sol, value } => {
                if value > SUPPORT_TOL {
                    for (p, v) in positive.iter_mut().zip(&sol) {
                        if *v > SUPPORT_TOL {
                            *p = true;
                        }
                    }
                    positive[x] = true;
                }
            }
            LpOutcome::Infeasible => return Err(Error::InfeasibleConstraints),
            LpOutcome::Unbounded => return Err(Error::InvalidInput("feasible set is unbounded")),
        }
    }
    Ok(positive)
}

/// Information projection restricted to the coordinates in `support`; the
/// remaining coordinates are pinned to zero.
pub(crate) fn project_on_support(
    mu0: &[f64],
    a: &Matrix,
    b: &[f64],
    support: &[usize],
    cfg: &DualNewtonConfig,
) -> Result<Vec<f64>> {
    let n = a.cols();
    let sub = a.select_columns(support);
    let sys = SimplexSystem::new(&sub, b)?;
    let mut log_base = Vec::with_capacity(support.len());
    for &x in support {
        if !(mu0[x] > 0.0) {
            return Err(Error::InvalidInput(
                "reference measure must be positive on the feasible support",
            ));
        }
        log_base.push(ln(mu0[x]));
    }
    let (mu_s, _) = tilted_solve(&log_base, &sys, None, cfg)?;
    let mut out = vec![0.0; n];
    for (&x, &v) in support.iter().zip(&mu_s) {
        out[x] = v;
    }
    Ok(out)
}

/// `argmin { KL(μ, μ₀) : μ ∈ Δ, Aμ = b }`.
///
/// The result has maximal support within the feasible set: coordinates that
/// can be positive on the constraint set are positive in the projection.
pub fn information_projection(mu0: &Distribution, constraints: &AffineConstraints) -> Result<Distribution> {
    information_projection_with(mu0, constraints, &DualNewtonConfig::default())
}

pub fn information_projection_with(
    mu0: &Distribution,
    constraints: &AffineConstraints,
    cfg: &DualNewtonConfig,
) -> Result<Distribution> {
    let n = mu0.len();
    if constraints.ground_set_size() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: constraints.ground_set_size(),
        });
    }
    let sys = SimplexSystem::new(&constraints.lhs, &constraints.rhs)?;
    let (eq, rhs) = sys.with_normalization();
    let positive = maximal_support(&eq, &rhs)?;
    let support: Vec<usize> = (0..n).filter(|&x| positive[x]).collect();
    if support.len() == n {
        let log_base: Vec<f64> = mu0
            .weights()
            .iter()
            .map(|&w| if w > 0.0 { ln(w) } else { f64::NEG_INFINITY })
            .collect();
        if log_base.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("reference measure must be strictly positive"));
        }
        let (mu, _) = tilted_solve(&log_base, &sys, None, cfg)?;
        return Ok(Distribution::from_numerical(mu));
    }
    let mu = project_on_support(mu0.weights(), &constraints.lhs, &constraints.rhs, &support, cfg)?;
    Ok(Distribution::from_numerical(mu))
}
