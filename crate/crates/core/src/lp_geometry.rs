//! Linear programs over sub-polytopes of the simplex.
//!
//! A [`SimplexLp`] is `max c·μ` over `P = {μ ∈ Δ_X : Aμ = b}`. Vertices are
//! found by enumerating bases of the equality system, and two vertices are
//! neighbors when the smallest face containing both is a segment.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{rank, Lu, Matrix};
use crate::math::{binomial, dot};
use crate::measures::{
    kl_divergence, maximal_support, project_on_support, tilted_solve, tv_slices, AffineConstraints, Distribution,
    DualNewtonConfig, SimplexSystem, SUPPORT_TOL,
};

/// Default cap on the number of candidate bases in [`enumerate_vertices`].
pub const DEFAULT_BASIS_BUDGET: u128 = 1_000_000;
/// Relative tolerance for ties in the objective.
pub const TIE_TOL: f64 = 1e-9;
const MERGE_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-10;

/// `max c·μ` subject to `μ ∈ Δ_X`, `Aμ = b`.
#[derive(Debug, Clone)]
pub struct SimplexLp {
    constraints: AffineConstraints,
    cost: Vec<f64>,
    system: SimplexSystem,
    center: Distribution,
}

impl SimplexLp {
    /// Validates the instance; the feasible set must contain a strictly
    /// positive point.
    pub fn new(lhs: Matrix, rhs: Vec<f64>, cost: Vec<f64>) -> Result<Self> {
        let n = lhs.cols();
        if n == 0 {
            return Err(Error::InvalidInput("empty ground set"));
        }
        if cost.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: cost.len(),
            });
        }
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("cost entries must be finite"));
        }
        let constraints = AffineConstraints::new(lhs, rhs)?;
        let system = SimplexSystem::new(constraints.lhs(), constraints.rhs())?;
        let (eq, eq_rhs) = system.with_normalization();
        let positive = maximal_support(&eq, &eq_rhs)?;
        if positive.iter().any(|p| !p) {
            return Err(Error::NoInteriorPoint);
        }
        let (center, _) = tilted_solve(&vec![0.0; n], &system, None, &DualNewtonConfig::default())?;
        Ok(Self {
            constraints,
            cost,
            system,
            center: Distribution::from_numerical(center),
        })
    }

    /// The whole simplex with the given cost.
    pub fn on_simplex(cost: Vec<f64>) -> Result<Self> {
        let n = cost.len();
        Self::new(Matrix::zeros(0, n), Vec::new(), cost)
    }

    pub fn ground_set_size(&self) -> usize {
        self.cost.len()
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn constraints(&self) -> &AffineConstraints {
        &self.constraints
    }

    /// Number of independent equality rows, normalization included.
    pub fn rank(&self) -> usize {
        self.system.q.rows() + 1
    }

    /// Dimension of the feasible polytope.
    pub fn dimension(&self) -> usize {
        self.ground_set_size() - self.rank()
    }

    /// The maximum-entropy feasible point.
    pub fn max_entropy_point(&self) -> &Distribution {
        &self.center
    }

    pub fn value(&self, mu: &[f64]) -> f64 {
        dot(&self.cost, mu)
    }

    /// Sup-norm violation of the equality constraints (normalization included).
    pub fn residual(&self, mu: &[f64]) -> f64 {
        self.system.residual(mu)
    }

    pub(crate) fn system(&self) -> &SimplexSystem {
        &self.system
    }

    /// Same feasible set, different cost.
    pub fn with_cost(&self, cost: Vec<f64>) -> Result<Self> {
        if cost.len() != self.ground_set_size() {
            return Err(Error::DimensionMismatch {
                expected: self.ground_set_size(),
                found: cost.len(),
            });
        }
        Ok(Self { cost, ..self.clone() })
    }

    /// Checks strict positivity and feasibility of a reference measure.
    pub fn check_interior(&self, mu0: &Distribution) -> Result<()> {
        if mu0.len() != self.ground_set_size() {
            return Err(Error::DimensionMismatch {
                expected: self.ground_set_size(),
                found: mu0.len(),
            });
        }
        if !mu0.is_strictly_positive() {
            return Err(Error::InvalidInput("reference measure must be strictly positive"));
        }
        if self.residual(mu0.weights()) > 1e-9 {
            return Err(Error::InvalidInput("reference measure is not feasible"));
        }
        Ok(())
    }
}

/// Vertices of the feasible polytope with their edge graph.
#[derive(Debug, Clone)]
pub struct VertexSet {
    vertices: Vec<Distribution>,
    adjacency: Vec<Vec<bool>>,
    supports: Vec<Vec<usize>>,
}

impl VertexSet {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Distribution] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &Distribution {
        &self.vertices[i]
    }

    pub fn support(&self, i: usize) -> &[usize] {
        &self.supports[i]
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i][j]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&j| self.adjacency[i][j])
    }

    /// Index of the vertex within `tol` (sup norm) of `mu`, if any.
    pub fn find(&self, mu: &[f64], tol: f64) -> Option<usize> {
        self.vertices
            .iter()
            .position(|v| v.weights().iter().zip(mu).all(|(a, b)| (a - b).abs() <= tol))
    }
}

/// Visits every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + n - k {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub fn enumerate_vertices(lp: &SimplexLp) -> Result<VertexSet> {
    enumerate_vertices_with_budget(lp, DEFAULT_BASIS_BUDGET)
}

/// Basic-feasible-solution enumeration over all `rank`-subsets of columns.
pub fn enumerate_vertices_with_budget(lp: &SimplexLp, budget: u128) -> Result<VertexSet> {
    let n = lp.ground_set_size();
    let (eq, f) = lp.system.with_normalization();
    let r = eq.rows();
    let required = binomial(n, r);
    if required > budget {
        return Err(Error::SizeLimitExceeded { required, budget });
    }
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    for_each_subset(n, r, |basis| {
        let sub = eq.select_columns(basis);
        let Some(lu) = Lu::factor(&sub) else {
            return;
        };
        let xb = lu.solve(&f);
        if xb.iter().any(|v| *v < -FEAS_TOL || !v.is_finite()) {
            return;
        }
        let mut x = vec![0.0; n];
        for (&j, &v) in basis.iter().zip(&xb) {
            x[j] = v.max(0.0);
        }
        let res = eq.mul_vec(&x).iter().zip(&f).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if res > FEAS_TOL {
            return;
        }
        for v in x.iter_mut() {
            if *v <= SUPPORT_TOL * 1e-2 {
                *v = 0.0;
            }
        }
        let duplicate = vertices
            .iter()
            .any(|v| v.iter().zip(&x).all(|(a, b)| (a - b).abs() < MERGE_TOL));
        if !duplicate {
            vertices.push(x);
        }
    });
    let vertices: Vec<Distribution> = vertices.into_iter().map(Distribution::from_numerical).collect();
    let supports: Vec<Vec<usize>> = vertices.iter().map(|v| v.support()).collect();
    let k = vertices.len();
    let mut adjacency = vec![vec![false; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let a = supports_span_edge(&eq, &supports[i], &supports[j]);
            adjacency[i][j] = a;
            adjacency[j][i] = a;
        }
    }
    Ok(VertexSet {
        vertices,
        adjacency,
        supports,
    })
}

/// The smallest face containing two vertices is `{x ∈ P : x_j = 0, j ∉ S}`
/// with `S` the union of their supports; it has dimension `|S| − rank(E_S)`.
fn supports_span_edge(eq: &Matrix, s1: &[usize], s2: &[usize]) -> bool {
    let mut s: Vec<usize> = s1.iter().chain(s2).copied().collect();
    s.sort_unstable();
    s.dedup();
    let sub = eq.select_columns(&s);
    s.len() == rank(&sub, 1e-9) + 1
}

/// Whether the segment between two distinct vertices is an edge of `P`.
pub fn are_neighbors(vertices: &VertexSet, v1: usize, v2: usize) -> bool {
    v1 != v2 && vertices.adjacent(v1, v2)
}

/// Neighbor test recomputed from the LP data rather than the cached table.
pub fn are_neighbors_in(lp: &SimplexLp, vertices: &VertexSet, v1: usize, v2: usize) -> bool {
    if v1 == v2 {
        return false;
    }
    let (eq, _) = lp.system.with_normalization();
    supports_span_edge(&eq, vertices.support(v1), vertices.support(v2))
}

/// Vertices maximizing the cost.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalFace {
    pub vertex_indices: Vec<usize>,
    pub optimal_value: f64,
}

impl OptimalFace {
    pub fn is_unique(&self) -> bool {
        self.vertex_indices.len() == 1
    }

    pub fn contains(&self, v: usize) -> bool {
        self.vertex_indices.contains(&v)
    }
}

pub(crate) fn ties(best: f64, value: f64) -> bool {
    best - value <= TIE_TOL * best.abs().max(1.0)
}

pub fn optimal_face(lp: &SimplexLp, vertices: &VertexSet) -> OptimalFace {
    let values: Vec<f64> = vertices.vertices().iter().map(|v| lp.value(v.weights())).collect();
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    OptimalFace {
        vertex_indices: (0..values.len()).filter(|&i| ties(best, values[i])).collect(),
        optimal_value: best,
    }
}

/// Coordinates carried by some vertex of the face.
pub fn face_support(vertices: &VertexSet, face: &OptimalFace) -> Vec<usize> {
    let mut s: Vec<usize> = face
        .vertex_indices
        .iter()
        .flat_map(|&i| vertices.support(i).iter().copied())
        .collect();
    s.sort_unstable();
    s.dedup();
    s
}

/// Information projection of `mu0` onto the optimal face.
pub fn face_projection(lp: &SimplexLp, vertices: &VertexSet, face: &OptimalFace, mu0: &Distribution) -> Result<Distribution> {
    if face.is_unique() {
        return Ok(vertices.vertex(face.vertex_indices[0]).clone());
    }
    let support = face_support(vertices, face);
    let mu = project_on_support(
        mu0.weights(),
        lp.constraints.lhs(),
        lp.constraints.rhs(),
        &support,
        &DualNewtonConfig::default(),
    )?;
    Ok(Distribution::from_numerical(mu))
}

/// Slope of the cost along the edges leaving the optimal face, in TV units,
/// and the smallest vertex suboptimality gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapConstants {
    pub delta_rate: f64,
    pub delta_lower: f64,
}

pub fn gap_constants(lp: &SimplexLp, vertices: &VertexSet, face: &OptimalFace) -> Result<GapConstants> {
    if face.vertex_indices.len() == vertices.len() {
        return Err(Error::TrivialProgram);
    }
    let values: Vec<f64> = vertices.vertices().iter().map(|v| lp.value(v.weights())).collect();
    let mut delta_rate = f64::INFINITY;
    for &s in &face.vertex_indices {
        for u in vertices.neighbors(s) {
            if face.contains(u) {
                continue;
            }
            let gap = values[s] - values[u];
            let tv = tv_slices(vertices.vertex(s).weights(), vertices.vertex(u).weights());
            let slope = if tv > 0.0 { gap / tv } else { f64::INFINITY };
            delta_rate = delta_rate.min(slope);
        }
    }
    let delta_lower = (0..vertices.len())
        .filter(|i| !face.contains(*i))
        .map(|i| face.optimal_value - values[i])
        .fold(f64::INFINITY, f64::min);
    Ok(GapConstants { delta_rate, delta_lower })
}

/// Rate constants of the flow started at `mu0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants {
    pub delta_rate: f64,
    pub delta_lower: f64,
    /// Onset of the linear regime; `None` when the optimum is not unique.
    pub t0: Option<f64>,
    pub unique_optimum: bool,
}

/// Onset time `2·KL(μ⋆, μ₀) / (Δ · min μ⋆)`.
pub fn onset_time(mu_star: &Distribution, mu0: &Distribution, delta_rate: f64) -> Result<f64> {
    let kl = kl_divergence(mu_star, mu0)?;
    Ok(2.0 * kl / (delta_rate * mu_star.min_positive()))
}

pub fn rate_constants(lp: &SimplexLp, vertices: &VertexSet, mu0: &Distribution) -> Result<RateConstants> {
    lp.check_interior(mu0)?;
    let face = optimal_face(lp, vertices);
    let gaps = gap_constants(lp, vertices, &face)?;
    let unique_optimum = face.is_unique();
    let t0 = if unique_optimum {
        let star = vertices.vertex(face.vertex_indices[0]);
        Some(onset_time(star, mu0, gaps.delta_rate)?)
    } else {
        None
    };
    Ok(RateConstants {
        delta_rate: gaps.delta_rate,
        delta_lower: gaps.delta_lower,
        t0,
        unique_optimum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex35(alpha: f64) -> SimplexLp {
        SimplexLp::new(
            Matrix::from_rows(&[vec![1.0, 0.0, 0.0, 0.0]], 4),
            vec![alpha],
            vec![0.0, 1.0, 0.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn subsets_in_lexicographic_order() {
        let mut seen = Vec::new();
        for_each_subset(4, 2, |s| seen.push(s.to_vec()));
        assert_eq!(
            seen,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        let mut count = 0;
        for_each_subset(3, 3, |_| count += 1);
        assert_eq!(count, 1);
    }

    #[test]
    fn simplex_vertices_are_diracs() {
        let lp = SimplexLp::on_simplex(vec![0.3, 0.1, 0.2]).unwrap();
        let vs = enumerate_vertices(&lp).unwrap();
        assert_eq!(vs.len(), 3);
        for i in 0..3 {
            assert_eq!(vs.vertex(i).weights().iter().filter(|&&w| w == 1.0).count(), 1);
            for j in 0..3 {
                assert_eq!(are_neighbors(&vs, i, j), i != j);
            }
        }
        let face = optimal_face(&lp, &vs);
        assert!(face.is_unique());
    }

    #[test]
    fn ex35_vertices_and_constants() {
        let alpha = 0.3;
        let lp = ex35(alpha);
        let vs = enumerate_vertices(&lp).unwrap();
        assert_eq!(vs.len(), 3);
        for v in vs.vertices() {
            assert!((v.weights()[0] - alpha).abs() < 1e-12);
        }
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(are_neighbors(&vs, i, j), i != j);
            }
        }
        let rc = rate_constants(&lp, &vs, lp.max_entropy_point()).unwrap();
        assert!((rc.delta_lower - 0.7).abs() < 1e-12);
        assert!((rc.delta_rate - 1.0).abs() < 1e-12);
        assert!(rc.unique_optimum);
    }

    #[test]
    fn zero_cost_is_trivial() {
        let lp = SimplexLp::on_simplex(vec![0.0; 3]).unwrap();
        let vs = enumerate_vertices(&lp).unwrap();
        assert_eq!(optimal_face(&lp, &vs).vertex_indices.len(), 3);
        assert_eq!(
            rate_constants(&lp, &vs, &Distribution::uniform(3)).unwrap_err(),
            Error::TrivialProgram
        );
    }

    #[test]
    fn rejects_lower_dimensional_feasible_set() {
        let err = SimplexLp::new(Matrix::from_rows(&[vec![1.0, 0.0, 0.0]], 3), vec![0.0], vec![0.0; 3]).unwrap_err();
        assert_eq!(err, Error::NoInteriorPoint);
    }

    #[test]
    fn budget_is_enforced() {
        let lp = SimplexLp::on_simplex(vec![0.0; 5]).unwrap();
        assert_eq!(
            enumerate_vertices_with_budget(&lp, 4).unwrap_err(),
            Error::SizeLimitExceeded { required: 5, budget: 4 }
        );
    }
}
