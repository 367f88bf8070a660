//! Fixtures and independent reference computations shared by the
//! integration tests. Nothing here calls into the solver paths it checks.
#![allow(dead_code, clippy::needless_range_loop)]

use frflow_core::linalg::Matrix;
use frflow_core::lp_geometry::SimplexLp;
use frflow_core::mdp::Mdp;
use frflow_core::measures::Distribution;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two states, two actions; action 0 in state 0 stays, action 1 switches,
/// and the other way round in state 1.
pub fn two_state_mdp(switch_reward: f64) -> Mdp {
    Mdp::new(
        2,
        2,
        vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0],
        vec![1.0, switch_reward, 2.0, 0.0],
        0.9,
        Distribution::new(vec![0.8, 0.2]).unwrap(),
    )
    .unwrap()
}

/// Both actions in state 1 return to state 0 with equal reward, so two
/// deterministic policies are optimal.
pub fn tied_mdp() -> Mdp {
    Mdp::new(
        2,
        2,
        vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
        vec![0.0, 1.0, 2.0, 2.0],
        0.8,
        Distribution::new(vec![0.5, 0.5]).unwrap(),
    )
    .unwrap()
}

pub fn random_distribution(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn random_mdp(rng: &mut impl Rng, states: usize, actions: usize, discount: f64) -> Mdp {
    let mut transition = Vec::with_capacity(states * actions * states);
    for _ in 0..states * actions {
        transition.extend(random_distribution(rng, states));
    }
    let reward: Vec<f64> = (0..states * actions).map(|_| rng.gen::<f64>()).collect();
    let initial = Distribution::new(random_distribution(rng, states)).unwrap();
    Mdp::new(states, actions, transition, reward, discount, initial).unwrap()
}

/// `μ(0) = α` on four atoms with cost `e₁` on the second atom.
pub fn pinned_atom_lp(alpha: f64) -> SimplexLp {
    SimplexLp::new(
        Matrix::from_rows(&[vec![1.0, 0.0, 0.0, 0.0]], 4),
        vec![alpha],
        vec![0.0, 1.0, 0.0, 0.0],
    )
    .unwrap()
}

pub fn kl(mu: &[f64], nu: &[f64]) -> f64 {
    mu.iter()
        .zip(nu)
        .filter(|(m, _)| **m > 0.0)
        .map(|(m, n)| m * (m / n).ln())
        .sum()
}

pub fn tv(mu: &[f64], nu: &[f64]) -> f64 {
    0.5 * mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Orthonormal basis of `{v : rows·v = 0}` by Gram-Schmidt on the row space.
pub fn kernel_basis(rows: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut row_basis: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        if let Some(q) = orthonormalize(r.clone(), &row_basis) {
            row_basis.push(q);
        }
    }
    let mut kernel = Vec::new();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let mut all = row_basis.clone();
        all.extend(kernel.iter().cloned());
        if let Some(q) = orthonormalize(e, &all) {
            kernel.push(q);
        }
    }
    kernel
}

fn orthonormalize(mut v: Vec<f64>, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..2 {
        for b in basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 1e-9).then(|| v.into_iter().map(|x| x / n).collect())
}

/// Maximizes a smooth concave function over `{μ > 0 : rows·μ = rhs, Σμ = 1}`
/// from a strictly positive feasible start by gradient ascent projected onto
/// the tangent space, with backtracking.
pub fn projected_gradient_ascent(
    rows: &[Vec<f64>],
    start: &[f64],
    f: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64]) -> Vec<f64>,
    iters: usize,
) -> Vec<f64> {
    let n = start.len();
    let mut all = rows.to_vec();
    all.push(vec![1.0; n]);
    let kernel = kernel_basis(&all, n);
    let mut x = start.to_vec();
    let mut step = 1.0;
    for _ in 0..iters {
        let g = grad(&x);
        let mut d = vec![0.0; n];
        for k in &kernel {
            let p: f64 = g.iter().zip(k).map(|(a, b)| a * b).sum();
            d.iter_mut().zip(k).for_each(|(di, ki)| *di += p * ki);
        }
        let dn: f64 = d.iter().map(|v| v * v).sum();
        if dn.sqrt() < 1e-14 {
            break;
        }
        let fx = f(&x);
        step *= 2.0;
        loop {
            let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            if y.iter().all(|v| *v > 0.0) && f(&y) >= fx + 1e-4 * step * dn {
                x = y;
                break;
            }
            step *= 0.5;
            if step < 1e-300 {
                return x;
            }
        }
    }
    x
}

/// Entropic objective `c·μ − KL(μ, μ₀)/t` and its gradient.
#[allow(clippy::type_complexity)]
pub fn regularized_objective(cost: &[f64], mu0: &[f64], t: f64) -> (impl Fn(&[f64]) -> f64, impl Fn(&[f64]) -> Vec<f64>) {
    let (c1, m1) = (cost.to_vec(), mu0.to_vec());
    let (c2, m2) = (cost.to_vec(), mu0.to_vec());
    let f = move |x: &[f64]| -> f64 { x.iter().zip(&c1).map(|(a, b)| a * b).sum::<f64>() - kl(x, &m1) / t };
    let g = move |x: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(&c2)
            .zip(&m2)
            .map(|((xi, ci), mi)| ci - ((xi / mi).ln() + 1.0) / t)
            .collect()
    };
    (f, g)
}

/// Solves a small square system by Gaussian elimination with partial
/// pivoting; `None` when numerically singular.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|i, j| a[*i][col].abs().total_cmp(&a[*j][col].abs()))?;
        if a[piv][col].abs() < 1e-11 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Least-squares solution of an overdetermined full-column-rank system via
/// the normal equations; `None` when the columns are dependent.
pub fn least_squares(rows: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let k = rows[0].len();
    let mut ata = vec![vec![0.0; k]; k];
    let mut atb = vec![0.0; k];
    for (r, y) in rows.iter().zip(rhs) {
        for i in 0..k {
            atb[i] += r[i] * y;
            for j in 0..k {
                ata[i][j] += r[i] * r[j];
            }
        }
    }
    gauss_solve(ata, atb)
}

/// Vertices of `{μ ≥ 0 : rows·μ = rhs, Σμ = 1}` by trying every support set:
/// a support is a vertex support when the restricted system determines a
/// unique, strictly positive solution.
pub fn brute_force_vertices(rows: &[Vec<f64>], rhs: &[f64], n: usize) -> Vec<Vec<f64>> {
    let mut eq: Vec<Vec<f64>> = rows.to_vec();
    eq.push(vec![1.0; n]);
    let mut b = rhs.to_vec();
    b.push(1.0);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let restricted: Vec<Vec<f64>> = eq.iter().map(|r| support.iter().map(|&i| r[i]).collect()).collect();
        let Some(x) = least_squares(&restricted, &b) else {
            continue;
        };
        let fits = restricted
            .iter()
            .zip(&b)
            .all(|(r, y)| (r.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() - y).abs() < 1e-9);
        if !fits || x.iter().any(|v| *v <= 1e-10) {
            continue;
        }
        let mut full = vec![0.0; n];
        for (i, v) in support.iter().zip(x) {
            full[*i] = v;
        }
        out.push(full);
    }
    out
}

/// Central finite difference of a vector-valued map along coordinate `i`.
pub fn central_difference(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], i: usize, h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    let (fp, fm) = (f(&xp), f(&xm));
    fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

/// Relative error scaled by the larger of the two magnitudes, floored at 1.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).map(|v| v.abs()).fold(1.0f64, f64::max);
    linf(a, b) / scale
}

/// Least-squares slope of `ln y` against `x` over the second half of the data.
pub fn tail_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let start = x.len() / 2;
    let xs = &x[start..];
    let ls: Vec<f64> = y[start..].iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ls.iter().sum::<f64>() / ls.len() as f64;
    let num: f64 = xs.iter().zip(&ls).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = xs.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}
