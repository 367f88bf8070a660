//! Dense two-phase simplex method with Bland's rule.
//!
//! Solves `max cᵀx  s.t.  A x = b, x ≥ 0`. Used for feasibility checks,
//! maximal-support detection and small auxiliary programs; not meant for
//! anything beyond desk scale.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    t: Matrix, // m x (ncols + 1), last column is the rhs
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.ncols + 1;
        let p = self.t[(r, c)];
        for j in 0..w {
            self.t[(r, j)] /= p;
        }
        for i in 0..self.t.rows() {
            if i == r {
                continue;
            }
            let f = self.t[(i, c)];
            if f == 0.0 {
                continue;
            }
            for j in 0..w {
                let v = self.t[(r, j)];
                self.t[(i, j)] -= f * v;
            }
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations maximizing `cost` over the columns allowed by `allowed`.
    fn optimize(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> bool {
        let m = self.t.rows();
        let rhs = self.ncols;
        for _ in 0..50_000 {
            // Bland: smallest index with positive reduced cost
            let mut entering = None;
            for j in 0..self.ncols {
                if !allowed(j) || self.basis.contains(&j) {
                    continue;
                }
                let mut red = cost[j];
                for i in 0..m {
                    red -= cost[self.basis[i]] * self.t[(i, j)];
                }
                if red > COST_TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.t[(i, c)];
                if a > PIVOT_TOL {
                    let ratio = self.t[(i, rhs)] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return false,
                Some((r, _)) => self.pivot(r, c),
            }
        }
        // iteration cap; Bland's rule terminates in exact arithmetic
        true
    }
}

/// `max cᵀx` subject to `a x = b`, `x ≥ 0`.
pub fn maximize(a: &Matrix, b: &[f64], c: &[f64]) -> LpOutcome {
    let m = a.rows();
    let n = a.cols();
    assert_eq!(b.len(), m);
    assert_eq!(c.len(), n);
    let ncols = n + m;
    let mut t = Matrix::zeros(m, ncols + 1);
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(i, j)] = sign * a[(i, j)];
        }
        t[(i, n + i)] = 1.0;
        t[(i, ncols)] = sign * b[i];
    }
    let mut tab = Tableau {
        t,
        basis: (n..n + m).collect(),
        ncols,
    };

    // phase one: drive artificials to zero
    let mut phase1 = vec![0.0; ncols];
    for v in phase1.iter_mut().skip(n) {
        *v = -1.0;
    }
    tab.optimize(&phase1, &|_| true);
    let infeas: f64 = (0..m).filter(|&i| tab.basis[i] >= n).map(|i| tab.t[(i, ncols)]).sum();
    let scale = 1.0 + b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if infeas > 1e-9 * scale {
        return LpOutcome::Infeasible;
    }
    // pivot remaining artificials out where possible; leftover rows are redundant
    let mut redundant = vec![false; m];
    for i in 0..m {
        if tab.basis[i] < n {
            continue;
        }
        let col = (0..n).find(|&j| tab.t[(i, j)].abs() > 1e-9 && !tab.basis.contains(&j));
        match col {
            Some(j) => tab.pivot(i, j),
            None => redundant[i] = true,
        }
    }
    if redundant.iter().any(|&r| r) {
        let keep: Vec<usize> = (0..m).filter(|&i| !redundant[i]).collect();
        let mut t2 = Matrix::zeros(keep.len(), ncols + 1);
        for (k, &i) in keep.iter().enumerate() {
            t2.row_mut(k).copy_from_slice(tab.t.row(i));
        }
        tab.basis = keep.iter().map(|&i| tab.basis[i]).collect();
        tab.t = t2;
    }

    let mut cost = vec![0.0; ncols];
    cost[..n].copy_from_slice(c);
    if !tab.optimize(&cost, &|j| j < n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (i, &bv) in tab.basis.iter().enumerate() {
        if bv < n {
            x[bv] = tab.t[(i, ncols)].max(0.0);
        }
    }
    let value = crate::math::dot(c, &x);
    LpOutcome::Optimal { x, value }
}
