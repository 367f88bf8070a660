mod common;

use common::*;
use frflow_core::flow::*;
use frflow_core::linalg::Matrix;
use frflow_core::lp_geometry::*;
use frflow_core::mdp::state_action_lp;
use frflow_core::measures::Distribution;
use frflow_core::Error;
use proptest::prelude::*;
use rand::Rng;

fn dist(w: &[f64]) -> Distribution {
    Distribution::new(w.to_vec()).unwrap()
}

/// Divergences and gaps below this are round-off.
const ROUNDOFF: f64 = 1e-12;

fn cfg() -> CentralPathConfig {
    CentralPathConfig::default()
}

fn rows_of(lp: &SimplexLp) -> Vec<Vec<f64>> {
    let a = lp.constraints().lhs();
    (0..a.rows()).map(|i| a.row(i).to_vec()).collect()
}

/// Constrained instances with two-dimensional feasible regions.
fn planar_instances() -> Vec<SimplexLp> {
    vec![
        pinned_atom_lp(0.3),
        SimplexLp::new(
            Matrix::from_rows(&[vec![1.0, 1.0, 0.0, 0.0]], 4),
            vec![0.5],
            vec![0.2, -0.4, 1.0, 0.7],
        )
        .unwrap(),
        SimplexLp::new(
            Matrix::from_rows(&[vec![1.0, -1.0, 2.0, 0.5, 0.0], vec![0.0, 1.0, 1.0, -1.0, 1.0]], 5),
            vec![0.45, 0.35],
            vec![0.3, 1.1, -0.2, 0.6, 0.0],
        )
        .unwrap(),
    ]
}

/// A strictly positive feasible point away from the maximum-entropy point.
fn interior_start(r: &mut impl Rng, lp: &SimplexLp, vs: &VertexSet) -> Distribution {
    let w = random_distribution(r, vs.len());
    let center = lp.max_entropy_point().weights();
    let mut mu: Vec<f64> = center.iter().map(|c| 0.3 * c).collect();
    for (v, wv) in vs.vertices().iter().zip(&w) {
        mu.iter_mut().zip(v.weights()).for_each(|(m, x)| *m += 0.7 * wv * x);
    }
    Distribution::from_unnormalized(mu).unwrap()
}

#[test]
fn time_zero_returns_start() {
    let lp = pinned_atom_lp(0.3);
    let mu0 = dist(&[0.3, 0.1, 0.2, 0.4]);
    assert_eq!(central_path_point(&lp, &mu0, 0.0, &cfg()).unwrap(), mu0);
}

#[test]
fn two_atom_logistic_curve() {
    let lp = SimplexLp::on_simplex(vec![1.0, 0.0]).unwrap();
    let traj = integrate_flow(&lp, &Distribution::uniform(2), &[0.0, 1.0, 5.0], &cfg()).unwrap();
    for (t, mu) in traj.times.iter().zip(&traj.iterates) {
        let e = t.exp();
        assert!(linf(mu.weights(), &[e / (e + 1.0), 1.0 / (e + 1.0)]) < 1e-12);
    }
}

#[test]
fn cost_in_constraint_span_leaves_start_fixed() {
    let lp = SimplexLp::new(
        Matrix::from_rows(&[vec![1.0, 2.0, 0.0, -1.0]], 4),
        vec![0.5],
        vec![3.0, 5.0, 1.0, -1.0],
    )
    .unwrap();
    let mu0 = lp.max_entropy_point().clone();
    for t in [0.5, 3.0, 20.0] {
        let mu = central_path_point(&lp, &mu0, t, &cfg()).unwrap();
        assert!(linf(mu.weights(), mu0.weights()) < 1e-10);
    }
}

#[test]
fn pinned_atom_central_path_matches_grid_refinement() {
    let alpha = 0.3;
    let lp = pinned_atom_lp(alpha);
    let mu0 = lp.max_entropy_point().clone();
    let t = 5.0;
    let mu = central_path_point(&lp, &mu0, t, &cfg()).unwrap();
    let objective = |a: f64, b: f64| {
        let x = [alpha, (1.0 - alpha) * a, (1.0 - alpha) * b, (1.0 - alpha) * (1.0 - a - b)];
        (x[1] - kl(&x, mu0.weights()) / t, x)
    };
    let (mut ca, mut cb, mut width) = (1.0 / 3.0, 1.0 / 3.0, 1.0);
    for _ in 0..60 {
        let mut best = (f64::NEG_INFINITY, ca, cb);
        for i in -10..=10 {
            for j in -10..=10 {
                let (a, b) = (ca + width * i as f64 / 10.0, cb + width * j as f64 / 10.0);
                if a <= 0.0 || b <= 0.0 || a + b >= 1.0 {
                    continue;
                }
                let v = objective(a, b).0;
                if v > best.0 {
                    best = (v, a, b);
                }
            }
        }
        (ca, cb) = (best.1, best.2);
        width *= 0.5;
    }
    assert!(linf(mu.weights(), &objective(ca, cb).1) < 1e-4);
}

#[test]
fn planar_central_path_matches_projected_gradient() {
    for lp in planar_instances() {
        let mu0 = lp.max_entropy_point().clone();
        for t in [0.5, 2.0, 8.0] {
            let mu = central_path_point(&lp, &mu0, t, &cfg()).unwrap();
            let (f, g) = regularized_objective(lp.cost(), mu0.weights(), t);
            let oracle = projected_gradient_ascent(&rows_of(&lp), mu0.weights(), f, g, 200_000);
            assert!(
                linf(mu.weights(), &oracle) < 1e-6,
                "t = {t}: {:?} vs {oracle:?}",
                mu.weights()
            );
        }
    }
}

#[test]
fn trajectory_velocity_is_the_fisher_rao_gradient() {
    for lp in planar_instances() {
        let mu0 = lp.max_entropy_point().clone();
        let (t, h) = (1.3, 1e-5);
        let path = |s: f64| central_path_point(&lp, &mu0, s, &cfg()).unwrap().into_vec();
        let (mp, mm, mu) = (path(t + h), path(t - h), path(t));
        let velocity: Vec<f64> = mp.iter().zip(&mm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let mut rows = rows_of(&lp);
        rows.push(vec![1.0; mu.len()]);
        for v in kernel_basis(&rows, mu.len()) {
            let metric: f64 = velocity.iter().zip(&v).zip(&mu).map(|((u, v), m)| u * v / m).sum();
            let slope: f64 = lp.cost().iter().zip(&v).map(|(c, v)| c * v).sum();
            assert!((metric - slope).abs() < 1e-6, "{metric} vs {slope}");
        }
        let field = fisher_rao_gradient(&lp, &Distribution::from_unnormalized(mu).unwrap()).unwrap();
        assert!(linf(&field, &velocity) < 1e-6);
    }
}

#[test]
fn dual_euler_agrees_with_central_path() {
    let lp = &planar_instances()[2];
    let mu0 = lp.max_entropy_point().clone();
    let exact = central_path_point(lp, &mu0, 2.0, &cfg()).unwrap();
    let coarse = euler_dual_flow(lp, &mu0, 2.0, 500).unwrap();
    let fine = euler_dual_flow(lp, &mu0, 2.0, 5000).unwrap();
    let (ec, ef) = (linf(coarse.weights(), exact.weights()), linf(fine.weights(), exact.weights()));
    assert!(ef < 1e-3);
    assert!(ef < 0.2 * ec, "first-order convergence expected: {ec} -> {ef}");
}

#[test]
fn bound_formulas_at_simple_points() {
    let lp = SimplexLp::on_simplex(vec![1.0, 0.0, 0.5]).unwrap();
    let vs = enumerate_vertices(&lp).unwrap();
    let mu0 = dist(&[0.2, 0.5, 0.3]);
    let rc = rate_constants(&lp, &vs, &mu0).unwrap();
    let star = Distribution::dirac(3, 0);
    let kl0 = 0.2f64.recip().ln();
    let t0 = rc.t0.unwrap();
    assert!((t0 - 2.0 * kl0 / rc.delta_rate).abs() < 1e-12);
    let at_onset = convergence_bounds(&lp, &vs, &mu0, &star, &rc, t0).unwrap();
    assert!((at_onset.linear_kl.unwrap() - kl0).abs() < 1e-12);
    assert!((at_onset.linear_value.unwrap() - rc.delta_rate * kl0).abs() < 1e-12);
    let at_ten = convergence_bounds(&lp, &vs, &mu0, &star, &rc, 10.0).unwrap();
    assert!((at_ten.sublinear.unwrap() - kl0 / 10.0).abs() < 1e-15);
    let early = convergence_bounds(&lp, &vs, &mu0, &star, &rc, 0.5 * t0).unwrap();
    assert!(early.linear_kl.is_none());
    assert!(matches!(
        convergence_bounds(&lp, &vs, &mu0, &star, &rc, 0.0),
        Err(Error::BoundNotApplicable(_))
    ));
}

#[test]
fn regularization_bound_holds_from_maximum_entropy_point() {
    for lp in planar_instances() {
        let vs = enumerate_vertices(&lp).unwrap();
        let center = lp.max_entropy_point().clone();
        let rc = rate_constants(&lp, &vs, &center).unwrap();
        let star = vs.vertex(optimal_face(&lp, &vs).vertex_indices[0]).clone();
        let times = default_time_grid(rc.delta_rate, 80);
        let traj = integrate_flow_with(&lp, &vs, &center, &times, &cfg()).unwrap();
        for (t, d) in times.iter().zip(&traj.diagnostics).skip(1) {
            let b = convergence_bounds(&lp, &vs, &center, &star, &rc, *t).unwrap();
            if let Some(r) = b.regularization_kl {
                assert!(d.kl_to_optimum <= r * (1.0 + 1e-9) + ROUNDOFF);
            }
        }
    }
}

/// The value display `Δ·(KL bound)` is evaluated as written but is not a
/// valid upper bound: the gap is `−∂_t KL`, whose decay rate can exceed `Δ`
/// while the KL bound still holds. This instance exceeds it by about 20%.
#[test]
fn linear_value_display_can_be_exceeded() {
    let mut r = rng(345);
    let interior = random_distribution(&mut r, 4);
    let rows: Vec<Vec<f64>> = (0..2).map(|_| (0..4).map(|_| r.gen::<f64>() * 2.0 - 1.0).collect()).collect();
    let rhs = rows
        .iter()
        .map(|row| row.iter().zip(&interior).map(|(a, b)| a * b).sum())
        .collect();
    let cost = (0..4).map(|_| r.gen::<f64>()).collect();
    let lp = SimplexLp::new(Matrix::from_rows(&rows, 4), rhs, cost).unwrap();
    let vs = enumerate_vertices(&lp).unwrap();
    let mu0 = interior_start(&mut r, &lp, &vs);
    let rc = rate_constants(&lp, &vs, &mu0).unwrap();
    let times = default_time_grid(rc.delta_rate, 200);
    let traj = integrate_flow_with(&lp, &vs, &mu0, &times, &cfg()).unwrap();
    let mut worst: f64 = 0.0;
    for d in &traj.diagnostics {
        if let (Some(bk), Some(bv)) = (d.linear_bound_kl, d.linear_bound_value) {
            assert!(d.kl_to_optimum <= bk * (1.0 + 1e-9) + ROUNDOFF);
            if bv > 1e-9 {
                worst = worst.max(d.gap / bv);
            }
        }
    }
    assert!(worst > 1.0, "worst ratio {worst}");
}

#[test]
fn non_unique_bound_needs_smaller_rate() {
    assert!(non_unique_bound(1.0, 0.9, 0.0, 0.8, 1.0).is_err());
    assert!(non_unique_bound(1.0, 0.5, 2.0, 0.8, 1.0).is_err());
    let b = non_unique_bound(1.0, 0.5, 0.0, 0.8, 2.0).unwrap();
    assert!(!b.certified);
    assert!((b.kl - (-1.0f64).exp()).abs() < 1e-15);
}

#[test]
fn implicit_bias_cases() {
    let lp = SimplexLp::on_simplex(vec![0.0, 1.0, 1.0]).unwrap();
    let vs = enumerate_vertices(&lp).unwrap();
    let limit = implicit_bias_limit(&lp, &vs, &Distribution::uniform(3)).unwrap();
    assert!(linf(limit.weights(), &[0.0, 0.5, 0.5]) < 1e-12);

    let lp = SimplexLp::on_simplex(vec![0.0, 2.0, 1.0]).unwrap();
    let vs = enumerate_vertices(&lp).unwrap();
    let limit = implicit_bias_limit(&lp, &vs, &dist(&[0.5, 0.2, 0.3])).unwrap();
    assert_eq!(limit.weights(), &[0.0, 1.0, 0.0]);
}

#[test]
fn tied_mdp_flow_approaches_information_projection() {
    let mdp = tied_mdp();
    let lp = state_action_lp(&mdp).unwrap();
    let vs = enumerate_vertices(&lp).unwrap();
    assert_eq!(optimal_face(&lp, &vs).vertex_indices.len(), 2);
    let mut r = rng(17);
    let mu0 = interior_start(&mut r, &lp, &vs);
    let limit = implicit_bias_limit(&lp, &vs, &mu0).unwrap();
    let end = central_path_point(&lp, &mu0, 50.0, &cfg()).unwrap();
    assert!(tv(end.weights(), limit.weights()) < 1e-3);
}

#[test]
fn state_action_gap_decays_faster_than_rate() {
    let mdp = two_state_mdp(0.0);
    let lp = state_action_lp(&mdp).unwrap();
    let vs = enumerate_vertices(&lp).unwrap();
    let times: Vec<f64> = (0..=30).map(|k| k as f64).collect();
    let traj = integrate_flow_with(&lp, &vs, lp.max_entropy_point(), &times, &cfg()).unwrap();
    let rc = traj.rate_constants.unwrap();
    let gaps: Vec<f64> = traj.diagnostics.iter().map(|d| d.gap).collect();
    let slope = tail_log_slope(&times, &gaps);
    // The asymptotic rate equals Δ here; the tail fit approaches it from above.
    assert!(slope <= -0.99 * rc.delta_rate, "slope {slope}");
}

#[test]
fn nonconvergence_carries_time_index() {
    let lp = planar_instances().remove(2);
    let tight = CentralPathConfig {
        newton_tol: 1e-12,
        newton_max_iter: 1,
        warm_start: false,
    };
    match integrate_flow(&lp, &lp.max_entropy_point().clone(), &[0.0, 5.0, 50.0], &tight) {
        Err(Error::NonConvergence { time_index, .. }) => assert!(time_index.is_some()),
        other => panic!("{other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simplex_flow_matches_closed_form(seed in any::<u64>()) {
        let mut r = rng(seed);
        let cost: Vec<f64> = (0..5).map(|_| r.gen::<f64>() * 2.0 - 1.0).collect();
        let mu0 = dist(&random_distribution(&mut r, 5));
        let lp = SimplexLp::on_simplex(cost.clone()).unwrap();
        let times: Vec<f64> = (0..50).map(|k| 0.4 * k as f64).collect();
        let traj = integrate_flow(&lp, &mu0, &times, &cfg()).unwrap();
        for (t, mu) in times.iter().zip(&traj.iterates) {
            let exact = closed_form_simplex_flow(&cost, &mu0, *t).unwrap();
            prop_assert!(linf(mu.weights(), exact.weights()) < 1e-9);
        }
    }

    #[test]
    fn trajectory_respects_bound_chain(seed in any::<u64>(), n in 3usize..=6, k in 0usize..3) {
        let mut r = rng(seed);
        let interior = random_distribution(&mut r, n);
        let k = k.min(n - 2);
        let rows: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| r.gen::<f64>() * 2.0 - 1.0).collect()).collect();
        let rhs = rows.iter().map(|row| row.iter().zip(&interior).map(|(a, b)| a * b).sum()).collect();
        let cost: Vec<f64> = (0..n).map(|_| r.gen::<f64>()).collect();
        let cost_scale = cost.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let lp = SimplexLp::new(Matrix::from_rows(&rows, n), rhs, cost).unwrap();
        let vs = enumerate_vertices(&lp).unwrap();
        let mu0 = interior_start(&mut r, &lp, &vs);
        let rc = rate_constants(&lp, &vs, &mu0).unwrap();
        let times = default_time_grid(rc.delta_rate, 60);
        let traj = integrate_flow_with(&lp, &vs, &mu0, &times, &cfg()).unwrap();
        let mut prev: Option<(f64, f64, f64)> = None;
        let mut prev_weights = mu0.weights().to_vec();
        for ((t, mu), d) in times.iter().zip(&traj.iterates).zip(&traj.diagnostics) {
            // Weights only reach zero by underflowing from a tiny value.
            for (w, p) in mu.weights().iter().zip(&prev_weights) {
                prop_assert!(*w > 0.0 || *p < 1e-100, "t={} weight {} after {}", t, w, p);
            }
            prev_weights = mu.weights().to_vec();
            // exponents near t·c resolve weights to about ε·t·|c|
            let slack = ROUNDOFF.max(16.0 * f64::EPSILON * t * cost_scale);
            prop_assert!(lp.residual(mu.weights()) < 1e-10f64.max(slack));
            if let Some(s) = d.sublinear_bound {
                prop_assert!(d.gap <= s * (1.0 + 1e-9));
            }
            if let Some(bk) = d.linear_bound_kl {
                prop_assert!(d.kl_to_optimum <= bk * (1.0 + 1e-9) + ROUNDOFF);
            }
            if let Some((s, g, kl)) = prev {
                prop_assert!(d.gap <= g + slack);
                prop_assert!(d.kl_to_optimum <= kl + slack);
                // Sublinear bound restarted from the previous grid point.
                prop_assert!(d.gap <= kl / (t - s) * (1.0 + 1e-9) + slack, "t={} s={} gap={} kl={}", t, s, d.gap, kl);
            }
            prev = Some((*t, d.gap, d.kl_to_optimum));
        }
    }
}
