#![allow(clippy::needless_range_loop)]

use basehop_core::auxiliary::{
    closed_form_solution, closed_form_with_cost, d4_weights_by_decomposition, dual_solution, sherman_morrison_check,
    solve_auxiliary_lp, solve_dual_lp,
};
use basehop_core::energy::{d4_report, residual_matrix, CostMatrix, ResidualMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cost matrix with a dominant diagonal and recharge that may or may not
/// cover the passive drain.
fn random_instance(rng: &mut impl Rng, m: usize) -> (CostMatrix, Vec<f64>) {
    let rows = (0..m)
        .map(|i| (0..m).map(|j| if i == j { rng.random_range(2.0..6.0) } else { rng.random_range(0.1..0.8) }).collect())
        .collect();
    let sbar = (0..m).map(|_| rng.random_range(0.0..2.0)).collect();
    (CostMatrix::new(rows).unwrap(), sbar)
}

/// Minimum of `max_i (R v)_i` over the simplex by enumerating every vertex of
/// `{(v, f) : R v <= f u, u^T v = 1, v >= 0}`.
fn vertex_enumeration(r: &ResidualMatrix) -> (f64, Vec<f64>) {
    let m = r.bs_count();
    let n = m + 1;
    // Rows 0..m: R v - f <= 0. Rows m..2m: -v_j <= 0.
    let ineq = |k: usize| -> Vec<f64> {
        let mut row = vec![0.0; n];
        if k < m {
            for j in 0..m {
                row[j] = r.get(k, j);
            }
            row[m] = -1.0;
        } else {
            row[k - m] = -1.0;
        }
        row
    };
    let mut best = (f64::INFINITY, vec![]);
    let total = 2 * m;
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != m {
            continue;
        }
        let mut a = DMatrix::zeros(n, n);
        let b = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
        for j in 0..m {
            a[(0, j)] = 1.0;
        }
        let mut row = 1;
        for k in 0..total {
            if mask & (1 << k) != 0 {
                for (col, x) in ineq(k).into_iter().enumerate() {
                    a[(row, col)] = x;
                }
                row += 1;
            }
        }
        let Some(x) = a.lu().solve(&b) else { continue };
        if x.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let v: Vec<f64> = x.iter().take(m).copied().collect();
        let f = x[m];
        let feasible = v.iter().all(|&vj| vj >= -1e-9)
            && (0..m).all(|i| (0..m).map(|j| r.get(i, j) * v[j]).sum::<f64>() <= f + 1e-9);
        if feasible && f < best.0 {
            best = (f, v);
        }
    }
    best
}

fn closed_form_instance(rng: &mut impl Rng, m: usize) -> (CostMatrix, Vec<f64>, ResidualMatrix) {
    loop {
        let (c, sbar) = random_instance(rng, m);
        let r = residual_matrix(&c, &sbar).unwrap();
        if closed_form_with_cost(&c, &sbar).is_ok() && closed_form_solution(&r).is_ok() {
            return (c, sbar, r);
        }
    }
}

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let m = rng.random_range(1..=4);
        let rows = (0..m).map(|_| (0..m).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let r = ResidualMatrix::from_rows(rows).unwrap();
        let (f, _) = vertex_enumeration(&r);
        let lp = solve_auxiliary_lp(&r).unwrap();
        assert!((lp.f_star - f).abs() < 1e-8, "{} vs {f}", lp.f_star);
        assert!(lp.max_violation(&r) < 1e-9);
    }
}

#[test]
fn closed_form_matches_simplex_and_dual() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..200 {
        let m = rng.random_range(1..=6);
        let (_, _, r) = closed_form_instance(&mut rng, m);
        let cf = closed_form_solution(&r).unwrap();
        let lp = solve_auxiliary_lp(&r).unwrap();
        assert!((cf.f_star - lp.f_star).abs() < 1e-8);
        for (a, b) in cf.v_star.iter().zip(&lp.v_star) {
            assert!((a - b).abs() < 1e-8);
        }
        let d = dual_solution(&r).unwrap();
        assert!((d.w - cf.f_star).abs() < 1e-8);
        assert!(d.max_violation(&r) < 1e-9);
        let d_lp = solve_dual_lp(&r).unwrap();
        assert!((d_lp.w - lp.f_star).abs() < 1e-8);
        assert!(cf.max_violation(&r) < 1e-9);
    }
}

#[test]
fn sherman_morrison_residual_is_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut checked = 0;
    while checked < 200 {
        let m = rng.random_range(1..=6);
        let (c, sbar) = random_instance(&mut rng, m);
        if let Ok(res) = sherman_morrison_check(&c, &sbar) {
            assert!(res < 1e-8, "{res}");
            checked += 1;
        }
    }
}

#[test]
fn decomposition_agrees_with_direct_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for _ in 0..200 {
        let m = rng.random_range(1..=6);
        let (c, _) = random_instance(&mut rng, m);
        let direct = d4_report(&c);
        let split = d4_weights_by_decomposition(&c).unwrap();
        for (a, b) in direct.weights.unwrap().iter().zip(&split) {
            assert!((a - b).abs() < 1e-10);
        }
        // Passive costs well below the diagonal make C close to diagonal.
        assert!(direct.satisfied);
    }
}

#[test]
fn dual_is_uniform_for_symmetric_residuals() {
    let r =
        ResidualMatrix::from_rows(vec![vec![2.0, -0.5, -0.5], vec![-0.5, 2.0, -0.5], vec![-0.5, -0.5, 2.0]]).unwrap();
    let d = dual_solution(&r).unwrap();
    assert!(d.lambda.iter().all(|l| (l - 1.0 / 3.0).abs() < 1e-12));
}

proptest! {
    #[test]
    fn scale_equivariance(seed in any::<u64>(), alpha in 0.1f64..10.0, m in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..m).map(|_| (0..m).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let r = ResidualMatrix::from_rows(rows).unwrap();
        let a = solve_auxiliary_lp(&r).unwrap();
        let b = solve_auxiliary_lp(&r.scaled(alpha)).unwrap();
        prop_assert!((b.f_star - alpha * a.f_star).abs() < 1e-8 * alpha.max(1.0));
        // v* itself can move along a degenerate face; the objective it
        // attains cannot.
        let attained = (0..m)
            .map(|i| (0..m).map(|j| alpha * r.get(i, j) * a.v_star[j]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((attained - b.f_star).abs() < 1e-8 * alpha.max(1.0));
    }

    #[test]
    fn permutation_equivariance(seed in any::<u64>(), m in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, _, r) = closed_form_instance(&mut rng, m);
        let mut perm: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let rp = ResidualMatrix::from_matrix(DMatrix::from_fn(m, m, |i, j| r.get(perm[i], perm[j]))).unwrap();
        let a = solve_auxiliary_lp(&r).unwrap();
        let b = solve_auxiliary_lp(&rp).unwrap();
        prop_assert!((a.f_star - b.f_star).abs() < 1e-8);
        for i in 0..m {
            prop_assert!((b.v_star[i] - a.v_star[perm[i]]).abs() < 1e-8);
        }
    }

    #[test]
    fn returned_solutions_are_feasible(seed in any::<u64>(), m in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..m).map(|_| (0..m).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let r = ResidualMatrix::from_rows(rows).unwrap();
        let s = solve_auxiliary_lp(&r).unwrap();
        prop_assert!(s.max_violation(&r) < 1e-9);
        let d = solve_dual_lp(&r).unwrap();
        prop_assert!(d.max_violation(&r) < 1e-9);
        prop_assert!((d.w - s.f_star).abs() < 1e-8);
    }
}
