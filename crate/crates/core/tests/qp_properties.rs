use mlbn_core::qp::*;
use mlbn_core::simulate::DifferenceSample;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum over every active subset whose KKT point is primal and dual feasible.
fn brute_force(p: &QpCanonical) -> Option<f64> {
    let n = p.n_vars();
    let m = p.n_constraints();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << m) {
        let set: Vec<usize> = (0..m).filter(|c| mask & (1 << c) != 0).collect();
        if set.len() > n {
            continue;
        }
        let q = set.len();
        let mut kkt = DMatrix::zeros(n + q, n + q);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.d_mat);
        let mut rhs = DVector::zeros(n + q);
        rhs.rows_mut(0, n).copy_from(&p.d);
        for (k, &c) in set.iter().enumerate() {
            for r in 0..n {
                kkt[(r, n + k)] = -p.a[(r, c)];
                kkt[(n + k, r)] = p.a[(r, c)];
            }
            rhs[n + k] = p.b0[c];
        }
        let Some(z) = kkt.lu().solve(&rhs) else { continue };
        let x = z.rows(0, n).clone_owned();
        let primal = (0..m).all(|c| p.a.column(c).dot(&x) >= p.b0[c] - 1e-9);
        let dual = (0..q).all(|k| z[n + k] >= -1e-9);
        if primal && dual {
            let f = p.objective(&x);
            best = Some(best.map_or(f, |b: f64| b.min(f)));
        }
    }
    best
}

fn random_instance(rng: &mut ChaCha8Rng) -> QpCanonical {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(1..=10);
    let mut g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    g = &g * g.transpose() + DMatrix::identity(n, n) * 0.5;
    let d = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let a = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
    // feasible by construction: x0 satisfies every constraint with slack
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let b0 = DVector::from_fn(m, |c, _| a.column(c).dot(&x0) - rng.random_range(0.0..1.0));
    QpCanonical::new(g, d, a, b0).unwrap()
}

#[test]
fn generic_matches_active_set_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..200 {
        let p = random_instance(&mut rng);
        let s = solve_qp_generic(&p).unwrap();
        let oracle = brute_force(&p).unwrap();
        assert!((s.objective - oracle).abs() <= 1e-7 * (1.0 + oracle.abs()), "{} vs {}", s.objective, oracle);
        // KKT: stationarity and feasibility
        let grad = &p.d_mat * &s.b - &p.d - &p.a * &s.multipliers;
        assert!(grad.amax() <= 1e-8, "stationarity {}", grad.amax());
        for c in 0..p.n_constraints() {
            let slack = p.a.column(c).dot(&s.b) - p.b0[c];
            assert!(slack >= -1e-8);
            assert!(s.multipliers[c] >= -1e-12);
            assert!((s.multipliers[c] * slack).abs() <= 1e-8);
        }
    }
}

fn random_pair(rng: &mut ChaCha8Rng) -> (DifferenceSample, f64, f64) {
    let n = rng.random_range(1..=40);
    let values: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(0.2) {
                1.0
            } else {
                rng.random_range(-2.0..4.0)
            }
        })
        .collect();
    let k1 = rng.random_range(0.05..0.95);
    (DifferenceSample::from_values(values), k1, 1.0 - k1)
}

#[test]
fn one_dimensional_matches_generic_and_passes_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let (y, k1, k2) = random_pair(&mut rng);
        let a = solve_pair_1d(&y, k1, k2).unwrap();
        let b = solve_pair_generic(&y, k1, k2).unwrap();
        assert!((a.omega_prime - b.omega_prime).abs() <= 1e-8, "{} vs {}", a.omega_prime, b.omega_prime);
        assert!(kkt_report(&a, &y).max_residual() <= 1e-8);
        assert!(kkt_report(&b, &y).max_residual() <= 1e-8, "{:?}", kkt_report(&b, &y));
    }
}

#[test]
fn one_dimensional_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let (y, k1, k2) = random_pair(&mut rng);
        let s = solve_pair_1d(&y, k1, k2).unwrap();
        let ys: Vec<f64> = y.values.iter().map(|v| v - s.shift).collect();
        let top = ys.iter().copied().fold(0.0, f64::max) + 1.0;
        let steps = ((top + 1.0) / 1e-4) as usize;
        let (mut best_w, mut best_g) = (0.0, f64::INFINITY);
        for k in 0..=steps {
            let w = -1.0 + k as f64 * 1e-4;
            let g = pair_objective(&ys, k1, k2, w);
            if g < best_g {
                best_g = g;
                best_w = w;
            }
        }
        assert!((s.omega_prime - best_w).abs() <= 2e-4, "{} vs {}", s.omega_prime, best_w);
    }
}

proptest! {
    #[test]
    fn objective_is_convex(ys in prop::collection::vec(0.0f64..5.0, 1..30), k1 in 0.01f64..0.99, a in -1.0f64..6.0, b in -1.0f64..6.0) {
        let k2 = 1.0 - k1;
        let g = |w| pair_objective(&ys, k1, k2, w);
        prop_assert!(g(a) + g(b) >= 2.0 * g((a + b) / 2.0) - 1e-12);
    }

    #[test]
    fn omega_prime_grows_with_k1_share(values in prop::collection::vec(-3.0f64..3.0, 1..40)) {
        let y = DifferenceSample::from_values(values);
        let mut last = f64::INFINITY;
        for (k1, k2) in default_schedule() {
            let s = solve_pair_1d(&y, k1, k2).unwrap();
            prop_assert!(s.omega_prime <= last);
            last = s.omega_prime;
        }
    }

    #[test]
    fn estimate_is_shift_equivariant(values in prop::collection::vec(-3.0f64..3.0, 1..40), c in -50.0f64..50.0, k1 in 0.05f64..0.95) {
        let y = DifferenceSample::from_values(values);
        let a = solve_pair_1d(&y, k1, 1.0 - k1).unwrap();
        let b = solve_pair_1d(&y.shifted(c), k1, 1.0 - k1).unwrap();
        prop_assert!((b.omega_hat - (a.omega_hat + c)).abs() <= 1e-9);
    }

    #[test]
    fn slacks_are_complementary(values in prop::collection::vec(-3.0f64..3.0, 1..40), k1 in 0.05f64..0.95) {
        let y = DifferenceSample::from_values(values);
        let s = solve_pair_1d(&y, k1, 1.0 - k1).unwrap();
        prop_assert!((s.k1 + s.k2 - 1.0).abs() < 1e-12);
        for (v, d) in y.values.iter().zip(&s.deltas) {
            prop_assert!(*d >= -1e-10);
            let tight = (v - s.shift - s.omega_prime - d).abs() <= 1e-9;
            prop_assert!(*d <= 1e-9 || tight);
        }
    }
}
