mod common;

use common::{exp_expect, two_user};
use effcap::powerctl::{
    fixed_order_level, fixed_order_policy, interior_state_solve, kkt_residuals, mean_powers,
    partition_search, policy_capacities, ray_family, two_user_closed_form, variable_order_policy,
};
use effcap::strategies::{variable_order_capacities, weighted_error, weighted_sum};
use effcap::{
    DecodingOrder, DecodingPartition, PowerPolicy, Scenario, SolverOptions, SystemConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_states(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| [rng.random::<f64>() * 6.0, rng.random::<f64>() * 6.0])
        .collect()
}

/// Per-state Lagrangian for a user-1-last state, scaled by `1/κ1`.
fn lagrangian(alpha: [f64; 2], alpha21: f64, beta: [f64; 2], z: [f64; 2], mu: (f64, f64)) -> f64 {
    let u = 1.0 + mu.0 * z[0];
    let s = 1.0 + mu.1 * z[1] / u;
    -u.powf(-beta[0]) / (alpha[0] * beta[0])
        - s.powf(-beta[1]) / (alpha21 * beta[1])
        - mu.0
        - alpha[1] / alpha21 * mu.1
}

/// Sequential per-user objective `-(1/(αβ))(1 + μz/(1+I))^{-β} - μ`.
fn user_objective(z: f64, interference: f64, alpha: f64, beta: f64, mu: f64) -> f64 {
    -(1.0 + mu * z / (1.0 + interference)).powf(-beta) / (alpha * beta) - mu
}

#[test]
fn single_user_threshold_matches_bisection_oracle() {
    let scn = common::single(1.0, 2.0);
    let PowerPolicy::FixedOrder { alpha, .. } =
        fixed_order_policy(&scn, &DecodingOrder::identity(1)).unwrap()
    else {
        panic!()
    };
    // independent: bisection on α with Simpson expectations
    let mean = |a: f64| exp_expect(|z| fixed_order_level(z, 0.0, a, 2.0));
    let (mut lo, mut hi) = (1e-3, 10.0);
    for _ in 0..80 {
        let mid = (lo * hi as f64).sqrt();
        if mean(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((alpha[0] / lo - 1.0).abs() < 1e-5, "{} vs {lo}", alpha[0]);
    assert!((mean(alpha[0]) - 1.0).abs() < 1e-3);
}

#[test]
fn closed_form_matches_generic_solver() {
    for snr_db in [[0.0, 0.0], [10.0, 0.0]] {
        let scn = two_user(snr_db, 0.01, 200.0);
        let order = DecodingOrder::from_labels(&[2, 1]).unwrap();
        let policy = fixed_order_policy(&scn, &order).unwrap();
        let PowerPolicy::FixedOrder { alpha, beta, .. } = &policy else {
            panic!()
        };
        for z in random_states(1000, 5) {
            let mu = policy.evaluate(&z);
            let (c1, c2) = two_user_closed_form([alpha[0], alpha[1]], [beta[0], beta[1]], z);
            assert!(
                (mu[0] - c1).abs() < 1e-6 && (mu[1] - c2).abs() < 1e-6,
                "{z:?}: {mu:?} vs ({c1}, {c2})"
            );
        }
    }
}

#[test]
fn fixed_order_constraints_bind() {
    let scn = two_user([10.0, 0.0], 0.01, 200.0);
    for order in DecodingOrder::all(2) {
        let policy = fixed_order_policy(&scn, &order).unwrap();
        let p = mean_powers(&scn, &policy).unwrap();
        for j in 0..2 {
            assert!(
                (p[j] / scn.system.snr(j) - 1.0).abs() < 1e-3,
                "{order}: {p:?}"
            );
        }
    }
    let cfg = SystemConfig::symmetric(3, 1.0, 0.01, 200.0).unwrap();
    let fading = effcap::FadingModel::rayleigh(3, 1.0).unwrap();
    let scn3 = Scenario::new(cfg, fading, effcap::IntegrationSpec::monte_carlo(20_000, 9)).unwrap();
    let policy =
        fixed_order_policy(&scn3, &DecodingOrder::from_labels(&[3, 1, 2]).unwrap()).unwrap();
    for p in mean_powers(&scn3, &policy).unwrap() {
        assert!((p - 1.0).abs() < 1e-3);
    }
}

#[test]
fn fixed_order_levels_are_sequentially_optimal() {
    // each user's level maximizes its own objective given the levels of users decoded after it
    let scn = two_user([0.0, 0.0], 0.01, 200.0);
    let order = DecodingOrder::from_labels(&[2, 1]).unwrap();
    let policy = fixed_order_policy(&scn, &order).unwrap();
    let PowerPolicy::FixedOrder { alpha, beta, .. } = &policy else {
        panic!()
    };
    for z in random_states(1000, 17) {
        let mu = policy.evaluate(&z);
        let interference = [0.0, mu[0] * z[0]];
        for j in 0..2 {
            let f = |m: f64| user_objective(z[j], interference[j], alpha[j], beta[j], m);
            let h = 1e-4;
            let best = f(mu[j]);
            assert!(f(mu[j] + h) <= best + 1e-12);
            assert!(f((mu[j] - h).max(0.0)) <= best + 1e-12);
        }
    }
}

#[test]
fn interior_solve_beats_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..300 {
        let alpha = [rng.random_range(0.05..2.0), rng.random_range(0.05..2.0)];
        let alpha21 = rng.random_range(0.05..2.0);
        let beta = [rng.random_range(0.5..4.0), rng.random_range(0.5..4.0)];
        let z = [rng.random_range(0.0..8.0), rng.random_range(0.0..8.0)];
        let mu = interior_state_solve(alpha[0], alpha[1], alpha21, beta[0], beta[1], z[0], z[1]);
        let l = |m: (f64, f64)| lagrangian(alpha, alpha21, beta, z, m);
        let best = l(mu);
        // μ2 is concave given μ1, so scan μ1 and maximize μ2 by golden section
        let cap = 20.0;
        for i in 0..=400 {
            let m1 = cap * i as f64 / 400.0 / z[0].max(1e-3);
            let (_, v) =
                effcap::solve::golden_max(|m2| l((m1, m2)), 0.0, cap / z[1].max(1e-3), 1e-10);
            assert!(
                v <= best + 1e-9 * best.abs().max(1.0),
                "{alpha:?} {alpha21} {beta:?} {z:?}: grid {v} > {best}"
            );
        }
        for (d1, d2) in [(1e-4, 0.0), (-1e-4, 0.0), (0.0, 1e-4), (0.0, -1e-4)] {
            let p = ((mu.0 + d1).max(0.0), (mu.1 + d2).max(0.0));
            assert!(l(p) <= best + 1e-12);
        }
    }
}

#[test]
fn variable_order_symmetric_policy() {
    let scn = two_user([0.0, 0.0], 0.01, 200.0);
    let lambda = [0.5, 0.5];
    let part = DecodingPartition::lambda_rule(lambda.to_vec());
    let res = variable_order_policy(&scn, &part, &lambda, &SolverOptions::default()).unwrap();
    let report = &res.report;
    assert!(report.converged, "{report:?}");
    assert!(report.outer_iterations <= 100);
    assert!(report.max_residual < 1e-4);
    let policy = res.policy.unwrap();
    let PowerPolicy::VariableOrder { params, .. } = &policy else {
        panic!()
    };
    assert!((params.kappa[0] / params.kappa[1] - 1.0).abs() < 1e-3);
    assert!((params.phi[0] / params.phi[1] - 1.0).abs() < 1e-3);
    for i in 0..41 {
        for k in 0..41 {
            if i == k {
                // ties on the diagonal are broken toward a fixed order
                continue;
            }
            let z = [i as f64 * 0.125, k as f64 * 0.125];
            let a = policy.evaluate(&z);
            let b = policy.evaluate(&[z[1], z[0]]);
            assert!(
                (a[0] - b[1]).abs() < 1e-3 && (a[1] - b[0]).abs() < 1e-3,
                "{z:?}"
            );
        }
    }
    for (j, p) in mean_powers(&scn, &policy).unwrap().iter().enumerate() {
        assert!((p / scn.system.snr(j) - 1.0).abs() < 1e-3);
    }
    let caps = policy_capacities(&scn, &policy).unwrap();
    let constant = variable_order_capacities(&scn, &part).unwrap();
    let err = weighted_error(&lambda, &caps) + weighted_error(&lambda, &constant);
    assert!(weighted_sum(&lambda, &caps) > weighted_sum(&lambda, &constant) + err);
}

#[test]
fn variable_order_asymmetric_stationarity() {
    let scn = two_user([10.0, 0.0], 0.01, 200.0);
    let lambda = [0.4, 0.6];
    let part = DecodingPartition::lambda_rule(lambda.to_vec());
    let res = variable_order_policy(&scn, &part, &lambda, &SolverOptions::default()).unwrap();
    assert!(res.report.converged, "{:?}", res.report);
    let policy = res.policy.unwrap();
    let PowerPolicy::VariableOrder { params, .. } = &policy else {
        panic!()
    };
    for z in random_states(1000, 31) {
        let last = part.order2_at(&z)[1];
        let mu = policy.evaluate(&z);
        let (r1, r2) = kkt_residuals(params, &z, (mu[0], mu[1]), last);
        for (m, r) in [(mu[0], r1), (mu[1], r2)] {
            if m > 0.0 {
                assert!(r.abs() < 1e-6, "{z:?} {mu:?}: {r}");
            } else {
                assert!(r < 1e-6, "{z:?} {mu:?}: {r}");
            }
        }
    }
    for (j, p) in mean_powers(&scn, &policy).unwrap().iter().enumerate() {
        assert!((p / scn.system.snr(j) - 1.0).abs() < 1e-3);
    }
}

#[test]
fn degenerate_ray_is_a_fixed_order() {
    let scn = two_user([0.0, 0.0], 0.01, 200.0);
    let lambda = [0.5, 0.5];
    let part = DecodingPartition::ray(1e-6);
    let integ = part.integrator(&scn).unwrap();
    let below = integ
        .points()
        .iter()
        .filter(|(z, _)| part.order2_at(z)[1] == 1)
        .map(|(_, w)| w)
        .sum::<f64>();
    assert!(below < 1e-5);
    let res = variable_order_policy(&scn, &part, &lambda, &SolverOptions::default()).unwrap();
    let policy = res.policy.expect("converged");
    let caps = policy_capacities(&scn, &policy).unwrap();
    let fixed = fixed_order_policy(&scn, &DecodingOrder::from_labels(&[2, 1]).unwrap()).unwrap();
    let fixed_caps = policy_capacities(&scn, &fixed).unwrap();
    let tol = weighted_error(&lambda, &caps) + weighted_error(&lambda, &fixed_caps) + 1e-4;
    // weight-aware control on the same order can only do better than the sequential policy
    assert!(weighted_sum(&lambda, &caps) >= weighted_sum(&lambda, &fixed_caps) - tol);
}

#[test]
fn symmetric_partition_search_and_refinement() {
    let scn = two_user([0.0, 0.0], 0.01, 200.0);
    let lambda = [0.5, 0.5];
    let opts = SolverOptions::default();
    let coarse_family = ray_family(11, 0.1, 10.0);
    let coarse = partition_search(&scn, &lambda, &coarse_family, &opts).unwrap();
    assert!(
        (coarse.best as i64 - 5).abs() <= 1,
        "best index {}",
        coarse.best
    );
    let fine = partition_search(&scn, &lambda, &ray_family(21, 0.1, 10.0), &opts).unwrap();
    assert!((fine.best as i64 - 10).abs() <= 1);
    assert!((fine.weighted_sum / coarse.weighted_sum - 1.0).abs() < 5e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn levels_nonnegative(a in 0.01f64..5.0, i in 0.0f64..10.0, b in 0.01f64..10.0, z in 0.0f64..50.0) {
        prop_assert!(fixed_order_level(z, i, a, b) >= 0.0);
    }

    #[test]
    fn interior_levels_nonnegative(a1 in 0.01f64..5.0, a2 in 0.01f64..5.0, a21 in 0.01f64..5.0,
                                   b1 in 0.1f64..10.0, b2 in 0.1f64..10.0, z1 in 0.0f64..30.0, z2 in 0.0f64..30.0) {
        let (m1, m2) = interior_state_solve(a1, a2, a21, b1, b2, z1, z2);
        prop_assert!(m1 >= 0.0 && m2 >= 0.0 && m1.is_finite() && m2.is_finite());
    }
}
