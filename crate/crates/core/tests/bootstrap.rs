mod common;

use edbandit_core::bootstrap::{
    a_samples, build_approx_policies, delta_effective, n_samples, sample_offline, sandwich_width,
    xi_target, BootstrapPlan, PracticalOverride,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn target_accuracy_solves_width_identity(p_v in 0.001f64..0.5, gamma in 0.01f64..1.0) {
        let xi = xi_target(p_v, gamma).unwrap();
        prop_assert!(xi > 0.0 && xi < p_v);
        let width = sandwich_width(xi, p_v);
        prop_assert!((width - gamma * p_v / 2.0).abs() <= 1e-12);
    }

    #[test]
    fn theory_sizes_are_consistent(
        p_v in 0.01f64..0.5, gamma in 0.05f64..1.0, t in 10u64..100_000, v in 2usize..6,
    ) {
        let xi = xi_target(p_v, gamma).unwrap();
        prop_assume!(xi > 1e-4);
        let n = n_samples(v, t, xi).unwrap();
        prop_assert!(n >= 1);
        prop_assert!(delta_effective(n, xi, v) <= 1.0 / t as f64 * (1.0 + 1e-9));
        let a = a_samples(n, 0.1, 4, 3, t, 2);
        prop_assert!(a >= n);
    }

    #[test]
    fn empirical_rows_sum_to_one(seed in 0u64..10_000, a in 1u64..300) {
        let inst = common::instance(seed, 3, 4, 2, 1);
        let prior = inst.episodes[0].context_dist().to_vec();
        let counts = sample_offline(&inst.policies, &prior, inst.params.p_x, a, 10, |i| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(1 + i as u64);
            r
        })
        .unwrap();
        let approx = build_approx_policies(&counts, 0.01, 100).unwrap();
        for i in 0..2 {
            for x in 0..3 {
                let s: f64 = approx.policies.row(i, x).iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
                prop_assert!(approx.policies.row(i, x).iter().all(|&p| p > 0.0));
            }
        }
        prop_assert_eq!(approx.complete(), counts.complete());
    }
}

#[test]
fn override_keeps_pull_budget_above_target() {
    let d = common::dims(6, 5, 4, 5, 20_000);
    let plan = BootstrapPlan::theory(0.05, 0.065, 0.3, &d).unwrap();
    assert!(plan.a >= plan.n);
    let eff = plan
        .with_override(PracticalOverride { xi: None, n: Some(2000), a: None })
        .effective(0.05, 0.065, 5, &d)
        .unwrap();
    assert_eq!(eff.n, 2000);
    assert_eq!(eff.a, a_samples(2000, 0.05, 6, 4, 20_000, 5));
    assert!(eff.a >= eff.n);
}

#[test]
fn infinity_norm_coverage() {
    // ||p - p_hat||_inf <= ||p - p_hat||_1, so the L1 radius covers it too.
    let (s, n, delta) = (4usize, 300u64, 0.1f64);
    let radius = (2.0 * s as f64 * (2.0 / delta).ln() / n as f64).sqrt();
    let inst = common::instance(21, 1, s, 1, 1);
    let p = inst.policies.row(0, 0).to_vec();
    let mut misses = 0;
    for trial in 0..2000u64 {
        let counts = sample_offline(&inst.policies, &[1.0], 1.0, n, n, |_| {
            ChaCha8Rng::seed_from_u64(trial)
        })
        .unwrap();
        let row = counts.row(0, 0);
        let inf = p
            .iter()
            .zip(row)
            .map(|(q, &c)| (q - c as f64 / n as f64).abs())
            .fold(0.0, f64::max);
        if inf > radius {
            misses += 1;
        }
    }
    assert!(misses as f64 / 2000.0 <= delta, "{misses} misses");
}

#[test]
fn prior_below_context_floor_is_an_assumption_violation() {
    let inst = common::instance(22, 2, 3, 2, 1);
    let err = sample_offline(&inst.policies, &[0.01, 0.99], 0.1, 10, 1, |_| {
        ChaCha8Rng::seed_from_u64(0)
    })
    .unwrap_err();
    assert!(err.is_assumption_violation());
}
