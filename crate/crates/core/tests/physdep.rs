mod common;

use depmix::physdep::*;
use depmix::processes::{FilterSpec, InnovationLaw};
use depmix::Error;

#[test]
fn passthrough_is_exactly_zero_beyond_lag_zero() {
    for law in [InnovationLaw::Rademacher, InnovationLaw::standard_gaussian()] {
        let p = dependence_profile(
            &FilterSpec::iid(law),
            &DependencePolicy {
                replicas: 2000,
                max_lag: 10,
                ..DependencePolicy::default()
            },
        )
        .unwrap();
        assert!(p.delta_hat[0] > 0.0);
        assert!(p.delta_hat[1..].iter().all(|d| *d == 0.0));
        assert!(p.theta_hat[1..].iter().all(|t| *t == 0.0));
    }
}

#[test]
fn andrews_delta_follows_closed_form() {
    let p = dependence_profile(
        &FilterSpec::andrews(0.5, 0.5),
        &DependencePolicy {
            replicas: 20_000,
            max_lag: 10,
            ..DependencePolicy::default()
        },
    )
    .unwrap();
    for h in 0..=6 {
        let exact = common::geometric_bernoulli_delta2(0.5, 0.5, h);
        assert!((p.delta_hat[h] - exact).abs() <= 3.0 * p.stderr[h] + 1e-12, "h={h}");
    }
    for k in 0..=6 {
        let exact = common::geometric_theta(0.5, 0.5, k);
        assert!(p.theta_hat[k] <= p.theta_upper[k]);
        assert!((p.theta_hat[k] / exact - 1.0).abs() < 0.05, "k={k}");
    }
}

#[test]
fn refusals() {
    assert!(matches!(
        dependence_profile(&FilterSpec::random_walk_scenery(), &DependencePolicy::default()),
        Err(Error::NoCausalRepresentation(_))
    ));
    let e = dependence_profile(
        &FilterSpec::iid(InnovationLaw::Pareto { shape: 0.8 }),
        &DependencePolicy::default(),
    )
    .unwrap_err();
    assert!(e.to_string().contains("moment undefined"));
}

#[test]
fn time_varying_sup_over_grid() {
    use depmix::processes::{CoefFn, FilterKind};
    let f = FilterSpec::new(
        FilterKind::TvAr1 {
            coef: CoefFn::Linear { start: 0.2, end: 0.7 },
        },
        InnovationLaw::standard_gaussian(),
    );
    let p = dependence_profile(
        &f,
        &DependencePolicy {
            replicas: 20_000,
            max_lag: 8,
            ..DependencePolicy::default()
        },
    )
    .unwrap();
    // δ₂(h) = sup_t a(t)^h · √2 σ, attained at t = 1.
    for h in 1..=4 {
        let exact = 0.7f64.powi(h as i32) * 2f64.sqrt();
        assert!((p.delta_hat[h] - exact).abs() <= 3.0 * p.stderr[h], "h={h}: {} vs {exact}", p.delta_hat[h]);
    }
}
