use depmix::coupling::{block_swap_pair, tilde_ensemble};
use depmix::physdep::{dependence_profile, DependencePolicy};
use depmix::processes::*;
use depmix::rng::{streams, StreamKey};
use depmix::transport::WeightedMetric;
use proptest::prelude::*;

fn gaussian_ar(rho: f64) -> FilterSpec {
    FilterSpec::ar1(rho, InnovationLaw::standard_gaussian())
}

#[test]
fn same_seed_same_bits() {
    for f in [gaussian_ar(0.6), FilterSpec::andrews(0.5, 0.5), FilterSpec::random_walk_scenery()] {
        let a = simulate(&f, 20, 50, 9).unwrap();
        let b = simulate(&f, 20, 50, 9).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = simulate(&f, 20, 50, 10).unwrap();
        assert_ne!(a.values, c.values);
    }
}

#[test]
fn ar1_autocovariance_matches_stationary_formula() {
    let rho = 0.6;
    let ens = simulate_columns(&gaussian_ar(rho), 100, 100_000, 3, &[50, 51, 53]).unwrap();
    let x0 = ens.column(50).unwrap();
    for (i, h) in [(51, 1), (53, 3)] {
        let xh = ens.column(i).unwrap();
        let prods: Vec<f64> = x0.iter().zip(&xh).map(|(a, b)| a * b).collect();
        let r = prods.len() as f64;
        let mean = prods.iter().sum::<f64>() / r;
        let se = (prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (r - 1.0) / r).sqrt();
        let exact = rho.powi(h) / (1.0 - rho * rho);
        assert!((mean - exact).abs() < 3.0 * se, "h={h}: {mean} vs {exact} ± {se}");
    }
}

#[test]
fn pareto_first_moment_is_flagged() {
    let ens = simulate(&FilterSpec::iid(InnovationLaw::Pareto { shape: 0.8 }), 2, 100_000, 1).unwrap();
    let m = marginal_moment(&ens, 1, 1.0).unwrap();
    assert!(!m.converged);
    let ens = simulate(&FilterSpec::iid(InnovationLaw::Rademacher), 2, 10_000, 1).unwrap();
    let m = marginal_moment(&ens, 2, 2.0).unwrap();
    assert_eq!(m.estimate, 1.0);
}

#[test]
fn telescoping_sum_bounds_tilde_distance() {
    // |X − X̃| ≤ Σ_ℓ |X^(ℓ−1) − X^(ℓ)| pathwise, so the means obey the same order.
    let f = gaussian_ar(0.5);
    let (j, k, n) = (10, 2, 14);
    let tilde = tilde_ensemble(&f, j, k, n, 20_000, 5).unwrap();
    let direct: f64 = tilde
        .future_rows()
        .map(|(a, b)| (a[0] - b[0]).abs())
        .sum::<f64>()
        / tilde.replicas as f64;
    let mut total = 0.0;
    for ell in 0..=f.lag() {
        let s = block_swap_pair(&f, j, k, n, ell, 20_000, 5).unwrap();
        total += s.mean_abs_difference()[0].0;
    }
    assert!(direct <= total * (1.0 + 1e-9), "{direct} > {total}");
}

#[test]
fn tilde_distance_below_theta() {
    let f = FilterSpec::andrews(0.5, 0.5);
    let (j, k, n) = (8, 3, 16);
    let tilde = tilde_ensemble(&f, j, k, n, 20_000, 2).unwrap();
    let metric = WeightedMetric::geometric(n + 1 - j - k);
    let (mean, se) = tilde.mean_distance(&metric).unwrap();
    let profile = dependence_profile(
        &f,
        &DependencePolicy {
            replicas: 20_000,
            max_lag: 12,
            ..DependencePolicy::default()
        },
    )
    .unwrap();
    assert!(mean <= profile.theta_hat[k] + 3.0 * se, "{mean} vs {}", profile.theta_hat[k]);
}

#[test]
fn tilde_future_uncorrelated_with_past() {
    let f = gaussian_ar(0.8);
    let tilde = tilde_ensemble(&f, 6, 1, 8, 50_000, 4).unwrap();
    let past: Vec<f64> = tilde.past_rows().map(|r| r[5]).collect();
    let fut: Vec<f64> = tilde.future_rows().map(|(_, b)| b[0]).collect();
    let r = past.len() as f64;
    let mp = past.iter().sum::<f64>() / r;
    let mf = fut.iter().sum::<f64>() / r;
    let cov = past.iter().zip(&fut).map(|(a, b)| (a - mp) * (b - mf)).sum::<f64>() / r;
    let vp = past.iter().map(|a| (a - mp).powi(2)).sum::<f64>() / r;
    let vf = fut.iter().map(|b| (b - mf).powi(2)).sum::<f64>() / r;
    let corr = cov / (vp * vf).sqrt();
    assert!(corr.abs() < 3.0 / r.sqrt(), "corr = {corr}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn causal_filters_ignore_future_innovations(
        rho in -0.9f64..0.9,
        i in 1i64..30,
        ahead in 1i64..10,
        bump in -5.0f64..5.0,
        seed in 0u64..1000,
    ) {
        let f = gaussian_ar(rho).with_truncation_lag(40);
        let law = f.innovation.clone();
        let stream = InnovationStream { law: &law, key: StreamKey::new(seed, streams::INNOVATION, 0) };
        let mut buf = InnovationBuffer::default();
        buf.fill(&stream, i - 41, i + 20);
        let t = i as f64 / 30.0;
        let before = f.value(t, i, &buf).unwrap();
        buf.set(i + ahead, buf_at(&stream, i + ahead) + bump);
        let after = f.value(t, i, &buf).unwrap();
        prop_assert_eq!(before.to_bits(), after.to_bits());
    }
}

fn buf_at(s: &InnovationStream, i: i64) -> f64 {
    s.at(i)
}
