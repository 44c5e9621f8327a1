mod common;

use depmix::measure::EmpiricalMeasure;
use depmix::transport::*;
use proptest::prelude::*;

fn measure_1d(points: &[f64], masses: &[f64]) -> EmpiricalMeasure {
    EmpiricalMeasure::from_values_1d(points, masses).unwrap()
}

fn measure_strategy(dim: usize, max: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    prop::collection::vec((prop::collection::vec(-3.0f64..3.0, dim), 0.05f64..1.0), 1..=max).prop_map(|atoms| {
        let (pts, ms): (Vec<_>, Vec<_>) = atoms.into_iter().unzip();
        EmpiricalMeasure::new(pts, ms).unwrap()
    })
}

#[test]
fn one_dimensional_examples() {
    let a = measure_1d(&[1.5], &[1.0]);
    let b = measure_1d(&[-0.25], &[1.0]);
    assert!((w1_exact_1d(&a, &b, 1.0).unwrap() - 1.75).abs() < 1e-15);
    let p = measure_1d(&[0.0, 1.0], &[0.5, 0.5]);
    let q = measure_1d(&[0.0, 1.0], &[0.75, 0.25]);
    assert!((w1_exact_1d(&p, &q, 1.0).unwrap() - 0.25).abs() < 1e-15);
    assert!((w1_exact_1d(&p, &q, 0.5).unwrap() - 0.125).abs() < 1e-15);
    let two = EmpiricalMeasure::from_samples(vec![vec![0.0, 1.0]]).unwrap();
    assert!(w1_exact_1d(&two, &two, 1.0).is_err());
}

#[test]
fn identical_measures_have_zero_distance() {
    let p = EmpiricalMeasure::from_samples(vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]]).unwrap();
    let plan = w1_lp(&p, &p, &WeightedMetric::geometric(2)).unwrap();
    assert!(plan.value.abs() < 1e-12);
    let moved: f64 = plan.coupling.iter().filter(|(s, t, _)| s != t).map(|c| c.2).sum();
    assert!(moved < 1e-12);
}

#[test]
fn point_masses_dual_attains_primal() {
    let metric = WeightedMetric::new(vec![0.5, 0.25]).unwrap();
    let p = EmpiricalMeasure::dirac(vec![1.0, 2.0]).unwrap();
    let q = EmpiricalMeasure::dirac(vec![-1.0, 0.0]).unwrap();
    let rep = kr_duality_gap(&p, &q, &metric, 8, 0).unwrap();
    assert!((rep.primal - 1.5).abs() < 1e-12);
    assert!(rep.gap.abs() < 1e-12);
}

#[test]
fn uniform_assignment_matches_permutation_search() {
    let metric = WeightedMetric::new(vec![0.5, 0.3]).unwrap();
    let mut state = 12345u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
    };
    for _ in 0..20 {
        let xs: Vec<Vec<f64>> = (0..6).map(|_| vec![next(), next()]).collect();
        let ys: Vec<Vec<f64>> = (0..6).map(|_| vec![next(), next()]).collect();
        let cost: Vec<Vec<f64>> = xs.iter().map(|x| ys.iter().map(|y| metric.distance(x, y)).collect()).collect();
        let p = EmpiricalMeasure::from_samples(xs).unwrap();
        let q = EmpiricalMeasure::from_samples(ys).unwrap();
        let lp = w1_lp(&p, &q, &metric).unwrap().value;
        assert!((lp - common::assignment_brute_force(&cost)).abs() < 1e-9);
    }
}

#[test]
fn product_measures_separate_across_coordinates() {
    // Under a weighted ℓ¹ cost, W₁ between products is the weighted sum of the marginal distances.
    let metric = WeightedMetric::new(vec![0.5, 0.25]).unwrap();
    let (p1, p2) = (vec![0.0, 1.0, 3.0], vec![-1.0, 2.0]);
    let (q1, q2) = (vec![0.5, 2.5], vec![0.0, 1.0, 1.5]);
    let product = |a: &[f64], b: &[f64]| {
        let pts: Vec<Vec<f64>> = a.iter().flat_map(|x| b.iter().map(move |y| vec![*x, *y])).collect();
        EmpiricalMeasure::from_samples(pts).unwrap()
    };
    let lp = w1_lp(&product(&p1, &p2), &product(&q1, &q2), &metric).unwrap().value;
    let marg = |a: &[f64], b: &[f64]| {
        w1_exact_1d(
            &measure_1d(a, &vec![1.0; a.len()]),
            &measure_1d(b, &vec![1.0; b.len()]),
            1.0,
        )
        .unwrap()
    };
    let sep = 0.5 * marg(&p1, &q1) + 0.25 * marg(&p2, &q2);
    assert!((lp - sep).abs() < 1e-9, "{lp} vs {sep}");
    // Listing the product atoms in another order leaves the value unchanged.
    let mut pts = product(&p1, &p2).points().to_vec();
    pts.reverse();
    pts.swap(0, 3);
    let shuffled = EmpiricalMeasure::from_samples(pts).unwrap();
    let again = w1_lp(&shuffled, &product(&q1, &q2), &metric).unwrap().value;
    assert!((again - lp).abs() < 1e-12);
}

#[test]
fn coupling_csv_lists_flows() {
    let p = measure_1d(&[0.0, 1.0], &[0.5, 0.5]);
    let q = measure_1d(&[2.0], &[1.0]);
    let plan = w1_lp(&p, &q, &WeightedMetric::new(vec![1.0]).unwrap()).unwrap();
    let mut buf = Vec::new();
    plan.write_coupling_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("source,target,mass"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn large_supports_are_subsampled() {
    let pts: Vec<Vec<f64>> = (0..400).map(|i| vec![i as f64 / 400.0]).collect();
    let shifted: Vec<Vec<f64>> = pts.iter().map(|x| vec![x[0] + 0.3]).collect();
    let p = EmpiricalMeasure::from_samples(pts).unwrap();
    let q = EmpiricalMeasure::from_samples(shifted).unwrap();
    let plan = w1_lp(&p, &q, &WeightedMetric::new(vec![1.0]).unwrap()).unwrap();
    let sub = plan.subsample.expect("subsampled");
    assert!(plan.coupling.is_empty());
    assert!((plan.value - 0.3).abs() < 0.05 + 3.0 * sub.stderr);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lp_matches_exact_1d(p in measure_strategy(1, 5), q in measure_strategy(1, 5), w in 0.1f64..1.0) {
        let metric = WeightedMetric::new(vec![w]).unwrap();
        let lp = w1_lp(&p, &q, &metric).unwrap().value;
        let exact = w1_exact_1d(&p, &q, w).unwrap();
        prop_assert!((lp - exact).abs() < 1e-9);
        let rep = kr_duality_gap(&p, &q, &metric, 16, 0).unwrap();
        prop_assert!(rep.gap >= -1e-9 && rep.gap <= rep.primal + 1e-12);
        prop_assert!(rep.dual >= 0.99 * rep.primal - 1e-12);
    }

    #[test]
    fn w1_triangle_inequality(
        p in measure_strategy(2, 5),
        q in measure_strategy(2, 5),
        r in measure_strategy(2, 5),
    ) {
        let m = WeightedMetric::geometric(2);
        let pq = w1_lp(&p, &q, &m).unwrap().value;
        let qr = w1_lp(&q, &r, &m).unwrap().value;
        let pr = w1_lp(&p, &r, &m).unwrap().value;
        prop_assert!(pr <= pq + qr + 1e-9);
        prop_assert!((pq - w1_lp(&q, &p, &m).unwrap().value).abs() < 1e-9);
    }

    #[test]
    fn weak_duality(p in measure_strategy(3, 6), q in measure_strategy(3, 6), seed in 0u64..50) {
        let m = WeightedMetric::geometric(3);
        let rep = kr_duality_gap(&p, &q, &m, 8, seed).unwrap();
        prop_assert!(rep.gap >= -1e-9);
    }

    #[test]
    fn metric_axioms(
        x in prop::collection::vec(-5.0f64..5.0, 3),
        y in prop::collection::vec(-5.0f64..5.0, 3),
        z in prop::collection::vec(-5.0f64..5.0, 3),
        w in prop::collection::vec(0.01f64..0.33, 3),
    ) {
        let m = WeightedMetric::new(w).unwrap();
        prop_assert!(m.distance(&x, &y) >= 0.0);
        prop_assert_eq!(m.distance(&x, &x), 0.0);
        prop_assert!((m.distance(&x, &y) - m.distance(&y, &x)).abs() < 1e-15);
        prop_assert!(m.distance(&x, &z) <= m.distance(&x, &y) + m.distance(&y, &z) + 1e-12);
    }
}

#[test]
fn weights_must_be_admissible() {
    assert!(WeightedMetric::new(vec![0.6, 0.5]).is_err());
    assert!(WeightedMetric::new(vec![0.5, 0.0]).is_err());
    let g = WeightedMetric::geometric(30);
    assert!(g.weights().iter().sum::<f64>() <= 1.0);
}
