mod common;

use depmix::mixing::*;
use depmix::processes::{simulate, FilterSpec, InnovationLaw};
use proptest::prelude::*;

/// α by enumerating every pair of row and column subsets.
fn alpha_brute(t: &ContingencyTable) -> f64 {
    let n = t.total as f64;
    let mut best = 0.0f64;
    for a in 0u32..(1 << t.rows) {
        for b in 0u32..(1 << t.cols) {
            let (mut pab, mut pa, mut pb) = (0.0, 0.0, 0.0);
            for r in 0..t.rows {
                if a >> r & 1 == 1 {
                    pa += t.row_totals[r] as f64 / n;
                }
            }
            for c in 0..t.cols {
                if b >> c & 1 == 1 {
                    pb += t.col_totals[c] as f64 / n;
                }
            }
            for r in 0..t.rows {
                for c in 0..t.cols {
                    if a >> r & 1 == 1 && b >> c & 1 == 1 {
                        pab += t.counts[r * t.cols + c] as f64 / n;
                    }
                }
            }
            best = best.max((pab - pa * pb).abs());
        }
    }
    best
}

fn table_strategy() -> impl Strategy<Value = ContingencyTable> {
    (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
        prop::collection::vec(0u64..40, r * c).prop_filter_map("empty table", move |counts| {
            let t = ContingencyTable::from_counts(r, c, counts);
            (t.total > 0).then_some(t)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn alpha_at_most_half_beta(t in table_strategy(), seed in 0u64..100) {
        let a = t.alpha(seed);
        prop_assert!(a.value <= t.beta() / 2.0 + 1e-12);
        prop_assert!((t.beta() - t.beta_conditional()).abs() < 1e-12);
    }

    #[test]
    fn exact_alpha_matches_enumeration(t in table_strategy()) {
        let a = t.alpha(0);
        prop_assert!(a.exact);
        prop_assert!((a.value - alpha_brute(&t)).abs() < 1e-12);
    }

    #[test]
    fn estimates_respect_alpha_beta_order(t in table_strategy(), seed in 0u64..100) {
        let e = estimate_from_table(&t, 10, 4, 1, 20, seed);
        prop_assert!(e.alpha_hat <= e.beta_hat / 2.0 + 1e-12);
        prop_assert!(e.beta_lower <= e.beta_raw);
        prop_assert!(e.beta_hat <= e.beta_raw);
    }
}

#[test]
fn product_table_has_zero_coefficients() {
    let t = ContingencyTable::from_counts(2, 3, vec![2, 4, 6, 3, 6, 9]);
    assert_eq!(t.beta(), 0.0);
    assert_eq!(t.alpha(0).value, 0.0);
}

#[test]
fn perfect_dependence() {
    let t = ContingencyTable::from_counts(2, 2, vec![5, 0, 0, 5]);
    assert!((t.beta() - 0.5).abs() < 1e-15);
    assert!((t.alpha(0).value - 0.25).abs() < 1e-15);
}

#[test]
fn scenery_oracle_reference_values() {
    for (k, v) in [(1, 0.3125), (2, 0.28125), (4, 0.21875)] {
        assert!((common::scenery_beta_exact(2, k, 2, 2) - v).abs() < 1e-12, "k={k}");
    }
}

#[test]
fn scenery_beta_matches_enumeration() {
    let ens = simulate(&FilterSpec::random_walk_scenery(), 12, 200_000, 7).unwrap();
    let spec = WindowSpec {
        past_quantizer: Quantizer::Exact,
        future_quantizer: Quantizer::Exact,
        ..WindowSpec::default()
    };
    let mut est = MixingEstimator::new(&ens, spec).unwrap();
    for k in [1, 3, 5] {
        let e = est.estimate(2, k, 1).unwrap();
        let exact = common::scenery_beta_exact(2, k, 2, 2);
        assert!(
            (e.beta_hat - exact).abs() <= 3.0 * e.beta_stderr + 2e-3,
            "k={k}: {} vs {exact} ± {}",
            e.beta_hat,
            e.beta_stderr
        );
    }
}

#[test]
fn iid_lower_bound_near_zero() {
    let ens = simulate(&FilterSpec::iid(InnovationLaw::standard_gaussian()), 16, 100_000, 3).unwrap();
    let e = beta_hat(&ens, 8, 1, &WindowSpec::with_bins(2, 2, 4), 0).unwrap();
    let limit = 3.0 / (e.min_past_count as f64).sqrt();
    assert!(e.beta_lower < limit && e.alpha_hat < limit && e.beta_hat < limit);
}

#[test]
fn thin_cells_are_reported() {
    let ens = simulate(&FilterSpec::iid(InnovationLaw::standard_gaussian()), 8, 100, 3).unwrap();
    let r = beta_hat(&ens, 4, 1, &WindowSpec::with_bins(2, 2, 8), 0);
    assert!(matches!(r, Err(depmix::Error::InsufficientCell { .. })));
}
