//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::path::Path;
use std::time::Instant;

use depmix::harness::{self, andrews_windows, example_suite, verify_theorem, ExperimentConfig, SuiteConfig, Verdict};
use depmix::measure::EmpiricalMeasure;
use depmix::mixing::{mixing_profile, MixingEstimate, MixingPolicy, Placement, Quantizer, WindowSpec};
use depmix::mollify::*;
use depmix::physdep::{dependence_profile, DependencePolicy};
use depmix::processes::{FilterSpec, InnovationLaw};
use depmix::transport::{kr_duality_gap, w1_exact_1d, w1_lp, WeightedMetric};
use depmix::Error;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};

type Outcome = std::result::Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let profile = dependence_profile(
        &FilterSpec::andrews(0.5, 0.5),
        &DependencePolicy {
            replicas: 100_000,
            max_lag: 10,
            ..DependencePolicy::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let delta_err = (0..=8)
        .map(|h| rel(profile.delta_hat[h], common::geometric_bernoulli_delta2(0.5, 0.5, h)))
        .fold(0.0, f64::max);
    let theta_err = (0..=8)
        .map(|k| rel(profile.theta_hat[k], common::geometric_theta(0.5, 0.5, k)))
        .fold(0.0, f64::max);
    check(
        delta_err < 0.05 && theta_err < 0.05 && secs < 60.0,
        format!("max rel err delta {delta_err:.4}, theta {theta_err:.4}; {secs:.1}s"),
    )
}

fn noise_limit(e: &MixingEstimate) -> f64 {
    3.0 / (e.min_past_count as f64).sqrt()
}

fn criterion_2(matrix: &mut Vec<MixingEstimate>) -> Outcome {
    let mut worst = 0.0f64;
    for law in [InnovationLaw::standard_gaussian(), InnovationLaw::Rademacher] {
        let filter = FilterSpec::iid(law.clone());
        let dep = dependence_profile(
            &filter,
            &DependencePolicy {
                replicas: 10_000,
                max_lag: 10,
                ..DependencePolicy::default()
            },
        )
        .map_err(|e| e.to_string())?;
        if dep.delta_hat[1..].iter().any(|d| *d != 0.0) {
            return Err(format!("{law:?}: nonzero delta beyond lag 0"));
        }
        let windows = match law {
            InnovationLaw::Rademacher => WindowSpec {
                past_quantizer: Quantizer::Exact,
                future_quantizer: Quantizer::Exact,
                ..WindowSpec::default()
            },
            _ => WindowSpec::with_bins(2, 2, 4),
        };
        let mix = mixing_profile(
            &filter,
            &[1, 2, 4, 8],
            &MixingPolicy {
                placements: vec![Placement { n: 32, j: 16 }],
                windows,
                replicas: 200_000,
                seed: 2,
            },
        )
        .map_err(|e| e.to_string())?;
        for e in &mix.entries {
            let lim = noise_limit(e);
            if e.beta_hat >= lim || e.alpha_hat >= lim {
                return Err(format!("{law:?} k={}: beta {} alpha {} limit {lim}", e.k, e.beta_hat, e.alpha_hat));
            }
            worst = worst.max(e.beta_hat / lim);
        }
        matrix.extend(mix.entries);
    }
    Ok(format!("delta exactly zero for h >= 1; max beta_hat / (3/sqrt(R_cell)) = {worst:.3}"))
}

fn criterion_3(matrix: &mut Vec<MixingEstimate>) -> Outcome {
    // Add dependent processes to the matrix built by the other criteria.
    for (filter, windows) in [
        (FilterSpec::ar1(0.6, InnovationLaw::standard_gaussian()), WindowSpec::with_bins(2, 2, 4)),
        (FilterSpec::ar1(0.9, InnovationLaw::standard_gaussian()), WindowSpec::with_bins(1, 1, 8)),
        (FilterSpec::andrews(0.5, 0.5), andrews_windows()),
    ] {
        let mix = mixing_profile(
            &filter,
            &[1, 2, 3, 5, 8],
            &MixingPolicy {
                placements: vec![Placement { n: 32, j: 12 }, Placement { n: 40, j: 20 }],
                windows,
                replicas: 100_000,
                seed: 3,
            },
        )
        .map_err(|e| e.to_string())?;
        matrix.extend(mix.entries);
    }
    let mut worst = f64::NEG_INFINITY;
    for e in matrix.iter() {
        let se = e.alpha_stderr.hypot(e.beta_stderr);
        let slack = e.alpha_hat - e.beta_hat / 2.0 - 3.0 * se;
        worst = worst.max(slack);
    }
    check(
        worst <= 0.0,
        format!("{} estimates; max alpha - beta/2 - 3se = {worst:.3e}", matrix.len()),
    )
}

fn criterion_4(matrix: &mut Vec<MixingEstimate>) -> Outcome {
    let filter = FilterSpec::andrews(0.5, 0.5);
    let gaps: Vec<usize> = (1..=10).collect();
    let mix = mixing_profile(
        &filter,
        &gaps,
        &MixingPolicy {
            placements: vec![Placement { n: 32, j: 8 }],
            windows: andrews_windows(),
            replicas: 200_000,
            seed: 4,
        },
    )
    .map_err(|e| e.to_string())?;
    let dep = dependence_profile(
        &filter,
        &DependencePolicy {
            replicas: 100_000,
            max_lag: 12,
            ..DependencePolicy::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let min_alpha = mix.entries.iter().map(|e| e.alpha_hat).fold(f64::INFINITY, f64::min);
    let theta_ratio = gaps
        .iter()
        .map(|&k| dep.theta_hat[k] / 0.5f64.powi(k as i32))
        .fold(0.0, f64::max);
    matrix.extend(mix.entries);
    check(
        min_alpha >= 0.01 && theta_ratio <= 1.05,
        format!("min alpha_hat {min_alpha:.4}; max theta_hat / 2^-k {theta_ratio:.4}"),
    )
}

fn criterion_5(matrix: &mut Vec<MixingEstimate>) -> Outcome {
    let rws = FilterSpec::random_walk_scenery();
    let gaps: Vec<usize> = (1..=9).collect();
    let mix = mixing_profile(
        &rws,
        &gaps,
        &MixingPolicy {
            placements: vec![Placement { n: 12, j: 2 }],
            windows: WindowSpec {
                past_quantizer: Quantizer::Exact,
                future_quantizer: Quantizer::Exact,
                ..WindowSpec::default()
            },
            replicas: 1_000_000,
            seed: 5,
        },
    )
    .map_err(|e| e.to_string())?;
    let beta = |k: usize| mix.entries[k - 1].beta_hat;
    let decreasing = [1, 2, 4, 8].windows(2).all(|w| beta(w[1]) < beta(w[0]));
    let mut worst = 0.0f64;
    for e in &mix.entries {
        let exact = common::scenery_beta_exact(2, e.k, 2, 2);
        worst = worst.max((e.beta_hat - exact).abs() / e.beta_stderr);
    }
    let refused = matches!(
        dependence_profile(&rws, &DependencePolicy::default()),
        Err(Error::NoCausalRepresentation(_))
    );
    matrix.extend(mix.entries.iter().cloned());
    check(
        decreasing && worst <= 3.0 && refused,
        format!(
            "beta(1,2,4,8) = {:.4} {:.4} {:.4} {:.4}; max |beta_hat - exact| / se = {worst:.2}; refused {refused}",
            beta(1),
            beta(2),
            beta(4),
            beta(8)
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
    let random_measure = |rng: &mut rand_chacha::ChaCha8Rng| {
        let size = rng.gen_range(1..=5);
        let pts: Vec<f64> = (0..size).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let ms: Vec<f64> = (0..size).map(|_| rng.gen_range(0.05..1.0)).collect();
        EmpiricalMeasure::from_values_1d(&pts, &ms).unwrap()
    };
    let (mut max_err, mut min_ratio, mut gap_ok) = (0.0f64, f64::INFINITY, true);
    for i in 0..100 {
        let p = random_measure(&mut rng);
        let q = random_measure(&mut rng);
        let w = rng.gen_range(0.1..1.0);
        let metric = WeightedMetric::new(vec![w]).unwrap();
        let lp = w1_lp(&p, &q, &metric).map_err(|e| e.to_string())?.value;
        let exact = w1_exact_1d(&p, &q, w).map_err(|e| e.to_string())?;
        max_err = max_err.max((lp - exact).abs());
        let rep = kr_duality_gap(&p, &q, &metric, 16, i).map_err(|e| e.to_string())?;
        gap_ok &= rep.gap >= -1e-9 && rep.gap <= rep.primal + 1e-12;
        if rep.primal > 0.0 {
            min_ratio = min_ratio.min(rep.dual / rep.primal);
        }
    }
    check(
        max_err <= 1e-9 && gap_ok && min_ratio >= 0.99,
        format!("max |lp - exact| {max_err:.2e}; gaps in range {gap_ok}; min dual/primal {min_ratio:.6}"),
    )
}

fn criterion_7() -> Outcome {
    let grid = [0.02, 0.05, 0.1, 0.2, 0.5];
    let unit = WeightedMetric::new(vec![1.0]).unwrap();
    let pair = WeightedMetric::new(vec![0.5, 0.25]).unwrap();
    let laplace = DensitySpec::Laplace1d {
        location: 0.0,
        scale: 1.0,
    };
    let cases = [
        ("gaussian_1d", DensitySpec::standard_gaussian(1), &unit),
        ("laplace_1d", laplace.clone(), &unit),
        ("gaussian_2d", DensitySpec::standard_gaussian(2), &pair),
        (
            "laplace_2d",
            DensitySpec::Product {
                factors: vec![laplace.clone(), laplace],
            },
            &pair,
        ),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, f, m) in cases {
        let r = smoothing_error_check(&f, &grid, m).map_err(|e| e.to_string())?;
        let max = r.rows.iter().map(|row| row.lhs / row.rhs).fold(0.0, f64::max);
        ok &= max <= 1.0;
        parts.push(format!("{name} {max:.3}"));
    }
    let g = DensitySpec::standard_gaussian(1).factors().unwrap().remove(0);
    let quad = g.derivative_l1_quadrature().map_err(|e| e.to_string())?;
    let err = (quad - (2.0 / std::f64::consts::PI).sqrt()).abs();
    ok &= err <= 1e-6;
    check(ok, format!("max ratios: {}; |dp|_1 quadrature error {err:.1e}", parts.join(", ")))
}

fn criterion_8() -> Outcome {
    let unit = WeightedMetric::new(vec![1.0]).unwrap();
    let d = gaussian_d(&DMatrix::from_element(1, 1, 1.0), 0, &unit)
        .map_err(|e| e.to_string())?
        .d();
    let base = DensitySpec::gaussian_1d(0.0, 1.0);
    let (mut diff_max, mut interp_max, mut optimal) = (0.0f64, 0.0f64, true);
    for mu in [0.1, 0.2, 0.5] {
        let shifted = DensitySpec::gaussian_1d(mu, 1.0);
        let r = mollified_difference_check(
            &MeasureSpec::Density(base.clone()),
            &MeasureSpec::Density(shifted.clone()),
            &[0.02, 0.05, 0.1, 0.2, 0.5],
            &unit,
        )
        .map_err(|e| e.to_string())?;
        diff_max = diff_max.max(r.rows.iter().map(|row| row.lhs / row.rhs).fold(0.0, f64::max));
        let i = interpolation_check(&base, &shifted, &unit, Some(d)).map_err(|e| e.to_string())?;
        interp_max = interp_max.max(i.lhs / i.bound);
        optimal &= i.split_at_star < i.split_below && i.split_at_star < i.split_above;
    }
    check(
        diff_max <= 1.0 && interp_max <= 1.0 && optimal,
        format!("max ratio mollified difference {diff_max:.3}, interpolation {interp_max:.3}; eps* optimal {optimal}"),
    )
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let report = verify_theorem(
        &FilterSpec::ar1(0.6, InnovationLaw::standard_gaussian()),
        &(1..=20).collect::<Vec<_>>(),
        &DependencePolicy {
            replicas: 100_000,
            max_lag: 20,
            ..DependencePolicy::default()
        },
        &MixingPolicy {
            placements: vec![Placement { n: 256, j: 128 }],
            windows: WindowSpec::with_bins(2, 2, 8),
            replicas: 1_000_000,
            seed: 9,
        },
        None,
    )
    .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let max_ratio = report
        .rows
        .iter()
        .map(|r| if r.bound > 0.0 { r.beta_lower / r.bound } else { 0.0 })
        .fold(0.0, f64::max);
    check(
        report.verdict == Verdict::Pass && report.rows.len() == 20 && secs < 600.0,
        format!(
            "verdict {:?}; max beta_lower / bound {max_ratio:.3}; D {:.4}; {secs:.1}s",
            report.verdict, report.d_uniform
        ),
    )
}

fn full_run(dir: &Path) -> std::result::Result<(), String> {
    let mut config = ExperimentConfig {
        out: dir.join("run"),
        gaps: vec![1, 2, 4, 8],
        ..ExperimentConfig::default()
    };
    config.set_replicas(20_000);
    config.physdep.max_lag = 12;
    config.mixing.placements = vec![Placement { n: 64, j: 32 }];
    config.transport.replicas = 5_000;
    config.transport.max_support = 80;
    config.transport.resamples = 2;
    config.mollify.two_dimensional = false;
    harness::run(&config).map_err(|e| e.to_string())?;
    let suite = SuiteConfig {
        seed: 0,
        scenery_replicas: 50_000,
        andrews_replicas: 50_000,
        pareto_replicas: 50_000,
        physdep_replicas: 20_000,
    };
    example_suite(&suite, &dir.join("examples")).map_err(|e| e.to_string())?;
    Ok(())
}

fn csv_files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for sub in ["run", "examples"] {
        for entry in std::fs::read_dir(dir.join(sub)).unwrap() {
            let p = entry.unwrap().path();
            if p.extension().is_some_and(|e| e == "csv") {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn criterion_10() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    full_run(a.path())?;
    full_run(b.path())?;
    let fa = csv_files(a.path());
    let fb = csv_files(b.path());
    if fa != fb {
        return Err(format!("file sets differ: {fa:?} vs {fb:?}"));
    }
    let differing: Vec<String> = fa
        .iter()
        .filter(|f| std::fs::read(a.path().join(f)).ok() != std::fs::read(b.path().join(f)).ok())
        .map(|f| f.display().to_string())
        .collect();
    check(
        differing.is_empty() && fa.len() >= 10,
        format!("{} CSV files compared; differing {differing:?}", fa.len()),
    )
}

fn main() {
    let mut matrix = Vec::new();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "geometric Bernoulli dependence decay", criterion_1()));
    results.push((2, "independent passthrough", criterion_2(&mut matrix)));
    results.push((4, "weak dependence without strong mixing", criterion_4(&mut matrix)));
    results.push((5, "random walk in random scenery", criterion_5(&mut matrix)));
    results.push((3, "alpha at most half beta", criterion_3(&mut matrix)));
    results.push((6, "transport oracle", criterion_6()));
    results.push((7, "smoothing error bound", criterion_7()));
    results.push((8, "mollified difference and interpolation", criterion_8()));
    results.push((9, "mixing bound for Gaussian AR(1)", criterion_9()));
    results.push((10, "determinism", criterion_10()));
    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
