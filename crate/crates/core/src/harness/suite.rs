//! Canned reproductions: random walk in random scenery, Andrews' process and
//! Pareto i.i.d. innovations.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mixing::{mixing_profile, MixingPolicy, MixingProfile, Placement, Quantizer, WindowSpec};
use crate::physdep::{dependence_profile, DependencePolicy};
use crate::processes::{FilterSpec, InnovationLaw};

use super::theorem::{verify_theorem, Verdict};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub seed: u64,
    pub scenery_replicas: usize,
    pub andrews_replicas: usize,
    pub pareto_replicas: usize,
    pub physdep_replicas: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 0,
            scenery_replicas: 1_000_000,
            andrews_replicas: 200_000,
            pareto_replicas: 200_000,
            physdep_replicas: 100_000,
        }
    }
}

/// Outcome of one claim in the narrative.
#[derive(Clone, Debug, Serialize)]
pub struct Claim {
    pub example: &'static str,
    pub claim: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub claims: Vec<Claim>,
    pub files: Vec<String>,
}

impl SuiteReport {
    pub fn holds(&self) -> bool {
        self.claims.iter().all(|c| c.holds)
    }
}

fn write_mixing(out: &Path, name: &str, profile: &MixingProfile, files: &mut Vec<String>) -> Result<()> {
    profile.write_csv(BufWriter::new(File::create(out.join(name))?))?;
    files.push(name.to_string());
    Ok(())
}

fn refusal(result: Result<impl Sized>) -> (bool, String) {
    match result {
        Ok(_) => (false, "estimation unexpectedly succeeded".into()),
        Err(e) => (true, e.to_string()),
    }
}

/// Andrews' process read through binary digits: the past window is the
/// integer digit of `X_j` (which is `ε_j`), the future window the twelfth
/// digit of `X_{j+k}, …, X_{j+k+11}`, one of which is again `ε_j` when `k ≤ 10`.
pub fn andrews_windows() -> WindowSpec {
    WindowSpec {
        past: 1,
        future: 12,
        past_quantizer: Quantizer::Dyadic { digit: 0, origin: 0.0 },
        future_quantizer: Quantizer::Dyadic { digit: 11, origin: 0.0 },
        ..WindowSpec::default()
    }
}

pub fn example_suite(config: &SuiteConfig, out: &Path) -> Result<SuiteReport> {
    std::fs::create_dir_all(out)?;
    let mut claims = Vec::new();
    let mut files = Vec::new();

    // Random walk in random scenery.
    let rws = FilterSpec::random_walk_scenery();
    let gaps: Vec<usize> = (1..=10).collect();
    let policy = MixingPolicy {
        placements: vec![Placement { n: 24, j: 4 }],
        windows: WindowSpec {
            past_quantizer: Quantizer::Exact,
            future_quantizer: Quantizer::Exact,
            ..WindowSpec::default()
        },
        replicas: config.scenery_replicas,
        seed: config.seed,
    };
    let profile = mixing_profile(&rws, &gaps, &policy)?;
    write_mixing(out, "scenery_mixing.csv", &profile, &mut files)?;
    let betas: Vec<f64> = profile.entries.iter().map(|e| e.beta_hat).collect();
    let decreasing = betas.windows(2).all(|w| w[1] < w[0]);
    claims.push(Claim {
        example: "random_walk_scenery",
        claim: "beta_hat strictly decreasing over k = 1..10".into(),
        holds: decreasing,
        detail: format!("{betas:?}"),
    });
    let (refused, msg) = refusal(dependence_profile(&rws, &DependencePolicy::default()));
    claims.push(Claim {
        example: "random_walk_scenery",
        claim: "physical dependence estimation refused".into(),
        holds: refused && msg.contains("no causal representation"),
        detail: msg,
    });

    // Andrews' non-mixing process.
    let andrews = FilterSpec::andrews(0.5, 0.5);
    let dep = dependence_profile(
        &andrews,
        &DependencePolicy {
            replicas: config.physdep_replicas,
            max_lag: 12,
            seed: config.seed,
            ..DependencePolicy::default()
        },
    )?;
    dep.write_csv(BufWriter::new(File::create(out.join("andrews_physdep.csv"))?))?;
    files.push("andrews_physdep.csv".into());
    let ratios: Vec<f64> = dep.delta_hat.windows(2).take(8).map(|w| w[1] / w[0]).collect();
    claims.push(Claim {
        example: "andrews",
        claim: "delta profile geometric with ratio 0.5 (within 10% for h ≤ 8)".into(),
        holds: ratios.iter().all(|r| (r - 0.5).abs() <= 0.05),
        detail: format!("{ratios:?}"),
    });
    let policy = MixingPolicy {
        placements: vec![Placement { n: 32, j: 8 }],
        windows: andrews_windows(),
        replicas: config.andrews_replicas,
        seed: config.seed,
    };
    let mix = mixing_profile(&andrews, &gaps, &policy)?;
    write_mixing(out, "andrews_mixing.csv", &mix, &mut files)?;
    let alphas: Vec<f64> = mix.entries.iter().map(|e| e.alpha_hat).collect();
    let thetas: Vec<f64> = gaps.iter().map(|&k| dep.theta_hat[k]).collect();
    claims.push(Claim {
        example: "andrews",
        claim: "alpha_hat ≥ 0.01 for k ≤ 10 while theta_hat_k ≤ 1.05·2^-k".into(),
        holds: alphas.iter().all(|a| *a >= 0.01)
            && thetas.iter().zip(&gaps).all(|(t, &k)| *t <= 1.05 * 0.5f64.powi(k as i32)),
        detail: format!("alpha {alphas:?}; theta {thetas:?}"),
    });
    let th = verify_theorem(&andrews, &gaps, &DependencePolicy::default(), &policy, None)?;
    claims.push(Claim {
        example: "andrews",
        claim: "theorem check skipped for innovations without a density".into(),
        holds: th.verdict == Verdict::Skipped,
        detail: th.message,
    });

    // Pareto i.i.d.
    let pareto = FilterSpec::iid(InnovationLaw::Pareto { shape: 0.8 });
    let (refused, msg) = refusal(dependence_profile(&pareto, &DependencePolicy::default()));
    claims.push(Claim {
        example: "pareto_iid",
        claim: "physical dependence estimation refused: moment undefined".into(),
        holds: refused && msg.contains("moment undefined"),
        detail: msg,
    });
    let policy = MixingPolicy {
        placements: vec![Placement { n: 16, j: 8 }],
        windows: WindowSpec::with_bins(2, 2, 4),
        replicas: config.pareto_replicas,
        seed: config.seed,
    };
    let mix = mixing_profile(&pareto, &[1, 2, 4], &policy)?;
    write_mixing(out, "pareto_iid_mixing.csv", &mix, &mut files)?;
    let lowers: Vec<f64> = mix.entries.iter().map(|e| e.beta_lower).collect();
    let floor: Vec<f64> = mix
        .entries
        .iter()
        .map(|e| 3.0 / (e.min_past_count as f64).sqrt())
        .collect();
    claims.push(Claim {
        example: "pareto_iid",
        claim: "mixing profile indistinguishable from zero".into(),
        holds: lowers.iter().zip(&floor).all(|(l, f)| l <= f),
        detail: format!("beta_lower {lowers:?}"),
    });

    let report = SuiteReport {
        config: config.clone(),
        claims,
        files,
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(out.join("suite.json"))?), &report)?;
    Ok(report)
}
