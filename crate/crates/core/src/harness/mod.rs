//! Experiment configuration and orchestration: runs the requested checks,
//! writes CSV/JSON reports and a manifest, and decides the overall verdict.

mod checks;
mod suite;
mod theorem;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use checks::{
    mollify_check, transport_check, CellRow, GapRow, MollifyCheckConfig, MollifyCheckReport, NamedBound,
    ShiftInterpolation, TransportCheckConfig, TransportCheckReport,
};
pub use suite::{andrews_windows, example_suite, Claim, SuiteConfig, SuiteReport};
pub use theorem::{
    filter_d, linear_covariances, theorem_constant, verify_theorem, RowStatus, TheoremReport, TheoremRow, Verdict,
    CONSTANT_NOTE,
};

use crate::error::{Error, Result};
use crate::mixing::{mixing_profile, MixingPolicy, MixingProfile};
use crate::physdep::{dependence_profile, DependencePolicy, DependenceProfile};
use crate::processes::{FilterSpec, InnovationLaw};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Physdep,
    Mixing,
    Transport,
    Mollify,
    Theorem,
}

impl CheckKind {
    pub const ALL: [CheckKind; 5] = [
        CheckKind::Physdep,
        CheckKind::Mixing,
        CheckKind::Transport,
        CheckKind::Mollify,
        CheckKind::Theorem,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Physdep => "physdep",
            CheckKind::Mixing => "mixing",
            CheckKind::Transport => "transport",
            CheckKind::Mollify => "mollify",
            CheckKind::Theorem => "theorem",
        }
    }
}

/// Everything a run depends on. The top-level `seed` overrides the seeds of
/// the nested policies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub checks: Vec<CheckKind>,
    /// Gaps `k` for the mixing and theorem checks.
    pub gaps: Vec<usize>,
    /// Explicit metric weights; geometric `2^{-m}` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub filter: FilterSpec,
    pub physdep: DependencePolicy,
    pub mixing: MixingPolicy,
    pub transport: TransportCheckConfig,
    pub mollify: MollifyCheckConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out: PathBuf::from("depmix-out"),
            checks: CheckKind::ALL.to_vec(),
            gaps: (1..=20).collect(),
            weights: None,
            filter: FilterSpec::ar1(0.6, InnovationLaw::standard_gaussian()),
            physdep: DependencePolicy::default(),
            mixing: MixingPolicy::default(),
            transport: TransportCheckConfig::default(),
            mollify: MollifyCheckConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Sets every replica count.
    pub fn set_replicas(&mut self, replicas: usize) {
        self.physdep.replicas = replicas;
        self.mixing.replicas = replicas;
        self.transport.replicas = replicas;
    }

    /// Copy with the top-level seed pushed into the nested policies.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.physdep.seed = c.seed;
        c.mixing.seed = c.seed;
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Vacuous,
    Skipped,
    Fail,
    Error,
}

impl CheckStatus {
    /// Whether the status keeps the exit code at zero.
    pub fn ok(self) -> bool {
        matches!(self, CheckStatus::Pass | CheckStatus::Vacuous | CheckStatus::Skipped)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub check: CheckKind,
    pub status: CheckStatus,
    pub message: String,
    pub files: Vec<String>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub checks: Vec<CheckOutcome>,
    /// Names of checks whose status is `fail` or `error`.
    pub failures: Vec<String>,
    pub wall_seconds: f64,
}

impl Manifest {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    out: &'a Path,
    profile: Option<DependenceProfile>,
    mixing: Option<MixingProfile>,
}

fn json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(BufWriter::new(File::create(out.join(name))?), value)?;
    Ok(())
}

fn writer(out: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(out.join(name))?))
}

impl Context<'_> {
    fn dependence(&mut self) -> Result<&DependenceProfile> {
        if self.profile.is_none() {
            let mut policy = self.config.physdep.clone();
            let k_max = self
                .config
                .gaps
                .iter()
                .chain(&self.config.transport.gaps)
                .copied()
                .max()
                .unwrap_or(0);
            policy.max_lag = policy.max_lag.max(k_max);
            self.profile = Some(dependence_profile(&self.config.filter, &policy)?);
        }
        Ok(self.profile.as_ref().unwrap())
    }

    fn mixing(&mut self) -> Result<&MixingProfile> {
        if self.mixing.is_none() {
            self.mixing = Some(mixing_profile(&self.config.filter, &self.config.gaps, &self.config.mixing)?);
        }
        Ok(self.mixing.as_ref().unwrap())
    }

    fn run(&mut self, check: CheckKind) -> Result<(CheckStatus, String, Vec<String>)> {
        let out = self.out;
        match check {
            CheckKind::Physdep => {
                let p = self.dependence()?;
                p.write_csv(writer(out, "physdep.csv")?)?;
                p.write_json(writer(out, "physdep.json")?)?;
                let status = if !p.theta_finite {
                    CheckStatus::Fail
                } else if p.delta_hat.iter().skip(1).all(|d| *d == 0.0) {
                    CheckStatus::Vacuous
                } else {
                    CheckStatus::Pass
                };
                let msg = format!("Θ̂_1 = {}, tail by {:?}", p.theta_hat.get(1).copied().unwrap_or(0.0), p.tail_method);
                Ok((status, msg, vec!["physdep.csv".into(), "physdep.json".into()]))
            }
            CheckKind::Mixing => {
                let m = self.mixing()?;
                m.write_csv(writer(out, "mixing.csv")?)?;
                m.write_json(writer(out, "mixing.json")?)?;
                let bad: Vec<usize> = m
                    .entries
                    .iter()
                    .filter(|e| {
                        let se = (e.alpha_stderr.powi(2) + (0.5 * e.beta_stderr).powi(2)).sqrt();
                        e.alpha_hat > 0.5 * e.beta_hat + 3.0 * se
                    })
                    .map(|e| e.k)
                    .collect();
                let status = if bad.is_empty() { CheckStatus::Pass } else { CheckStatus::Fail };
                let msg = if bad.is_empty() {
                    "alpha_hat ≤ beta_hat/2 + 3·stderr at every gap".to_string()
                } else {
                    format!("alpha exceeds beta/2 at gaps {bad:?}")
                };
                Ok((status, msg, vec!["mixing.csv".into(), "mixing.json".into()]))
            }
            CheckKind::Transport => {
                let weights = self.config.weights.clone();
                let profile = self.dependence().ok().cloned();
                let r = transport_check(
                    &self.config.filter,
                    &self.config.transport,
                    weights.as_deref(),
                    profile.as_ref(),
                    self.config.seed,
                )?;
                r.write_csv(writer(out, "transport.csv")?)?;
                r.write_gap_csv(writer(out, "transport_gaps.csv")?)?;
                json(out, "transport.json", &r)?;
                let status = if r.holds { CheckStatus::Pass } else { CheckStatus::Fail };
                let msg = format!("{} cell LPs, {} gaps", r.cells.len(), r.gaps.len());
                Ok((
                    status,
                    msg,
                    vec!["transport.csv".into(), "transport_gaps.csv".into(), "transport.json".into()],
                ))
            }
            CheckKind::Mollify => {
                let r = mollify_check(&self.config.mollify)?;
                let mut files = Vec::new();
                for s in r.smoothing.iter().chain(&r.differences) {
                    let name = format!("mollify_{}_{}.csv", s.report.check, s.name);
                    s.report.write_csv(writer(out, &name)?)?;
                    files.push(name);
                }
                r.write_interpolation_csv(writer(out, "mollify_interpolation.csv")?)?;
                json(out, "mollify.json", &r)?;
                files.push("mollify_interpolation.csv".into());
                files.push("mollify.json".into());
                let status = if r.holds { CheckStatus::Pass } else { CheckStatus::Fail };
                Ok((status, "smoothing, difference and interpolation bounds".into(), files))
            }
            CheckKind::Theorem => {
                let report = match theorem::admissibility_message(&self.config.filter)? {
                    Some(_) => verify_theorem(
                        &self.config.filter,
                        &self.config.gaps,
                        &self.config.physdep,
                        &self.config.mixing,
                        self.config.weights.as_deref(),
                    )?,
                    None => {
                        let weights = self.config.weights.clone();
                        let gaps = self.config.gaps.clone();
                        let mut policy = self.config.physdep.clone();
                        policy.max_lag = self.dependence()?.max_lag();
                        let profile = self.dependence()?.clone();
                        let mix = self.mixing()?.clone();
                        theorem::verify_with(
                            &self.config.filter,
                            &gaps,
                            &profile,
                            &policy,
                            &mix.entries,
                            &self.config.mixing,
                            weights.as_deref(),
                            mix.warnings,
                        )?
                    }
                };
                report.write_csv(writer(out, "theorem.csv")?)?;
                report.write_json(writer(out, "theorem.json")?)?;
                let status = match report.verdict {
                    Verdict::Skipped => CheckStatus::Skipped,
                    Verdict::Fail => CheckStatus::Fail,
                    Verdict::Pass if report.rows.iter().all(|r| r.status == RowStatus::VacuousPass) => {
                        CheckStatus::Vacuous
                    }
                    Verdict::Pass => CheckStatus::Pass,
                };
                Ok((status, report.message, vec!["theorem.csv".into(), "theorem.json".into()]))
            }
        }
    }
}

/// Runs the configured checks into `config.out`. Module errors are recorded
/// per check; the remaining checks still run.
pub fn run(config: &ExperimentConfig) -> Result<Manifest> {
    let started = Instant::now();
    let config = config.resolved();
    config.filter.validate()?;
    std::fs::create_dir_all(&config.out)?;
    let mut checks = config.checks.clone();
    checks.sort();
    checks.dedup();
    let mut ctx = Context {
        config: &config,
        out: &config.out,
        profile: None,
        mixing: None,
    };
    let mut outcomes = Vec::new();
    for check in checks {
        let t0 = Instant::now();
        let (status, message, files) = match ctx.run(check) {
            Ok(r) => r,
            Err(e) => (CheckStatus::Error, e.to_string(), Vec::new()),
        };
        outcomes.push(CheckOutcome {
            check,
            status,
            message,
            files,
            wall_seconds: t0.elapsed().as_secs_f64(),
        });
    }
    let failures = outcomes
        .iter()
        .filter(|o| !o.status.ok())
        .map(|o| o.check.name().to_string())
        .collect();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        config: config.clone(),
        checks: outcomes,
        failures,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    json(&config.out, "manifest.json", &manifest)?;
    Ok(manifest)
}
