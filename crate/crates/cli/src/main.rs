use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use depmix::harness::{self, CheckKind, ExperimentConfig, SuiteConfig};

#[derive(Parser)]
#[command(name = "depmix", version, about = "Physical dependence, mixing coefficients and transport bounds")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replica count for every Monte-Carlo stage.
    #[arg(long, global = true)]
    replicas: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured filter and write the paths as CSV.
    Simulate {
        #[arg(long, default_value_t = 64)]
        n: usize,
    },
    /// Estimate δ_p and Θ_k.
    Physdep,
    /// Estimate α(k) and β(k).
    Mixing,
    /// Conditional transport and duality checks.
    Transport,
    /// Mollifier smoothing and interpolation bounds.
    Mollify,
    /// Compare β̂(k) with the √(D Θ_k) bound.
    Verify,
    /// Run every check listed in the configuration.
    Run,
    /// Canned reproductions of the separating examples.
    Examples,
    /// Print the effective configuration as TOML.
    Config,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if let Some(r) = cli.replicas {
        config.set_replicas(r);
    }
    Ok(config)
}

fn run_checks(mut config: ExperimentConfig, checks: Option<Vec<CheckKind>>) -> Result<ExitCode> {
    if let Some(c) = checks {
        config.checks = c;
    }
    let manifest = harness::run(&config)?;
    for o in &manifest.checks {
        eprintln!("{:<10} {:?}: {}", o.check.name(), o.status, o.message);
    }
    eprintln!("outputs in {}", config.out.display());
    if manifest.ok() {
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{}", serde_json::json!({ "failures": manifest.failures }));
        Ok(ExitCode::from(1))
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let config = load(&cli)?;
    match &cli.command {
        Command::Simulate { n } => {
            let r = cli.replicas.unwrap_or(100);
            let ens = depmix::processes::simulate(&config.filter, *n, r, config.seed)?;
            std::fs::create_dir_all(&config.out)?;
            let path = config.out.join("paths.csv");
            ens.write_csv(BufWriter::new(File::create(&path)?))?;
            for w in &ens.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Physdep => run_checks(config, Some(vec![CheckKind::Physdep])),
        Command::Mixing => run_checks(config, Some(vec![CheckKind::Mixing])),
        Command::Transport => run_checks(config, Some(vec![CheckKind::Transport])),
        Command::Mollify => run_checks(config, Some(vec![CheckKind::Mollify])),
        Command::Verify => run_checks(config, Some(vec![CheckKind::Theorem])),
        Command::Run => run_checks(config, None),
        Command::Examples => {
            let mut suite = SuiteConfig {
                seed: config.seed,
                ..SuiteConfig::default()
            };
            if let Some(r) = cli.replicas {
                suite.scenery_replicas = r;
                suite.andrews_replicas = r;
                suite.pareto_replicas = r;
                suite.physdep_replicas = r;
            }
            let report = harness::example_suite(&suite, &config.out)?;
            for c in &report.claims {
                eprintln!("{:<20} {:<5} {}", c.example, c.holds, c.claim);
            }
            if report.holds() {
                Ok(ExitCode::SUCCESS)
            } else {
                let failed: Vec<&str> = report.claims.iter().filter(|c| !c.holds).map(|c| c.claim.as_str()).collect();
                println!("{}", serde_json::json!({ "failures": failed }));
                Ok(ExitCode::from(1))
            }
        }
        Command::Config => {
            print!("{}", config.to_toml()?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
