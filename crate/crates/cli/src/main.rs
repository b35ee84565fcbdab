use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hybrid_borrowing::scenario::{emit_case_study, emit_thresholds, run_scenario, Engine, Overrides, RunOutput, ScenarioConfig};

/// Operating characteristics of compromise and dynamic-borrowing decisions
/// for hybrid-control trials.
#[derive(Debug, Parser)]
#[command(name = "hybrid-borrow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate every rule of a scenario over its grid.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Write critical value, κ and γ curves over the conflict grid.
    Thresholds {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Binomial case study by complete enumeration.
    CaseStudy {
        #[arg(long, default_value = "out/case_study")]
        out: PathBuf,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

#[derive(Debug, Args)]
struct RunOpts {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo replicates per grid point.
    #[arg(long)]
    reps: Option<u64>,
    /// closed_form, quadrature, monte_carlo or enumeration.
    #[arg(long)]
    engine: Option<Engine>,
}

impl RunOpts {
    fn load(&self, path: &PathBuf) -> anyhow::Result<ScenarioConfig> {
        let cfg = ScenarioConfig::load(path).with_context(|| format!("invalid config {}", path.display()))?;
        let o = Overrides { seed: self.seed, reps: self.reps, engine: self.engine };
        cfg.with_overrides(o).with_context(|| format!("invalid config {} after overrides", path.display()))
    }
}

fn report(out: &RunOutput) {
    println!(
        "{} rows -> {} ({})",
        out.rows.len(),
        out.results_path.display(),
        out.manifest.config_sha256
    );
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config, opts } => {
            let cfg = opts.load(&config)?;
            report(&run_scenario(&cfg, &opts.out)?);
        }
        Command::Thresholds { config, opts } => {
            let cfg = opts.load(&config)?;
            report(&emit_thresholds(&cfg, &opts.out)?);
        }
        Command::CaseStudy { out } => report(&emit_case_study(&out)?),
        Command::Validate { config } => {
            let cfg = ScenarioConfig::load(&config).with_context(|| format!("invalid config {}", config.display()))?;
            println!("{}: ok ({} rules, sha256 {})", config.display(), cfg.rules.len(), cfg.hash());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
