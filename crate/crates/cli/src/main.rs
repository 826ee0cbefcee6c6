//! `slinv`: reproducible experiments for semilinear inverse boundary problems.
//!
//! Exit codes: 0 on success, 2 when the run completed but reported a
//! rank-deficient system or a non-identifiable obstacle, 1 on errors.

mod config;
mod output;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use semilinear_inverse::DomainConfig;

use config::{load_config, parse_toml, ConfigError, Experiment, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] semilinear_inverse::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Internal(String),
}

#[derive(Parser, Debug)]
#[command(name = "slinv", version, about = "Forward solves, linearized DtN data and reconstructions for semilinear inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for every random choice (overrides `rng_seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML file holding a domain table (overrides `[domain]`).
    #[arg(long, global = true)]
    domain: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    #[command(flatten)]
    Experiment(ExperimentCommand),
}

#[derive(Subcommand, Debug)]
enum ExperimentCommand {
    Forward(ExpArgs),
    DtnBank(ExpArgs),
    Linearize(ExpArgs),
    RecoverQ(ExpArgs),
    RecoverV(ExpArgs),
    RecoverObstacle(ExpArgs),
    DensityCheck(ExpArgs),
    FullPipeline(ExpArgs),
}

#[derive(clap::Args, Debug)]
struct ExpArgs {
    /// Config file; its `experiment` must match the subcommand. Defaults are
    /// used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ExperimentCommand {
    fn split(&self) -> (Experiment, &ExpArgs) {
        match self {
            ExperimentCommand::Forward(a) => (Experiment::Forward, a),
            ExperimentCommand::DtnBank(a) => (Experiment::DtnBank, a),
            ExperimentCommand::Linearize(a) => (Experiment::Linearize, a),
            ExperimentCommand::RecoverQ(a) => (Experiment::RecoverQ, a),
            ExperimentCommand::RecoverV(a) => (Experiment::RecoverV, a),
            ExperimentCommand::RecoverObstacle(a) => (Experiment::RecoverObstacle, a),
            ExperimentCommand::DensityCheck(a) => (Experiment::DensityCheck, a),
            ExperimentCommand::FullPipeline(a) => (Experiment::FullPipeline, a),
        }
    }
}

fn load_domain(path: &Path) -> Result<DomainConfig, RunError> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_toml(&text, Some(path))?)
}

fn execute(cli: Cli) -> Result<run::Flags, RunError> {
    let (mut cfg, base) = match &cli.command {
        Command::Run { config } => (load_config(config)?, config.parent().map(Path::to_path_buf).unwrap_or_default()),
        Command::Experiment(e) => {
            let (exp, args) = e.split();
            match &args.config {
                Some(p) => {
                    let c = load_config(p)?;
                    if c.experiment != exp {
                        return Err(ConfigError {
                            file: Some(p.clone()),
                            line: None,
                            key: "experiment".into(),
                            message: format!("is `{}` but the subcommand is `{}`", c.experiment.name(), exp.name()),
                        }
                        .into());
                    }
                    (c, p.parent().map(Path::to_path_buf).unwrap_or_default())
                }
                None => (ExperimentConfig::for_experiment(exp), PathBuf::new()),
            }
        }
    };
    if let Some(s) = cli.seed {
        cfg.rng_seed = s;
    }
    if let Some(p) = &cli.domain {
        cfg.domain = Some(load_domain(p)?);
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = Some(o.clone());
    }
    cfg.validate()?;
    let out = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("slinv_out").join(cfg.experiment.name()));
    let out = if out.is_relative() && cli.out.is_none() { base.join(out) } else { out };
    run::run(&cfg, &out, &base)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(flags) if flags.rank_deficient || flags.non_identifiable => ExitCode::from(2),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
