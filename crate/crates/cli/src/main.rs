//! `lqmfg`: solve, simulate and check linear-quadratic mean-field games from the
//! command line.
//!
//! Exit status is 0 on success, 1 on a domain error (reported as one line of
//! JSON on stderr) and 2 on a usage error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "lqmfg", version, about = "Linear-quadratic mean-field games with partial observation")]
struct Cli {
    /// Worker threads for simulations (default: available parallelism).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the control Riccati P and the filter Riccati Pi.
    Riccati(RiccatiArgs),
    /// Solve the consistency condition for the control-average limit m.
    Cc(CcArgs),
    /// Simulate N agents under the decentralized strategy.
    Simulate(SimulateArgs),
    /// Sweep agent counts and fit the gap scaling rates.
    NashSweep(SweepArgs),
    /// Run the cash-management example and write every figure series.
    CashExample(CashArgs),
    /// Check a model file and print its dimensions and assumption checks.
    Validate(ModelArgs),
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Model JSON file.
    #[arg(long)]
    pub model: PathBuf,
    /// Override the number of time steps in the model file.
    #[arg(long, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub steps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct RiccatiArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Method {
    Decoupled,
    FixedPoint,
}

#[derive(Args, Debug)]
pub struct CcArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "decoupled")]
    pub method: Method,
    /// Fixed-point stopping tolerance (sup-norm change of m).
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0.5)]
    pub damping: f64,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of agents.
    #[arg(long = "N", default_value_t = 100)]
    pub n_agents: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated, strictly increasing agent counts.
    #[arg(long = "Ns", value_delimiter = ',', default_value = "4,8,16,32,64,128")]
    pub ns: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Scaling CSV; the report goes next to it as `<stem>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CashArgs {
    #[arg(long, default_value_t = lqmfg_core::cash::DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long = "N", default_value_t = lqmfg_core::cash::DEFAULT_AGENTS)]
    pub n_agents: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// `--seed` wins over `MFG_SEED`, which wins over 0.
#[derive(Args, Debug)]
pub struct SeedArg {
    #[arg(long, env = "MFG_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    module: &'a str,
    detail: String,
}

fn run(command: &Command) -> lqmfg_core::Result<Option<manifest::RunManifest>> {
    Ok(Some(match command {
        Command::Validate(a) => {
            commands::validate_model(a)?;
            return Ok(None);
        }
        Command::Riccati(a) => commands::riccati(a)?,
        Command::Cc(a) => commands::cc(a)?,
        Command::Simulate(a) => commands::simulate(a, a.seed.seed)?,
        Command::NashSweep(a) => commands::nash_sweep(a, a.seed.seed)?,
        Command::CashExample(a) => commands::cash_example(a, a.seed.seed)?,
    }))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.into()).build_global() {
            eprintln!("{}", error_line("ThreadPool", "cli", e.to_string()));
            return ExitCode::from(1);
        }
    }
    match run(&cli.command) {
        Ok(Some(m)) => {
            let rows: usize = m.outputs.iter().map(|o| o.rows).sum();
            eprintln!(
                "{}: wrote {} files ({} rows) in {:.2}s",
                m.subcommand,
                m.outputs.len(),
                rows,
                m.wall_time
            );
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), e.module(), e.to_string()));
            ExitCode::from(1)
        }
    }
}

fn error_line(error: &str, module: &str, detail: String) -> String {
    serde_json::to_string(&ErrorReport { error, module, detail }).expect("error report serializes")
}
