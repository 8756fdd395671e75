//! Command-line front end: configuration, trace files, command dispatch and
//! report emission.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod traces;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::CommandOutput;
use config::{load_config, RunConfig};
use error::{CliError, CliResult};
use report::{write_atomic, Format};

/// Consulted when neither `--out` nor the config names an output directory.
pub const OUT_ENV: &str = "GEOPROFIT_OUT";
pub const DEFAULT_OUT: &str = "geoprofit-out";

#[derive(Debug, Parser)]
#[command(name = "geoprofit", version, about = "Profit-maximizing workload distribution for green data centers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Comma-separated comparators for simulate: mm1, equal-split or none.
    #[arg(long, global = true, value_delimiter = ',')]
    pub baselines: Option<Vec<String>>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one slot: the inline [slot] or slot N of the traces.
    Solve {
        #[arg(long, default_value_t = 0)]
        slot: usize,
    },
    /// Replay every slot of the traces, with baselines.
    Simulate,
    /// Compare the analytic loss with Monte Carlo over the configured battery.
    ValidateLoss,
    /// Check the curvature facts the solver relies on.
    AuditConvexity,
    /// Compare the solver with an exhaustive grid on a tiny instance.
    BruteForce {
        #[arg(long, default_value_t = 0)]
        slot: usize,
    },
    /// Write synthetic power, price and rate traces.
    GenTraces,
}

fn output_dir(cli: &Cli, cfg: Option<&RunConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn prepare(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if let Some(names) = &cli.baselines {
        cfg.simulator.baselines = commands::parse_baselines(names)?;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> CliResult<CommandOutput> {
    match cli.command {
        Command::Solve { slot } => commands::cmd_solve(cfg, slot, cli.format),
        Command::Simulate => commands::cmd_simulate(cfg, cli.format),
        Command::ValidateLoss => commands::cmd_validate_loss(cfg, cli.format),
        Command::AuditConvexity => commands::cmd_audit(cfg, cli.format),
        Command::BruteForce { slot } => commands::cmd_brute_force(cfg, slot, cli.format),
        Command::GenTraces => commands::cmd_gen_traces(cfg),
    }
}

fn diagnostics(e: &CliError) -> String {
    let mut v = serde_json::Map::new();
    v.insert("category".into(), e.category().into());
    v.insert("exit_code".into(), e.exit_code().into());
    v.insert("message".into(), e.to_string().into());
    serde_json::Value::Object(v).to_string() + "\n"
}

/// Runs the tool and returns the process exit code: 0 ok, 1 runtime
/// failure, 2 usage error, 3 failed validation or audit verdict.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let cfg = prepare(&cli);
    let dir = output_dir(&cli, cfg.as_ref().ok());
    let result = cfg.and_then(|cfg| {
        let out = dispatch(&cli, &cfg)?;
        out.outputs.commit(&dir)?;
        print!("{}", out.stdout);
        match out.failure {
            Some(msg) => Err(CliError::Check(msg)),
            None => Ok(()),
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("geoprofit: {} error: {e}", e.category());
            // verdict failures keep their reports; anything else leaves only
            // the diagnostics file behind
            if !matches!(e, CliError::Check(_) | CliError::Usage(_)) {
                if let Err(w) = write_atomic(&dir, "diagnostics.json", diagnostics(&e).as_bytes()) {
                    eprintln!("geoprofit: could not write diagnostics: {w}");
                }
            }
            e.exit_code()
        }
    }
}
