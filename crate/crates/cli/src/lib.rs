//! `ppbell` command-line runner.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Config;
pub use crate::error::{CliError, Result};
use crate::output::{manifest_path, write_outputs, RunManifest, MODE_ORDER};
use crate::run::{DynamicStatistic, RunOutput};

#[derive(Debug, Parser)]
#[command(name = "ppbell", version, about = "Positive-P Bell-violation simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// CSV output path; the manifest is written next to it.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, env = "PPBELL_WORKERS")]
    pub workers: Option<usize>,

    /// Config override, e.g. `--set dynamic.dt=1e-4`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Static ensemble, CHD statistic over an angle grid.
    StaticChd {
        #[arg(long)]
        n_pairs: Option<u32>,
        #[arg(long)]
        n_samples: Option<usize>,
    },
    /// Dynamic ensemble, CHD statistic.
    DynamicChd(DynamicArgs),
    /// Dynamic ensemble, CH statistic.
    DynamicCh(DynamicArgs),
    /// Dynamic ensemble, CHSH statistic.
    DynamicChsh(DynamicArgs),
    /// Multimode waveguide propagation.
    Waveguide {
        #[arg(long)]
        n_traj: Option<usize>,
    },
    /// Oracle equivalence checks.
    Selftest,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SweepArg {
    Tau,
    Phi,
}

#[derive(Debug, Args)]
pub struct DynamicArgs {
    #[arg(long)]
    pub n_traj: Option<usize>,
    #[arg(long, value_enum)]
    pub sweep: Option<SweepArg>,
    #[arg(long)]
    pub postselect: bool,
    /// Fixed interaction time for a phi sweep.
    #[arg(long)]
    pub tau: Option<f64>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::StaticChd { .. } => "static-chd",
            Command::DynamicChd(_) => "dynamic-chd",
            Command::DynamicCh(_) => "dynamic-ch",
            Command::DynamicChsh(_) => "dynamic-chsh",
            Command::Waveguide { .. } => "waveguide",
            Command::Selftest => "selftest",
        }
    }

    /// Dedicated flags as `--set` overrides.
    fn overrides(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            Command::StaticChd { n_pairs, n_samples } => {
                if let Some(n) = n_pairs {
                    out.push(format!("static.n_pairs={n}"));
                }
                if let Some(n) = n_samples {
                    out.push(format!("static.n_samples={n}"));
                }
            }
            Command::DynamicChd(a) | Command::DynamicCh(a) | Command::DynamicChsh(a) => {
                if let Some(n) = a.n_traj {
                    out.push(format!("dynamic.n_traj={n}"));
                }
                if let Some(s) = a.sweep {
                    let s = match s {
                        SweepArg::Tau => "tau",
                        SweepArg::Phi => "phi",
                    };
                    out.push(format!("dynamic.sweep=\"{s}\""));
                }
                if a.postselect {
                    out.push("dynamic.postselect=true".into());
                }
                if let Some(t) = a.tau {
                    out.push(format!("dynamic.tau={t:?}"));
                }
            }
            Command::Waveguide { n_traj } => {
                if let Some(n) = n_traj {
                    out.push(format!("waveguide.n_traj={n}"));
                }
            }
            Command::Selftest => {}
        }
        out
    }
}

/// What a finished run wrote.
#[derive(Debug, Clone)]
pub struct Report {
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub summary: Vec<String>,
}

pub fn resolve_config(cli: &Cli) -> Result<Config> {
    let mut overrides = cli.command.overrides();
    if let Some(seed) = cli.seed {
        overrides.push(format!("run.seed={seed}"));
    }
    overrides.extend(cli.overrides.iter().cloned());
    config::load(cli.config.as_deref(), &overrides)
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Runs one subcommand in its own worker pool and writes the CSV and
/// manifest. A residual violation still writes outputs before failing.
pub fn execute(cli: &Cli) -> Result<Report> {
    let cfg = resolve_config(cli)?;
    let workers = cli.workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(CliError::Config("workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let name = cli.command.name();
    let csv = cli
        .output
        .clone()
        .unwrap_or_else(|| config::default_output(name));
    log::info!("{name}: {workers} workers, output {}", csv.display());

    let start = Instant::now();
    let out: RunOutput = pool.install(|| match &cli.command {
        Command::StaticChd { .. } => run::run_static_chd(&cfg),
        Command::DynamicChd(_) => run::run_dynamic(&cfg, DynamicStatistic::Chd),
        Command::DynamicCh(_) => run::run_dynamic(&cfg, DynamicStatistic::Ch),
        Command::DynamicChsh(_) => run::run_dynamic(&cfg, DynamicStatistic::Chsh),
        Command::Waveguide { .. } => run::run_waveguide(&cfg),
        Command::Selftest => run::run_selftest(&cfg),
    })?;
    let wall = start.elapsed().as_secs_f64();

    let manifest = RunManifest {
        subcommand: name.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        mode_order: MODE_ORDER.to_string(),
        csv: csv.display().to_string(),
        seed: cfg.run.seed,
        workers,
        samples: out.samples,
        failures: out.failures,
        wall_time_s: wall,
        config: serde_json::to_value(&cfg).expect("config serializes"),
        imag_residuals: out.residuals.clone(),
        notes: out.summary.clone(),
    };
    write_outputs(&csv, &out.table, &manifest)?;
    if !out.violations.is_empty() {
        return Err(CliError::ImagResidual(out.violations.join("; ")));
    }
    Ok(Report {
        manifest: manifest_path(&csv),
        csv,
        summary: out.summary,
    })
}

pub fn run_from_args<I, T>(args: I) -> Result<Report>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    execute(&cli)
}
