//! Command-line front end for `esi-core`: eigenmode export, trial
//! simulation, single solves, the SNR-sweep benchmark and its reports.

pub mod benchmark;
pub mod commands;
pub mod config;
pub mod error;
pub mod ini;
pub mod report;
pub mod setup;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Parser, Subcommand};
use esi_core::formats::MatrixFormat;

use crate::config::BenchmarkConfig;
use crate::error::{CliError, CliResult, EXIT_OK, EXIT_USAGE};
use crate::setup::Setup;

#[derive(Debug, Parser)]
#[command(
    name = "esi",
    version,
    about = "Geometric eigenmode EEG/MEG source imaging benchmark"
)]
pub struct Cli {
    /// Override the base seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for the benchmark (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    /// More log output; repeat for debug messages.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Export the lowest Laplace–Beltrami eigenmodes of a mesh.
    Eigenmodes {
        /// Mesh file (.off/.ply) or `icosphere:<subdivisions>[:<radius_mm>]`.
        mesh: String,
        /// Number of modes.
        count: usize,
        /// Output directory.
        out: PathBuf,
        /// Matrix encoding: csv or bin.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Write the source, clean and noisy sensor data of one benchmark trial.
    Simulate {
        config: PathBuf,
        /// Output directory.
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// SNR in dB; the first grid value by default.
        #[arg(long, allow_negative_numbers = true)]
        snr: Option<f64>,
        /// Noise kind; the first configured kind by default.
        #[arg(long)]
        noise: Option<String>,
    },
    /// Solve one measurement with every configured method.
    Solve {
        config: PathBuf,
        /// Sensor VEC file or a trial directory written by `simulate`.
        data: PathBuf,
        /// Output directory; `[output] dir` by default.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Noise power (mean square) for the discrepancy rule.
        #[arg(long)]
        noise_power: Option<f64>,
    },
    /// Run the SNR sweep and write long-format and summary CSVs.
    Benchmark {
        config: PathBuf,
        /// Output directory; `[output] dir` by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a results CSV into summary tables and plot-ready data files.
    Report { results: PathBuf, out: PathBuf },
}

fn load_config(path: &Path, seed: Option<u64>) -> CliResult<BenchmarkConfig> {
    let mut config = BenchmarkConfig::load(path)?;
    if let Some(seed) = seed {
        config.benchmark.seed = seed;
    }
    Ok(config)
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Eigenmodes {
            mesh,
            count,
            out,
            format,
        } => {
            let format: MatrixFormat = format
                .parse()
                .map_err(|e: esi_core::Error| CliError::Usage(e.to_string()))?;
            if count == 0 {
                return Err(CliError::Usage(
                    "the number of eigenmodes must be at least 1".into(),
                ));
            }
            let mesh = commands::parse_mesh_arg(&mesh)?;
            commands::cmd_eigenmodes(&mesh, count, &out, format, cli.seed)?;
        }
        Command::Simulate {
            config,
            out,
            trial,
            snr,
            noise,
        } => {
            commands::cmd_simulate(
                load_config(&config, cli.seed)?,
                &out,
                trial,
                snr,
                noise.as_deref(),
            )?;
        }
        Command::Solve {
            config,
            data,
            out,
            noise_power,
        } => {
            let config = load_config(&config, cli.seed)?;
            let out = out.unwrap_or_else(|| config.output.dir.clone());
            let outcome = commands::cmd_solve(config, &data, &out, noise_power)?;
            for (name, r) in &outcome.results {
                match r {
                    Ok(p) => println!("{name}: {}", p.display()),
                    Err(e) => println!("{name}: failed ({e})"),
                }
            }
            if outcome.succeeded() == 0 {
                let code = outcome.first_failure_code.unwrap_or(error::EXIT_NUMERIC);
                let msg = "every method failed".to_string();
                return Err(if code == error::EXIT_NUMERIC {
                    CliError::Numeric(msg)
                } else {
                    CliError::Data(msg)
                });
            }
        }
        Command::Benchmark { config, out } => {
            let config = load_config(&config, cli.seed)?;
            let out = out.unwrap_or_else(|| config.output.dir.clone());
            let setup = Setup::build(config, true)?;
            let outcome = benchmark::run_benchmark(&setup, &out, cli.jobs)?;
            println!(
                "{} cells ({} failed); results in {}",
                outcome.cells.len(),
                outcome.n_failed,
                outcome.results_csv.display()
            );
        }
        Command::Report { results, out } => {
            let outcome = report::run_report(&results, &out)?;
            println!(
                "{} conditions; {} curve file(s), {} bar table(s) in {}",
                outcome.summary_rows,
                outcome.curve_files.len(),
                outcome.bar_files.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
