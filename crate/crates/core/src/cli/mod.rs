//! Command-line front end: `run`, `compare`, `bench` and `inspect-state`.
//!
//! The `ttn` binary is a thin wrapper around [`main`]. Every subcommand is
//! also callable as a library function.

pub mod bench;
pub mod compare;
pub mod config;
pub mod inspect;
pub mod run;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use bench::{bench, loglog_slope, BenchCell, BenchOptions, BenchReport};
pub use compare::{compare, compare_records, CompareReport, Tolerances};
pub use config::{Backend, Coupling, FieldError, RunConfig};
pub use inspect::{inspect, StateSummary};
pub use run::{run, Manifest, RunOutcome};

use crate::hamiltonian::{EnvError, Grouping};
use crate::initstates::PatternError;
use crate::observables::ObservableError;
use crate::oracles::OracleError;
use crate::state::{CheckpointError, StateError};
use crate::tdvp::TdvpError;
use crate::tnalg::TensorError;
use crate::topology::TopologyError;

/// Environment variable holding the BLAS thread count.
pub const THREADS_ENV: &str = "TTN_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<FieldError>),
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run failed ({message}); partial output in {}", directory.display())]
    RunFailed { directory: PathBuf, message: String },
    #[error("{0}")]
    Compare(String),
    #[error(transparent)]
    Tdvp(#[from] TdvpError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ttn", version, about = "Tree tensor network TDVP for the 2D quantum Ising model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve the configured initial state and write records, checkpoint and
    /// manifest.
    Run {
        config: PathBuf,
        /// Overrides `output.directory`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compare the records of two run directories.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        /// Interpolate the second run onto the time grid of the first.
        #[arg(long)]
        interpolate: bool,
        /// Tolerance applied to every observable.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        tol_sx: Option<f64>,
        #[arg(long)]
        tol_sz: Option<f64>,
        #[arg(long)]
        tol_entropy: Option<f64>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Time TDVP steps over lattice sizes and bond dimensions.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "8")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "32,64,128")]
        chis: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "collapsed,naive")]
        modes: Vec<String>,
        /// Timed steps per cell (one warmup step is added).
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long, default_value_t = 8.0)]
        memory_limit_gb: f64,
        /// Directory for `bench.csv` and `bench.json`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the pattern and entanglement summary of a checkpoint.
    InspectState {
        checkpoint: PathBuf,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

fn parse_mode(s: &str) -> Result<Grouping, CliError> {
    match s {
        "collapsed" => Ok(Grouping::Collapsed),
        "naive" => Ok(Grouping::Naive),
        other => Err(CliError::Compare(format!("unknown mode {other:?}"))),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Runs one parsed command; the returned code is the process exit status.
pub fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run { config, output } => {
            let text = std::fs::read_to_string(&config).map_err(|e| CliError::io(&config, e))?;
            let mut cfg = RunConfig::from_toml(&text)?;
            if let Some(dir) = output {
                cfg.output.directory = dir;
            }
            let out = run(&cfg)?;
            println!(
                "{} records written to {} in {:.2} s",
                out.records.len(),
                out.directory.display(),
                out.manifest.wall_time_seconds
            );
            Ok(0)
        }
        Command::Compare {
            run_a,
            run_b,
            interpolate,
            tol,
            tol_sx,
            tol_sz,
            tol_entropy,
            report,
        } => {
            let mut t = Tolerances::default();
            if let Some(v) = tol {
                t = Tolerances {
                    sx: v,
                    sz: v,
                    entropy: v,
                    dw_length: v,
                    region: v,
                    density: v,
                };
            }
            t.sx = tol_sx.unwrap_or(t.sx);
            t.sz = tol_sz.unwrap_or(t.sz);
            t.entropy = tol_entropy.unwrap_or(t.entropy);
            let r = compare(&run_a, &run_b, &t, interpolate)?;
            let json = serde_json::to_string_pretty(&r)?;
            match report {
                Some(p) => write_file(&p, &(json + "\n"))?,
                None => println!("{json}"),
            }
            for d in &r.deviations {
                eprintln!(
                    "{:<16} max {:.3e}  mean {:.3e}  tol {:.1e}  {}",
                    d.observable,
                    d.max_abs,
                    d.mean_abs,
                    d.tolerance,
                    if d.pass { "ok" } else { "FAIL" }
                );
            }
            Ok(if r.pass { 0 } else { 1 })
        }
        Command::Bench {
            sizes,
            chis,
            modes,
            steps,
            memory_limit_gb,
            output,
        } => {
            let opts = BenchOptions {
                sizes,
                chis,
                modes: modes.iter().map(|m| parse_mode(m)).collect::<Result<_, _>>()?,
                steps,
                memory_limit_bytes: (memory_limit_gb * 1e9) as usize,
                ..Default::default()
            };
            let r = bench(&opts)?;
            print!("{}", r.table());
            for &l in &opts.sizes {
                for &m in &opts.modes {
                    if let Some(s) = r.chi_slope(l, m) {
                        println!("L={l} {m:?}: log-log slope vs chi {s:.3}");
                    }
                }
            }
            if let Some(dir) = output {
                std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
                write_file(&dir.join("bench.csv"), &r.to_csv()?)?;
                write_file(&dir.join("bench.json"), &(serde_json::to_string_pretty(&r)? + "\n"))?;
            }
            Ok(0)
        }
        Command::InspectState { checkpoint, json } => {
            let s = inspect(&checkpoint)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&s)?);
            } else {
                print!("{}", inspect::render(&s));
            }
            Ok(0)
        }
    }
}

/// Entry point of the `ttn` binary.
pub fn main() -> i32 {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()) {
        crate::set_threads(n);
    }
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_line_parses() {
        let c = Cli::try_parse_from(["ttn", "bench", "--sizes", "4,8", "--chis", "8", "--steps", "6"]).unwrap();
        match c.command {
            Command::Bench { sizes, chis, steps, .. } => {
                assert_eq!(sizes, vec![4, 8]);
                assert_eq!(chis, vec![8]);
                assert_eq!(steps, 6);
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["ttn", "inspect-state", "x.ckpt", "--json"]).is_ok());
        assert!(Cli::try_parse_from(["ttn", "compare", "a", "b", "--interpolate", "--tol", "1e-3"]).is_ok());
        assert!(Cli::try_parse_from(["ttn", "frobnicate"]).is_err());
    }

    #[test]
    fn config_errors_list_fields() {
        let e = CliError::Config(vec![
            FieldError {
                field: "chi".into(),
                message: "must be at least 1".into(),
            },
            FieldError {
                field: "lattice".into(),
                message: "bad".into(),
            },
        ]);
        let s = e.to_string();
        assert!(s.contains("  chi: must be at least 1\n  lattice: bad"));
    }
}
