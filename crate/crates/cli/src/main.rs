//! `simulate`: runs one Monte Carlo experiment and writes its CSV.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 infeasible scenario,
//! 3 numerical failures above the configured fraction.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use nsin_core::harness::{load_config, run_experiment, write_csv, ExperimentKind, ExperimentSpec, SimulationConfig};
use nsin_core::Error;

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "simulate", version, about = "Monte Carlo curves for a RIS-assisted HAP/UAV URLLC relay")]
struct Args {
    /// Flat TOML config; "-" or "default" uses the reference deployment.
    config: String,
    /// nmse_vs_snr, nmse_vs_pilots, gain_vs_N, ee_vs_N, ee_vs_Pu or ee_vs_area.
    #[arg(long)]
    experiment: ExperimentKind,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write per-trial records to `<out>.trace.json`.
    #[arg(long)]
    trace: bool,
}

fn trace_path(out: &std::path::Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".trace.json");
    PathBuf::from(name)
}

fn run(args: &Args) -> anyhow::Result<u8> {
    let config = match args.config.as_str() {
        "-" | "default" => SimulationConfig::default(),
        path => load_config(std::path::Path::new(path)).with_context(|| format!("loading {path}"))?,
    };
    let failure_threshold = config.failure_threshold;
    let mut spec = ExperimentSpec::new(args.experiment, config, args.trials, args.seed);
    spec.record_trace = args.trace;

    let result = match run_experiment(&spec) {
        Ok(r) => r,
        Err(Error::Infeasible(reason)) => {
            log::error!("infeasible scenario: {reason}");
            return Ok(EXIT_INFEASIBLE);
        }
        Err(e @ Error::NumericalFailure { .. }) => {
            log::error!("{e}");
            return Ok(EXIT_NUMERICAL);
        }
        Err(e) => return Err(e.into()),
    };

    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_csv(&result.rows, BufWriter::new(file))?;
    if args.trace {
        let path = trace_path(&args.out);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer(BufWriter::new(file), &result.records)?;
    }
    log::info!(
        "{} rows, {} numerical and {} infeasible trial failures",
        result.rows.len(),
        result.failures.numerical,
        result.failures.infeasible
    );

    if result.failures.fully_infeasible_cells > 0 {
        log::error!("{} sweep cells were infeasible in every trial", result.failures.fully_infeasible_cells);
        return Ok(EXIT_INFEASIBLE);
    }
    if result.failures.worst_numerical_fraction > failure_threshold {
        log::error!(
            "numerical failure rate {:.3} exceeds the threshold {failure_threshold}",
            result.failures.worst_numerical_fraction
        );
        return Ok(EXIT_NUMERICAL);
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
