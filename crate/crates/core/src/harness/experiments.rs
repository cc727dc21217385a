//! Monte Carlo experiment drivers.
//!
//! Trial `t` of every sweep point draws from the same ChaCha stream
//! `(master seed, t)`, so sweep points see common random numbers and reruns
//! are bit-identical. Trials run on the rayon pool and are reduced in index
//! order.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SimulationConfig;
use crate::error::{Error, Result};
use crate::greedy::{omp, sp, GreedyConfig, GreedyResult};
use crate::linalg::{norm_sqr, sub, CMatrix};
use crate::optimizer::{optimize, OptimizerSettings, ResourceDecision, Scheme};
use crate::pipeline::{alignment_paths, cascade_gain, configure_phases, sample_realization, ChannelRealization, CsiSource};
use crate::ris::PhaseStrategy;
use crate::roamp::{run_roamp, RoampConfig, TraceRow};
use crate::scenario::Scenario;
use crate::sparse::{build_grid, build_measurement, simulate_pilot_reception, SparsePrior};

/// NMSE values at or below this are reported as this many dB.
pub const NMSE_FLOOR_DB: f64 = -200.0;

pub const CSV_HEADER: [&str; 8] = ["experiment", "sweep", "method", "metric", "value", "trials", "failures", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentKind {
    NmseVsSnr,
    NmseVsPilots,
    GainVsN,
    EeVsN,
    EeVsPu,
    EeVsArea,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::NmseVsSnr,
        ExperimentKind::NmseVsPilots,
        ExperimentKind::GainVsN,
        ExperimentKind::EeVsN,
        ExperimentKind::EeVsPu,
        ExperimentKind::EeVsArea,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::NmseVsSnr => "nmse_vs_snr",
            ExperimentKind::NmseVsPilots => "nmse_vs_pilots",
            ExperimentKind::GainVsN => "gain_vs_N",
            ExperimentKind::EeVsN => "ee_vs_N",
            ExperimentKind::EeVsPu => "ee_vs_Pu",
            ExperimentKind::EeVsArea => "ee_vs_area",
        }
    }

    /// SNR in dB, pilot counts, RIS sizes, UAV budgets in W, or area sides in m.
    pub fn default_sweep(self) -> Vec<f64> {
        match self {
            ExperimentKind::NmseVsSnr => vec![0.0, 4.0, 8.0, 12.0, 16.0, 20.0],
            ExperimentKind::NmseVsPilots => vec![30.0, 40.0, 50.0, 60.0, 70.0],
            ExperimentKind::GainVsN | ExperimentKind::EeVsN => vec![96.0, 128.0, 160.0, 192.0, 224.0, 256.0],
            ExperimentKind::EeVsPu => vec![0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            ExperimentKind::EeVsArea => vec![100.0, 300.0, 500.0, 700.0, 900.0],
        }
    }

    /// Phase-gain curves isolate the alignment rule; EE curves run the full chain.
    pub fn default_csi(self) -> CsiSource {
        match self {
            ExperimentKind::GainVsN => CsiSource::Perfect,
            _ => CsiSource::Estimated,
        }
    }

    pub fn methods(self) -> &'static [&'static str] {
        match self {
            ExperimentKind::NmseVsSnr | ExperimentKind::NmseVsPilots => &["roamp", "omp", "sp"],
            ExperimentKind::GainVsN => &["aligned", "random", "zero", "exhaustive"],
            _ => &["ptpb", "mtp", "mbl"],
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s)).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
            Error::InvalidParameter(format!("unknown experiment {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub sweep: Vec<f64>,
    pub trials: usize,
    pub config: SimulationConfig,
    pub seed: u64,
    pub record_trace: bool,
}

impl ExperimentSpec {
    /// Uses the config's sweep when it has one.
    pub fn new(kind: ExperimentKind, config: SimulationConfig, trials: usize, seed: u64) -> Self {
        let sweep = config.sweep.clone().unwrap_or_else(|| kind.default_sweep());
        Self { kind, sweep, trials, config, seed, record_trace: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.sweep.is_empty() {
            return Err(Error::InvalidParameter("sweep must not be empty".into()));
        }
        for v in &self.sweep {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("sweep value {v} is not finite")));
            }
            self.scenario_at(*v)?;
        }
        Ok(())
    }

    /// Base scenario with the sweep variable applied.
    pub fn scenario_at(&self, value: f64) -> Result<Scenario<f64>> {
        let mut s = self.config.scenario.clone();
        let as_count = |v: f64, what: &str| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidParameter(format!("{what} sweep value {v} is not a positive integer")))
            }
        };
        match self.kind {
            ExperimentKind::NmseVsSnr => {}
            ExperimentKind::NmseVsPilots => s.num_pilots = as_count(value, "pilot")?,
            ExperimentKind::GainVsN | ExperimentKind::EeVsN => {
                s.array = s.array.with_ris_elements(as_count(value, "RIS size")?)?
            }
            ExperimentKind::EeVsPu => s.uav_power_budget = value,
            ExperimentKind::EeVsArea => s.area_side = value,
        }
        // Keep the placeholder robots inside a resized area; trials redraw them.
        let k = s.num_robots();
        let seed = s.rng_seed;
        let s = s.with_uniform_robots(k, &mut ChaCha8Rng::seed_from_u64(seed));
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub sweep: f64,
    pub method: String,
    pub metric: String,
    pub value: f64,
    pub trials: usize,
    pub failures: usize,
    pub seed: u64,
}

/// Everything one method produced in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub sweep: f64,
    pub trial: usize,
    pub method: String,
    /// Per-trial metric values in linear units.
    pub metrics: Vec<(String, f64)>,
    pub error: Option<String>,
    pub decision: Option<ResourceDecision<f64>>,
    pub roamp_trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureSummary {
    pub numerical: usize,
    pub infeasible: usize,
    /// Largest numerical-failure fraction over all `(sweep, method)` cells.
    pub worst_numerical_fraction: f64,
    /// Cells in which every trial was infeasible.
    pub fully_infeasible_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub failures: FailureSummary,
    /// Filled only when `ExperimentSpec::record_trace` is set.
    pub records: Vec<TrialRecord>,
}

/// `10 log10(‖ĥ − h‖² / ‖h‖²)`, floored at [`NMSE_FLOOR_DB`].
pub fn nmse_db(estimate: &[Complex<f64>], truth: &[Complex<f64>]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!("estimate has {} entries, truth {}", estimate.len(), truth.len())));
    }
    let energy = norm_sqr(truth);
    if !(energy > 0.0) {
        return Err(Error::InvalidParameter("NMSE needs a non-zero reference channel".into()));
    }
    Ok(linear_to_db_floored(norm_sqr(&sub(estimate, truth)) / energy))
}

fn linear_to_db_floored(x: f64) -> f64 {
    if x > 0.0 {
        (10.0 * x.log10()).max(NMSE_FLOOR_DB)
    } else {
        NMSE_FLOOR_DB
    }
}

/// Per-trial random stream, independent of the sweep point.
pub fn trial_rng(master_seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial as u64);
    rng
}

/// How a metric's per-trial values are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Aggregate {
    Mean,
    /// Linear mean reported in dB.
    MeanDb,
}

fn aggregate_of(metric: &str) -> Aggregate {
    if metric.ends_with("_db") {
        Aggregate::MeanDb
    } else {
        Aggregate::Mean
    }
}

struct MethodSample {
    method: &'static str,
    outcome: Result<Vec<(&'static str, f64)>>,
    decision: Option<ResourceDecision<f64>>,
    trace: Vec<TraceRow>,
}

impl MethodSample {
    fn ok(method: &'static str, metrics: Vec<(&'static str, f64)>) -> Self {
        Self { method, outcome: Ok(metrics), decision: None, trace: Vec::new() }
    }

    fn failed(method: &'static str, error: Error) -> Self {
        Self { method, outcome: Err(error), decision: None, trace: Vec::new() }
    }
}

fn trial_setup(scenario: &Scenario<f64>, rng: &mut ChaCha8Rng) -> Result<(Scenario<f64>, ChannelRealization<f64>)> {
    let k = scenario.num_robots();
    let scenario = scenario.clone().with_uniform_robots(k, rng);
    let realization = sample_realization(&scenario, &scenario.array, rng)?;
    Ok((scenario, realization))
}

fn nmse_trial(spec: &ExperimentSpec, value: f64, scenario: &Scenario<f64>, rng: &mut ChaCha8Rng) -> Result<Vec<MethodSample>> {
    let (scenario, realization) = trial_setup(scenario, rng)?;
    let snr = match spec.kind {
        ExperimentKind::NmseVsSnr => 10f64.powf(value / 10.0),
        _ => spec.config.pilot_snr,
    };
    let array = &scenario.array;
    let grid = build_grid(array.num_ris_elements, array.ris_spacing)?;
    let mut model = build_measurement(&grid, &realization.bs_hap, array, scenario.num_pilots, rng)?;
    let h = realization.hap_uav.small_scale_channel();
    model.noise_variance = model.noise_variance_for_snr(&h, snr);
    let y = simulate_pilot_reception(&model, &realization.hap_uav, model.noise_variance, rng)?;
    let energy = norm_sqr(&h);
    let nmse = |est: &[Complex<f64>]| norm_sqr(&sub(est, &h)) / energy;

    let prior = SparsePrior::initial(scenario.num_paths, array.num_ris_elements)?;
    let config = RoampConfig { record_trace: spec.record_trace, ..RoampConfig::new(prior) };
    let roamp = match run_roamp(&y, &model, &config, Some(&h)) {
        Ok(est) => MethodSample {
            method: "roamp",
            outcome: Ok(vec![("nmse_db", nmse(&est.reconstructed_channel))]),
            decision: None,
            trace: est.trace,
        },
        Err(e) => MethodSample::failed("roamp", e),
    };
    let dictionary = grid.dictionary();
    let greedy = GreedyConfig::new(scenario.num_paths);
    let mut out = vec![roamp];
    type Solver = fn(&[Complex<f64>], &CMatrix<f64>, &GreedyConfig<f64>) -> Result<GreedyResult<f64>>;
    for (name, solver) in [("omp", omp as Solver), ("sp", sp as Solver)] {
        out.push(match solver(&y, model.effective_matrix(), &greedy) {
            Ok(r) => MethodSample::ok(name, vec![("nmse_db", nmse(&dictionary.mul_vec(&r.coefficients)))]),
            Err(e) => MethodSample::failed(name, e),
        });
    }
    Ok(out)
}

fn csi_of(spec: &ExperimentSpec) -> CsiSource {
    spec.config.csi.unwrap_or_else(|| spec.kind.default_csi())
}

fn gain_trial(spec: &ExperimentSpec, scenario: &Scenario<f64>, rng: &mut ChaCha8Rng) -> Result<Vec<MethodSample>> {
    let (scenario, realization) = trial_setup(scenario, rng)?;
    let cfg = &spec.config;
    let paths = alignment_paths(&scenario, &realization, csi_of(spec), cfg.pilot_snr, cfg.path_threshold, false, rng)?;
    let strategies = [PhaseStrategy::Aligned, PhaseStrategy::Random, PhaseStrategy::Zero, PhaseStrategy::Exhaustive];
    let mut out = Vec::with_capacity(strategies.len());
    for strategy in strategies {
        let sample = configure_phases(
            strategy,
            &paths.gains,
            &paths.angles,
            &realization,
            &scenario.array,
            cfg.exhaustive_resolution,
            rng,
        )
        .and_then(|phases| cascade_gain(&scenario, &scenario.array, &realization, &phases));
        out.push(match sample {
            Ok(g) => MethodSample::ok(strategy.name(), vec![("gain_db", g)]),
            Err(e) => MethodSample::failed(strategy.name(), e),
        });
    }
    Ok(out)
}

fn ee_trial(spec: &ExperimentSpec, scenario: &Scenario<f64>, rng: &mut ChaCha8Rng) -> Result<Vec<MethodSample>> {
    let (scenario, realization) = trial_setup(scenario, rng)?;
    let cfg = &spec.config;
    let schemes = [Scheme::Ptpb, Scheme::Mtp, Scheme::Mbl];
    let upstream =
        alignment_paths(&scenario, &realization, csi_of(spec), cfg.pilot_snr, cfg.path_threshold, spec.record_trace, rng)
            .and_then(|paths| {
                let phases = configure_phases(
                    PhaseStrategy::Aligned,
                    &paths.gains,
                    &paths.angles,
                    &realization,
                    &scenario.array,
                    cfg.exhaustive_resolution,
                    rng,
                )?;
                let delta_b = cascade_gain(&scenario, &scenario.array, &realization, &phases)?;
                Ok((delta_b, paths.estimate.map(|e| e.posterior.trace).unwrap_or_default()))
            });
    let (delta_b, trace) = match upstream {
        Ok(v) => v,
        Err(e @ (Error::NumericalFailure { .. } | Error::Infeasible(_))) => {
            return Ok(schemes.iter().map(|s| MethodSample::failed(s.name(), e.clone())).collect());
        }
        Err(e) => return Err(e),
    };
    let settings = OptimizerSettings::default();
    Ok(schemes
        .iter()
        .map(|scheme| match optimize(*scheme, &scenario, delta_b, &realization.utg, &settings) {
            Ok(report) => {
                let d = &report.decision;
                let mean_b = d.robot_blocklengths.iter().sum::<usize>() as f64 / d.robot_blocklengths.len() as f64;
                MethodSample {
                    method: scheme.name(),
                    outcome: Ok(vec![
                        ("min_ee", report.outcome.min_ee),
                        ("bs_power", d.bs_power),
                        ("uav_power", d.uav_power),
                        ("bs_blocklength", d.bs_blocklength as f64),
                        ("robot_blocklength", mean_b),
                    ]),
                    decision: Some(report.decision),
                    trace: if *scheme == Scheme::Ptpb { trace.clone() } else { Vec::new() },
                }
            }
            Err(e) => MethodSample::failed(scheme.name(), e),
        })
        .collect())
}

fn run_trial(spec: &ExperimentSpec, value: f64, scenario: &Scenario<f64>, trial: usize) -> Result<Vec<MethodSample>> {
    let mut rng = trial_rng(spec.seed, trial);
    let result = match spec.kind {
        ExperimentKind::NmseVsSnr | ExperimentKind::NmseVsPilots => nmse_trial(spec, value, scenario, &mut rng),
        ExperimentKind::GainVsN => gain_trial(spec, scenario, &mut rng),
        _ => ee_trial(spec, scenario, &mut rng),
    };
    match result {
        // A failure before any method ran counts against every method.
        Err(e @ (Error::NumericalFailure { .. } | Error::Infeasible(_))) => {
            Ok(spec.kind.methods().iter().map(|m| MethodSample::failed(m, e.clone())).collect())
        }
        other => other,
    }
}

/// Runs every sweep point and reduces trials into one row per
/// `(sweep, method, metric)`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut failures = FailureSummary::default();

    for &value in &spec.sweep {
        let scenario = spec.scenario_at(value)?;
        let samples: Vec<Vec<MethodSample>> =
            (0..spec.trials).into_par_iter().map(|t| run_trial(spec, value, &scenario, t)).collect::<Result<_>>()?;

        for &method in spec.kind.methods() {
            let mut sums: Vec<(&'static str, f64)> = Vec::new();
            let (mut ok, mut numerical, mut infeasible) = (0usize, 0usize, 0usize);
            for (trial, per_trial) in samples.iter().enumerate() {
                let Some(sample) = per_trial.iter().find(|s| s.method == method) else { continue };
                match &sample.outcome {
                    Ok(metrics) => {
                        ok += 1;
                        for (name, v) in metrics {
                            match sums.iter_mut().find(|(n, _)| n == name) {
                                Some(slot) => slot.1 += v,
                                None => sums.push((name, *v)),
                            }
                        }
                    }
                    Err(Error::NumericalFailure { .. }) => numerical += 1,
                    Err(Error::Infeasible(_)) => infeasible += 1,
                    Err(e) => return Err(e.clone()),
                }
                if spec.record_trace {
                    records.push(TrialRecord {
                        sweep: value,
                        trial,
                        method: method.to_string(),
                        metrics: sample
                            .outcome
                            .as_ref()
                            .map(|m| m.iter().map(|(n, v)| (n.to_string(), *v)).collect())
                            .unwrap_or_default(),
                        error: sample.outcome.as_ref().err().map(|e| e.to_string()),
                        decision: sample.decision.clone(),
                        roamp_trace: sample.trace.clone(),
                    });
                }
            }
            failures.numerical += numerical;
            failures.infeasible += infeasible;
            failures.worst_numerical_fraction = failures.worst_numerical_fraction.max(numerical as f64 / spec.trials as f64);
            if infeasible == spec.trials {
                failures.fully_infeasible_cells += 1;
            }
            let names: Vec<&'static str> =
                if sums.is_empty() { default_metrics(spec.kind) } else { sums.iter().map(|s| s.0).collect() };
            for name in names {
                let total = sums.iter().find(|s| s.0 == name).map_or(0.0, |s| s.1);
                let value_out = if ok == 0 {
                    f64::NAN
                } else {
                    let mean = total / ok as f64;
                    match aggregate_of(name) {
                        Aggregate::Mean => mean,
                        Aggregate::MeanDb => linear_to_db_floored(mean),
                    }
                };
                rows.push(ResultRow {
                    experiment: spec.kind.name().to_string(),
                    sweep: value,
                    method: method.to_string(),
                    metric: name.to_string(),
                    value: value_out,
                    trials: spec.trials,
                    failures: numerical + infeasible,
                    seed: spec.seed,
                });
            }
        }
    }
    Ok(ExperimentResult { rows, failures, records })
}

fn default_metrics(kind: ExperimentKind) -> Vec<&'static str> {
    match kind {
        ExperimentKind::NmseVsSnr | ExperimentKind::NmseVsPilots => vec!["nmse_db"],
        ExperimentKind::GainVsN => vec!["gain_db"],
        _ => vec!["min_ee", "bs_power", "uav_power", "bs_blocklength", "robot_blocklength"],
    }
}

/// Writes rows under [`CSV_HEADER`].
pub fn write_csv<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.sweep.to_string(),
            r.method.clone(),
            r.metric.clone(),
            r.value.to_string(),
            r.trials.to_string(),
            r.failures.to_string(),
            r.seed.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Value of one row, for tests and acceptance checks.
pub fn lookup(rows: &[ResultRow], sweep: f64, method: &str, metric: &str) -> Option<f64> {
    rows.iter().find(|r| r.sweep == sweep && r.method == method && r.metric == metric).map(|r| r.value)
}
