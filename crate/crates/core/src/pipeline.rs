//! End-to-end chain for one channel draw: pilot estimation, RIS alignment,
//! cascade gain and resource optimization.

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    make_bs_hap_channel, sample_hap_uav_channel, sample_utg_channels, BsHapChannel, SparseChannelInstance, UtgChannel,
};
use crate::error::Result;
use crate::linalg::{norm_sqr, sub};
use crate::optimizer::{optimize, OptimizationReport, OptimizerSettings, Scheme};
use crate::ris::{
    align_phases, baseline_phases, cascade_snr, exhaustive_phases, mrt_precoder, PhaseConfiguration, PhaseStrategy,
};
use crate::roamp::{run_roamp, PosteriorEstimate, RoampConfig};
use crate::scalar::Real;
use crate::scenario::{ArrayConfig, Scenario};
use crate::sparse::{build_grid, build_measurement, simulate_pilot_reception, SparsePrior};

/// Every random channel of one trial.
#[derive(Debug, Clone)]
pub struct ChannelRealization<T> {
    pub bs_hap: BsHapChannel<T>,
    pub hap_uav: SparseChannelInstance<T>,
    pub utg: Vec<UtgChannel<T>>,
}

pub fn sample_realization<T: Real, R: Rng + ?Sized>(
    scenario: &Scenario<T>,
    array: &ArrayConfig<T>,
    rng: &mut R,
) -> Result<ChannelRealization<T>> {
    let bs_hap = make_bs_hap_channel(scenario, array)?;
    let hap_uav = sample_hap_uav_channel(scenario, array, scenario.num_paths, rng)?;
    let utg = sample_utg_channels(scenario, rng)?;
    Ok(ChannelRealization { bs_hap, hap_uav, utg })
}

/// Where the path parameters used for RIS alignment come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsiSource {
    Perfect,
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimate<T> {
    pub posterior: PosteriorEstimate<T>,
    /// `‖ĥ − h‖² / ‖h‖²` on the small-scale channel.
    pub nmse: T,
}

/// Sends `scenario.num_pilots` pilots at per-measurement SNR `snr` and runs
/// the estimator on the echo.
pub fn estimate_channel<T: Real, R: Rng + ?Sized>(
    scenario: &Scenario<T>,
    array: &ArrayConfig<T>,
    realization: &ChannelRealization<T>,
    snr: T,
    config: &RoampConfig<T>,
    rng: &mut R,
) -> Result<ChannelEstimate<T>> {
    let grid = build_grid(array.num_ris_elements, array.ris_spacing)?;
    let mut model = build_measurement(&grid, &realization.bs_hap, array, scenario.num_pilots, rng)?;
    let h = realization.hap_uav.small_scale_channel();
    model.noise_variance = model.noise_variance_for_snr(&h, snr);
    let y = simulate_pilot_reception(&model, &realization.hap_uav, model.noise_variance, rng)?;
    let posterior = run_roamp(&y, &model, config, Some(&h))?;
    let nmse = norm_sqr(&sub(&posterior.reconstructed_channel, &h)) / norm_sqr(&h);
    Ok(ChannelEstimate { posterior, nmse })
}

/// Phase vector for `strategy`, using `(gains, angles)` for alignment and the
/// true channel for the exhaustive search at step `resolution` (rad).
pub fn configure_phases<T: Real, R: Rng + ?Sized>(
    strategy: PhaseStrategy,
    gains: &[Complex<T>],
    angles: &[T],
    realization: &ChannelRealization<T>,
    array: &ArrayConfig<T>,
    resolution: T,
    rng: &mut R,
) -> Result<PhaseConfiguration<T>> {
    match strategy {
        PhaseStrategy::Aligned => align_phases(gains, angles, realization.bs_hap.aoa, array, T::zero()),
        PhaseStrategy::Exhaustive => {
            exhaustive_phases(&realization.hap_uav.dense_channel, realization.bs_hap.aoa, array, resolution)
        }
        other => baseline_phases(other, array.num_ris_elements, rng),
    }
}

/// `ΔB = G |hᴴ Θ H v|² / σ0²` with MRT precoding and the true channels.
pub fn cascade_gain<T: Real>(
    scenario: &Scenario<T>,
    array: &ArrayConfig<T>,
    realization: &ChannelRealization<T>,
    phases: &PhaseConfiguration<T>,
) -> Result<T> {
    let v = mrt_precoder(&realization.bs_hap, array);
    let g = cascade_snr(
        &realization.hap_uav.dense_channel,
        phases,
        &realization.bs_hap,
        &v,
        scenario.bs_power_budget,
        scenario.antenna_gain,
        scenario.noise_power_uav,
    )?;
    Ok(g.delta_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings<T> {
    pub csi: CsiSource,
    /// Per-measurement pilot SNR (linear) when `csi` is `Estimated`.
    pub pilot_snr: T,
    pub phase_strategy: PhaseStrategy,
    pub scheme: Scheme,
    /// Activity level above which an estimated path is used for alignment.
    pub path_threshold: T,
    /// Step of the exhaustive phase search (rad).
    pub exhaustive_resolution: T,
    pub optimizer: OptimizerSettings<T>,
}

impl<T: Real> Default for PipelineSettings<T> {
    fn default() -> Self {
        Self {
            csi: CsiSource::Estimated,
            pilot_snr: T::lit(10.0),
            phase_strategy: PhaseStrategy::Aligned,
            scheme: Scheme::Ptpb,
            path_threshold: T::lit(0.5),
            exhaustive_resolution: T::lit(1e-4),
            optimizer: OptimizerSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput<T> {
    pub phases: PhaseConfiguration<T>,
    pub delta_b: T,
    pub estimate_nmse: Option<T>,
    pub report: OptimizationReport<T>,
}

/// Path parameters used for alignment, with the estimate when CSI is estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentPaths<T> {
    pub gains: Vec<Complex<T>>,
    pub angles: Vec<T>,
    pub estimate: Option<ChannelEstimate<T>>,
}

pub fn alignment_paths<T: Real, R: Rng + ?Sized>(
    scenario: &Scenario<T>,
    realization: &ChannelRealization<T>,
    csi: CsiSource,
    pilot_snr: T,
    path_threshold: T,
    record_trace: bool,
    rng: &mut R,
) -> Result<AlignmentPaths<T>> {
    let array = &scenario.array;
    match csi {
        CsiSource::Perfect => Ok(AlignmentPaths {
            gains: realization.hap_uav.small_scale_gains(),
            angles: realization.hap_uav.path_aods.clone(),
            estimate: None,
        }),
        CsiSource::Estimated => {
            let prior = SparsePrior::initial(scenario.num_paths, array.num_ris_elements)?;
            let config = RoampConfig { record_trace, ..RoampConfig::new(prior) };
            let est = estimate_channel(scenario, array, realization, pilot_snr, &config, rng)?;
            let grid = build_grid(array.num_ris_elements, array.ris_spacing)?;
            let (gains, angles) = est.posterior.paths(&grid.grid_points, path_threshold);
            Ok(AlignmentPaths { gains, angles, estimate: Some(est) })
        }
    }
}

/// Estimation (or perfect CSI), phase configuration, `ΔB`, then the chosen
/// optimization scheme.
pub fn run_pipeline<T: Real, R: Rng + ?Sized>(
    scenario: &Scenario<T>,
    realization: &ChannelRealization<T>,
    settings: &PipelineSettings<T>,
    rng: &mut R,
) -> Result<PipelineOutput<T>> {
    let array = &scenario.array;
    let paths = alignment_paths(scenario, realization, settings.csi, settings.pilot_snr, settings.path_threshold, false, rng)?;
    let phases = configure_phases(
        settings.phase_strategy,
        &paths.gains,
        &paths.angles,
        realization,
        array,
        settings.exhaustive_resolution,
        rng,
    )?;
    let delta_b = cascade_gain(scenario, array, realization, &phases)?;
    let report = optimize(settings.scheme, scenario, delta_b, &realization.utg, &settings.optimizer)?;
    Ok(PipelineOutput { phases, delta_b, estimate_nmse: paths.estimate.map(|e| e.nmse), report })
}
