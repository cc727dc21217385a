//! MRT precoding, cascade SNR and RIS phase configuration.

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{steering_vector, BsHapChannel};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::scalar::{cis, czero, Real};
use crate::scenario::ArrayConfig;
use crate::sparse::wrap_phase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseStrategy {
    Aligned,
    Random,
    Zero,
    Exhaustive,
}

impl PhaseStrategy {
    pub fn name(self) -> &'static str {
        match self {
            PhaseStrategy::Aligned => "aligned",
            PhaseStrategy::Random => "random",
            PhaseStrategy::Zero => "zero",
            PhaseStrategy::Exhaustive => "exhaustive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfiguration<T> {
    /// `θ_n ∈ [0, 2π)`.
    pub phase_shifts: Vec<T>,
    /// Path angle the surface is steered to, when the strategy has one.
    pub alignment_angle: Option<T>,
    pub strategy: PhaseStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeGain<T> {
    pub precoder: Vec<Complex<T>>,
    pub snr_u: T,
    /// `G |hᴴ Θ H v|² / σ0²` (1/W).
    pub delta_b: T,
}

/// `v = a_BS(υ_AoD) / √M`.
pub fn mrt_precoder<T: Real>(bs_hap: &BsHapChannel<T>, array: &ArrayConfig<T>) -> Vec<Complex<T>> {
    let m = array.num_bs_antennas;
    let scale = T::from_count(m).sqrt().recip();
    steering_vector(bs_hap.aod, m, array.bs_spacing).into_iter().map(|a| a * scale).collect()
}

/// `|sin(πN d̄ Δψ) / sin(π d̄ Δψ)|²`, equal to `N²` wherever the denominator vanishes.
pub fn coherent_gain_closed_form<T: Real>(delta_psi: T, n: usize, spacing: T) -> T {
    let nf = T::from_count(n);
    let x = T::PI() * spacing * delta_psi;
    let den = x.sin();
    // Both sines vanish together at the main and grating lobes.
    if den.abs() < T::lit(1e-12) {
        return nf * nf;
    }
    let ratio = (nf * x).sin() / den;
    if !ratio.is_finite() {
        return nf * nf;
    }
    ratio * ratio
}

/// `θ_n = θ_free − 2π n d̄ (sin ω − sin υ_AoA) mod 2π`.
pub fn phases_for_angle<T: Real>(angle: T, aoa: T, n: usize, spacing: T, theta_free: T) -> Vec<T> {
    let step = T::lit(2.0) * T::PI() * spacing * (angle.sin() - aoa.sin());
    (0..n).map(|i| wrap_phase(theta_free - step * T::from_count(i))).collect()
}

/// Minimizer of `Σ w_l |ω_l − ω|`, ties to the smaller angle. `None` when the
/// total weight is not positive.
pub fn weighted_median<T: Real>(values: &[T], weights: &[T]) -> Option<T> {
    let total: T = weights.iter().copied().sum();
    if !(total > T::zero()) || !total.is_finite() {
        return None;
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|a, b| values[*a].partial_cmp(&values[*b]).unwrap_or(std::cmp::Ordering::Equal));
    let half = total / T::lit(2.0);
    let mut acc = T::zero();
    for i in order {
        acc = acc + weights[i];
        if acc >= half {
            return Some(values[i]);
        }
    }
    None
}

/// `Σ_l |β_l cos ω_l| · |ω_l − ω|`.
pub fn alignment_objective<T: Real>(gains: &[Complex<T>], angles: &[T], angle: T) -> T {
    gains.iter().zip(angles).map(|(b, w)| (b.norm() * w.cos()).abs() * (*w - angle).abs()).sum()
}

/// Steers the surface to the weighted median of the path angles.
pub fn align_phases<T: Real>(
    gains: &[Complex<T>],
    angles: &[T],
    aoa: T,
    array: &ArrayConfig<T>,
    theta_free: T,
) -> Result<PhaseConfiguration<T>> {
    if gains.is_empty() || gains.len() != angles.len() {
        return Err(Error::InvalidParameter("align_phases needs matching, non-empty paths".into()));
    }
    if gains.iter().any(|g| !g.norm().is_finite()) || angles.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidParameter("path parameters must be finite".into()));
    }
    let weights: Vec<T> = gains.iter().zip(angles).map(|(b, w)| (b.norm() * w.cos()).abs()).collect();
    let angle = weighted_median(angles, &weights).unwrap_or_else(|| {
        let best = (0..gains.len())
            .max_by(|a, b| gains[*a].norm().partial_cmp(&gains[*b].norm()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(0);
        angles[best]
    });
    Ok(PhaseConfiguration {
        phase_shifts: phases_for_angle(angle, aoa, array.num_ris_elements, array.ris_spacing, theta_free),
        alignment_angle: Some(angle),
        strategy: PhaseStrategy::Aligned,
    })
}

/// `hᴴ Θ H v`.
pub fn cascade_amplitude<T: Real>(h: &[Complex<T>], phases: &[T], bs_hap: &BsHapChannel<T>, v: &[Complex<T>]) -> Complex<T> {
    let hv = bs_hap.matrix.mul_vec(v);
    h.iter().zip(phases).zip(&hv).fold(czero(), |acc, ((hn, t), g)| acc + hn.conj() * cis(*t) * *g)
}

/// `SNR_u = P_b G |hᴴ Θ H v|² / σ0²` evaluated with the dense matrices.
pub fn cascade_snr<T: Real>(
    h: &[Complex<T>],
    config: &PhaseConfiguration<T>,
    bs_hap: &BsHapChannel<T>,
    v: &[Complex<T>],
    bs_power: T,
    antenna_gain: T,
    noise_power: T,
) -> Result<CascadeGain<T>> {
    if h.len() != bs_hap.matrix.rows() || config.phase_shifts.len() != h.len() || v.len() != bs_hap.matrix.cols() {
        return Err(Error::DimensionMismatch("cascade operands".into()));
    }
    let amp = cascade_amplitude(h, &config.phase_shifts, bs_hap, v);
    let delta_b = antenna_gain * amp.norm_sqr() / noise_power;
    Ok(CascadeGain { precoder: v.to_vec(), snr_u: bs_power * delta_b, delta_b })
}

/// Same SNR from path parameters:
/// `|α|² |a_BSᴴ v|² P_b G / σ0² · |Σ_l conj(β_l) Σ_n e^{j(θ_n + 2π n d̄ (sin ω_l − sin υ_AoA))}|²`.
#[allow(clippy::too_many_arguments)]
pub fn path_domain_snr<T: Real>(
    gains: &[Complex<T>],
    angles: &[T],
    phases: &[T],
    bs_hap: &BsHapChannel<T>,
    array: &ArrayConfig<T>,
    v: &[Complex<T>],
    bs_power: T,
    antenna_gain: T,
    noise_power: T,
) -> T {
    let two_pi = T::lit(2.0) * T::PI();
    let sin_aoa = bs_hap.aoa.sin();
    let mut total = czero();
    for (b, w) in gains.iter().zip(angles) {
        let step = two_pi * array.ris_spacing * (w.sin() - sin_aoa);
        let inner = phases.iter().enumerate().fold(czero(), |acc, (n, t)| acc + cis(*t + step * T::from_count(n)));
        total = total + b.conj() * inner;
    }
    let bs_side = dot(&bs_hap.bs_steering(array), v).norm_sqr();
    bs_hap.complex_gain.norm_sqr() * bs_side * bs_power * antenna_gain / noise_power * total.norm_sqr()
}

/// Random or zero phases. Exhaustive search needs the channel; see
/// [`exhaustive_phases`].
pub fn baseline_phases<T: Real, R: Rng + ?Sized>(
    strategy: PhaseStrategy,
    n: usize,
    rng: &mut R,
) -> Result<PhaseConfiguration<T>> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let phase_shifts = match strategy {
        PhaseStrategy::Random => (0..n).map(|_| T::lit(rng.random_range(0.0..two_pi))).collect(),
        PhaseStrategy::Zero => vec![T::zero(); n],
        other => return Err(Error::InvalidParameter(format!("{} phases need channel knowledge", other.name()))),
    };
    Ok(PhaseConfiguration { phase_shifts, alignment_angle: None, strategy })
}

/// Grid search of the steering angle over `[0, π/2]` maximizing
/// `|Σ_n conj(h_n) e^{−j2π n d̄ sin ω}|²`, the cascade gain up to constants.
pub fn exhaustive_phases<T: Real>(
    h: &[Complex<T>],
    aoa: T,
    array: &ArrayConfig<T>,
    resolution: T,
) -> Result<PhaseConfiguration<T>> {
    if !(resolution > T::zero()) {
        return Err(Error::InvalidParameter("search resolution must be positive".into()));
    }
    let steps = (T::FRAC_PI_2() / resolution).floor().to_usize().unwrap_or(0);
    let two_pi = T::lit(2.0) * T::PI();
    let mut best = (T::neg_infinity(), T::zero());
    for i in 0..=steps {
        let angle = T::from_count(i) * resolution;
        let rot = cis(-two_pi * array.ris_spacing * angle.sin());
        let mut phasor = Complex::new(T::one(), T::zero());
        let mut sum = czero();
        for hn in h {
            sum = sum + hn.conj() * phasor;
            phasor = phasor * rot;
        }
        let g = sum.norm_sqr();
        if g > best.0 {
            best = (g, angle);
        }
    }
    Ok(PhaseConfiguration {
        phase_shifts: phases_for_angle(best.1, aoa, h.len(), array.ris_spacing, T::zero()),
        alignment_angle: Some(best.1),
        strategy: PhaseStrategy::Exhaustive,
    })
}
