//! Physical channels: the LoS BS → HAP link, the sparse multipath HAP → UAV
//! link and the Rayleigh UAV → robot links.

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::{cis, db_to_linear, Real};
use crate::scenario::{ArrayConfig, Scenario};

/// ULA response: element `n` is `exp(−j·2π·n·spacing·sin(angle))`.
pub fn steering_vector<T: Real>(angle: T, length: usize, spacing: T) -> Vec<Complex<T>> {
    let step = -T::lit(2.0) * T::PI() * spacing * angle.sin();
    (0..length).map(|n| cis(step * T::from_count(n))).collect()
}

/// Derivative of [`steering_vector`] with respect to `angle`.
pub fn steering_derivative<T: Real>(angle: T, length: usize, spacing: T) -> Vec<Complex<T>> {
    let k = -T::lit(2.0) * T::PI() * spacing;
    let (s, c) = angle.sin_cos();
    (0..length)
        .map(|n| {
            let nf = T::from_count(n);
            // d/dθ e^{j k n sinθ} = j k n cosθ · e^{j k n sinθ}
            Complex::new(T::zero(), k * nf * c) * cis(k * nf * s)
        })
        .collect()
}

/// Angle of `to` as seen from a ULA at `from` lying along the x axis: the
/// arcsine of the x direction cosine, so `sin(angle)` is exactly what the
/// steering phase needs.
pub fn array_angle<T: Real>(from: [T; 3], to: [T; 3]) -> Result<T> {
    let d = distance(from, to);
    if !(d > T::zero()) {
        return Err(Error::DegenerateGeometry("coincident positions".into()));
    }
    Ok(((to[0] - from[0]) / d).max(-T::one()).min(T::one()).asin())
}

pub fn distance<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Free-space amplitude `λ/(4πd)` scaled by an excess loss in dB.
pub fn free_space_amplitude<T: Real>(wavelength: T, distance: T, excess_loss_db: T) -> T {
    wavelength / (T::lit(4.0) * T::PI() * distance) * db_to_linear(-excess_loss_db).sqrt()
}

/// Circularly-symmetric complex Gaussian sample with the given variance.
pub fn complex_gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R, variance: T) -> Complex<T> {
    let s = (variance.as_f64() / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex::new(T::lit(re * s), T::lit(im * s))
}

/// Rank-one LoS BS → HAP channel `H = α · a_RIS(aoa) · a_BS(aod)ᴴ` (N × M).
#[derive(Debug, Clone)]
pub struct BsHapChannel<T> {
    pub matrix: CMatrix<T>,
    pub complex_gain: Complex<T>,
    /// Departure angle at the BS array.
    pub aod: T,
    /// Arrival angle at the RIS.
    pub aoa: T,
}

impl<T: Real> BsHapChannel<T> {
    pub fn bs_steering(&self, array: &ArrayConfig<T>) -> Vec<Complex<T>> {
        steering_vector(self.aod, array.num_bs_antennas, array.bs_spacing)
    }

    pub fn ris_steering(&self, array: &ArrayConfig<T>) -> Vec<Complex<T>> {
        steering_vector(self.aoa, array.num_ris_elements, array.ris_spacing)
    }
}

pub fn make_bs_hap_channel<T: Real>(scenario: &Scenario<T>, array: &ArrayConfig<T>) -> Result<BsHapChannel<T>> {
    let bs = scenario.bs_position;
    let hap = scenario.hap_position;
    if !(hap[2] > bs[2]) {
        return Err(Error::DegenerateGeometry("HAP must be above the BS".into()));
    }
    let d = distance(bs, hap);
    let aod = array_angle(bs, hap)?;
    let aoa = array_angle(hap, bs)?;
    let amplitude = free_space_amplitude(array.wavelength, d, scenario.bs_hap_excess_loss_db);
    let phase = -T::lit(2.0) * T::PI() * (d / array.wavelength).fract();
    let complex_gain = cis(phase) * amplitude;

    let a_ris = steering_vector(aoa, array.num_ris_elements, array.ris_spacing);
    let a_bs = steering_vector(aod, array.num_bs_antennas, array.bs_spacing);
    let matrix = CMatrix::from_fn(array.num_ris_elements, array.num_bs_antennas, |r, c| complex_gain * a_ris[r] * a_bs[c].conj());
    Ok(BsHapChannel { matrix, complex_gain, aod, aoa })
}

/// One draw of the sparse HAP → UAV channel `h = Σ_l β_l a(ω_l)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseChannelInstance<T> {
    pub num_paths: usize,
    /// Small-scale coefficient times the large-scale amplitude.
    pub path_gains: Vec<Complex<T>>,
    pub path_aods: Vec<T>,
    pub dense_channel: Vec<Complex<T>>,
    pub large_scale_gain: T,
}

impl<T: Real> SparseChannelInstance<T> {
    pub fn from_paths(
        path_gains: Vec<Complex<T>>,
        path_aods: Vec<T>,
        large_scale_gain: T,
        num_elements: usize,
        spacing: T,
    ) -> Self {
        assert_eq!(path_gains.len(), path_aods.len());
        let dense_channel = synthesize(&path_gains, &path_aods, num_elements, spacing);
        Self { num_paths: path_gains.len(), path_gains, path_aods, dense_channel, large_scale_gain }
    }

    /// Channel with the large-scale amplitude divided out; this is what the
    /// estimators recover.
    pub fn small_scale_channel(&self) -> Vec<Complex<T>> {
        self.dense_channel.iter().map(|v| *v / self.large_scale_gain).collect()
    }

    pub fn small_scale_gains(&self) -> Vec<Complex<T>> {
        self.path_gains.iter().map(|v| *v / self.large_scale_gain).collect()
    }
}

/// `Σ_l gains[l] · a(angles[l])`.
pub fn synthesize<T: Real>(gains: &[Complex<T>], angles: &[T], length: usize, spacing: T) -> Vec<Complex<T>> {
    let mut h = vec![Complex::new(T::zero(), T::zero()); length];
    for (g, w) in gains.iter().zip(angles) {
        for (hn, an) in h.iter_mut().zip(steering_vector(*w, length, spacing)) {
            *hn = *hn + *g * an;
        }
    }
    h
}

/// Draws `num_paths` AoDs uniformly within `angular_spread` of the HAP → UAV
/// line of sight, with i.i.d. `CN(0, 1/L)` small-scale coefficients.
pub fn sample_hap_uav_channel<T: Real, R: Rng + ?Sized>(
    scenario: &Scenario<T>,
    array: &ArrayConfig<T>,
    num_paths: usize,
    rng: &mut R,
) -> Result<SparseChannelInstance<T>> {
    if num_paths == 0 {
        return Err(Error::InvalidParameter("num_paths must be at least 1".into()));
    }
    let los = array_angle(scenario.hap_position, scenario.uav_position)?;
    let half = scenario.angular_spread.as_f64() / 2.0;
    let d = distance(scenario.hap_position, scenario.uav_position);
    let large = free_space_amplitude(array.wavelength, d, scenario.hap_uav_excess_loss_db);
    let var = T::one() / T::from_count(num_paths);
    let mut gains = Vec::with_capacity(num_paths);
    let mut aods = Vec::with_capacity(num_paths);
    for _ in 0..num_paths {
        aods.push(los + T::lit(rng.random_range(-half..=half)));
        gains.push(complex_gaussian(rng, var) * large);
    }
    Ok(SparseChannelInstance::from_paths(gains, aods, large, array.num_ris_elements, array.ris_spacing))
}

/// UAV → robot link: large-scale amplitude plus one Rayleigh draw.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UtgChannel<T> {
    pub large_scale_gain: T,
    /// Unit-mean-power Rayleigh coefficient.
    pub small_scale: Complex<T>,
    /// `|g_L|² / σ_k²` (1/W).
    pub mean_snr_per_watt: T,
}

impl<T: Real> UtgChannel<T> {
    pub fn mean_snr(&self, uav_power: T) -> T {
        uav_power * self.mean_snr_per_watt
    }

    /// `P_u |g_k|² / σ_k²` for this fading draw.
    pub fn instantaneous_snr(&self, uav_power: T) -> T {
        uav_power * self.mean_snr_per_watt * self.small_scale.norm_sqr()
    }
}

pub fn sample_utg_channels<T: Real, R: Rng + ?Sized>(scenario: &Scenario<T>, rng: &mut R) -> Result<Vec<UtgChannel<T>>> {
    if scenario.robot_positions.is_empty() {
        return Err(Error::InvalidParameter("at least one robot is required".into()));
    }
    Ok(scenario
        .robot_positions
        .iter()
        .map(|p| {
            let d = distance(scenario.uav_position, [p[0], p[1], T::zero()]);
            let large = scenario.utg_path_loss.amplitude(d);
            UtgChannel {
                large_scale_gain: large,
                small_scale: complex_gaussian(rng, T::one()),
                mean_snr_per_watt: large * large / scenario.noise_power_robot,
            }
        })
        .collect())
}
