//! Finite-blocklength reliability: normal-approximation DEP and rate, the
//! piecewise-linear DEP surrogate and its Rayleigh average.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Gaussian tail `Q(x) = ½ erfc(x/√2)`.
pub fn q_function<T: Real>(x: T) -> T {
    let x = x.as_f64();
    if x == f64::INFINITY {
        return T::zero();
    }
    if x == f64::NEG_INFINITY {
        return T::one();
    }
    T::lit(0.5 * erfc(x / std::f64::consts::SQRT_2))
}

/// Inverse of [`q_function`] on `(0, 1)`.
pub fn q_inverse<T: Real>(p: T) -> Result<T> {
    let p = p.as_f64();
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("Q⁻¹ needs a probability in (0, 1), got {p}")));
    }
    Ok(T::lit(std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)))
}

/// Operating point of one finite-blocklength link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget<T> {
    pub blocklength: usize,
    pub packet_bits: T,
    /// `R = F / b` (bits/symbol).
    pub rate: T,
    pub snr: T,
    /// `γ = 2^R − 1`.
    pub gamma: T,
    /// `χ = √(b/2π) (2^{2R} − 1)^{−1/2}`.
    pub chi: T,
    pub snr_low: T,
    pub snr_up: T,
}

impl<T: Real> LinkBudget<T> {
    pub fn new(blocklength: usize, packet_bits: T, snr: T) -> Result<Self> {
        if blocklength == 0 {
            return Err(Error::InvalidParameter("blocklength must be at least 1".into()));
        }
        if !(packet_bits > T::zero()) {
            return Err(Error::InvalidParameter("packet size must be positive".into()));
        }
        let b = T::from_count(blocklength);
        let rate = packet_bits / b;
        let two = T::lit(2.0);
        let gamma = two.powf(rate) - T::one();
        let chi = (b / (two * T::PI())).sqrt() / (two.powf(two * rate) - T::one()).sqrt();
        let half_width = chi.recip();
        Ok(Self { blocklength, packet_bits, rate, snr, gamma, chi, snr_low: gamma - half_width, snr_up: gamma + half_width })
    }

    pub fn with_snr(&self, snr: T) -> Self {
        Self { snr, ..*self }
    }
}

/// `Q(√(b / (1 − (1+SNR)^{−2})) (log₂(1+SNR) − R) ln 2)`.
pub fn exact_dep<T: Real>(budget: &LinkBudget<T>) -> Result<T> {
    let snr = budget.snr.as_f64();
    if !(snr > 0.0) {
        return Err(Error::InvalidParameter(format!("SNR must be positive, got {snr}")));
    }
    if snr.is_infinite() {
        return Ok(T::zero());
    }
    let b = budget.blocklength as f64;
    let dispersion = 1.0 - (1.0 + snr).powi(-2);
    let arg = (b / dispersion).sqrt() * (snr.ln_1p() / std::f64::consts::LN_2 - budget.rate.as_f64()) * std::f64::consts::LN_2;
    Ok(q_function(T::lit(arg)))
}

/// Piecewise-linear surrogate: 1 below `snr_low`, 0 above `snr_up`,
/// `½ − (χ/2)(SNR − γ)` in between.
pub fn linearized_dep<T: Real>(budget: &LinkBudget<T>) -> T {
    let half = T::lit(0.5);
    if budget.snr <= budget.snr_low {
        T::one()
    } else if budget.snr >= budget.snr_up {
        T::zero()
    } else {
        half - half * budget.chi * (budget.snr - budget.gamma)
    }
}

/// High-SNR Rayleigh average of the surrogate, `2γ / mean_SNR`, clamped to `[0, 1]`.
pub fn expected_dep_rayleigh<T: Real>(budget: &LinkBudget<T>, mean_snr: T) -> Result<T> {
    if !(mean_snr > T::zero()) {
        return Err(Error::InvalidParameter(format!("mean SNR must be positive, got {mean_snr}")));
    }
    Ok((T::lit(2.0) * budget.gamma / mean_snr).max(T::zero()).min(T::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverallDep<T> {
    /// `ε_k + ε_u − ε_u ε_k`.
    pub exact: T,
    /// `ε_k + ε_u`.
    pub bound: T,
}

/// Two-hop decode-and-forward DEP.
pub fn overall_dep<T: Real>(eps_u: T, eps_k: T) -> Result<OverallDep<T>> {
    for (name, e) in [("ε_u", eps_u), ("ε_k", eps_k)] {
        if !(e >= T::zero() && e <= T::one()) {
            return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {e}")));
        }
    }
    Ok(OverallDep { exact: eps_k + eps_u - eps_u * eps_k, bound: eps_k + eps_u })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxRate<T> {
    pub rate: T,
    /// The normal approximation is loose below 50 symbols.
    pub short_blocklength: bool,
}

/// `log₂(1+SNR) − √((1 − (1+SNR)^{−2}) / b) · Q⁻¹(ε) / ln 2`.
pub fn mar<T: Real>(blocklength: usize, snr: T, epsilon: T) -> Result<MaxRate<T>> {
    if blocklength == 0 {
        return Err(Error::InvalidParameter("blocklength must be at least 1".into()));
    }
    if !(snr > T::zero()) {
        return Err(Error::InvalidParameter(format!("SNR must be positive, got {snr}")));
    }
    let qinv = q_inverse(epsilon)?.as_f64();
    let s = snr.as_f64();
    let b = blocklength as f64;
    let rate = s.ln_1p() / std::f64::consts::LN_2 - ((1.0 - (1.0 + s).powi(-2)) / b).sqrt() * qinv / std::f64::consts::LN_2;
    Ok(MaxRate { rate: T::lit(rate), short_blocklength: blocklength < 50 })
}
