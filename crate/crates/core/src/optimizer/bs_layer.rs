//! BS transmit power and BS blocklength.

use serde::{Deserialize, Serialize};

use crate::error::{Infeasibility, Result};
use crate::scalar::Real;
use crate::scenario::Scenario;
use crate::urllc::{linearized_dep, LinkBudget};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsLayerOutcome<T> {
    pub bs_blocklength: usize,
    pub bs_power: T,
    /// Surrogate DEP `Ω(SNR_u)` at the chosen point.
    pub uav_dep: T,
    pub objective: T,
}

/// `Ω(P_b ΔB)` for blocklength `b_u`.
pub fn uav_dep<T: Real>(b_u: usize, bs_power: T, delta_b: T, scenario: &Scenario<T>) -> Result<T> {
    let budget = LinkBudget::new(b_u, scenario.bs_packet_bits, bs_power * delta_b)?;
    Ok(linearized_dep(&budget))
}

/// `P_b(b_u) = min{P_B, SNR_up / ΔB}`; infeasible when even that leaves
/// `Ω(SNR_u)` above the UAV threshold.
pub fn bs_power_closed_form<T: Real>(b_u: usize, delta_b: T, scenario: &Scenario<T>) -> Result<T> {
    if !(delta_b > T::zero()) {
        return Err(Infeasibility::ZeroCascadeGain.into());
    }
    let budget = LinkBudget::new(b_u, scenario.bs_packet_bits, T::zero())?;
    let p = scenario.bs_power_budget.min(budget.snr_up / delta_b);
    if uav_dep(b_u, p, delta_b, scenario)? > scenario.dep_threshold_uav {
        return Err(Infeasibility::BsLayer.into());
    }
    Ok(p)
}

/// `(R_u(1 − ϵ_u) + robot_term) / (p̄_b + p̄_u)`, where `robot_term` is
/// `min_k R_k(1 − ϵ_k)`.
pub fn bs_objective<T: Real>(
    b_u: usize,
    bs_power: T,
    delta_b: T,
    robot_term: T,
    uav_power_norm: T,
    scenario: &Scenario<T>,
) -> Result<T> {
    let rate = scenario.bs_packet_bits / T::from_count(b_u);
    let eps = uav_dep(b_u, bs_power, delta_b, scenario)? / scenario.dep_threshold_uav;
    Ok((rate * (T::one() - eps) + robot_term) / (bs_power / scenario.bs_power_budget + uav_power_norm))
}

/// Exhaustive search over `b_u` with `P_b(b_u)` substituted, or with the
/// power pinned when `fixed_power` is given. Ties go to the smaller `b_u`.
pub fn bs_blocklength_search<T: Real>(
    delta_b: T,
    robot_term: T,
    uav_power_norm: T,
    scenario: &Scenario<T>,
    fixed_power: Option<T>,
) -> Result<BsLayerOutcome<T>> {
    let mut best: Option<BsLayerOutcome<T>> = None;
    for b_u in scenario.bs_blocklength_min..=scenario.bs_blocklength_max {
        let p = match fixed_power {
            Some(p) => {
                if uav_dep(b_u, p, delta_b, scenario)? > scenario.dep_threshold_uav {
                    continue;
                }
                p
            }
            None => match bs_power_closed_form(b_u, delta_b, scenario) {
                Ok(p) => p,
                Err(crate::error::Error::Infeasible(_)) => continue,
                Err(e) => return Err(e),
            },
        };
        let objective = bs_objective(b_u, p, delta_b, robot_term, uav_power_norm, scenario)?;
        if best.is_none_or(|b| objective > b.objective) {
            let dep = uav_dep(b_u, p, delta_b, scenario)?;
            best = Some(BsLayerOutcome { bs_blocklength: b_u, bs_power: p, uav_dep: dep, objective });
        }
    }
    best.ok_or_else(|| Infeasibility::BsLayer.into())
}

/// Alternates the closed-form power and the blocklength search from
/// `b_u = B_u^max` until the blocklength repeats. Returns the number of
/// alternations performed.
pub fn bs_layer_alternation<T: Real>(
    delta_b: T,
    robot_term: T,
    uav_power_norm: T,
    scenario: &Scenario<T>,
    max_iterations: usize,
) -> Result<(BsLayerOutcome<T>, usize)> {
    let mut b_u = scenario.bs_blocklength_max;
    let mut last = None;
    for i in 1..=max_iterations.max(1) {
        let out = bs_blocklength_search(delta_b, robot_term, uav_power_norm, scenario, None)?;
        let repeated = out.bs_blocklength == b_u;
        b_u = out.bs_blocklength;
        last = Some(out);
        if repeated {
            return Ok((out, i));
        }
    }
    Ok((last.expect("at least one iteration"), max_iterations.max(1)))
}
