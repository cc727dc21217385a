//! Two-layer energy-efficiency optimization of powers and blocklengths.
//!
//! The BS layer picks `(P_b, b_u)` from the cascade gain `ΔB`; the UAV layer
//! alternates a Dinkelbach power update with per-robot blocklength searches.

pub mod bs_layer;
pub mod uav_layer;

use serde::{Deserialize, Serialize};

use crate::channel::UtgChannel;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::scenario::Scenario;

pub use bs_layer::{bs_blocklength_search, bs_layer_alternation, bs_objective, bs_power_closed_form, uav_dep, BsLayerOutcome};
pub use uav_layer::{
    dep_coefficients, golden_section_max, robot_blocklength_search, robot_dep, solve_dinkelbach, uav_power_dinkelbach,
    DinkelbachOutcome, FractionalProblem,
};

/// Relative slack when re-checking thresholds that the optimizer hit exactly.
pub(crate) const CONSTRAINT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Joint power and blocklength optimization.
    Ptpb,
    /// Maximum transmit powers, optimized blocklengths.
    Mtp,
    /// Maximum blocklengths, optimized powers.
    Mbl,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Ptpb => "ptpb",
            Scheme::Mtp => "mtp",
            Scheme::Mbl => "mbl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceDecision<T> {
    /// Watts.
    pub bs_power: T,
    /// Watts.
    pub uav_power: T,
    pub bs_blocklength: usize,
    pub robot_blocklengths: Vec<usize>,
    /// `P_b / P_B`.
    pub bs_power_norm: T,
    /// `P_u / P_U`.
    pub uav_power_norm: T,
}

impl<T: Real> ResourceDecision<T> {
    pub fn new(scenario: &Scenario<T>, bs_power: T, uav_power: T, bs_blocklength: usize, robot_blocklengths: Vec<usize>) -> Self {
        Self {
            bs_power,
            uav_power,
            bs_blocklength,
            robot_blocklengths,
            bs_power_norm: bs_power / scenario.bs_power_budget,
            uav_power_norm: uav_power / scenario.uav_power_budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub uav_dep: bool,
    pub robot_dep: Vec<bool>,
    pub blocklengths: bool,
    pub powers: bool,
}

impl ConstraintReport {
    pub fn all_satisfied(&self) -> bool {
        self.uav_dep && self.blocklengths && self.powers && self.robot_dep.iter().all(|b| *b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EEOutcome<T> {
    /// `[R_u(1 − ϵ_u) + R_k(1 − ϵ_k)] / (p̄_b + p̄_u)` per robot.
    pub per_robot_ee: Vec<T>,
    pub min_ee: T,
    pub uav_rate: T,
    pub robot_rates: Vec<T>,
    /// `Ω(SNR_u)`.
    pub uav_dep: T,
    /// `2γ_k / mean SNR_k`.
    pub robot_deps: Vec<T>,
    /// `ϵ_u = ε_u / ε_u^th`.
    pub uav_dep_norm: T,
    /// `ϵ_k = ε_k / ε_k^th`.
    pub robot_deps_norm: Vec<T>,
    pub constraints: ConstraintReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings<T> {
    /// BS layer followed by UAV layer, repeated while the min-EE improves.
    /// One pass keeps the BS layer at its `p̄_u = 1`, `b_k = B^max` seed.
    pub layer_passes: usize,
    pub bs_max_iterations: usize,
    pub uav_max_iterations: usize,
    pub dinkelbach_tolerance: T,
    pub dinkelbach_max_iterations: usize,
}

impl<T: Real> Default for OptimizerSettings<T> {
    fn default() -> Self {
        Self {
            layer_passes: 5,
            bs_max_iterations: 10,
            uav_max_iterations: 100,
            dinkelbach_tolerance: T::lit(1e-3),
            dinkelbach_max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport<T> {
    pub scheme: Scheme,
    pub decision: ResourceDecision<T>,
    pub outcome: EEOutcome<T>,
    pub bs_iterations: usize,
    pub uav_iterations: usize,
    /// Dinkelbach `η` sequence of the last UAV power update.
    pub eta_history: Vec<T>,
}

/// `R_k(1 − ϵ_k)` per robot at normalized UAV power `p̄_u`.
pub fn robot_throughputs<T: Real>(
    scenario: &Scenario<T>,
    utg: &[UtgChannel<T>],
    robot_blocklengths: &[usize],
    uav_power_norm: T,
) -> Result<Vec<T>> {
    if utg.len() != robot_blocklengths.len() {
        return Err(Error::DimensionMismatch(format!("{} robots but {} blocklengths", utg.len(), robot_blocklengths.len())));
    }
    let p = uav_power_norm * scenario.uav_power_budget;
    utg.iter()
        .zip(robot_blocklengths)
        .map(|(g, b)| {
            let dep = robot_dep(scenario, g, *b, p)?;
            Ok(scenario.robot_packet_bits / T::from_count(*b) * (T::one() - dep / scenario.dep_threshold_robot))
        })
        .collect()
}

/// Recomputes rates, DEPs and efficiencies of a decision from scratch and
/// checks every constraint.
pub fn evaluate<T: Real>(
    scenario: &Scenario<T>,
    delta_b: T,
    utg: &[UtgChannel<T>],
    decision: &ResourceDecision<T>,
) -> Result<EEOutcome<T>> {
    if utg.len() != decision.robot_blocklengths.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} robots but {} blocklengths",
            utg.len(),
            decision.robot_blocklengths.len()
        )));
    }
    let slack = T::one() + T::lit(CONSTRAINT_SLACK);
    let eps_u = uav_dep(decision.bs_blocklength, decision.bs_power, delta_b, scenario)?;
    let uav_rate = scenario.bs_packet_bits / T::from_count(decision.bs_blocklength);
    let mut robot_rates = Vec::with_capacity(utg.len());
    let mut robot_deps = Vec::with_capacity(utg.len());
    for (g, b) in utg.iter().zip(&decision.robot_blocklengths) {
        robot_rates.push(scenario.robot_packet_bits / T::from_count(*b));
        robot_deps.push(robot_dep(scenario, g, *b, decision.uav_power)?);
    }
    let denominator = decision.bs_power / scenario.bs_power_budget + decision.uav_power / scenario.uav_power_budget;
    let uav_term = uav_rate * (T::one() - eps_u / scenario.dep_threshold_uav);
    let per_robot_ee: Vec<T> = robot_rates
        .iter()
        .zip(&robot_deps)
        .map(|(r, e)| (uav_term + *r * (T::one() - *e / scenario.dep_threshold_robot)) / denominator)
        .collect();
    let min_ee = per_robot_ee.iter().copied().fold(T::infinity(), T::min);

    let in_range = |b: usize, lo: usize, hi: usize| (lo..=hi).contains(&b);
    let constraints = ConstraintReport {
        uav_dep: eps_u <= scenario.dep_threshold_uav * slack,
        robot_dep: robot_deps.iter().map(|e| *e <= scenario.dep_threshold_robot * slack).collect(),
        blocklengths: in_range(decision.bs_blocklength, scenario.bs_blocklength_min, scenario.bs_blocklength_max)
            && decision
                .robot_blocklengths
                .iter()
                .all(|b| in_range(*b, scenario.robot_blocklength_min, scenario.robot_blocklength_max)),
        powers: decision.bs_power > T::zero()
            && decision.bs_power <= scenario.bs_power_budget * slack
            && decision.uav_power > T::zero()
            && decision.uav_power <= scenario.uav_power_budget * slack,
    };
    let robot_deps_norm = robot_deps.iter().map(|e| *e / scenario.dep_threshold_robot).collect();
    Ok(EEOutcome {
        per_robot_ee,
        min_ee,
        uav_rate,
        robot_rates,
        uav_dep: eps_u,
        robot_deps,
        uav_dep_norm: eps_u / scenario.dep_threshold_uav,
        robot_deps_norm,
        constraints,
    })
}

/// Runs one scheme for a given cascade gain `ΔB` (1/W) and robot links.
pub fn optimize<T: Real>(
    scheme: Scheme,
    scenario: &Scenario<T>,
    delta_b: T,
    utg: &[UtgChannel<T>],
    settings: &OptimizerSettings<T>,
) -> Result<OptimizationReport<T>> {
    if utg.is_empty() {
        return Err(Error::InvalidParameter("at least one robot is required".into()));
    }
    let report = match scheme {
        Scheme::Ptpb => ptpb(scenario, delta_b, utg, settings)?,
        Scheme::Mtp => mtp(scenario, delta_b, utg)?,
        Scheme::Mbl => mbl(scenario, delta_b, utg, settings)?,
    };
    if !report.outcome.constraints.all_satisfied() {
        return Err(Error::NumericalFailure {
            iteration: report.uav_iterations,
            detail: format!("{} output violates a constraint: {:?}", scheme.name(), report.outcome.constraints),
        });
    }
    Ok(report)
}

fn min_of<T: Real>(v: &[T]) -> T {
    v.iter().copied().fold(T::infinity(), T::min)
}

fn ptpb<T: Real>(
    scenario: &Scenario<T>,
    delta_b: T,
    utg: &[UtgChannel<T>],
    settings: &OptimizerSettings<T>,
) -> Result<OptimizationReport<T>> {
    let mut blocklengths = vec![scenario.robot_blocklength_max; utg.len()];
    let mut uav_power_norm = T::one();
    let mut best: Option<(ResourceDecision<T>, EEOutcome<T>)> = None;
    let mut eta_history = Vec::new();
    let (mut bs_iterations, mut uav_iterations) = (0, 0);

    for _ in 0..settings.layer_passes.max(1) {
        let incumbent = best.as_ref().map(|(_, o)| o.min_ee);
        let robot_term = min_of(&robot_throughputs(scenario, utg, &blocklengths, uav_power_norm)?);
        let (bs, iterations) = bs_layer_alternation(delta_b, robot_term, uav_power_norm, scenario, settings.bs_max_iterations)?;
        bs_iterations += iterations;

        let mut previous_power = T::nan();
        for _ in 0..settings.uav_max_iterations.max(1) {
            uav_iterations += 1;
            let (_, dk) = uav_power_dinkelbach(
                scenario,
                utg,
                &blocklengths,
                bs.bs_blocklength,
                bs.bs_power,
                bs.uav_dep,
                settings.dinkelbach_tolerance,
                settings.dinkelbach_max_iterations,
            )?;
            eta_history = dk.eta_history.clone();
            let uav_power = dk.uav_power_norm * scenario.uav_power_budget;
            let updated = utg
                .iter()
                .enumerate()
                .map(|(i, g)| robot_blocklength_search(scenario, g, i, uav_power))
                .collect::<Result<Vec<_>>>()?;

            for b in [&blocklengths, &updated] {
                let decision = ResourceDecision::new(scenario, bs.bs_power, uav_power, bs.bs_blocklength, b.clone());
                let outcome = evaluate(scenario, delta_b, utg, &decision)?;
                if outcome.constraints.all_satisfied() && best.as_ref().is_none_or(|(_, o)| outcome.min_ee > o.min_ee) {
                    best = Some((decision, outcome));
                }
            }
            let settled = updated == blocklengths && (dk.uav_power_norm - previous_power).abs() <= T::lit(1e-9);
            blocklengths = updated;
            previous_power = dk.uav_power_norm;
            uav_power_norm = dk.uav_power_norm;
            if settled {
                break;
            }
        }

        let improved = match (incumbent, best.as_ref()) {
            (Some(old), Some((_, o))) => o.min_ee > old * (T::one() + T::lit(1e-12)),
            _ => true,
        };
        if !improved {
            break;
        }
        if let Some((d, _)) = &best {
            blocklengths = d.robot_blocklengths.clone();
            uav_power_norm = d.uav_power_norm;
        }
    }
    let (decision, outcome) = best.ok_or_else(|| Error::NumericalFailure {
        iteration: uav_iterations,
        detail: "no feasible iterate in the UAV layer".into(),
    })?;
    Ok(OptimizationReport { scheme: Scheme::Ptpb, decision, outcome, bs_iterations, uav_iterations, eta_history })
}

fn mtp<T: Real>(scenario: &Scenario<T>, delta_b: T, utg: &[UtgChannel<T>]) -> Result<OptimizationReport<T>> {
    let uav_power = scenario.uav_power_budget;
    let blocklengths =
        utg.iter().enumerate().map(|(i, g)| robot_blocklength_search(scenario, g, i, uav_power)).collect::<Result<Vec<_>>>()?;
    let robot_term = min_of(&robot_throughputs(scenario, utg, &blocklengths, T::one())?);
    let bs = bs_blocklength_search(delta_b, robot_term, T::one(), scenario, Some(scenario.bs_power_budget))?;
    let decision = ResourceDecision::new(scenario, scenario.bs_power_budget, uav_power, bs.bs_blocklength, blocklengths);
    let outcome = evaluate(scenario, delta_b, utg, &decision)?;
    Ok(OptimizationReport {
        scheme: Scheme::Mtp,
        decision,
        outcome,
        bs_iterations: 1,
        uav_iterations: 1,
        eta_history: Vec::new(),
    })
}

fn mbl<T: Real>(
    scenario: &Scenario<T>,
    delta_b: T,
    utg: &[UtgChannel<T>],
    settings: &OptimizerSettings<T>,
) -> Result<OptimizationReport<T>> {
    let b_u = scenario.bs_blocklength_max;
    let blocklengths = vec![scenario.robot_blocklength_max; utg.len()];
    let bs_power = bs_power_closed_form(b_u, delta_b, scenario)?;
    let eps_u = uav_dep(b_u, bs_power, delta_b, scenario)?;
    let (_, dk) = uav_power_dinkelbach(
        scenario,
        utg,
        &blocklengths,
        b_u,
        bs_power,
        eps_u,
        settings.dinkelbach_tolerance,
        settings.dinkelbach_max_iterations,
    )?;
    let decision = ResourceDecision::new(scenario, bs_power, dk.uav_power_norm * scenario.uav_power_budget, b_u, blocklengths);
    let outcome = evaluate(scenario, delta_b, utg, &decision)?;
    Ok(OptimizationReport {
        scheme: Scheme::Mbl,
        decision,
        outcome,
        bs_iterations: 1,
        uav_iterations: dk.iterations,
        eta_history: dk.eta_history,
    })
}
