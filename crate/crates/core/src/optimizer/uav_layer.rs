//! UAV transmit power (Dinkelbach) and robot blocklengths.

use serde::{Deserialize, Serialize};

use crate::channel::UtgChannel;
use crate::error::{Error, Infeasibility, Result};
use crate::scalar::Real;
use crate::scenario::Scenario;
use crate::urllc::{expected_dep_rayleigh, LinkBudget};

/// `max_p min_k [A + R_k(1 − c_k/p)] / (p_b + p)` over `p ∈ [p_min, 1]`.
///
/// `c_k/p` is robot `k`'s normalized DEP, so `p_min = max_k c_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalProblem<T> {
    /// `R_u(1 − ϵ_u)`.
    pub base: T,
    pub rates: Vec<T>,
    pub coefficients: Vec<T>,
    /// Normalized BS power `p̄_b`.
    pub bs_power_norm: T,
}

impl<T: Real> FractionalProblem<T> {
    pub fn minimum_power(&self) -> T {
        self.coefficients.iter().copied().fold(T::zero(), T::max)
    }

    /// `min_k V_k(p)`.
    pub fn numerator(&self, p: T) -> T {
        self.rates.iter().zip(&self.coefficients).map(|(r, c)| self.base + *r * (T::one() - *c / p)).fold(T::infinity(), T::min)
    }

    pub fn ratio(&self, p: T) -> T {
        self.numerator(p) / (self.bs_power_norm + p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DinkelbachOutcome<T> {
    pub uav_power_norm: T,
    /// Last parametric optimum `max_p min_k V_k(p) − η S(p)`.
    pub residual: T,
    pub efficiency: T,
    pub iterations: usize,
    pub eta_history: Vec<T>,
}

/// Maximizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_section_max<T: Real>(f: impl Fn(T) -> T, lo: T, hi: T, tolerance: T) -> (T, T) {
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tolerance {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    // Endpoints matter when the optimum sits on the boundary.
    [(lo, f(lo)), (hi, f(hi)), (c, fc), (d, fd)].into_iter().fold((lo, T::neg_infinity()), |best, cand| {
        if cand.1 > best.1 {
            cand
        } else {
            best
        }
    })
}

/// Dinkelbach iterations from `η = 0` until the parametric optimum changes by
/// at most `tolerance` or `max_iterations` is reached.
pub fn solve_dinkelbach<T: Real>(
    problem: &FractionalProblem<T>,
    tolerance: T,
    max_iterations: usize,
) -> Result<DinkelbachOutcome<T>> {
    if problem.rates.is_empty() || problem.rates.len() != problem.coefficients.len() {
        return Err(Error::InvalidParameter("fractional problem needs matching, non-empty rate and DEP terms".into()));
    }
    let p_min = problem.minimum_power();
    if p_min > T::one() {
        let robot = (0..problem.coefficients.len())
            .max_by(|a, b| problem.coefficients[*a].partial_cmp(&problem.coefficients[*b]).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(0);
        return Err(Infeasibility::UavMinimumPower { robot, required: p_min.as_f64() }.into());
    }
    let lo = p_min.max(T::lit(1e-12));
    let search_tol = T::lit(1e-12).max(T::epsilon().sqrt() * T::lit(4.0));
    let mut eta = T::zero();
    let mut y_prev = T::zero();
    let mut history = vec![eta];
    let mut p = T::one();
    let mut y = T::zero();
    let mut iterations = 0;
    for r in 1..=max_iterations.max(1) {
        iterations = r;
        let (p_star, y_star) =
            golden_section_max(|q| problem.numerator(q) - eta * (problem.bs_power_norm + q), lo, T::one(), search_tol);
        if !y_star.is_finite() {
            return Err(Error::NumericalFailure { iteration: r, detail: "Dinkelbach parametric optimum is not finite".into() });
        }
        p = p_star;
        y = y_star;
        eta = problem.ratio(p);
        history.push(eta);
        if (y - y_prev).abs() <= tolerance {
            break;
        }
        y_prev = y;
    }
    Ok(DinkelbachOutcome { uav_power_norm: p, residual: y, efficiency: eta, iterations, eta_history: history })
}

/// `c_k = 2γ_k / (|g_k|²/σ_k² · P_U · ε_k^th)` for each robot.
pub fn dep_coefficients<T: Real>(scenario: &Scenario<T>, utg: &[UtgChannel<T>], robot_blocklengths: &[usize]) -> Result<Vec<T>> {
    if utg.len() != robot_blocklengths.len() {
        return Err(Error::DimensionMismatch(format!("{} robots but {} blocklengths", utg.len(), robot_blocklengths.len())));
    }
    utg.iter()
        .zip(robot_blocklengths)
        .map(|(g, b)| {
            let budget = LinkBudget::new(*b, scenario.robot_packet_bits, T::zero())?;
            Ok(T::lit(2.0) * budget.gamma / (g.mean_snr_per_watt * scenario.uav_power_budget * scenario.dep_threshold_robot))
        })
        .collect()
}

/// Builds the UAV power problem for the given blocklengths and BS layer
/// outcome, then solves it.
#[allow(clippy::too_many_arguments)]
pub fn uav_power_dinkelbach<T: Real>(
    scenario: &Scenario<T>,
    utg: &[UtgChannel<T>],
    robot_blocklengths: &[usize],
    bs_blocklength: usize,
    bs_power: T,
    uav_dep: T,
    tolerance: T,
    max_iterations: usize,
) -> Result<(FractionalProblem<T>, DinkelbachOutcome<T>)> {
    let rate_u = scenario.bs_packet_bits / T::from_count(bs_blocklength);
    let problem = FractionalProblem {
        base: rate_u * (T::one() - uav_dep / scenario.dep_threshold_uav),
        rates: robot_blocklengths.iter().map(|b| scenario.robot_packet_bits / T::from_count(*b)).collect(),
        coefficients: dep_coefficients(scenario, utg, robot_blocklengths)?,
        bs_power_norm: bs_power / scenario.bs_power_budget,
    };
    let out = solve_dinkelbach(&problem, tolerance, max_iterations)?;
    Ok((problem, out))
}

/// Rayleigh-averaged DEP `ε̄_k` of one robot at UAV power `uav_power` (W).
pub fn robot_dep<T: Real>(scenario: &Scenario<T>, link: &UtgChannel<T>, blocklength: usize, uav_power: T) -> Result<T> {
    let budget = LinkBudget::new(blocklength, scenario.robot_packet_bits, T::zero())?;
    expected_dep_rayleigh(&budget, link.mean_snr(uav_power))
}

/// Blocklength maximizing `R_k(1 − ϵ_k)` under `ε̄_k ≤ ε_k^th`; ties go to
/// the shorter block.
pub fn robot_blocklength_search<T: Real>(
    scenario: &Scenario<T>,
    link: &UtgChannel<T>,
    robot: usize,
    uav_power: T,
) -> Result<usize> {
    let limit = scenario.dep_threshold_robot * (T::one() + T::lit(super::CONSTRAINT_SLACK));
    let mut best: Option<(usize, T)> = None;
    for b in scenario.robot_blocklength_min..=scenario.robot_blocklength_max {
        let dep = robot_dep(scenario, link, b, uav_power)?;
        if dep > limit {
            continue;
        }
        let value = scenario.robot_packet_bits / T::from_count(b) * (T::one() - dep / scenario.dep_threshold_robot);
        if best.is_none_or(|(_, v)| value > v) {
            best = Some((b, value));
        }
    }
    best.map(|(b, _)| b).ok_or_else(|| Infeasibility::RobotBlocklength { robot }.into())
}
