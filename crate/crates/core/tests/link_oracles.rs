//! Finite-blocklength link model and UAV power control against brute force.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use nsin_core::channel::sample_utg_channels;
use nsin_core::optimizer::{golden_section_max, solve_dinkelbach, FractionalProblem};
use nsin_core::urllc::{exact_dep, expected_dep_rayleigh, linearized_dep, mar, q_function, q_inverse};
use nsin_core::{Infeasibility, LinkBudget, Scenario};

#[test]
fn mar_and_dep_are_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let b = rng.random_range(100..=1000);
        let snr = 10f64.powf(rng.random_range(-0.5..2.0));
        let eps = 10f64.powf(rng.random_range(-8.0..-1.0));
        let rate = mar(b, snr, eps).unwrap().rate;
        if rate <= 0.0 {
            continue;
        }
        let budget = LinkBudget::new(b, rate * b as f64, snr).unwrap();
        let back = exact_dep(&budget).unwrap();
        assert!((back - eps).abs() <= 1e-9 * eps, "b={b} snr={snr} eps={eps} back={back}");
    }
}

#[test]
fn q_inverse_round_trip() {
    for p in [1e-12f64, 1e-9, 5e-6, 1e-3, 0.1, 0.5, 0.9, 0.999] {
        let x = q_inverse(p).unwrap();
        assert!((q_function(x) - p).abs() <= 1e-10 * p, "p={p}");
    }
}

/// `E[Ω(SNR)]` over an exponential SNR by Monte Carlo, with the analytic
/// value of the same integral: `∫₀^∞ Ω(x) e^{−x/s}/s dx`.
fn rayleigh_average(budget: &LinkBudget, mean: f64, samples: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let exp = Exp::new(1.0 / mean).unwrap();
    let mc = (0..samples).map(|_| linearized_dep(&budget.with_snr(exp.sample(rng)))).sum::<f64>() / samples as f64;
    // Ω is continuous with slope −χ/2 on [lo, up], so E = (χ/2)∫_lo^up F(x) dx.
    let int_f = |x: f64| if x <= 0.0 { 0.0 } else { x - mean * (1.0 - (-x / mean).exp()) };
    let (lo, up) = (budget.snr_low, budget.snr_up);
    let analytic = 0.5 * budget.chi * (int_f(up) - int_f(lo));
    (mc, analytic)
}

#[test]
fn rayleigh_average_of_the_surrogate_is_gamma_over_mean() {
    // The high-SNR limit of the integral is γ/mean; the optimizer's
    // 2γ/mean is twice that, so it over-estimates the DEP.
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for (b, mean_factor) in [(100, 100.0), (300, 1000.0), (1000, 200.0)] {
        let budget = LinkBudget::new(b, 80.0, 0.0).unwrap();
        let mean = mean_factor * budget.gamma;
        let (mc, analytic) = rayleigh_average(&budget, mean, 1_000_000, &mut rng);
        let high_snr = budget.gamma / mean;
        assert!((mc - analytic).abs() < 0.02 * analytic, "mc {mc} analytic {analytic}");
        assert!((analytic - high_snr).abs() < 0.02 * high_snr, "analytic {analytic} vs γ/mean {high_snr}");
        let model = expected_dep_rayleigh(&budget, mean).unwrap();
        assert!(model >= mc, "model {model} must be conservative against {mc}");
    }
}

#[test]
fn surrogate_tracks_the_exact_dep_near_the_threshold() {
    let budget = LinkBudget::new(500, 0.16 * 500.0, 0.0).unwrap();
    let at_gamma = budget.with_snr(budget.gamma);
    assert!((linearized_dep(&at_gamma) - 0.5).abs() < 1e-12);
    assert!((exact_dep(&at_gamma).unwrap() - 0.5).abs() < 1e-9);
    let (lo, hi) = (budget.gamma - 2.0 / budget.chi, budget.gamma + 2.0 / budget.chi);
    let worst = (0..=4000)
        .map(|i| (lo + (hi - lo) * i as f64 / 4000.0).max(0.0))
        .map(|snr| {
            let b = budget.with_snr(snr);
            (linearized_dep(&b) - exact_dep(&b).unwrap()).abs()
        })
        .fold(0.0, f64::max);
    // Half-slope surrogate: the widest gap (≈0.173) sits near γ − 0.49/χ.
    assert!(worst < 0.18, "max gap {worst}");
}

#[test]
fn utg_fading_power_is_unit_exponential() {
    // One-sample Kolmogorov–Smirnov test of |h|² against Exp(1).
    let mut scenario = Scenario::reference();
    scenario.robot_positions = vec![scenario.area_center; 2000];
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut powers: Vec<f64> =
        (0..5).flat_map(|_| sample_utg_channels(&scenario, &mut rng).unwrap()).map(|c| c.small_scale.norm_sqr()).collect();
    powers.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = powers.len() as f64;
    let d = powers
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let cdf = 1.0 - (-x).exp();
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value.
    assert!(d < 1.63 / n.sqrt(), "KS statistic {d}");
}

fn random_problem(rng: &mut ChaCha8Rng) -> FractionalProblem<f64> {
    let k = rng.random_range(1..=10);
    FractionalProblem {
        base: rng.random_range(0.0..0.8),
        rates: (0..k).map(|_| 80.0 / rng.random_range(100..=1000) as f64).collect(),
        coefficients: (0..k).map(|_| 10f64.powf(rng.random_range(-4.0..-0.3))).collect(),
        bs_power_norm: 10f64.powf(rng.random_range(-3.0..0.0)),
    }
}

#[test]
fn dinkelbach_matches_dense_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..50 {
        let problem = random_problem(&mut rng);
        let out = solve_dinkelbach(&problem, 1e-3, 50).unwrap();
        let lo = problem.minimum_power();
        let steps = 100_000;
        let (p_grid, best) = (0..=steps)
            .map(|i| lo + (1.0 - lo) * i as f64 / steps as f64)
            .map(|p| (p, problem.ratio(p)))
            .fold((lo, f64::NEG_INFINITY), |a, c| if c.1 > a.1 { c } else { a });
        let got = problem.ratio(out.uav_power_norm);
        assert!(got >= best * (1.0 - 1e-3), "ratio {got} vs grid {best}");
        assert!(got <= best * (1.0 + 1e-3) + 1e-12, "ratio {got} exceeds grid {best}");
        assert!(
            (out.uav_power_norm - p_grid).abs() <= 1e-3 * p_grid.max(1e-3) + (1.0 - lo) / steps as f64 * 2.0,
            "power {} vs grid {p_grid}",
            out.uav_power_norm
        );
        assert!(out.residual.abs() <= 1e-3, "residual {}", out.residual);
        assert!(out.iterations <= 50);
    }
}

#[test]
fn dinkelbach_reports_unreachable_minimum_power() {
    let problem = FractionalProblem { base: 0.1, rates: vec![0.2, 0.3], coefficients: vec![0.4, 1.7], bs_power_norm: 0.1 };
    match solve_dinkelbach(&problem, 1e-3, 50) {
        Err(nsin_core::Error::Infeasible(Infeasibility::UavMinimumPower { robot, required })) => {
            assert_eq!(robot, 1);
            assert!((required - 1.7).abs() < 1e-12);
        }
        other => panic!("expected infeasibility, got {other:?}"),
    }
}

#[test]
fn golden_section_finds_interior_and_boundary_maxima() {
    let (x, fx) = golden_section_max(|x: f64| -(x - 0.3).powi(2), 0.0, 1.0, 1e-10);
    assert!((x - 0.3).abs() < 1e-6 && fx.abs() < 1e-12);
    let (x, _) = golden_section_max(|x: f64| -x, 0.2, 1.0, 1e-10);
    assert_eq!(x, 0.2);
    let (x, _) = golden_section_max(|x: f64| x, 0.2, 1.0, 1e-10);
    assert_eq!(x, 1.0);
}
