//! Acceptance table: one `PASS`/`FAIL` line per criterion at its stated
//! tolerance, with the measured value. Run with `--nocapture` to see the
//! table; a test fails when any of its lines fails.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use nsin_core::channel::{complex_gaussian, make_bs_hap_channel, sample_utg_channels};
use nsin_core::harness::{lookup, run_experiment, write_csv, ExperimentKind, ExperimentResult, ExperimentSpec, SimulationConfig};
use nsin_core::linalg::CMatrix;
use nsin_core::optimizer::{evaluate, optimize, solve_dinkelbach, FractionalProblem, OptimizerSettings, Scheme};
use nsin_core::ris::{alignment_objective, coherent_gain_closed_form, weighted_median};
use nsin_core::roamp::{module_a_lmmse, offset_gradient, surrogate, EstimatorState};
use nsin_core::sparse::{build_grid, build_measurement};
use nsin_core::urllc::{exact_dep, expected_dep_rayleigh, linearized_dep, mar};
use nsin_core::{LinkBudget, Scenario, SparsePrior};

type C = Complex<f64>;

struct Table {
    section: &'static str,
    failed: Vec<String>,
}

impl Table {
    fn new(section: &'static str) -> Self {
        Self { section, failed: Vec::new() }
    }

    fn line(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" }, self.section);
        if !pass {
            self.failed.push(name.to_string());
        }
    }

    fn finish(self) {
        assert!(self.failed.is_empty(), "failed criteria: {:?}", self.failed);
    }
}

fn run(kind: ExperimentKind, config: SimulationConfig, trials: usize, seed: u64) -> ExperimentResult {
    run_experiment(&ExperimentSpec::new(kind, config, trials, seed)).unwrap()
}

fn series(result: &ExperimentResult, kind: ExperimentKind, method: &str, metric: &str) -> Vec<(f64, f64)> {
    kind.default_sweep().into_iter().map(|s| (s, lookup(&result.rows, s, method, metric).unwrap())).collect()
}

fn module_a_worst_error(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(4..=12);
        let p = rng.random_range(1..=n);
        let g = DMatrix::from_fn(n, n, |_, _| complex_gaussian(rng, 1.0));
        let qa = g.qr().q().adjoint();
        let f = CMatrix::from_fn(p, n, |r, c| qa[(r, c)]);
        let v = rng.random_range(0.05..3.0);
        let sigma2 = rng.random_range(1e-3..1.0);
        let x_pri: Vec<C> = (0..n).map(|_| complex_gaussian(rng, 1.0)).collect();
        let y: Vec<C> = (0..p).map(|_| complex_gaussian(rng, 1.0)).collect();
        let mut state = EstimatorState::new(n, SparsePrior::new(0.3, C::new(0.0, 0.0), 1.0).unwrap());
        state.x_pri_a = x_pri.clone();
        state.v_pri_a = v;
        module_a_lmmse(&mut state, &y, &f, sigma2).unwrap();

        let fa = DMatrix::from_fn(p, n, |r, c| f[(r, c)]);
        let s_inv = ((&fa * fa.adjoint()).scale(v) + DMatrix::<C>::identity(p, p).scale(sigma2)).try_inverse().unwrap();
        let xv = DVector::from_vec(x_pri);
        let gain = fa.adjoint() * &s_inv;
        let x_ref = &xv + (&gain * (DVector::from_vec(y) - &fa * &xv)).scale(v);
        let v_ref = (DMatrix::<C>::identity(n, n).scale(v) - (&gain * &fa).scale(v * v)).trace().re / n as f64;
        for (a, b) in state.x_post_a.iter().zip(x_ref.iter()) {
            worst = worst.max((a - b).norm());
        }
        worst = worst.max((state.v_post_a - v_ref).abs());
    }
    worst
}

fn gradient_worst_relative_error(rng: &mut ChaCha8Rng) -> f64 {
    let scenario = Scenario::reference();
    let array = scenario.array.with_ris_elements(16).unwrap();
    let bs_hap = make_bs_hap_channel(&scenario, &array).unwrap();
    let grid = build_grid(16, array.ris_spacing).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut model = build_measurement(&grid, &bs_hap, &array, 10, rng).unwrap();
        let offsets: Vec<f64> =
            (0..16).map(|n| 0.5 * rng.random_range(model.grid.lower_bounds[n]..model.grid.upper_bounds[n])).collect();
        model.set_offsets(&offsets);
        let sigma2 = rng.random_range(0.01..0.5);
        let y: Vec<C> = (0..10).map(|_| complex_gaussian(rng, 1.0)).collect();
        let mut state = EstimatorState::new(16, SparsePrior::initial(3, 16).unwrap());
        state.x_post_b = (0..16).map(|_| complex_gaussian(rng, 1.0)).collect();
        state.v_post_b = rng.random_range(0.01..0.3);
        let grad = offset_gradient(&state, &y, &model, sigma2, None);
        for (n, g) in grad.iter().enumerate() {
            let eval = |delta: f64| {
                let mut o = offsets.clone();
                o[n] += delta;
                let mut m = model.clone();
                m.set_offsets(&o);
                surrogate(&y, m.effective_matrix(), &state.x_post_b, state.v_post_b, sigma2)
            };
            let fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
            worst = worst.max((g - fd).abs() / g.abs().max(1e-3));
        }
    }
    worst
}

#[test]
fn oracle_equivalences() {
    let mut t = Table::new("oracles");
    let mut rng = ChaCha8Rng::seed_from_u64(1001);

    let e = module_a_worst_error(&mut rng);
    t.line("module A equals direct LMMSE (50 instances, 1e-10)", e <= 1e-10, format!("max error {e:.2e}"));

    let e = gradient_worst_relative_error(&mut rng);
    t.line("offset gradient equals finite differences (20 states, 1e-4 rel)", e <= 1e-4, format!("max rel error {e:.2e}"));

    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=256);
        let dpsi: f64 = rng.random_range(-2.0..2.0);
        let direct = (0..n).map(|i| C::from_polar(1.0, std::f64::consts::PI * i as f64 * dpsi)).sum::<C>().norm_sqr();
        worst = worst.max((coherent_gain_closed_form(dpsi, n, 0.5) - direct).abs() / (n * n) as f64);
    }
    let peak = coherent_gain_closed_form(0.0, 128, 0.5) == 128.0 * 128.0;
    t.line(
        "Dirichlet form equals direct sum (50 points, 1e-10); N² at 0",
        worst <= 1e-10 && peak,
        format!("max error/N² {worst:.2e}"),
    );

    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let l = rng.random_range(1..=10);
        let gains: Vec<C> = (0..l).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let angles: Vec<f64> = (0..l).map(|_| rng.random_range(-1.4..1.4)).collect();
        let weights: Vec<f64> = gains.iter().zip(&angles).map(|(b, w)| (b.norm() * w.cos()).abs()).collect();
        let at = alignment_objective(&gains, &angles, weighted_median(&angles, &weights).unwrap());
        let lim = std::f64::consts::FRAC_PI_2;
        let grid = (0..=100_000)
            .map(|i| alignment_objective(&gains, &angles, -lim + 2.0 * lim * i as f64 / 1e5))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(at - grid);
    }
    t.line(
        "weighted median matches 1e5-point grid minimum (100 instances)",
        worst <= 1e-12,
        format!("max excess over grid {worst:.2e}"),
    );

    let (mut ratio_gap, mut residual): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let k = rng.random_range(1..=10);
        let problem = FractionalProblem {
            base: rng.random_range(0.0..0.8),
            rates: (0..k).map(|_| 80.0 / rng.random_range(100..=1000) as f64).collect(),
            coefficients: (0..k).map(|_| 10f64.powf(rng.random_range(-4.0..-0.3))).collect(),
            bs_power_norm: 10f64.powf(rng.random_range(-3.0..0.0)),
        };
        let out = solve_dinkelbach(&problem, 1e-3, 50).unwrap();
        let lo = problem.minimum_power();
        let best = (0..=100_000).map(|i| problem.ratio(lo + (1.0 - lo) * i as f64 / 1e5)).fold(f64::NEG_INFINITY, f64::max);
        ratio_gap = ratio_gap.max((problem.ratio(out.uav_power_norm) - best).abs() / best);
        residual = residual.max(out.residual.abs());
    }
    t.line(
        "Dinkelbach matches 1e5-point grid (50 instances, 1e-3 rel; |y| ≤ 1e-3)",
        ratio_gap <= 1e-3 && residual <= 1e-3,
        format!("max rel gap {ratio_gap:.2e}, max residual {residual:.2e}"),
    );

    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let b = rng.random_range(100..=1000);
        let snr = 10f64.powf(rng.random_range(-0.5..2.0));
        let eps = 10f64.powf(rng.random_range(-8.0..-1.0));
        let rate = mar(b, snr, eps).unwrap().rate;
        if rate > 0.0 {
            let back = exact_dep(&LinkBudget::new(b, rate * b as f64, snr).unwrap()).unwrap();
            worst = worst.max((back - eps).abs() / eps);
        }
    }
    t.line("MAR/DEP round trip (1e-9 rel)", worst <= 1e-9, format!("max rel error {worst:.2e}"));
    t.finish();
}

#[test]
fn estimation_trends() {
    let mut t = Table::new("estimation");
    let kind = ExperimentKind::NmseVsSnr;
    let result = run(kind, SimulationConfig::default(), 200, 1);
    let roamp = series(&result, kind, "roamp", "nmse_db");
    let omp = series(&result, kind, "omp", "nmse_db");
    let sp = series(&result, kind, "sp", "nmse_db");
    let decreasing = roamp.windows(2).all(|w| w[1].1 < w[0].1);
    let fmt: Vec<String> = roamp.iter().map(|(s, v)| format!("{s}:{v:.2}")).collect();
    t.line("R-OAMP NMSE strictly decreasing in SNR", decreasing, format!("dB {}", fmt.join(" ")));
    let mut below_all = true;
    let mut margin = f64::INFINITY;
    for ((r, o), s) in roamp.iter().zip(&omp).zip(&sp) {
        below_all &= r.1 <= o.1 && r.1 <= s.1;
        if r.0 >= 8.0 {
            margin = margin.min(o.1.min(s.1) - r.1);
        }
    }
    t.line("R-OAMP ≤ OMP and SP at every SNR", below_all, String::new());
    t.line("margin over the better greedy ≥ 1 dB at SNR ≥ 8 dB", margin >= 1.0, format!("min margin {margin:.2} dB"));

    let kind = ExperimentKind::NmseVsPilots;
    let result = run(kind, SimulationConfig::default(), 200, 1);
    let at = |p: f64| lookup(&result.rows, p, "roamp", "nmse_db").unwrap();
    let drop = at(30.0) - at(70.0);
    t.line(
        "NMSE at 15 dB drops ≥ 10 dB from P = 30 to 70",
        drop >= 10.0,
        format!("{:.2} → {:.2} dB, drop {drop:.2} dB", at(30.0), at(70.0)),
    );
    t.finish();
}

#[test]
fn phase_alignment() {
    let mut t = Table::new("phase");
    let kind = ExperimentKind::GainVsN;
    let result = run(kind, SimulationConfig::default(), 200, 1);
    let aligned = series(&result, kind, "aligned", "gain_db");
    let gap = |method: &str| {
        series(&result, kind, method, "gain_db").iter().zip(&aligned).map(|(o, a)| a.1 - o.1).fold(f64::INFINITY, f64::min)
    };
    let (random, zero) = (gap("random"), gap("zero"));
    t.line("aligned ≥ random + 15 dB for every N", random >= 15.0, format!("min gap {random:.2} dB"));
    t.line("aligned ≥ zero + 15 dB for every N", zero >= 15.0, format!("min gap {zero:.2} dB"));
    let worst_behind = series(&result, kind, "exhaustive", "gain_db")
        .iter()
        .zip(&aligned)
        .map(|(e, a)| e.1 - a.1)
        .fold(f64::NEG_INFINITY, f64::max);
    t.line("aligned within 3 dB of exhaustive", worst_behind <= 3.0, format!("max shortfall {worst_behind:.2} dB"));
    let monotone = aligned.windows(2).all(|w| w[1].1 >= w[0].1);
    let fmt: Vec<String> = aligned.iter().map(|(n, v)| format!("{n}:{v:.2}")).collect();
    t.line("aligned gain non-decreasing in N", monotone, format!("dB {}", fmt.join(" ")));
    t.finish();
}

fn with_threshold(eps: f64) -> SimulationConfig {
    let mut config = SimulationConfig::default();
    config.scenario.dep_threshold_uav = eps;
    config.scenario.dep_threshold_robot = eps;
    config
}

#[test]
fn resource_optimization() {
    let mut t = Table::new("optimizer");
    let reference = Scenario::reference();
    for eps in [5e-5, 5e-6] {
        for (kind, default_point) in [
            (ExperimentKind::EeVsN, reference.array.num_ris_elements as f64),
            (ExperimentKind::EeVsPu, reference.uav_power_budget),
        ] {
            let result = run(kind, with_threshold(eps), 100, 1);
            let ptpb = series(&result, kind, "ptpb", "min_ee");
            let mtp = series(&result, kind, "mtp", "min_ee");
            let mbl = series(&result, kind, "mbl", "min_ee");
            let dominates = ptpb.iter().zip(&mtp).zip(&mbl).all(|((p, a), b)| p.1 >= a.1 && p.1 >= b.1);
            let fmt: Vec<String> =
                ptpb.iter().zip(&mtp).zip(&mbl).map(|((p, a), b)| format!("{}:{:.2}/{:.2}/{:.2}", p.0, p.1, a.1, b.1)).collect();
            t.line(&format!("PTPB ≥ MTP, MBL over {kind} at ε = {eps:e}"), dominates, format!("ptpb/mtp/mbl {}", fmt.join(" ")));
            if eps == 5e-6 {
                let (p, m) =
                    (lookup(&result.rows, default_point, "ptpb", "min_ee"), lookup(&result.rows, default_point, "mtp", "min_ee"));
                let gain = p.unwrap() / m.unwrap() - 1.0;
                t.line(
                    &format!("PTPB exceeds MTP by ≥ 20% at the default point of {kind}, ε = 5e-6"),
                    gain >= 0.2,
                    format!("improvement {:.1}%", 100.0 * gain),
                );
            }
            let failures: usize = result.rows.iter().map(|r| r.failures).sum();
            t.line(&format!("no failed trials in {kind} at ε = {eps:e}"), failures == 0, format!("{failures} failures"));
        }
    }

    let settings = OptimizerSettings::default();
    let (mut checked, mut violations) = (0, 0);
    for eps in [5e-5, 5e-6] {
        let mut scenario = reference.clone();
        scenario.dep_threshold_uav = eps;
        scenario.dep_threshold_robot = eps;
        for seed in 0..100 {
            let utg = sample_utg_channels(&scenario, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            for delta_b in [0.05, 0.3, 1.0, 5.0] {
                for scheme in [Scheme::Ptpb, Scheme::Mtp, Scheme::Mbl] {
                    let Ok(report) = optimize(scheme, &scenario, delta_b, &utg, &settings) else { continue };
                    checked += 1;
                    let again = evaluate(&scenario, delta_b, &utg, &report.decision).unwrap();
                    if !again.constraints.all_satisfied() || again != report.outcome {
                        violations += 1;
                    }
                }
            }
        }
    }
    t.line(
        "every returned decision passes constraint re-verification",
        violations == 0 && checked > 0,
        format!("{checked} decisions, {violations} violations"),
    );
    t.finish();
}

#[test]
fn dep_model() {
    let mut t = Table::new("dep");
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    // γ = 1 (R = 1 bit/symbol) with mean SNR 1000, and two more b/mean pairs.
    for (b, mean_factor) in [(200usize, 1000.0), (500, 100.0), (1000, 300.0)] {
        let budget = LinkBudget::new(b, b as f64, 0.0).unwrap();
        let mean = mean_factor * budget.gamma;
        let exp = Exp::new(1.0 / mean).unwrap();
        let samples = 1_000_000;
        let mc = (0..samples).map(|_| linearized_dep(&budget.with_snr(exp.sample(&mut rng)))).sum::<f64>() / samples as f64;
        let model = expected_dep_rayleigh(&budget, mean).unwrap();
        let rel = (mc - model).abs() / model;
        t.line(
            &format!("E[Ω] within 10% of 2γ/mean (b = {b}, mean = {mean_factor}γ)"),
            rel <= 0.1,
            format!("MC {mc:.4e} vs 2γ/mean {model:.4e}, ratio {:.3}", mc / model),
        );
    }
    t.finish();
}

#[test]
fn determinism() {
    let mut t = Table::new("determinism");
    for kind in ExperimentKind::ALL {
        let csv = || {
            let mut out = Vec::new();
            write_csv(&run(kind, SimulationConfig::default(), 4, 9).rows, &mut out).unwrap();
            out
        };
        let (a, b) = (csv(), csv());
        t.line(&format!("{kind} rerun is byte-identical"), a == b, format!("{} bytes", a.len()));
    }
    t.finish();
}
