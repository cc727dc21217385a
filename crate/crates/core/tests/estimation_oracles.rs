//! Estimator building blocks against independent references: a dense
//! nalgebra LMMSE, finite differences, 2-D quadrature and exhaustive support
//! search.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nsin_core::channel::{complex_gaussian, make_bs_hap_channel};
use nsin_core::greedy::{omp, sp, GreedyConfig};
use nsin_core::linalg::{least_squares, norm_sqr, sub, CMatrix};
use nsin_core::roamp::{module_a_lmmse, module_b_mmse, offset_gradient, surrogate, EstimatorState};
use nsin_core::sparse::{build_grid, build_measurement, SparsePrior};
use nsin_core::Scenario;

type C = Complex<f64>;

fn to_na(m: &CMatrix<f64>) -> DMatrix<C> {
    DMatrix::from_fn(m.rows(), m.cols(), |r, c| m[(r, c)])
}

/// First `p` rows of a Haar-ish unitary from the QR of a Gaussian matrix.
fn random_row_orthonormal(p: usize, n: usize, rng: &mut ChaCha8Rng) -> CMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| complex_gaussian(rng, 1.0));
    let q = g.qr().q();
    let qa = q.adjoint();
    CMatrix::from_fn(p, n, |r, c| qa[(r, c)])
}

fn random_vec(n: usize, var: f64, rng: &mut ChaCha8Rng) -> Vec<C> {
    (0..n).map(|_| complex_gaussian(rng, var)).collect()
}

#[test]
fn module_a_matches_direct_lmmse() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.random_range(4..=12);
        let p = rng.random_range(1..=n);
        let f = random_row_orthonormal(p, n, &mut rng);
        let v = rng.random_range(0.05..3.0);
        let sigma2 = rng.random_range(1e-3..1.0);
        let x_pri = random_vec(n, 1.0, &mut rng);
        let y = random_vec(p, 1.0, &mut rng);

        let prior = SparsePrior::new(0.3, C::new(0.0, 0.0), 1.0).unwrap();
        let mut state = EstimatorState::new(n, prior);
        state.x_pri_a = x_pri.clone();
        state.v_pri_a = v;
        module_a_lmmse(&mut state, &y, &f, sigma2).unwrap();

        // x̂ = x + v Fᴴ (v F Fᴴ + σ² I)⁻¹ (y − F x); Σ = v I − v² Fᴴ (…)⁻¹ F.
        let fa = to_na(&f);
        let s = (&fa * fa.adjoint()).scale(v) + DMatrix::<C>::identity(p, p).scale(sigma2);
        let s_inv = s.try_inverse().unwrap();
        let xv = DVector::from_vec(x_pri);
        let yv = DVector::from_vec(y);
        let gain = fa.adjoint() * &s_inv;
        let x_ref = &xv + (&gain * (&yv - &fa * &xv)).scale(v);
        let cov = DMatrix::<C>::identity(n, n).scale(v) - (&gain * &fa).scale(v * v);
        let v_ref = cov.trace().re / n as f64;

        for (a, b) in state.x_post_a.iter().zip(x_ref.iter()) {
            assert!((a - b).norm() < 1e-10, "mean {a} vs {b}");
        }
        assert!((state.v_post_a - v_ref).abs() < 1e-10, "variance {} vs {v_ref}", state.v_post_a);
    }
}

#[test]
fn offset_gradient_matches_central_differences() {
    let scenario = Scenario::reference();
    let array = scenario.array.with_ris_elements(16).unwrap();
    let bs_hap = make_bs_hap_channel(&scenario, &array).unwrap();
    let grid = build_grid(16, array.ris_spacing).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = 1e-6;
    for _ in 0..20 {
        let mut model = build_measurement(&grid, &bs_hap, &array, 10, &mut rng).unwrap();
        // Interior offsets so the clip never bites during differencing.
        let offsets: Vec<f64> =
            (0..16).map(|n| 0.5 * rng.random_range(model.grid.lower_bounds[n]..model.grid.upper_bounds[n])).collect();
        model.set_offsets(&offsets);
        let sigma2 = rng.random_range(0.01..0.5);
        let y = random_vec(10, 1.0, &mut rng);
        let mut state = EstimatorState::new(16, SparsePrior::initial(3, 16).unwrap());
        state.x_post_b = random_vec(16, 1.0, &mut rng);
        state.v_post_b = rng.random_range(0.01..0.3);

        let grad = offset_gradient(&state, &y, &model, sigma2, None);
        for n in 0..16 {
            let eval = |delta: f64| {
                let mut o = offsets.clone();
                o[n] += delta;
                let mut m = model.clone();
                m.set_offsets(&o);
                surrogate(&y, m.effective_matrix(), &state.x_post_b, state.v_post_b, sigma2)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let scale = grad[n].abs().max(1e-3);
            assert!((grad[n] - fd).abs() / scale < 1e-4, "n={n}: analytic {} vs fd {fd}", grad[n]);
        }
    }
}

/// Posterior mean of `x` under `(1−λ)δ + λ CN(ζ, ρ)` observed through
/// `r = x + CN(0, v)`, by a tensor trapezoid rule over the complex plane.
fn quadrature_posterior_mean(r: C, v: f64, lambda: f64, zeta: C, rho: f64) -> C {
    let pdf = |z: C, mean: C, var: f64| (-(z - mean).norm_sqr() / var).exp() / (std::f64::consts::PI * var);
    // The slab part is Gaussian in x; integrate around its posterior centre.
    let centre = (r * rho + zeta * v) / (v + rho);
    let spread = (v * rho / (v + rho)).sqrt();
    let steps = 400;
    let half = 10.0 * spread;
    let dx = 2.0 * half / steps as f64;
    let mut num = C::new(0.0, 0.0);
    let mut slab_mass = 0.0;
    for i in 0..=steps {
        for j in 0..=steps {
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 } * if j == 0 || j == steps { 0.5 } else { 1.0 };
            let x = centre + C::new(-half + i as f64 * dx, -half + j as f64 * dx);
            let dens = w * pdf(r, x, v) * pdf(x, zeta, rho) * dx * dx;
            num += x * dens;
            slab_mass += dens;
        }
    }
    let spike_mass = pdf(r, C::new(0.0, 0.0), v);
    num * lambda / ((1.0 - lambda) * spike_mass + lambda * slab_mass)
}

#[test]
fn module_b_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let lambda = rng.random_range(0.05..0.6);
        let zeta = complex_gaussian(&mut rng, 0.2);
        let rho = rng.random_range(0.3..2.0);
        let v = rng.random_range(0.05..1.0);
        let prior = SparsePrior::new(lambda, zeta, rho).unwrap();
        let mut state = EstimatorState::new(4, prior);
        state.x_pri_b = random_vec(4, 1.5, &mut rng);
        state.v_pri_b = v;
        module_b_mmse(&mut state, &prior).unwrap();
        for (r, got) in state.x_pri_b.iter().zip(&state.x_post_b) {
            let want = quadrature_posterior_mean(*r, v, lambda, zeta, rho);
            assert!((got - want).norm() < 1e-6 * (1.0 + want.norm()), "{got} vs {want}");
        }
    }
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n).filter(|m| m.count_ones() as usize == k).map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect()).collect()
}

fn residual_on(support: &[usize], f: &CMatrix<f64>, y: &[C]) -> f64 {
    let cols: Vec<Vec<C>> = support.iter().map(|&c| f.column(c)).collect();
    let refs: Vec<&[C]> = cols.iter().map(Vec::as_slice).collect();
    let coeffs = least_squares(&refs, y).unwrap();
    let fit = CMatrix::from_columns(&cols).mul_vec(&coeffs);
    norm_sqr(&sub(y, &fit)).sqrt()
}

#[test]
fn greedy_supports_against_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (p, n, k) = (8, 12, 2);
    let candidates = subsets(n, k);
    let mut sp_hits = 0;
    let trials = 50;
    for _ in 0..trials {
        let f = CMatrix::from_fn(p, n, |_, _| complex_gaussian(&mut rng, 1.0 / p as f64));
        let mut x = vec![C::new(0.0, 0.0); n];
        let mut truth: Vec<usize> = rand::seq::index::sample(&mut rng, n, k).into_vec();
        truth.sort_unstable();
        for &i in &truth {
            x[i] = complex_gaussian(&mut rng, 1.0) + C::new(0.5, 0.0);
        }
        let y = f.mul_vec(&x);
        let (best, best_res) =
            candidates.iter().map(|s| (s.clone(), residual_on(s, &f, &y))).min_by(|a, b| a.1.partial_cmp(&b.1).unwrap()).unwrap();
        assert_eq!(best, truth, "noiseless oracle must find the true support");
        assert!(best_res < 1e-9);

        let cfg = GreedyConfig::new(k);
        for res in [omp(&y, &f, &cfg).unwrap(), sp(&y, &f, &cfg).unwrap()] {
            assert!(res.support.len() <= k);
            assert!(res.residual_norm >= best_res - 1e-9);
        }
        if sp(&y, &f, &cfg).unwrap().support == truth {
            sp_hits += 1;
        }
    }
    assert!(sp_hits >= 45, "subspace pursuit recovered {sp_hits}/{trials}");
}
