//! Recurrent orthogonal AMP with off-grid offset refinement.
//!
//! Module A is the LMMSE step for a row-orthonormal sensing matrix, module B
//! the per-index spike-and-slab MMSE denoiser. The modules exchange extrinsic
//! messages; the prior is re-learned by EM after every denoising pass. Once
//! the inner loop settles, one backtracking gradient step on the expected
//! log-likelihood surrogate moves the offsets of the active grid points.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm_sqr, sub, CMatrix};
use crate::scalar::{czero, Real};
use crate::sparse::{MeasurementModel, SparsePrior};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmijoConfig<T> {
    pub initial_step: T,
    pub shrink: T,
    /// Fraction of the predicted increase that a step must realize.
    pub slope_fraction: T,
    pub min_step: T,
}

impl<T: Real> Default for ArmijoConfig<T> {
    fn default() -> Self {
        Self { initial_step: T::one(), shrink: T::lit(0.5), slope_fraction: T::lit(1e-3), min_step: T::lit(1e-12) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoampConfig<T> {
    pub initial_prior: SparsePrior<T>,
    pub max_inner_iterations: usize,
    /// Relative change of the module-B posterior mean that ends the inner loop.
    pub inner_tolerance: T,
    pub max_outer_iterations: usize,
    /// Largest offset move (rad) that still counts as progress.
    pub offset_tolerance: T,
    /// Weight of the fresh extrinsic mean fed back to module A.
    pub damping: T,
    pub armijo: ArmijoConfig<T>,
    /// Offsets are refined only where the activity posterior reaches this.
    pub active_threshold: T,
    /// Scale each gradient entry by the inverse curvature of the quadratic
    /// part of the surrogate before the line search.
    pub precondition: bool,
    pub learn_prior: bool,
    pub refine_offsets: bool,
    pub record_trace: bool,
}

impl<T: Real> RoampConfig<T> {
    pub fn new(initial_prior: SparsePrior<T>) -> Self {
        Self {
            initial_prior,
            max_inner_iterations: 50,
            inner_tolerance: T::lit(1e-6),
            max_outer_iterations: 30,
            offset_tolerance: T::lit(1e-6),
            damping: T::lit(0.7),
            armijo: ArmijoConfig::default(),
            active_threshold: T::lit(0.5),
            precondition: true,
            learn_prior: true,
            refine_offsets: true,
            record_trace: false,
        }
    }
}

/// Messages and beliefs of both modules.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState<T> {
    pub x_pri_a: Vec<Complex<T>>,
    pub x_post_a: Vec<Complex<T>>,
    pub x_pri_b: Vec<Complex<T>>,
    pub x_post_b: Vec<Complex<T>>,
    pub v_pri_a: T,
    pub v_post_a: T,
    pub v_pri_b: T,
    pub v_post_b: T,
    pub offsets: Vec<T>,
    pub prior: SparsePrior<T>,
    /// Activity posterior `π_n`.
    pub support: Vec<T>,
    /// Slab-conditional mean `m_n`.
    pub slab_mean: Vec<Complex<T>>,
    /// Slab-conditional variance (shared by every index).
    pub slab_variance: T,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
}

impl<T: Real> EstimatorState<T> {
    /// `x_pri_A = 0`, `v_pri_A = λρ`, `Δφ = 0`.
    pub fn new(n: usize, prior: SparsePrior<T>) -> Self {
        let zeros = vec![czero(); n];
        let v0 = prior.sparsity * prior.gain_variance;
        Self {
            x_pri_a: zeros.clone(),
            x_post_a: zeros.clone(),
            x_pri_b: zeros.clone(),
            x_post_b: zeros.clone(),
            v_pri_a: v0,
            v_post_a: v0,
            v_pri_b: v0,
            v_post_b: v0,
            offsets: vec![T::zero(); n],
            prior,
            support: vec![T::zero(); n],
            slab_mean: zeros,
            slab_variance: T::zero(),
            inner_iterations: 0,
            outer_iterations: 0,
        }
    }
}

fn check_variance<T: Real>(v: T, iteration: usize, what: &str) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericalFailure { iteration, detail: format!("{what} = {v}") })
    }
}

/// LMMSE update for `y = F x + n` with `F Fᴴ = I`.
pub fn module_a_lmmse<T: Real>(state: &mut EstimatorState<T>, y: &[Complex<T>], f: &CMatrix<T>, noise_variance: T) -> Result<()> {
    if y.len() != f.rows() || state.x_pri_a.len() != f.cols() {
        return Err(Error::DimensionMismatch("module A operands".into()));
    }
    let it = state.inner_iterations;
    check_variance(state.v_pri_a, it, "prior variance of module A")?;
    let v = state.v_pri_a;
    let gain = v / (v + noise_variance);
    let residual = sub(y, &f.mul_vec(&state.x_pri_a));
    let back = f.adjoint_mul_vec(&residual);
    state.x_post_a = state.x_pri_a.iter().zip(&back).map(|(x, b)| *x + *b * gain).collect();
    // v − (P/N) v²/(v+σ²), arranged to stay positive when σ² ≪ v.
    let ratio = T::from_count(f.rows()) / T::from_count(f.cols());
    state.v_post_a = v * (noise_variance + v * (T::one() - ratio)) / (v + noise_variance);
    check_variance(state.v_post_a, it, "posterior variance of module A")
}

/// Gaussian division `post / pri`. When the posterior is not more certain
/// than the prior the variance is clamped to `1e8 · post_var`.
pub fn extrinsic<T: Real>(post_mean: &[Complex<T>], post_var: T, pri_mean: &[Complex<T>], pri_var: T) -> (Vec<Complex<T>>, T) {
    let precision = post_var.recip() - pri_var.recip();
    if !(precision > T::zero()) || !precision.is_finite() {
        return (post_mean.to_vec(), T::lit(1e8) * post_var);
    }
    let ext_var = precision.recip();
    let mean = post_mean.iter().zip(pri_mean).map(|(p, q)| (*p / post_var - *q / pri_var) * ext_var).collect();
    (mean, ext_var)
}

/// Spike-and-slab MMSE denoiser applied to `x_pri_B` with noise `v_pri_B`.
pub fn module_b_mmse<T: Real>(state: &mut EstimatorState<T>, prior: &SparsePrior<T>) -> Result<()> {
    let it = state.inner_iterations;
    check_variance(state.v_pri_b, it, "prior variance of module B")?;
    let v = state.v_pri_b;
    let rho = prior.gain_variance;
    let zeta = prior.gain_mean;
    let lambda = prior.sparsity;
    let total = v + rho;
    let log_odds_prior = lambda.ln() - (T::one() - lambda).ln() + (v / total).ln();
    let s = v * rho / total;
    let n = state.x_pri_b.len();
    let mut var_sum = T::zero();
    state.support.resize(n, T::zero());
    state.slab_mean.resize(n, czero());
    state.x_post_b.resize(n, czero());
    for i in 0..n {
        let r = state.x_pri_b[i];
        let llr = log_odds_prior + r.norm_sqr() / v - (r - zeta).norm_sqr() / total;
        let pi = sigmoid(llr);
        let m = (r * rho + zeta * v) / total;
        state.support[i] = pi;
        state.slab_mean[i] = m;
        state.x_post_b[i] = m * pi;
        var_sum = var_sum + pi * s + pi * (T::one() - pi) * m.norm_sqr();
    }
    state.slab_variance = s;
    // A posterior that is certain everywhere would stall the division.
    state.v_post_b = (var_sum / T::from_count(n)).max(v * T::lit(1e-12));
    check_variance(state.v_post_b, it, "posterior variance of module B")
}

fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// EM re-estimate of `(λ, ζ, ρ)` from the module-B posterior. The previous
/// prior is kept when no index carries activity mass.
pub fn em_update<T: Real>(state: &EstimatorState<T>) -> SparsePrior<T> {
    let mass: T = state.support.iter().copied().sum();
    if !(mass > T::zero()) || !mass.is_finite() {
        return state.prior;
    }
    let n = T::from_count(state.support.len());
    let floor = T::lit(1e-6).max(T::epsilon());
    let sparsity = (mass / n).max(floor).min(T::one() - floor);
    let weighted = state.support.iter().zip(&state.slab_mean).fold(czero(), |acc, (p, m)| acc + *m * *p);
    let gain_mean = weighted / mass;
    let spread: T =
        state.support.iter().zip(&state.slab_mean).map(|(p, m)| *p * ((*m - gain_mean).norm_sqr() + state.slab_variance)).sum();
    let gain_variance = spread / mass;
    if !(gain_variance > T::zero()) || !gain_variance.is_finite() {
        return SparsePrior { sparsity, gain_mean, gain_variance: state.prior.gain_variance };
    }
    SparsePrior { sparsity, gain_mean, gain_variance }
}

/// `−(‖y − F x‖² + v·tr(F Fᴴ)) / σ²`.
pub fn surrogate<T: Real>(y: &[Complex<T>], f: &CMatrix<T>, x: &[Complex<T>], v: T, noise_variance: T) -> T {
    let residual = sub(y, &f.mul_vec(x));
    -(norm_sqr(&residual) + v * f.frobenius_sqr()) / noise_variance
}

/// Derivative of [`surrogate`] with respect to each offset at the model's
/// current offsets, using `x_post_B` and `v_post_B`. Indices outside `mask`
/// get zero.
pub fn offset_gradient<T: Real>(
    state: &EstimatorState<T>,
    y: &[Complex<T>],
    model: &MeasurementModel<T>,
    noise_variance: T,
    mask: Option<&[bool]>,
) -> Vec<T> {
    let f = model.effective_matrix();
    let x = &state.x_post_b;
    let v = state.v_post_b;
    let residual = sub(y, &f.mul_vec(x));
    let two = T::lit(2.0);
    (0..model.grid_size())
        .map(|n| {
            if mask.is_some_and(|m| !m[n]) {
                return T::zero();
            }
            let col = f.column(n);
            let der = model.effective_derivative(n, model.grid.offsets[n]);
            let phi1 = -(x[n].norm_sqr() + v) / noise_variance;
            // y_{−n} = y − Σ_{j≠n} f_j x_j.
            let mut cross = czero();
            let mut self_term = czero();
            for ((d, c), e) in der.iter().zip(&col).zip(&residual) {
                cross = cross + d.conj() * (*e + *c * x[n]);
                self_term = self_term + d.conj() * *c;
            }
            two * self_term.re * phi1 + two * (x[n].conj() * cross).re / noise_variance
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetStepOutcome<T> {
    pub step: T,
    pub surrogate_before: T,
    pub surrogate_after: T,
    /// Largest absolute offset move.
    pub max_change: T,
    /// The line search ran out of step without satisfying Armijo.
    pub stagnated: bool,
}

/// Projected backtracking ascent along `gradient`. On failure the offsets are
/// left untouched and the outcome is flagged as stagnated.
pub fn offset_step<T: Real>(
    model: &mut MeasurementModel<T>,
    state: &EstimatorState<T>,
    y: &[Complex<T>],
    gradient: &[T],
    noise_variance: T,
    armijo: &ArmijoConfig<T>,
) -> OffsetStepOutcome<T> {
    offset_step_along(model, state, y, gradient, gradient, noise_variance, armijo)
}

/// `gradient[n] / (2 (|x_n|² + v) ‖f'_n‖² / σ²)`: the gradient divided by the
/// curvature of the residual term, an ascent direction with far better scaling
/// across grid points of very different strength.
pub fn scaled_direction<T: Real>(
    state: &EstimatorState<T>,
    model: &MeasurementModel<T>,
    gradient: &[T],
    noise_variance: T,
) -> Vec<T> {
    let two = T::lit(2.0);
    gradient
        .iter()
        .enumerate()
        .map(|(n, g)| {
            if *g == T::zero() {
                return T::zero();
            }
            let der = model.effective_derivative(n, model.grid.offsets[n]);
            let curvature = two * (state.x_post_b[n].norm_sqr() + state.v_post_b) * norm_sqr(&der) / noise_variance;
            if curvature > T::zero() && curvature.is_finite() {
                *g / curvature
            } else {
                *g
            }
        })
        .collect()
}

/// Backtracking along an arbitrary ascent `direction`; Armijo uses the true
/// `gradient` for the predicted increase.
#[allow(clippy::too_many_arguments)]
pub fn offset_step_along<T: Real>(
    model: &mut MeasurementModel<T>,
    state: &EstimatorState<T>,
    y: &[Complex<T>],
    gradient: &[T],
    direction: &[T],
    noise_variance: T,
    armijo: &ArmijoConfig<T>,
) -> OffsetStepOutcome<T> {
    let x = &state.x_post_b;
    let v = state.v_post_b;
    let old = model.grid.offsets.clone();
    let r0 = surrogate(y, model.effective_matrix(), x, v, noise_variance);
    let unchanged =
        |step| OffsetStepOutcome { step, surrogate_before: r0, surrogate_after: r0, max_change: T::zero(), stagnated: false };
    if direction.iter().all(|g| *g == T::zero()) {
        return unchanged(T::zero());
    }
    if direction.iter().chain(gradient).any(|g| !g.is_finite()) {
        return OffsetStepOutcome { stagnated: true, ..unchanged(T::zero()) };
    }
    let mut step = armijo.initial_step;
    while step >= armijo.min_step {
        let candidate: Vec<T> =
            old.iter().zip(direction).enumerate().map(|(n, (o, d))| model.grid.clip_offset(n, *o + step * *d)).collect();
        let mut slope = T::zero();
        let mut max_change = T::zero();
        for ((c, o), g) in candidate.iter().zip(&old).zip(gradient) {
            slope = slope + *g * (*c - *o);
            max_change = max_change.max((*c - *o).abs());
        }
        if max_change == T::zero() {
            // Every moving coordinate is pinned at its bound.
            return unchanged(step);
        }
        model.set_offsets(&candidate);
        let r1 = surrogate(y, model.effective_matrix(), x, v, noise_variance);
        if r1 >= r0 + armijo.slope_fraction * slope {
            return OffsetStepOutcome { step, surrogate_before: r0, surrogate_after: r1, max_change, stagnated: false };
        }
        step = step * armijo.shrink;
    }
    model.set_offsets(&old);
    OffsetStepOutcome { stagnated: true, ..unchanged(step) }
}

/// One row of the optional per-iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub outer: usize,
    pub inner: usize,
    pub v_post_a: f64,
    pub v_post_b: f64,
    pub surrogate: f64,
    pub nmse_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEstimate<T> {
    pub x_hat: Vec<Complex<T>>,
    pub posterior_variance: T,
    pub support_posterior: Vec<T>,
    pub refined_offsets: Vec<T>,
    /// `A(Δφ*)·x̂`.
    pub reconstructed_channel: Vec<Complex<T>>,
    pub prior: SparsePrior<T>,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub stagnated: bool,
    pub trace: Vec<TraceRow>,
}

impl<T: Real> PosteriorEstimate<T> {
    /// `(x̂_n, ω̂_n + Δφ_n)` for indices whose activity reaches `threshold`,
    /// falling back to the largest coefficient if none does.
    pub fn paths(&self, grid_points: &[T], threshold: T) -> (Vec<Complex<T>>, Vec<T>) {
        let mut gains = Vec::new();
        let mut angles = Vec::new();
        for (n, p) in self.support_posterior.iter().enumerate() {
            if *p >= threshold {
                gains.push(self.x_hat[n]);
                angles.push(grid_points[n] + self.refined_offsets[n]);
            }
        }
        if gains.is_empty() {
            let best = (0..self.x_hat.len())
                .max_by(|a, b| {
                    self.x_hat[*a].norm_sqr().partial_cmp(&self.x_hat[*b].norm_sqr()).unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(0);
            gains.push(self.x_hat[best]);
            angles.push(grid_points[best] + self.refined_offsets[best]);
        }
        (gains, angles)
    }
}

/// Runs the estimator on `y`, using `model.noise_variance` (floored at 120 dB
/// below the per-measurement energy so a noiseless input stays well posed).
/// `truth`, when given, is the small-scale channel used for trace NMSE.
pub fn run_roamp<T: Real>(
    y: &[Complex<T>],
    model: &MeasurementModel<T>,
    config: &RoampConfig<T>,
    truth: Option<&[Complex<T>]>,
) -> Result<PosteriorEstimate<T>> {
    let n = model.grid_size();
    if y.len() != model.num_pilots {
        return Err(Error::DimensionMismatch(format!("y has {} entries, model has {} pilots", y.len(), model.num_pilots)));
    }
    let floor = T::lit(1e-12) * norm_sqr(y) / T::from_count(y.len());
    let noise_variance = model.noise_variance.max(floor).max(T::min_positive_value());
    let mut model = model.clone();
    let mut state = EstimatorState::new(n, config.initial_prior);
    state.offsets = model.grid.offsets.clone();
    let mut trace = Vec::new();
    let mut stagnated = false;

    for outer in 0..config.max_outer_iterations.max(1) {
        state.outer_iterations = outer + 1;
        for _ in 0..config.max_inner_iterations {
            state.inner_iterations += 1;
            let previous = state.x_post_b.clone();
            module_a_lmmse(&mut state, y, model.effective_matrix(), noise_variance)?;
            let (xb, vb) = extrinsic(&state.x_post_a, state.v_post_a, &state.x_pri_a, state.v_pri_a);
            state.x_pri_b = xb;
            state.v_pri_b = vb;
            let prior = state.prior;
            module_b_mmse(&mut state, &prior)?;
            if config.learn_prior {
                state.prior = em_update(&state);
            }
            let (xa, va) = extrinsic(&state.x_post_b, state.v_post_b, &state.x_pri_b, state.v_pri_b);
            let d = config.damping;
            state.x_pri_a = xa.iter().zip(&state.x_pri_a).map(|(new, old)| *new * d + *old * (T::one() - d)).collect();
            state.v_pri_a = va;
            if config.record_trace {
                trace.push(trace_row(&state, y, &model, noise_variance, truth));
            }
            let change = norm_sqr(&sub(&state.x_post_b, &previous)).sqrt();
            let size = norm_sqr(&state.x_post_b).sqrt();
            if change <= config.inner_tolerance * size {
                break;
            }
        }
        if !config.refine_offsets {
            break;
        }
        let mask: Vec<bool> = state.support.iter().map(|p| *p >= config.active_threshold).collect();
        let gradient = offset_gradient(&state, y, &model, noise_variance, Some(&mask));
        let direction =
            if config.precondition { scaled_direction(&state, &model, &gradient, noise_variance) } else { gradient.clone() };
        let outcome = offset_step_along(&mut model, &state, y, &gradient, &direction, noise_variance, &config.armijo);
        state.offsets = model.grid.offsets.clone();
        stagnated = outcome.stagnated;
        if outcome.max_change < config.offset_tolerance {
            break;
        }
    }

    let reconstructed_channel = model.grid.synthesize(&state.offsets, &state.x_post_b);
    Ok(PosteriorEstimate {
        x_hat: state.x_post_b,
        posterior_variance: state.v_post_b,
        support_posterior: state.support,
        refined_offsets: state.offsets,
        reconstructed_channel,
        prior: state.prior,
        inner_iterations: state.inner_iterations,
        outer_iterations: state.outer_iterations,
        stagnated,
        trace,
    })
}

fn trace_row<T: Real>(
    state: &EstimatorState<T>,
    y: &[Complex<T>],
    model: &MeasurementModel<T>,
    noise_variance: T,
    truth: Option<&[Complex<T>]>,
) -> TraceRow {
    let nmse_db = truth.map(|h| {
        let est = model.grid.synthesize(&state.offsets, &state.x_post_b);
        let ratio = norm_sqr(&sub(&est, h)) / norm_sqr(h);
        10.0 * ratio.as_f64().max(1e-20).log10()
    });
    TraceRow {
        outer: state.outer_iterations,
        inner: state.inner_iterations,
        v_post_a: state.v_post_a.as_f64(),
        v_post_b: state.v_post_b.as_f64(),
        surrogate: surrogate(y, model.effective_matrix(), &state.x_post_b, state.v_post_b, noise_variance).as_f64(),
        nmse_db,
    }
}
