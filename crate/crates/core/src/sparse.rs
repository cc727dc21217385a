//! Off-grid angular dictionary, spike-and-slab prior and pilot measurement model.
//!
//! Estimation happens in the small-scale domain: the large-scale amplitude and
//! the known BS → HAP factor are divided out of the pilot observations, which
//! leaves `y = W̃ h̄ + n` with `W̃ = S·D·R / √N` (row selection, unitary DFT,
//! column permutation). Writing `h̄ = A(Δφ) x` gives `y = F(Δφ) x + n` with
//! `F(Δφ) = W̃ A(Δφ)`; at zero offset `F` has orthonormal rows.

use num_complex::Complex;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_gaussian, steering_derivative, steering_vector, BsHapChannel, SparseChannelInstance};
use crate::error::{Error, Result};
use crate::linalg::{norm_sqr, CMatrix};
use crate::scalar::{cis, czero, Real};
use crate::scenario::ArrayConfig;

/// Grid uniform in `sin ω`, with a per-point angular offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularGrid<T> {
    pub grid_points: Vec<T>,
    pub offsets: Vec<T>,
    /// Most negative admissible offset per point (half-way to the left neighbour).
    pub lower_bounds: Vec<T>,
    /// Most positive admissible offset per point.
    pub upper_bounds: Vec<T>,
    pub spacing: T,
}

/// `sin ω̂_n = −1 + (2n − 1)/N` for `n = 1..=N`.
pub fn build_grid<T: Real>(n: usize, spacing: T) -> Result<AngularGrid<T>> {
    if n < 2 {
        return Err(Error::InvalidParameter("grid needs at least 2 points".into()));
    }
    let nf = T::from_count(n);
    let grid_points: Vec<T> = (1..=n).map(|i| (-T::one() + (T::lit(2.0) * T::from_count(i) - T::one()) / nf).asin()).collect();
    let half = T::lit(0.5);
    let edge = T::FRAC_PI_2();
    let mut lower_bounds = Vec::with_capacity(n);
    let mut upper_bounds = Vec::with_capacity(n);
    for i in 0..n {
        let w = grid_points[i];
        let lo = if i == 0 { (-edge - w) * half } else { (grid_points[i - 1] - w) * half };
        let hi = if i + 1 == n { (edge - w) * half } else { (grid_points[i + 1] - w) * half };
        lower_bounds.push(lo);
        upper_bounds.push(hi);
    }
    Ok(AngularGrid { offsets: vec![T::zero(); n], grid_points, lower_bounds, upper_bounds, spacing })
}

impl<T: Real> AngularGrid<T> {
    pub fn len(&self) -> usize {
        self.grid_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid_points.is_empty()
    }

    /// `offset` clipped into the admissible interval of point `n`.
    pub fn clip_offset(&self, n: usize, offset: T) -> T {
        offset.max(self.lower_bounds[n]).min(self.upper_bounds[n])
    }

    /// Steering vector of point `n` at an explicit offset.
    pub fn atom(&self, n: usize, offset: T) -> Vec<Complex<T>> {
        steering_vector(self.grid_points[n] + offset, self.len(), self.spacing)
    }

    pub fn atom_derivative(&self, n: usize, offset: T) -> Vec<Complex<T>> {
        steering_derivative(self.grid_points[n] + offset, self.len(), self.spacing)
    }

    /// Column `n` of `A(Δφ)` at the stored offsets.
    pub fn column(&self, n: usize) -> Vec<Complex<T>> {
        self.atom(n, self.offsets[n])
    }

    pub fn dictionary(&self) -> CMatrix<T> {
        CMatrix::from_columns(&(0..self.len()).map(|n| self.column(n)).collect::<Vec<_>>())
    }

    /// `A(Δφ)·x`.
    pub fn synthesize(&self, offsets: &[T], x: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut h = vec![czero(); self.len()];
        for (n, xn) in x.iter().enumerate() {
            if *xn == czero() {
                continue;
            }
            for (hm, a) in h.iter_mut().zip(self.atom(n, offsets[n])) {
                *hm = *hm + a * *xn;
            }
        }
        h
    }

    /// Grid index closest in angle, with the residual offset (unclipped).
    pub fn nearest(&self, angle: T) -> (usize, T) {
        let mut best = 0;
        for (n, w) in self.grid_points.iter().enumerate() {
            if (*w - angle).abs() < (self.grid_points[best] - angle).abs() {
                best = n;
            }
        }
        (best, angle - self.grid_points[best])
    }
}

/// Bernoulli-Gaussian prior `x_n ~ (1−λ)δ(x) + λ·CN(ζ, ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsePrior<T> {
    pub sparsity: T,
    pub gain_mean: Complex<T>,
    pub gain_variance: T,
}

impl<T: Real> SparsePrior<T> {
    pub fn new(sparsity: T, gain_mean: Complex<T>, gain_variance: T) -> Result<Self> {
        if !(sparsity > T::zero() && sparsity < T::one()) {
            return Err(Error::InvalidParameter(format!("sparsity must lie in (0, 1), got {sparsity}")));
        }
        if !(gain_variance > T::zero()) || !gain_variance.is_finite() {
            return Err(Error::InvalidParameter(format!("gain variance must be positive, got {gain_variance}")));
        }
        Ok(Self { sparsity, gain_mean, gain_variance })
    }

    /// `λ = L/N`, `ζ = 0`, `ρ = 1`.
    pub fn initial(num_paths: usize, grid_size: usize) -> Result<Self> {
        Self::new(T::from_count(num_paths) / T::from_count(grid_size), czero(), T::one())
    }
}

/// Pilot design and the effective sensing matrix.
#[derive(Debug, Clone)]
pub struct MeasurementModel<T> {
    pub num_pilots: usize,
    /// Selected DFT rows, one per pilot slot.
    pub selection: Vec<usize>,
    /// Column permutation: `(D R)[i, n] = D[i, permutation[n]]`.
    pub permutation: Vec<usize>,
    /// `S·D·R`, rows orthonormal.
    pub pilot_matrix: CMatrix<T>,
    /// `W̃ = S·D·R / √N`, acting on the small-scale channel.
    pub sensing: CMatrix<T>,
    /// RIS phases `θ_{p,n}` in `[0, 2π)` per pilot slot.
    pub ris_patterns: Vec<Vec<T>>,
    /// Maps normalized to raw observations: `conj(r_p) = c·large·(W̃ h̄)_p` per
    /// unit `√(P_b G)`, with `c = conj(α)·√M·N`.
    pub cascade_scalar: Complex<T>,
    pub noise_variance: T,
    pub grid: AngularGrid<T>,
    effective: CMatrix<T>,
}

/// Builds a partial-DFT, randomly permuted pilot design realized by per-slot
/// RIS phase patterns with MRT at the BS.
pub fn build_measurement<T: Real, R: Rng + ?Sized>(
    grid: &AngularGrid<T>,
    bs_hap: &BsHapChannel<T>,
    array: &ArrayConfig<T>,
    num_pilots: usize,
    rng: &mut R,
) -> Result<MeasurementModel<T>> {
    let n = grid.len();
    if n != array.num_ris_elements {
        return Err(Error::DimensionMismatch(format!("grid has {n} points, RIS has {}", array.num_ris_elements)));
    }
    if num_pilots == 0 || num_pilots > n {
        return Err(Error::InvalidParameter(format!("num_pilots must lie in [1, {n}], got {num_pilots}")));
    }
    let mut selection = index::sample(rng, n, num_pilots).into_vec();
    selection.sort_unstable();
    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.shuffle(rng);
    Ok(measurement_from_design(grid, bs_hap, array, selection, permutation))
}

/// Deterministic variant of [`build_measurement`] with explicit `S` and `R`.
pub fn measurement_from_design<T: Real>(
    grid: &AngularGrid<T>,
    bs_hap: &BsHapChannel<T>,
    array: &ArrayConfig<T>,
    selection: Vec<usize>,
    permutation: Vec<usize>,
) -> MeasurementModel<T> {
    let n = grid.len();
    let nf = T::from_count(n);
    let two_pi = T::lit(2.0) * T::PI();
    let sqrt_n = nf.sqrt();
    // Unit-modulus rows u_p[k] = √N (D R)[s_p, k] = exp(−j2π s_p perm[k] / N).
    let phase = |row: usize, col: usize| -two_pi * T::from_count((selection[row] * permutation[col]) % n) / nf;
    let pilot_matrix = CMatrix::from_fn(selection.len(), n, |p, k| cis(phase(p, k)) / sqrt_n);
    let sensing = pilot_matrix.scale(Complex::new(T::one() / sqrt_n, T::zero()));

    // conj(r_p) carries e^{−jθ_{p,k}}·conj(a_RIS(aoa)[k]); choosing θ to cancel
    // the steering phase leaves exactly u_p[k].
    let ris_step = two_pi * array.ris_spacing * bs_hap.aoa.sin();
    let ris_patterns =
        (0..selection.len()).map(|p| (0..n).map(|k| wrap_phase(-phase(p, k) + ris_step * T::from_count(k))).collect()).collect();
    let m = T::from_count(array.num_bs_antennas);
    let cascade_scalar = bs_hap.complex_gain.conj() * m.sqrt() * nf;
    let effective = sensing.matmul(&grid.dictionary());
    MeasurementModel {
        num_pilots: selection.len(),
        selection,
        permutation,
        pilot_matrix,
        sensing,
        ris_patterns,
        cascade_scalar,
        noise_variance: T::zero(),
        grid: grid.clone(),
        effective,
    }
}

/// Maps any angle into `[0, 2π)`.
pub fn wrap_phase<T: Real>(theta: T) -> T {
    let two_pi = T::lit(2.0) * T::PI();
    let w = theta % two_pi;
    let w = if w < T::zero() { w + two_pi } else { w };
    if w >= two_pi {
        T::zero()
    } else {
        w
    }
}

impl<T: Real> MeasurementModel<T> {
    pub fn grid_size(&self) -> usize {
        self.grid.len()
    }

    /// `F(Δφ)` at the current grid offsets.
    pub fn effective_matrix(&self) -> &CMatrix<T> {
        &self.effective
    }

    /// `W̃ a(ω̂_n + offset)`.
    pub fn effective_column(&self, n: usize, offset: T) -> Vec<Complex<T>> {
        self.sensing.mul_vec(&self.grid.atom(n, offset))
    }

    /// `W̃ a'(ω̂_n + offset)`.
    pub fn effective_derivative(&self, n: usize, offset: T) -> Vec<Complex<T>> {
        self.sensing.mul_vec(&self.grid.atom_derivative(n, offset))
    }

    /// Moves the grid offsets (clipped) and refreshes the changed columns of `F`.
    pub fn set_offsets(&mut self, offsets: &[T]) {
        assert_eq!(offsets.len(), self.grid.len(), "offset length");
        for (n, o) in offsets.iter().enumerate() {
            let clipped = self.grid.clip_offset(n, *o);
            if clipped != self.grid.offsets[n] {
                self.grid.offsets[n] = clipped;
                let col = self.effective_column(n, clipped);
                self.effective.set_column(n, &col);
            }
        }
    }

    /// Raw RIS-domain sensing row `c·W̃` rebuilt from the stored phases and the
    /// BS → HAP steering vector; used to check the realization.
    pub fn realized_row(&self, p: usize, bs_hap: &BsHapChannel<T>, array: &ArrayConfig<T>) -> Vec<Complex<T>> {
        let m = T::from_count(array.num_bs_antennas);
        let c0 = bs_hap.complex_gain * m.sqrt();
        let a_ris = bs_hap.ris_steering(array);
        self.ris_patterns[p].iter().zip(&a_ris).map(|(theta, a)| (c0 * cis(*theta) * *a).conj()).collect()
    }

    /// `σ_e² = ‖W̃ h̄‖² / (P · snr)`.
    pub fn noise_variance_for_snr(&self, small_scale_channel: &[Complex<T>], snr_linear: T) -> T {
        norm_sqr(&self.sensing.mul_vec(small_scale_channel)) / (T::from_count(self.num_pilots) * snr_linear)
    }
}

/// Noisy pilot observations `W̃ h̄ + n` of the small-scale channel. With the
/// channel exactly on the grid this equals `F(Δφ_true) x_true + n`.
pub fn simulate_pilot_reception<T: Real, R: Rng + ?Sized>(
    model: &MeasurementModel<T>,
    instance: &SparseChannelInstance<T>,
    noise_variance: T,
    rng: &mut R,
) -> Result<Vec<Complex<T>>> {
    let h = instance.small_scale_channel();
    if h.len() != model.grid_size() {
        return Err(Error::DimensionMismatch(format!("channel has {} entries, model expects {}", h.len(), model.grid_size())));
    }
    let mut y = model.sensing.mul_vec(&h);
    if noise_variance > T::zero() {
        for v in y.iter_mut() {
            *v = *v + complex_gaussian(rng, noise_variance);
        }
    }
    Ok(y)
}

/// Places each small-scale path gain at its nearest grid index with the exact
/// residual offset. `None` when two paths share an index or an offset falls
/// outside its cell.
pub fn on_grid_representation<T: Real>(
    grid: &AngularGrid<T>,
    instance: &SparseChannelInstance<T>,
) -> Option<(Vec<Complex<T>>, Vec<T>)> {
    let mut x = vec![czero(); grid.len()];
    let mut offsets = vec![T::zero(); grid.len()];
    let mut used = vec![false; grid.len()];
    for (g, w) in instance.small_scale_gains().iter().zip(&instance.path_aods) {
        let (n, off) = grid.nearest(*w);
        if used[n] || grid.clip_offset(n, off) != off {
            return None;
        }
        used[n] = true;
        x[n] = *g;
        offsets[n] = off;
    }
    Some((x, offsets))
}
