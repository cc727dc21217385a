//! Orthogonal matching pursuit and subspace pursuit on a fixed dictionary.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{least_squares, norm_sqr, sub, CMatrix};
use crate::scalar::{czero, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig<T> {
    pub target_sparsity: usize,
    /// Stop once `‖r‖ ≤ tol·‖y‖`.
    pub residual_tolerance: T,
    pub max_iterations: usize,
}

impl<T: Real> GreedyConfig<T> {
    pub fn new(target_sparsity: usize) -> Self {
        Self { target_sparsity, residual_tolerance: T::lit(1e-8), max_iterations: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyResult<T> {
    pub coefficients: Vec<Complex<T>>,
    /// Selected column indices, sorted.
    pub support: Vec<usize>,
    pub iterations: usize,
    pub residual_norm: T,
}

fn validate<T: Real>(y: &[Complex<T>], f: &CMatrix<T>, config: &GreedyConfig<T>) -> Result<()> {
    if config.target_sparsity == 0 {
        return Err(Error::InvalidParameter("target_sparsity must be at least 1".into()));
    }
    if f.cols() < config.target_sparsity {
        return Err(Error::InvalidParameter(format!("{} columns cannot hold sparsity {}", f.cols(), config.target_sparsity)));
    }
    if y.len() != f.rows() {
        return Err(Error::DimensionMismatch(format!("y has {} entries, F has {} rows", y.len(), f.rows())));
    }
    Ok(())
}

/// Dictionary columns and their norms, cached once per call.
struct Atoms<T> {
    columns: Vec<Vec<Complex<T>>>,
    norms: Vec<T>,
}

impl<T: Real> Atoms<T> {
    fn new(f: &CMatrix<T>) -> Self {
        let columns: Vec<_> = (0..f.cols()).map(|c| f.column(c)).collect();
        let norms = columns.iter().map(|c| norm_sqr(c).sqrt()).collect();
        Self { columns, norms }
    }

    /// `|f_nᴴ r| / ‖f_n‖`, zero for null columns.
    fn correlations(&self, f: &CMatrix<T>, r: &[Complex<T>]) -> Vec<T> {
        f.adjoint_mul_vec(r)
            .iter()
            .zip(&self.norms)
            .map(|(c, n)| if *n > T::zero() { c.norm() / *n } else { T::zero() })
            .collect()
    }

    /// Least squares on `support`, dropping atoms that make the Gram matrix
    /// singular. Returns the coefficients aligned with the surviving support.
    fn fit(&self, support: &mut Vec<usize>, y: &[Complex<T>]) -> Vec<Complex<T>> {
        loop {
            let cols: Vec<&[Complex<T>]> = support.iter().map(|i| self.columns[*i].as_slice()).collect();
            match least_squares(&cols, y) {
                Ok(x) => return x,
                Err(bad) => {
                    support.remove(bad);
                }
            }
        }
    }

    fn residual(&self, support: &[usize], coeffs: &[Complex<T>], y: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut fit = vec![czero(); y.len()];
        for (i, c) in support.iter().zip(coeffs) {
            for (f, a) in fit.iter_mut().zip(&self.columns[*i]) {
                *f = *f + *a * *c;
            }
        }
        sub(y, &fit)
    }

    fn scatter(&self, support: &[usize], coeffs: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut x = vec![czero(); self.columns.len()];
        for (i, c) in support.iter().zip(coeffs) {
            x[*i] = *c;
        }
        x
    }
}

/// Indices of the `k` largest scores (ties to the lower index), skipping `exclude`.
fn top_k<T: Real>(scores: &[T], k: usize, exclude: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|i| !exclude.contains(i)).collect();
    idx.sort_by(|a, b| scores[*b].partial_cmp(&scores[*a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(b)));
    idx.truncate(k);
    idx
}

pub fn omp<T: Real>(y: &[Complex<T>], f: &CMatrix<T>, config: &GreedyConfig<T>) -> Result<GreedyResult<T>> {
    validate(y, f, config)?;
    let atoms = Atoms::new(f);
    let y_norm = norm_sqr(y).sqrt();
    let stop = config.residual_tolerance * y_norm;
    let mut support: Vec<usize> = Vec::new();
    let mut rejected: Vec<usize> = Vec::new();
    let mut coeffs = Vec::new();
    let mut residual = y.to_vec();
    let mut res_norm = y_norm;
    let mut iterations = 0;
    while support.len() < config.target_sparsity && iterations < config.max_iterations && res_norm > stop {
        iterations += 1;
        let corr = atoms.correlations(f, &residual);
        let mut skip = support.clone();
        skip.extend(&rejected);
        let Some(&best) = top_k(&corr, 1, &skip).first() else { break };
        if !(corr[best] > T::zero()) {
            break;
        }
        support.push(best);
        let before = support.len();
        coeffs = atoms.fit(&mut support, y);
        if support.len() < before {
            rejected.push(best);
        }
        residual = atoms.residual(&support, &coeffs, y);
        res_norm = norm_sqr(&residual).sqrt();
    }
    let mut pairs: Vec<_> = support.iter().copied().zip(coeffs.iter().copied()).collect();
    pairs.sort_by_key(|p| p.0);
    let support: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let coeffs: Vec<_> = pairs.iter().map(|p| p.1).collect();
    Ok(GreedyResult { coefficients: atoms.scatter(&support, &coeffs), support, iterations, residual_norm: res_norm })
}

pub fn sp<T: Real>(y: &[Complex<T>], f: &CMatrix<T>, config: &GreedyConfig<T>) -> Result<GreedyResult<T>> {
    validate(y, f, config)?;
    let atoms = Atoms::new(f);
    let k = config.target_sparsity;
    if norm_sqr(y) == T::zero() {
        return Ok(GreedyResult {
            coefficients: vec![czero(); f.cols()],
            support: Vec::new(),
            iterations: 0,
            residual_norm: T::zero(),
        });
    }
    let stop = config.residual_tolerance * norm_sqr(y).sqrt();

    let mut support = top_k(&atoms.correlations(f, y), k, &[]);
    support.sort_unstable();
    let mut coeffs = atoms.fit(&mut support, y);
    let mut residual = atoms.residual(&support, &coeffs, y);
    let mut res_norm = norm_sqr(&residual).sqrt();
    let mut iterations = 0;

    while iterations < config.max_iterations && res_norm > stop {
        iterations += 1;
        let mut merged = support.clone();
        merged.extend(top_k(&atoms.correlations(f, &residual), k, &support));
        merged.sort_unstable();
        let wide = atoms.fit(&mut merged, y);
        let mags: Vec<T> = wide.iter().map(|c| c.norm()).collect();
        let mut pruned: Vec<usize> = top_k(&mags, k, &[]).into_iter().map(|i| merged[i]).collect();
        pruned.sort_unstable();
        let new_coeffs = atoms.fit(&mut pruned, y);
        let new_residual = atoms.residual(&pruned, &new_coeffs, y);
        let new_norm = norm_sqr(&new_residual).sqrt();
        if new_norm >= res_norm {
            break;
        }
        support = pruned;
        coeffs = new_coeffs;
        residual = new_residual;
        res_norm = new_norm;
    }
    Ok(GreedyResult { coefficients: atoms.scatter(&support, &coeffs), support, iterations, residual_norm: res_norm })
}
