//! Dense complex matrices and the handful of kernels the estimators need.

use std::ops::{Index, IndexMut};

use num_complex::Complex;

use crate::scalar::{czero, Real};

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![czero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<Complex<T>>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        Self::from_fn(rows, cols, |r, c| columns[c][r])
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { Complex::new(T::one(), T::zero()) } else { czero() })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[Complex<T>] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<Complex<T>> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[Complex<T>]) {
        assert_eq!(values.len(), self.rows, "column length");
        for (r, v) in values.iter().enumerate() {
            self[(r, c)] = *v;
        }
    }

    /// `self · x`.
    pub fn mul_vec(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(x.len(), self.cols, "mul_vec dimension");
        (0..self.rows).map(|r| self.row(r).iter().zip(x).fold(czero(), |acc, (a, b)| acc + *a * *b)).collect()
    }

    /// `selfᴴ · y`.
    pub fn adjoint_mul_vec(&self, y: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(y.len(), self.rows, "adjoint_mul_vec dimension");
        let mut out = vec![czero(); self.cols];
        for (r, yr) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o = *o + a.conj() * *yr;
            }
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &CMatrix<T>) -> CMatrix<T> {
        assert_eq!(self.cols, other.rows, "matmul dimension");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == czero() {
                    continue;
                }
                for c in 0..other.cols {
                    out[(r, c)] = out[(r, c)] + a * other[(k, c)];
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> CMatrix<T> {
        CMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, s: Complex<T>) -> CMatrix<T> {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| *v * s).collect() }
    }

    /// Squared Frobenius norm.
    pub fn frobenius_sqr(&self) -> T {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &CMatrix<T>) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (*a - *b).norm()).fold(T::zero(), T::max)
    }
}

impl<T> Index<(usize, usize)> for CMatrix<T> {
    type Output = Complex<T>;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex<T> {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for CMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[r * self.cols + c]
    }
}

/// `Σ conj(a_i)·b_i`.
pub fn dot<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter().zip(b).fold(czero(), |acc, (x, y)| acc + x.conj() * *y)
}

pub fn norm_sqr<T: Real>(a: &[Complex<T>]) -> T {
    a.iter().map(|v| v.norm_sqr()).sum()
}

pub fn sub<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Vec<Complex<T>> {
    a.iter().zip(b).map(|(x, y)| *x - *y).collect()
}

/// Least-squares coefficients of `y` on the given columns, by Cholesky on the
/// Gram matrix. Returns `None` when the Gram matrix is numerically singular;
/// in that case `Err(k)` names the first column that made it so.
pub fn least_squares<T: Real>(columns: &[&[Complex<T>]], y: &[Complex<T>]) -> Result<Vec<Complex<T>>, usize> {
    let k = columns.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    // Gram matrix G = Cᴴ C and right-hand side Cᴴ y.
    let mut gram = CMatrix::<T>::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let g = dot(columns[i], columns[j]);
            gram[(i, j)] = g;
            gram[(j, i)] = g.conj();
        }
    }
    let rhs: Vec<Complex<T>> = columns.iter().map(|c| dot(c, y)).collect();
    let lower = cholesky(&gram)?;
    Ok(cholesky_solve(&lower, &rhs))
}

/// Lower-triangular Cholesky factor of a Hermitian positive-definite matrix.
/// Fails with the index of the first pivot that is not safely positive.
pub fn cholesky<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>, usize> {
    let n = a.rows();
    let mut l = CMatrix::<T>::zeros(n, n);
    let scale = (0..n).map(|i| a[(i, i)].re.abs()).fold(T::zero(), T::max);
    let floor = scale * T::epsilon() * T::lit(1e4);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d = d - l[(j, k)].norm_sqr();
        }
        if !(d > floor) {
            return Err(j);
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex::new(djj, T::zero());
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L Lᴴ x = b`.
pub fn cholesky_solve<T: Real>(l: &CMatrix<T>, b: &[Complex<T>]) -> Vec<Complex<T>> {
    let n = l.rows();
    let mut z = vec![czero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[(i, k)] * z[k];
        }
        z[i] = s / l[(i, i)];
    }
    let mut x = vec![czero(); n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in (i + 1)..n {
            s = s - l[(k, i)].conj() * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn adjoint_product_matches_explicit_adjoint() {
        let a = CMatrix::from_fn(3, 4, |r, k| c(r as f64 - k as f64, (r * k) as f64 * 0.5));
        let y = vec![c(1.0, 2.0), c(-0.5, 0.0), c(0.0, 1.0)];
        let direct = a.adjoint().mul_vec(&y);
        let fused = a.adjoint_mul_vec(&y);
        for (u, v) in direct.iter().zip(&fused) {
            assert!((u - v).norm() < 1e-12);
        }
    }

    #[test]
    fn least_squares_recovers_exact_combination() {
        let c0 = vec![c(1.0, 0.0), c(0.0, 1.0), c(1.0, 1.0)];
        let c1 = vec![c(0.0, -1.0), c(2.0, 0.0), c(0.5, 0.0)];
        let y: Vec<_> = c0.iter().zip(&c1).map(|(a, b)| a * c(2.0, -1.0) + b * c(0.0, 3.0)).collect();
        let x = least_squares(&[&c0, &c1], &y).unwrap();
        assert!((x[0] - c(2.0, -1.0)).norm() < 1e-12);
        assert!((x[1] - c(0.0, 3.0)).norm() < 1e-12);
    }

    #[test]
    fn least_squares_flags_dependent_column() {
        let c0 = vec![c(1.0, 0.0), c(2.0, 0.0)];
        let c1: Vec<_> = c0.iter().map(|v| v * c(0.0, 2.0)).collect();
        assert_eq!(least_squares(&[&c0, &c1], &c0), Err(1));
    }
}
