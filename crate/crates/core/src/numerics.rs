//! Dense linear-algebra kernel and the seedable random stream used by every
//! experiment.
//!
//! Matrices are row-major `f64` buffers. Vectors are plain `Vec<f64>` /
//! `&[f64]`; the helpers at the bottom of this module cover the handful of
//! BLAS-1 operations the solvers need.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("matrix is singular (zero pivot at row {row})")]
    SingularMatrix { row: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scaled(&self, c: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, o) in dst.iter_mut().zip(orow) {
                    *d += a * o;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// Largest |A_ij − A_ji| relative to max(1, |A_ij|).
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                let a = self[(i, j)];
                let b = self[(j, i)];
                worst = worst.max((a - b).abs() / a.abs().max(1.0));
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Inverse of a general square matrix via Gauss-Jordan elimination with
    /// partial pivoting.
    pub fn inverse(&self) -> Result<Mat, LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Mat::identity(n);
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
                .unwrap_or(col);
            let pivot = a[(pivot_row, col)];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(LinalgError::SingularMatrix { row: col });
            }
            if pivot_row != col {
                a.swap_rows(pivot_row, col);
                inv.swap_rows(pivot_row, col);
            }
            let p = a[(col, col)];
            for j in 0..n {
                a[(col, j)] /= p;
                inv[(col, j)] /= p;
            }
            for i in 0..n {
                if i == col {
                    continue;
                }
                let factor = a[(i, col)];
                if factor == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[(i, j)] -= factor * a[(col, j)];
                    inv[(i, j)] -= factor * inv[(col, j)];
                }
            }
        }
        Ok(inv)
    }

    /// Solves `A x = b` by LU with partial pivoting (A consumed as a copy).
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let mut a = self.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
                .unwrap_or(col);
            if a[(pivot_row, col)] == 0.0 || !a[(pivot_row, col)].is_finite() {
                return Err(LinalgError::SingularMatrix { row: col });
            }
            if pivot_row != col {
                a.swap_rows(pivot_row, col);
                x.swap(pivot_row, col);
            }
            let p = a[(col, col)];
            for i in col + 1..n {
                let factor = a[(i, col)] / p;
                if factor == 0.0 {
                    continue;
                }
                for j in col..n {
                    a[(i, j)] -= factor * a[(col, j)];
                }
                x[i] -= factor * x[col];
            }
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= a[(i, j)] * x[j];
            }
            x[i] = acc / a[(i, i)];
        }
        Ok(x)
    }

    fn swap_rows(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        let c = self.cols;
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let (head, tail) = self.data.split_at_mut(hi * c);
        head[lo * c..(lo + 1) * c].swap_with_slice(&mut tail[..c]);
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Lower Cholesky factor of `a + jitter·I`.
pub fn cholesky(a: &Mat, jitter: f64) -> Result<Mat, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[(i, j)];
            if i == j {
                acc += jitter;
            }
            let (li, lj) = (i * n, j * n);
            for k in 0..j {
                acc -= l.data[li + k] * l.data[lj + k];
            }
            if i == j {
                if !(acc > 0.0) || !acc.is_finite() {
                    return Err(LinalgError::NotPositiveDefinite { row: i, pivot: acc });
                }
                l.data[li + i] = acc.sqrt();
            } else {
                l.data[li + j] = acc / l.data[lj + j];
            }
        }
    }
    Ok(l)
}

/// Jitter multipliers (relative to the mean diagonal) tried after a plain
/// factorization fails.
pub const JITTER_LADDER: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// Cholesky with the jitter escalation ladder. Returns the factor and the
/// absolute jitter that was finally added (0 when none was needed).
pub fn cholesky_with_jitter(a: &Mat) -> Result<(Mat, f64), LinalgError> {
    match cholesky(a, 0.0) {
        Ok(l) => return Ok((l, 0.0)),
        Err(LinalgError::NotPositiveDefinite { .. }) => {}
        Err(e) => return Err(e),
    }
    let n = a.rows.max(1);
    let mean_diag = (0..a.rows).map(|i| a[(i, i)].abs()).sum::<f64>() / n as f64;
    let mut last = None;
    for rel in JITTER_LADDER {
        let jitter = rel * mean_diag.max(f64::MIN_POSITIVE);
        match cholesky(a, jitter) {
            Ok(l) => return Ok((l, jitter)),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("ladder is non-empty"))
}

/// Solves `l·x = b` (or `lᵀ·x = b` when `transposed`) for lower-triangular `l`.
pub fn solve_triangular(l: &Mat, b: &[f64], transposed: bool) -> Result<Vec<f64>, LinalgError> {
    let mut x = b.to_vec();
    solve_triangular_multi(l, &mut x, 1, transposed)?;
    Ok(x)
}

/// In-place triangular solve against `k` right-hand sides stored row-major as
/// an `n×k` block (`rhs[i*k + c]` is row `i` of column `c`).
///
/// Each column sees exactly the same sequence of floating-point operations
/// as a single-column solve, so batched and one-at-a-time results agree
/// bit for bit.
pub fn solve_triangular_multi(
    l: &Mat,
    rhs: &mut [f64],
    k: usize,
    transposed: bool,
) -> Result<(), LinalgError> {
    if !l.is_square() {
        return Err(LinalgError::NotSquare {
            rows: l.rows,
            cols: l.cols,
        });
    }
    let n = l.rows;
    if rhs.len() != n * k {
        return Err(LinalgError::DimensionMismatch {
            expected: n * k,
            got: rhs.len(),
        });
    }
    if let Some(i) = (0..n).find(|&i| l[(i, i)] == 0.0) {
        return Err(LinalgError::SingularMatrix { row: i });
    }
    let ld = l.as_slice();
    if !transposed {
        // Forward substitution, row-oriented.
        for i in 0..n {
            let lrow = &ld[i * n..i * n + i];
            let (done, rest) = rhs.split_at_mut(i * k);
            let xi = &mut rest[..k];
            for (j, &lij) in lrow.iter().enumerate() {
                let xj = &done[j * k..(j + 1) * k];
                for c in 0..k {
                    xi[c] -= lij * xj[c];
                }
            }
            let d = ld[i * n + i];
            for v in xi.iter_mut() {
                *v /= d;
            }
        }
    } else {
        // Back substitution with lᵀ, column-oriented over the rows of l.
        for i in (0..n).rev() {
            let d = ld[i * n + i];
            let (head, rest) = rhs.split_at_mut(i * k);
            let xi = &mut rest[..k];
            for v in xi.iter_mut() {
                *v /= d;
            }
            let lrow = &ld[i * n..i * n + i];
            for (j, &lij) in lrow.iter().enumerate() {
                let xj = &mut head[j * k..(j + 1) * k];
                for c in 0..k {
                    xj[c] -= lij * xi[c];
                }
            }
        }
    }
    Ok(())
}

/// Solves `(l lᵀ) x = b` given the lower Cholesky factor.
pub fn cholesky_solve(l: &Mat, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let y = solve_triangular(l, b, false)?;
    solve_triangular(l, &y, true)
}

pub fn frobenius_norm(a: &Mat) -> f64 {
    a.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Seedable, portable random stream.
///
/// Backed by ChaCha8 so that identical seeds give identical streams on every
/// platform. [`Rng::split`] derives an independent child stream, which keeps
/// per-repetition draws stable regardless of how many values earlier
/// repetitions consumed.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child generator on its own ChaCha stream.
    pub fn split(&self, stream: u64) -> Rng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        Rng {
            seed: self.seed,
            inner,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform draw from [0, 1).
    pub fn uniform01(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn uniform_in_box(&mut self, lower: &[f64], upper: &[f64]) -> Vec<f64> {
        lower
            .iter()
            .zip(upper)
            .map(|(&l, &u)| self.uniform(l, u))
            .collect()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}
