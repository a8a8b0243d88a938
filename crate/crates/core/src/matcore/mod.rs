//! Dense matrices, thin SVD, and the nuclear-norm proximal operator.

mod io;

pub use io::{read_csv, read_csv_from, read_dmr1, read_dmr1_from, write_csv, write_csv_to, write_dmr1, write_dmr1_to, DMR1_MAGIC};

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative cutoff below which a singular value counts as zero for rank reporting.
pub const RANK_RTOL: f64 = 1e-12;

/// Dense real matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let shown: Vec<String> = row.iter().take(8).map(|v| format!("{v:.4}")).collect();
            writeln!(f, "  {}", shown.join(", "))?;
        }
        write!(f, "]")
    }
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

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Builds a matrix from row-major data. Fails if the length is wrong or any value is not finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(
                format!("{} values for {rows}x{cols}", rows * cols),
                format!("{} values", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diag(rows: usize, cols: usize, values: &[f64]) -> Self {
        let mut m = Self::zeros(rows, cols);
        for (i, &v) in values.iter().enumerate().take(rows.min(cols)) {
            m[(i, i)] = v;
        }
        m
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
    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_dims(&self, other: &Mat) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::dims(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(Error::dims(
                format!("{} rows on the right", self.cols),
                format!("{}", other.rows),
            ));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Trace inner product `Tr(self^T other)`.
    pub fn dot(&self, other: &Mat) -> f64 {
        debug_assert_eq!(self.dims(), other.dims());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn scale_mut(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Mat) {
        debug_assert_eq!(self.dims(), other.dims());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.dims(), other.dims());
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.dims(), other.dims());
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn to_faer(&self) -> faer::Mat<f64> {
        faer::Mat::from_fn(self.rows, self.cols, |r, c| self[(r, c)])
    }

    fn from_faer(m: faer::MatRef<'_, f64>) -> Mat {
        Mat::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Thin SVD `u · diag(s) · v^T`, with `k = min(rows, cols)` columns in `u` and `v`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

impl SvdFactors {
    pub fn k(&self) -> usize {
        self.s.len()
    }

    /// Number of singular values above `RANK_RTOL * s_max`.
    pub fn numerical_rank(&self) -> usize {
        numerical_rank_of(&self.s)
    }

    /// Rebuilds `u · diag(values) · v^T` for an arbitrary replacement spectrum.
    pub fn reconstruct_with(&self, values: &[f64]) -> Mat {
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut out = Mat::zeros(m, n);
        for (j, &sv) in values.iter().enumerate() {
            if sv == 0.0 {
                continue;
            }
            for r in 0..m {
                let a = sv * self.u[(r, j)];
                if a == 0.0 {
                    continue;
                }
                let row = &mut out.as_mut_slice()[r * n..(r + 1) * n];
                for (c, o) in row.iter_mut().enumerate() {
                    *o += a * self.v[(c, j)];
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Mat {
        self.reconstruct_with(&self.s)
    }
}

pub(crate) fn numerical_rank_of(s: &[f64]) -> usize {
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > RANK_RTOL * smax).count()
}

/// Thin singular value decomposition with singular values sorted nonincreasing.
pub fn svd(m: &Mat) -> Result<SvdFactors> {
    let (rows, cols) = m.dims();
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidDims(format!("{rows}x{cols}")));
    }
    if !m.is_finite() {
        return Err(Error::ConvergenceFailure { rows, cols });
    }
    let f = m.to_faer();
    let dec = f
        .thin_svd()
        .map_err(|_| Error::ConvergenceFailure { rows, cols })?;
    let k = rows.min(cols);
    let sdiag = dec.S().column_vector();
    let mut s: Vec<f64> = (0..k).map(|i| sdiag[i]).collect();
    let mut u = Mat::from_faer(dec.U());
    let mut v = Mat::from_faer(dec.V());

    // faer returns nonincreasing values already; enforce it in case of ties/permutations.
    if s.windows(2).any(|w| w[0] < w[1]) {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        s = order.iter().map(|&i| s[i]).collect();
        u = Mat::from_fn(rows, k, |r, c| u[(r, order[c])]);
        v = Mat::from_fn(cols, k, |r, c| v[(r, order[c])]);
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::ConvergenceFailure { rows, cols });
    }
    Ok(SvdFactors { u, s, v })
}

/// Result of singular value soft-thresholding.
#[derive(Debug, Clone)]
pub struct Thresholded {
    pub mat: Mat,
    /// Singular values of `mat` (the thresholded spectrum).
    pub spectrum: Vec<f64>,
}

impl Thresholded {
    pub fn nuclear_norm(&self) -> f64 {
        self.spectrum.iter().sum()
    }

    pub fn rank(&self) -> usize {
        numerical_rank_of(&self.spectrum)
    }
}

/// Soft-thresholds the singular values of `g` by `tau`, keeping the thresholded spectrum.
pub fn svt_with_spectrum(g: &Mat, tau: f64) -> Result<Thresholded> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("threshold must be >= 0, got {tau}")));
    }
    let f = svd(g)?;
    let spectrum: Vec<f64> = f.s.iter().map(|s| (s - tau).max(0.0)).collect();
    let mat = f.reconstruct_with(&spectrum);
    Ok(Thresholded { mat, spectrum })
}

/// Proximal operator of `tau * ||.||_*`: `U (D - tau)_+ V^T`.
pub fn svt(g: &Mat, tau: f64) -> Result<Mat> {
    if tau == 0.0 {
        return Ok(g.clone());
    }
    Ok(svt_with_spectrum(g, tau)?.mat)
}

pub fn frob_norm(m: &Mat) -> f64 {
    m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn nuclear_norm(m: &Mat) -> Result<f64> {
    Ok(svd(m)?.s.iter().sum())
}

pub fn spectral_norm(m: &Mat) -> Result<f64> {
    Ok(svd(m)?.s.first().copied().unwrap_or(0.0))
}

pub fn numerical_rank(m: &Mat) -> Result<usize> {
    Ok(svd(m)?.numerical_rank())
}
