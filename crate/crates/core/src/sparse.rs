//! Compressed sparse row matrices over `Complex64`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Coordinate-format accumulator. Duplicate `(row, col)` entries are summed
/// when the matrix is built.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, Complex64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, capacity: usize) -> Self {
        Self { nrows, ncols, entries: Vec::with_capacity(capacity) }
    }

    /// Panics on out-of-range indices.
    pub fn push(&mut self, row: usize, col: usize, value: Complex64) {
        assert!(row < self.nrows && col < self.ncols, "entry ({row}, {col}) out of range");
        self.entries.push((row, col, value));
    }

    pub fn push_real(&mut self, row: usize, col: usize, value: f64) {
        self.push(row, col, Complex64::new(value, 0.0));
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_by_key(|e| (e.0, e.1));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indptr[r + 1] += 1;
                indices.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..self.nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, indptr, indices, values }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Complex64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![Complex64::new(1.0, 0.0); n])
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d: Vec<Complex64> = diag.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_diagonal(&d)
    }

    /// Row-major dense input; exact zeros are skipped.
    pub fn from_dense(nrows: usize, ncols: usize, data: &[Complex64]) -> Self {
        assert_eq!(data.len(), nrows * ncols);
        let mut b = TripletBuilder::new(nrows, ncols);
        for r in 0..nrows {
            for c in 0..ncols {
                let v = data[r * ncols + c];
                if v != ZERO {
                    b.push(r, c, v);
                }
            }
        }
        b.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of one row, columns ascending.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// Iterates all stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => ZERO,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.nrows * self.ncols];
        for (r, c, v) in self.triplets() {
            out[r * self.ncols + c] += v;
        }
        out
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![ZERO; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.ncols, "matvec input length");
        assert_eq!(y.len(), self.nrows, "matvec output length");
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// `y = Mᴴ x`.
    pub fn adjoint_mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.nrows, "adjoint matvec input length");
        let mut y = vec![ZERO; self.ncols];
        for (r, xr) in x.iter().enumerate() {
            for (c, v) in self.row(r) {
                y[c] += v.conj() * xr;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        self.transpose_with(|v| v)
    }

    pub fn adjoint(&self) -> Self {
        self.transpose_with(|v| v.conj())
    }

    fn transpose_with(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![ZERO; self.nnz()];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                let slot = next[c];
                indices[slot] = r;
                values[slot] = f(v);
                next[c] += 1;
            }
        }
        Self { nrows: self.ncols, ncols: self.nrows, indptr, indices, values }
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `self + other`; the sparsity pattern is the union.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::shape(format!(
                "cannot add {}x{} and {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut b = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + other.nnz());
        for (r, c, v) in self.triplets().chain(other.triplets()) {
            b.push(r, c, v);
        }
        Ok(b.build())
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.ncols != other.nrows {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut acc = vec![ZERO; other.ncols];
        let mut marker = vec![usize::MAX; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        for r in 0..self.nrows {
            touched.clear();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if marker[c] != r {
                        marker[c] = r;
                        acc[c] = ZERO;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                indices.push(c);
                values.push(acc[c]);
            }
            indptr.push(indices.len());
        }
        Ok(Self { nrows: self.nrows, ncols: other.ncols, indptr, indices, values })
    }

    /// `Mᴴ M`.
    pub fn gram(&self) -> Self {
        self.adjoint().matmul(self).expect("adjoint dimensions always agree")
    }

    /// Assembles a block matrix from a row-major grid of optional blocks.
    /// Every block row must agree on height and every block column on width;
    /// `None` blocks are zero and need the sizes from `row_sizes`/`col_sizes`.
    pub fn from_blocks(row_sizes: &[usize], col_sizes: &[usize], blocks: &[Option<&CsrMatrix>]) -> Result<Self> {
        if blocks.len() != row_sizes.len() * col_sizes.len() {
            return Err(Error::shape("block grid size mismatch"));
        }
        let nrows: usize = row_sizes.iter().sum();
        let ncols: usize = col_sizes.iter().sum();
        let mut b = TripletBuilder::new(nrows, ncols);
        let mut r0 = 0;
        for (bi, &h) in row_sizes.iter().enumerate() {
            let mut c0 = 0;
            for (bj, &w) in col_sizes.iter().enumerate() {
                if let Some(m) = blocks[bi * col_sizes.len() + bj] {
                    if m.nrows != h || m.ncols != w {
                        return Err(Error::shape(format!(
                            "block ({bi}, {bj}) is {}x{}, expected {h}x{w}",
                            m.nrows, m.ncols
                        )));
                    }
                    for (r, c, v) in m.triplets() {
                        b.push(r0 + r, c0 + c, v);
                    }
                }
                c0 += w;
            }
            r0 += h;
        }
        Ok(b.build())
    }

    /// Largest `|i − j|` over stored entries below and above the diagonal.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut lower = 0;
        let mut upper = 0;
        for (r, c, _) in self.triplets() {
            if r > c {
                lower = lower.max(r - c);
            } else {
                upper = upper.max(c - r);
            }
        }
        (lower, upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sample() -> CsrMatrix {
        let mut b = TripletBuilder::new(2, 3);
        b.push(0, 0, c(1.0, 1.0));
        b.push(0, 2, c(2.0, 0.0));
        b.push(1, 1, c(0.0, -3.0));
        b.push(0, 0, c(1.0, 0.0));
        b.build()
    }

    #[test]
    fn duplicates_are_summed() {
        let m = sample();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 0), c(2.0, 1.0));
        assert_eq!(m.get(1, 0), c(0.0, 0.0));
    }

    #[test]
    fn adjoint_matches_adjoint_matvec() {
        let m = sample();
        let x = [c(1.0, -1.0), c(0.5, 2.0)];
        assert_eq!(m.adjoint().mul_vec(&x), m.adjoint_mul_vec(&x));
        assert_eq!(m.transpose().get(2, 0), c(2.0, 0.0));
        assert_eq!(m.adjoint().get(0, 0), c(2.0, -1.0));
    }

    #[test]
    fn matmul_matches_dense() {
        let m = sample();
        let g = m.gram();
        let d = m.to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let want: Complex64 = (0..2).map(|k| d[k * 3 + i].conj() * d[k * 3 + j]).sum();
                assert!((g.get(i, j) - want).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn blocks_and_bandwidth() {
        let i2 = CsrMatrix::identity(2);
        let m = CsrMatrix::from_blocks(&[2, 2], &[2, 2], &[Some(&i2), None, None, Some(&i2.scaled(c(2.0, 0.0)))]).unwrap();
        assert_eq!(m.nrows(), 4);
        assert_eq!(m.get(3, 3), c(2.0, 0.0));
        assert_eq!(m.get(0, 3), c(0.0, 0.0));
        assert_eq!(m.bandwidths(), (0, 0));
        assert!(CsrMatrix::from_blocks(&[3], &[2], &[Some(&i2)]).is_err());
        assert!(sample().add(&i2).is_err());
    }
}
