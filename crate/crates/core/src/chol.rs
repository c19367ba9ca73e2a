//! Banded Cholesky `LLᴴ` for Hermitian positive definite matrices, after the
//! same RCM reordering the LU uses. Roughly a quarter of the banded LU's work
//! and no pivot search, which matters for the normal equations of the
//! stacked systems.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::lu::{rcm_ordering, PIVOT_TOL};
use crate::math::sqrt;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    kd: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// Row `i` holds `L[i, i−kd..=i]`.
    band: Vec<Complex64>,
    matrix: CsrMatrix,
}

impl Cholesky {
    /// Factorizes `m`, reading only its lower triangle after reordering.
    /// A non-positive or tiny pivot is reported as [`Error::Singular`].
    pub fn new(m: &CsrMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::shape(format!("Cholesky needs a square matrix, got {}x{}", m.nrows(), m.ncols())));
        }
        let n = m.nrows();
        let perm = rcm_ordering(m);
        let mut inverse = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut kd = 0usize;
        for (r, c, _) in m.triplets() {
            kd = kd.max(inverse[r].abs_diff(inverse[c]));
        }
        let w = kd + 1;
        let mut band = vec![ZERO; n * w];
        let mut diag_max = 0.0f64;
        for (r, c, v) in m.triplets() {
            let (i, j) = (inverse[r], inverse[c]);
            if i >= j {
                band[i * w + j + kd - i] += v;
            }
            if i == j {
                diag_max = diag_max.max(v.re.abs());
            }
        }
        let threshold = PIVOT_TOL * diag_max;
        for i in 0..n {
            let first = i.saturating_sub(kd);
            for j in first..=i {
                let lo = first.max(j.saturating_sub(kd));
                let (ri, rj) = (i * w + kd - i, j * w + kd - j);
                let s = band[ri + j] - dot_conj(&band[ri + lo..ri + j], &band[rj + lo..rj + j]);
                if j < i {
                    band[ri + j] = s / band[rj + j].re;
                } else {
                    if !(s.re > threshold) {
                        return Err(Error::Singular { pivot: i, magnitude: s.re.max(0.0) });
                    }
                    band[ri + i] = Complex64::new(sqrt(s.re), 0.0);
                }
            }
        }
        Ok(Self { n, kd, perm, band, matrix: m.clone() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Half bandwidth after reordering.
    pub fn bandwidth(&self) -> usize {
        self.kd
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(b.len(), self.n, "right-hand side length");
        let (n, kd, w) = (self.n, self.kd, self.kd + 1);
        let mut c: Vec<Complex64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let row = i * w + kd - i;
            let mut s = c[i];
            for k in i.saturating_sub(kd)..i {
                s -= self.band[row + k] * c[k];
            }
            c[i] = s / self.band[row + i].re;
        }
        for i in (0..n).rev() {
            let row = i * w + kd - i;
            let xi = c[i] / self.band[row + i].re;
            c[i] = xi;
            if xi != ZERO {
                for k in i.saturating_sub(kd)..i {
                    c[k] -= self.band[row + k].conj() * xi;
                }
            }
        }
        let mut x = vec![ZERO; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = c[new];
        }
        x
    }
}

/// `Σ a_k·conj(b_k)`, four independent accumulator pairs so the loop is not
/// bound by addition latency.
#[inline]
fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let mut re = [0.0f64; 4];
    let mut im = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            re[l] += x[l].re * y[l].re + x[l].im * y[l].im;
            im[l] += x[l].im * y[l].re - x[l].re * y[l].im;
        }
    }
    let mut s = Complex64::new(re.iter().sum(), im.iter().sum());
    for (x, y) in ta.iter().zip(tb) {
        s += x * y.conj();
    }
    s
}
