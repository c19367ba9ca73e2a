//! Small dense complex matrices and singular values by one-sided Jacobi.
//! Only used for diagnostics on tiny instances.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::math::sqrt;
use crate::sparse::CsrMatrix;

/// Singular values of a row-major `nrows × ncols` complex matrix, descending.
/// Returns `min(nrows, ncols)` values.
pub fn singular_values(nrows: usize, ncols: usize, data: &[Complex64]) -> Vec<f64> {
    assert_eq!(data.len(), nrows * ncols);
    // Work on columns of the taller orientation so that rotations act on
    // `min(nrows, ncols)` columns of length `max(nrows, ncols)`.
    let (rows, cols, mut columns) = if nrows >= ncols {
        let cols: Vec<Vec<Complex64>> = (0..ncols).map(|j| (0..nrows).map(|i| data[i * ncols + j]).collect()).collect();
        (nrows, ncols, cols)
    } else {
        let cols: Vec<Vec<Complex64>> =
            (0..nrows).map(|i| (0..ncols).map(|j| data[i * ncols + j].conj()).collect()).collect();
        (ncols, nrows, cols)
    };
    let _ = rows;
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = columns[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = columns[q].iter().map(|z| z.norm_sqr()).sum();
                let gamma: Complex64 = columns[p].iter().zip(&columns[q]).map(|(a, b)| a.conj() * b).sum();
                let g = gamma.norm();
                if g == 0.0 || g <= f64::EPSILON * sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + sqrt(1.0 + zeta * zeta));
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = c * t;
                let (left, right) = columns.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
                    let bq = phase.conj() * *b;
                    let new_p = *a * c - bq * s;
                    let new_q = *a * s + bq * c;
                    *a = new_p;
                    *b = new_q;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = columns.iter().map(|col| sqrt(col.iter().map(|z| z.norm_sqr()).sum())).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(singular: &[f64], rel_tol: f64) -> usize {
    let top = singular.first().copied().unwrap_or(0.0);
    singular.iter().filter(|&&s| s > rel_tol * top).count()
}

pub fn csr_singular_values(m: &CsrMatrix) -> Vec<f64> {
    singular_values(m.nrows(), m.ncols(), &m.to_dense())
}
