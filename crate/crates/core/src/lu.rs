//! Sparse direct solver: reverse Cuthill–McKee reordering followed by a banded
//! LU factorization with partial (row) pivoting.
//!
//! Finite-difference operators on rectangular grids have a natural band
//! structure, so after RCM the band is roughly the short grid dimension times
//! the stencil reach. Fill-in stays inside the band, which bounds memory at
//! `n·(2·kl + ku + 1)` entries.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::math::norm;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Pivots below `PIVOT_TOL · max|entry|` are treated as singular.
pub const PIVOT_TOL: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Reverse Cuthill–McKee ordering of the symmetrized pattern of `m`.
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_ordering(m: &CsrMatrix) -> Vec<usize> {
    let n = m.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, c, _) in m.triplets() {
        if r != c {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    for list in adj.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut level = vec![usize::MAX; n];
    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        let start = pseudo_peripheral(seed, &adj, &degree, &mut level);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// George–Liu search for a node of (near) maximal eccentricity.
fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], degree: &[usize], level: &mut [usize]) -> usize {
    let mut node = seed;
    let mut ecc = 0;
    loop {
        let (depth, last_level) = bfs_levels(node, adj, level);
        let candidate = last_level.into_iter().min_by_key(|&w| (degree[w], w)).unwrap_or(node);
        if depth <= ecc || candidate == node {
            return node;
        }
        ecc = depth;
        node = candidate;
    }
}

fn bfs_levels(start: usize, adj: &[Vec<usize>], level: &mut [usize]) -> (usize, Vec<usize>) {
    let mut seen = Vec::new();
    level[start] = 0;
    seen.push(start);
    let mut frontier = vec![start];
    let mut depth = 0;
    loop {
        let mut next = Vec::new();
        for &v in &frontier {
            for &w in &adj[v] {
                if level[w] == usize::MAX {
                    level[w] = depth + 1;
                    seen.push(w);
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        depth += 1;
        frontier = next;
    }
    for v in seen {
        level[v] = usize::MAX;
    }
    (depth, frontier)
}

/// LU factors of a square sparse matrix, reusable across right-hand sides.
/// Solves take `&self` and can run concurrently.
#[derive(Debug, Clone)]
pub struct Factorization {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    band: Vec<Complex64>,
    pivots: Vec<usize>,
    matrix: CsrMatrix,
}

pub fn factorize(m: &CsrMatrix) -> Result<Factorization> {
    Factorization::new(m)
}

impl Factorization {
    pub fn new(m: &CsrMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::shape(format!(
                "factorization needs a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        let perm = rcm_ordering(m);
        let mut inverse = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for (r, c, _) in m.triplets() {
            let (i, j) = (inverse[r], inverse[c]);
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let width = 2 * kl + ku + 1;
        let mut band = vec![ZERO; n * width];
        for (r, c, v) in m.triplets() {
            let (i, j) = (inverse[r], inverse[c]);
            band[i * width + j + kl - i] += v;
        }

        let threshold = PIVOT_TOL * m.max_abs();
        let mut pivots = vec![0usize; n];
        let at = |i: usize, j: usize| i * width + j + kl - i;
        for k in 0..n {
            let last = (k + kl).min(n.saturating_sub(1));
            let mut p = k;
            let mut best = band[at(k, k)].norm();
            for i in k + 1..=last {
                let v = band[at(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > threshold) {
                return Err(Error::Singular { pivot: k, magnitude: best });
            }
            pivots[k] = p;
            let end = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=end {
                    band.swap(at(k, j), at(p, j));
                }
            }
            let pivot = band[at(k, k)];
            let span = end - k;
            for i in k + 1..=last {
                let l = band[at(i, k)] / pivot;
                band[at(i, k)] = l;
                if l == ZERO {
                    continue;
                }
                let (src, dst) = (at(k, k + 1), at(i, k + 1));
                // Row k precedes row i in storage, so split to borrow both.
                let (head, tail) = band.split_at_mut(dst);
                let pivot_row = &head[src..src + span];
                for (d, s) in tail[..span].iter_mut().zip(pivot_row) {
                    *d -= l * s;
                }
            }
        }
        Ok(Self { n, kl, ku, width, perm, band, pivots, matrix: m.clone() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Lower and upper bandwidth after reordering.
    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.width + j + self.kl - i
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(b.len(), self.n, "right-hand side length");
        let n = self.n;
        let mut c: Vec<Complex64> = self.perm.iter().map(|&old| b[old]).collect();
        for k in 0..n {
            c.swap(k, self.pivots[k]);
            let ck = c[k];
            if ck != ZERO {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    c[i] -= self.band[self.at(i, k)] * ck;
                }
            }
        }
        for k in (0..n).rev() {
            let end = (k + self.kl + self.ku).min(n - 1);
            let base = self.at(k, k);
            let mut s = c[k];
            for (off, x) in c[k + 1..=end].iter().enumerate() {
                s -= self.band[base + 1 + off] * x;
            }
            c[k] = s / self.band[base];
        }
        let mut x = vec![ZERO; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = c[new];
        }
        x
    }

    /// Solves `Mᴴ x = b`.
    pub fn solve_adjoint(&self, b: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(b.len(), self.n, "right-hand side length");
        let n = self.n;
        let mut c: Vec<Complex64> = self.perm.iter().map(|&old| b[old]).collect();
        // Uᴴ z = c, column-oriented over rows of U.
        for k in 0..n {
            let base = self.at(k, k);
            let zk = c[k] / self.band[base].conj();
            c[k] = zk;
            if zk != ZERO {
                let end = (k + self.kl + self.ku).min(n - 1);
                for j in k + 1..=end {
                    c[j] -= self.band[base + (j - k)].conj() * zk;
                }
            }
        }
        // Elementary transforms in reverse, each followed by its interchange.
        for k in (0..n).rev() {
            let mut s = c[k];
            for i in k + 1..=(k + self.kl).min(n - 1) {
                s -= self.band[self.at(i, k)].conj() * c[i];
            }
            c[k] = s;
            c.swap(k, self.pivots[k]);
        }
        let mut x = vec![ZERO; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = c[new];
        }
        x
    }

    /// Solve followed by up to `max_steps` rounds of iterative refinement,
    /// stopping once `‖b − M x‖ ≤ tol·‖b‖`. Returns the solution and the final
    /// relative residual.
    pub fn solve_refined(&self, b: &[Complex64], tol: f64, max_steps: usize) -> (Vec<Complex64>, f64) {
        let mut x = self.solve(b);
        let bnorm = norm(b);
        if bnorm == 0.0 {
            return (x, 0.0);
        }
        let mut rel = self.residual_norm(&x, b) / bnorm;
        for _ in 0..max_steps {
            if rel <= tol {
                break;
            }
            let mx = self.matrix.mul_vec(&x);
            let r: Vec<Complex64> = b.iter().zip(&mx).map(|(bi, mi)| bi - mi).collect();
            let dx = self.solve(&r);
            let candidate: Vec<Complex64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
            let cand_rel = self.residual_norm(&candidate, b) / bnorm;
            if cand_rel >= rel {
                break;
            }
            x = candidate;
            rel = cand_rel;
        }
        (x, rel)
    }

    fn residual_norm(&self, x: &[Complex64], b: &[Complex64]) -> f64 {
        let mx = self.matrix.mul_vec(x);
        let r: Vec<Complex64> = b.iter().zip(&mx).map(|(bi, mi)| bi - mi).collect();
        norm(&r)
    }
}
