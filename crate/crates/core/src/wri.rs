//! Penalty WRI with variable projection. For fixed `m` the wavefield
//! minimizing `½‖Pu − d‖² + (λ/2)‖A u − q‖²` solves
//! `(PᵀP + λAᴴA) u = Pᵀd + λAᴴq`, and the projected objective has gradient
//! `λω²·Re(conj(u)⊙(A u − q))`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::acquisition::{ObservedData, ProjectionOperator, Survey};
use crate::grid::SlownessModel;
use crate::helmholtz::{assemble_with, HelmholtzOperator};
use crate::lsq::NormalEquations;
use crate::math::{norm_sqr, sqrt};
use crate::objective::{Evaluation, ObjectiveReport, PairTerms, PROJECTION_TOL};
use crate::sparse::CsrMatrix;
use crate::stats::SolveStats;
use crate::{Error, Result};

/// Factorized WRI normal matrix for one model and frequency, built from the
/// stacked operator `[P; √λ A]`.
#[derive(Debug, Clone)]
pub struct WriSystem {
    normal: NormalEquations,
    lambda: f64,
    n_receivers: usize,
}

impl WriSystem {
    pub fn new(op: &HelmholtzOperator, proj: &ProjectionOperator, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
        }
        let n = op.matrix().ncols();
        let scaled = op.matrix().scaled(Complex64::new(sqrt(lambda), 0.0));
        let stacked = CsrMatrix::from_blocks(&[proj.n_receivers(), n], &[n], &[Some(proj.matrix()), Some(&scaled)])?;
        Ok(Self { normal: NormalEquations::new(stacked)?, lambda, n_receivers: proj.n_receivers() })
    }

    pub fn dim(&self) -> usize {
        self.normal.dim()
    }

    /// Projected wavefield for one gather, with its relative normal-equation
    /// residual `‖Pᵀ(Pu − d) + λAᴴ(Au − q)‖ / ‖Pᵀd + λAᴴq‖`.
    pub fn solve(&self, d_row: &[Complex64], q: &[Complex64]) -> Result<(Vec<Complex64>, f64)> {
        if d_row.len() != self.n_receivers || q.len() != self.dim() {
            return Err(Error::shape("gather or source length does not match the WRI system"));
        }
        let sl = sqrt(self.lambda);
        let mut rhs = d_row.to_vec();
        rhs.extend(q.iter().map(|z| z * sl));
        let (u, rel) = self.normal.solve(&rhs)?;
        if !(rel <= PROJECTION_TOL) {
            return Err(Error::Inaccurate { residual: rel, tolerance: PROJECTION_TOL });
        }
        Ok((u, rel))
    }
}

/// Least-squares wavefield `argmin ‖Pu − d‖² + λ‖A u − q‖²`.
pub fn wri_solve_u(
    op: &HelmholtzOperator,
    proj: &ProjectionOperator,
    lambda: f64,
    d_row: &[Complex64],
    q: &[Complex64],
) -> Result<Vec<Complex64>> {
    Ok(WriSystem::new(op, proj, lambda)?.solve(d_row, q)?.0)
}

/// `½‖Pu − d‖²` and `(λ/2)‖A u − q‖²` at an arbitrary wavefield.
pub fn wri_terms(
    op: &HelmholtzOperator,
    proj: &ProjectionOperator,
    lambda: f64,
    u: &[Complex64],
    d_row: &[Complex64],
    q: &[Complex64],
) -> (f64, f64) {
    let r: Vec<Complex64> = proj.apply(u).iter().zip(d_row).map(|(a, b)| a - b).collect();
    let p: Vec<Complex64> = op.matrix().mul_vec(u).iter().zip(q).map(|(a, b)| a - b).collect();
    (0.5 * norm_sqr(&r), 0.5 * lambda * norm_sqr(&p))
}

/// Projected WRI objective and gradient over all sources and frequencies.
pub fn wri_value_grad(m: &SlownessModel, lambda: f64, data: &ObservedData, survey: &Survey) -> Result<Evaluation> {
    survey.check_model(m.grid())?;
    survey.check_data(data)?;
    let mut gradient = vec![0.0; m.grid().len()];
    let mut pairs = Vec::new();
    let mut stats = SolveStats::default();
    let mut worst: f64 = 0.0;
    for (k, &f) in data.frequencies().iter().enumerate() {
        let res: Result<()> = (|| {
            let op = assemble_with(m, f, survey.boundary())?;
            let sys = WriSystem::new(&op, survey.projection(), lambda)?;
            stats.record_factorization(sys.dim());
            let w2 = op.omega() * op.omega();
            for s in 0..data.n_sources() {
                let q = survey.source_vector(s, f)?;
                let d_row = data.row(s, k);
                let (u, rel) = sys.solve(&d_row, &q)?;
                worst = worst.max(rel);
                let p: Vec<Complex64> = op.matrix().mul_vec(&u).iter().zip(&q).map(|(a, b)| a - b).collect();
                for ((g, ui), pi) in gradient.iter_mut().zip(&u).zip(&p) {
                    *g += lambda * w2 * (ui.conj() * pi).re;
                }
                let (dt, pt) = wri_terms(&op, survey.projection(), lambda, &u, &d_row, &q);
                pairs.push(PairTerms { source: s, frequency: f, data: dt, pde: pt, rank1: 0.0 });
            }
            stats.record_solves(data.n_sources());
            Ok(())
        })();
        res.map_err(|e| e.at_frequency(f))?;
    }
    Ok(Evaluation {
        report: ObjectiveReport::from_pairs(pairs),
        gradient,
        grad_theta: 0.0,
        max_projection_residual: worst,
        stats,
    })
}
