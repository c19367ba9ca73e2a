//! Objective breakdowns and evaluation results shared by the three methods.

use alloc::vec::Vec;

use crate::stats::SolveStats;

/// Relative tolerance on `‖Nᴴ(N x − b)‖ / ‖Nᴴ b‖` for every projected
/// wavefield produced by a normal-equation solve.
pub const PROJECTION_TOL: f64 = 1e-8;

/// Objective terms for one (source, frequency) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTerms {
    pub source: usize,
    pub frequency: f64,
    /// `½‖r‖²`.
    pub data: f64,
    /// `(λ/2)‖p‖²`, zero for FWI.
    pub pde: f64,
    /// `(γ/2)‖s‖²`, LRWI only.
    pub rank1: f64,
}

impl PairTerms {
    pub fn total(&self) -> f64 {
        self.data + self.pde + self.rank1
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectiveReport {
    pub total: f64,
    pub data_term: f64,
    pub pde_term: f64,
    pub rank1_term: f64,
    pub pairs: Vec<PairTerms>,
}

impl ObjectiveReport {
    /// Sums in pair order, so the result is reproducible bit for bit.
    pub fn from_pairs(pairs: Vec<PairTerms>) -> Self {
        let (mut d, mut p, mut r) = (0.0, 0.0, 0.0);
        for t in &pairs {
            d += t.data;
            p += t.pde;
            r += t.rank1;
        }
        Self { total: d + p + r, data_term: d, pde_term: p, rank1_term: r, pairs }
    }
}

/// Objective value and model gradient at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: ObjectiveReport,
    /// Gradient with respect to the optimization vector: `m` for FWI and WRI,
    /// `[m̃₁; m̃₂]` for LRWI.
    pub gradient: Vec<f64>,
    /// `∂f/∂θ` for LRWI, zero otherwise.
    pub grad_theta: f64,
    /// Largest relative normal-equation residual among the projected
    /// wavefields (zero for FWI).
    pub max_projection_residual: f64,
    pub stats: SolveStats,
}

impl Evaluation {
    pub fn value(&self) -> f64 {
        self.report.total
    }
}
