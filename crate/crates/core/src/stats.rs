use alloc::vec::Vec;

/// Instrumentation for the direct solves behind an evaluation: one entry per
/// factorization, holding the system dimension.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolveStats {
    factorizations: Vec<usize>,
    solves: usize,
}

impl SolveStats {
    pub fn record_factorization(&mut self, dim: usize) {
        self.factorizations.push(dim);
    }

    pub fn record_solves(&mut self, count: usize) {
        self.solves += count;
    }

    pub fn factorization_count(&self) -> usize {
        self.factorizations.len()
    }

    pub fn factorization_dims(&self) -> &[usize] {
        &self.factorizations
    }

    pub fn max_dim(&self) -> usize {
        self.factorizations.iter().copied().max().unwrap_or(0)
    }

    pub fn solves(&self) -> usize {
        self.solves
    }

    pub fn merge(&mut self, other: &SolveStats) {
        self.factorizations.extend_from_slice(&other.factorizations);
        self.solves += other.solves;
    }
}
