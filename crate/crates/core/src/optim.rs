//! Limited-memory BFGS with a backtracking Armijo line search, and the
//! backtracking gradient step used for the mixing angle `θ`.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::math::{dot_real, norm_inf};
use crate::Result;

pub const ARMIJO_C1: f64 = 1e-4;
pub const MAX_BACKTRACKS: usize = 30;
pub const DEFAULT_MEMORY: usize = 10;
/// Length of the first trial `θ` step in radians.
pub const THETA_STEP: f64 = 0.1;

/// Anything with a value and a gradient. Evaluations returned by the line
/// search are handed back so callers can reuse whatever else they carry.
pub trait Objective {
    fn value(&self) -> f64;
    fn gradient(&self) -> &[f64];
}

impl Objective for crate::objective::Evaluation {
    fn value(&self) -> f64 {
        self.report.total
    }

    fn gradient(&self) -> &[f64] {
        &self.gradient
    }
}

impl Objective for (f64, Vec<f64>) {
    fn value(&self) -> f64 {
        self.0
    }

    fn gradient(&self) -> &[f64] {
        &self.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    /// Largest absolute component change of the first (memoryless) trial step.
    pub initial_step: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: DEFAULT_MEMORY, initial_step: 1.0 }
    }
}

/// Curvature pairs `(s, y)`, newest last.
#[derive(Debug, Clone, Default)]
pub struct LbfgsState {
    memory: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    iterations: usize,
    skipped: usize,
}

impl LbfgsState {
    pub fn new(memory: usize) -> Self {
        Self { memory, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Pairs rejected for `sᵀy ≤ 0`.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores `(s, y)` if `sᵀy > 0`; returns whether it was kept.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot_real(&s, &y);
        if !(sy > 0.0) || self.memory == 0 {
            if self.memory > 0 {
                self.skipped += 1;
            }
            return false;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
        true
    }

    /// Two-loop recursion: `−H g`. With no pairs, steepest descent scaled so
    /// the largest component equals `initial_step`.
    pub fn direction(&self, g: &[f64], initial_step: f64) -> Vec<f64> {
        let gmax = norm_inf(g);
        if gmax == 0.0 {
            return alloc::vec![0.0; g.len()];
        }
        let Some((s_new, y_new, _)) = self.pairs.back() else {
            return g.iter().map(|v| -v * initial_step / gmax).collect();
        };
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot_real(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let h0 = dot_real(s_new, y_new) / dot_real(y_new, y_new);
        q.iter_mut().for_each(|v| *v *= h0);
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot_real(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepStatus {
    /// Armijo step accepted (`fallback` if the steepest-descent retry was needed).
    Accepted { step: f64, backtracks: usize, fallback: bool },
    /// Gradient is exactly zero; nothing to do.
    Stationary,
    /// Neither the quasi-Newton nor the steepest-descent direction gave
    /// sufficient decrease.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct StepResult<E> {
    pub x: Vec<f64>,
    /// Evaluation at the accepted point (`None` unless accepted).
    pub eval: Option<E>,
    pub status: StepStatus,
}

/// One l-BFGS iteration from `x` with known evaluation `current`.
///
/// `project` maps a trial point onto the feasible set (identity for
/// unconstrained problems); sufficient decrease is tested against the actual
/// projected displacement. Evaluation errors abort the step.
pub fn lbfgs_step<E, F, P>(
    state: &mut LbfgsState,
    opts: &LbfgsOptions,
    x: &[f64],
    current: &E,
    mut eval: F,
    project: P,
) -> Result<StepResult<E>>
where
    E: Objective,
    F: FnMut(&[f64]) -> Result<E>,
    P: Fn(&mut [f64]),
{
    let g = current.gradient();
    if norm_inf(g) == 0.0 {
        return Ok(StepResult { x: x.to_vec(), eval: None, status: StepStatus::Stationary });
    }
    let mut fallback = false;
    let mut dir = state.direction(g, opts.initial_step);
    if !(dot_real(&dir, g) < 0.0) {
        dir = LbfgsState::new(0).direction(g, opts.initial_step);
        fallback = true;
        state.clear();
    }
    loop {
        if let Some((x_new, e, step, backtracks)) = backtrack(x, current, &dir, &mut eval, &project)? {
            let s: Vec<f64> = x_new.iter().zip(x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = e.gradient().iter().zip(g).map(|(a, b)| a - b).collect();
            state.push(s, y);
            state.iterations += 1;
            return Ok(StepResult {
                x: x_new,
                eval: Some(e),
                status: StepStatus::Accepted { step, backtracks, fallback },
            });
        }
        if fallback {
            return Ok(StepResult { x: x.to_vec(), eval: None, status: StepStatus::Stalled });
        }
        fallback = true;
        state.clear();
        dir = LbfgsState::new(0).direction(g, opts.initial_step);
    }
}

#[allow(clippy::type_complexity)]
fn backtrack<E, F, P>(x: &[f64], current: &E, dir: &[f64], eval: &mut F, project: &P) -> Result<Option<(Vec<f64>, E, f64, usize)>>
where
    E: Objective,
    F: FnMut(&[f64]) -> Result<E>,
    P: Fn(&mut [f64]),
{
    let (f0, g) = (current.value(), current.gradient());
    let mut step = 1.0;
    for backtracks in 0..=MAX_BACKTRACKS {
        let mut trial: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + step * di).collect();
        project(&mut trial);
        let disp: Vec<f64> = trial.iter().zip(x).map(|(a, b)| a - b).collect();
        let slope = dot_real(g, &disp);
        if slope < 0.0 {
            let e = eval(&trial)?;
            let f = e.value();
            if f.is_finite() && f <= f0 + ARMIJO_C1 * slope {
                return Ok(Some((trial, e, step, backtracks)));
            }
        }
        step *= 0.5;
    }
    Ok(None)
}

#[derive(Debug, Clone)]
pub struct ThetaStep<E> {
    pub theta: f64,
    /// Evaluation at the accepted angle, `None` if `θ` was left unchanged.
    pub eval: Option<E>,
    pub backtracks: usize,
}

/// Backtracking gradient step `θ − t·∂f/∂θ` whose first trial moves `θ` by
/// [`THETA_STEP`] radians. Returns `θ` unchanged when the derivative is zero
/// or no step passes the Armijo test within [`MAX_BACKTRACKS`] halvings.
pub fn theta_step<E, F>(theta: f64, value: f64, grad_theta: f64, mut eval: F) -> Result<ThetaStep<E>>
where
    E: Objective,
    F: FnMut(f64) -> Result<E>,
{
    if grad_theta == 0.0 || !grad_theta.is_finite() {
        return Ok(ThetaStep { theta, eval: None, backtracks: 0 });
    }
    let mut t = THETA_STEP / grad_theta.abs();
    for backtracks in 0..=MAX_BACKTRACKS {
        let trial = theta - t * grad_theta;
        let e = eval(trial)?;
        let f = e.value();
        if f.is_finite() && f <= value - ARMIJO_C1 * t * grad_theta * grad_theta {
            return Ok(ThetaStep { theta: trial, eval: Some(e), backtracks });
        }
        t *= 0.5;
    }
    Ok(ThetaStep { theta, eval: None, backtracks: MAX_BACKTRACKS })
}
