//! Numerical core for 2-D frequency-domain waveform inversion.
//!
//! Three formulations share one Helmholtz modeling layer:
//!
//! * reduced full waveform inversion (FWI) with adjoint-state gradients,
//! * wavefield reconstruction inversion (WRI), where the wave equation is a
//!   weighted penalty and the wavefield is projected out in closed form,
//! * rank-2 lift-and-relax WRI (LRWI), where both model and wavefield are
//!   lifted to pairs `(m̃₁, m̃₂)`, `(ũ₁, ũ₂)` mixed by an angle `θ`, with a
//!   rank-1 consistency penalty `γ/2 ‖m̃₁⊙ũ₂ − m̃₂⊙ũ₁‖²`.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration and
//! the command-line harness live in the companion `lrwi` crate.
//!
//! Conventions used throughout:
//!
//! * grid vectors are flattened with `x` varying fastest (`index = iz·nx + ix`),
//! * lengths in km, velocities in km/s, squared slowness in s²/km², frequency
//!   in Hz and `ω = 2πf`,
//! * time dependence `e^{−iωt}`, so outgoing waves satisfy `∂ₙu = +ik u`,
//! * `ᴴ` is the conjugate transpose; real gradients are real parts of the
//!   corresponding complex inner products.
#![no_std]
// `!(x <= tol)` is deliberate: it also rejects NaN. Index loops mirror the banded kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod acquisition;
pub mod chol;
pub mod dense;
pub mod error;
pub mod fwi;
pub mod gradcheck;
pub mod grid;
pub mod helmholtz;
pub mod lrwi;
pub mod lsq;
pub mod lu;
pub mod math;
pub mod objective;
pub mod optim;
pub mod penalty;
pub mod power;
pub mod run;
pub mod sparse;
pub mod stats;
pub mod wri;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Imaginary unit.
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Angular frequency for a frequency in Hz.
#[inline]
pub fn angular(frequency_hz: f64) -> f64 {
    2.0 * core::f64::consts::PI * frequency_hz
}
