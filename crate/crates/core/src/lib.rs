//! Deterministic MIMO channel model for antenna arrays that fill a fixed
//! volume.
//!
//! The transfer matrix is the double sphere integral
//! `H = ∬ a_R(Ω_R) s(Ω_R, Ω_T) a_T(Ω_T) dΩ_R dΩ_T`, discretized on a
//! Gauss–Legendre × trapezoid grid. Integral operators on `[L²(S²)]⁶` become
//! weighted `(6Q)×(6Q)` complex matrices, so operator composition is a
//! matrix product and self-adjointness/positivity survive discretization.
//!
//! Module map:
//!
//! * [`sphere`]: quadrature, real spherical harmonics, Weyl counting.
//! * [`antenna`]: array geometry, radiation patterns, Riemann-sum kernels.
//! * [`spread`]: finite-rank and smooth spread functions.
//! * [`operators`]: block operators `A_T`, `A_R`, `S`, `K`, the channel `H`.
//! * [`capacity`]: capacity by the direct, Fredholm and finite-rank routes.
//! * [`analysis`]: trace inequalities, Berezin splitting, truncation bounds.
//! * [`asymptotics`]: sweeps over the antenna count and growth-law verdicts.

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod antenna;
pub mod asymptotics;
pub mod capacity;
pub mod csv;
mod error;
pub mod exec;
pub mod linalg;
pub mod operators;
pub mod sphere;
pub mod spread;

pub use error::{Error, Result};
pub use exec::Execution;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Number of field components (three electric, three magnetic).
pub const COMPONENTS: usize = 6;
