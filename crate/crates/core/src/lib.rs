//! Numerical core for the regularized one-dimensional stochastic porous
//! medium equation
//!
//! ```text
//! dv = ∂²ₓ(ν v + v^[m]) dt + Σ_{k≤n} σ(x, v) eᵏ dwᵏ,   x ∈ (0, 1),  v = 0 on ∂(0, 1)
//! ```
//!
//! with `eᵏ(x) = √2 sin(πkx)` and `v^[m] = |v|^{m-1} v`.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure numerics:
//!
//! * [`spectral`]: sine transforms, fractional Laplacian powers, `H^γ`,
//!   `L^p` and Slobodeckij norms.
//! * [`sigma`]: diffusion coefficients with declared growth constants.
//! * [`inequality`]: verifiers for the functional inequalities and explicit
//!   constants the well-posedness theory relies on.
//! * [`noise`]: counter-based, schedule-independent truncated white noise.
//! * [`solver`]: IMEX Euler–Maruyama time stepping, the Barenblatt oracle and
//!   the discrete Itô energy budget.
//! * [`estimators`]: Monte Carlo reductions, decay fits and temporal Hölder
//!   estimation.
//! * [`particles`]: the interacting branching particle system.
//!
//! IO, parallel drivers and the command line live in the `spme` crate.
#![no_std]
// `!(x > 0.0)` style guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod estimators;
mod fft;
pub mod inequality;
pub mod noise;
pub mod particles;
pub mod sigma;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
