//! Numerics for the width SDE of a trial wave function of a damped, driven
//! two-dimensional nonlinear Schrödinger equation.
//!
//! The width `x(t) > 0` of the trial function obeys
//!
//! ```text
//! dx = y dt
//! dy = (δ/x³ − γ y/x⁴) dt + √(2D)/x² dW
//! ```
//!
//! and, in the coordinates `(ξ, η) = (1/x, x²y)`, a system with additive noise.
//! This crate holds everything that is pure computation:
//!
//! * [`profile`]: moment integrals of the radial profile and the derived parameters,
//! * [`model`]: drift/diffusion fields, the coordinate transform, Lyapunov function, brackets,
//! * [`integrate`]: Euler–Maruyama style integrators, RK4, strong-error studies,
//! * [`timechange`]: the exact OU / random time change / Girsanov weak-solution sampler,
//! * [`ergodic`]: occupation histograms, pushforward and the decay-slope regression,
//! * [`control`]: Hermite control synthesis and reachability verification,
//! * [`verify`]: claim reports assembled from the above.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the CLI and parallel
//! ensemble drivers live in the companion `width-sde` crate.

#![no_std]
// `!(a < b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod control;
pub mod ergodic;
mod error;
pub mod integrate;
pub mod model;
pub mod profile;
pub mod rng;
pub mod stats;
pub mod timechange;
pub mod verify;

pub use error::{Error, Result};
pub use model::{HalfPlaneState, SdeParamsRef, TransformedState, VectorField2};
pub use profile::SdeParams;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
