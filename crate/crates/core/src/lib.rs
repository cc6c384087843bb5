//! Numerical laboratory for the forced semilinear heat equation
//!
//! ```text
//! ∂t u = Δu + |u|^p + t^σ w(x),   u(0) = u0,
//! ```
//!
//! on a periodic box standing in for `ℝ^N`. The crate covers the exact
//! exponent algebra ([`exponents`]), sampled fields and norms ([`field`]),
//! the spectral heat semigroup ([`semigroup`]), adaptive time integration
//! with blow-up detection ([`evolve`]), the weighted fixed-point map
//! ([`picard`]), rescaled test-function certificates ([`certificate`]) and
//! parameter sweeps ([`sweep`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod error;
pub mod evolve;
pub mod exponents;
pub mod field;
pub mod io;
pub mod picard;
pub mod quad;
pub mod semigroup;
pub mod special;
pub mod sweep;

pub use error::{Error, Result};
pub use exponents::{classify_regime, derive, CriticalExponent, DerivedExponents, Params, QWindow, Regime};
pub use field::{make_bump, BumpKind, Field, ForcingSpec, Grid};
pub use semigroup::Propagator;
