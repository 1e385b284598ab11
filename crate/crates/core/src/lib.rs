//! Numerical core for nonlocal p-Laplacian diffusion with structured kernels.
//!
//! The kernels have the form `K(x,y) = psi(y - Ax) + psi(x - Ay)` where `psi`
//! is a nonnegative bump supported in the unit ball and `A` is an invertible
//! matrix. The crate provides:
//!
//! - [`kernel`]: bump profiles, linear maps with optional real Jordan block
//!   structure, kernel evaluation and support-pruned pair enumeration;
//! - [`discretize`]: uniform grids, sampled fields with implicit zero
//!   extension, discrete `L^r` norms and the nonlocal double integral
//!   (deterministic grid quadrature and seeded Monte Carlo);
//! - [`spectral`]: the closed-form first eigenvalue, Rayleigh-quotient
//!   minimization on expanding balls, and the `p -> infinity` diagnostics;
//! - [`minimizers`]: explicit piecewise-constant minimizing families per
//!   Jordan block class, with exact series and Monte Carlo cross-checks;
//! - [`evolution`]: explicit time stepping of the evolution equation with
//!   norm tracking and decay-law fitting.
//!
//! The crate is `no_std`-compatible (enable the `libm` feature and disable
//! `std`); all state is owned and all operations are deterministic, so any
//! routine may be called concurrently on immutable inputs.

#![cfg_attr(not(feature = "std"), no_std)]
// Negated float comparisons double as NaN guards on input validation, and
// plain indexed loops over flat row-major buffers stay as written.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::manual_is_multiple_of)]
#![allow(clippy::needless_range_loop)]

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("nlplab-core requires either the `std` or the `libm` feature");

extern crate alloc;

pub mod discretize;
pub mod error;
pub mod evolution;
pub(crate) mod fp;
pub mod kernel;
pub mod linalg;
pub mod mc;
pub mod minimizers;
pub mod reduce;
pub mod rng;
pub mod spectral;

pub use error::Error;

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
