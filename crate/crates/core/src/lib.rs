//! Numerical laboratory for the parabolic Anderson model on `Z^d`.
//!
//! The crate covers the tail classification of i.i.d. potentials through the
//! cumulant generating function `H(t) = log E e^{tξ(0)}`, the derived scale
//! functions, finite-box solvers for `∂_t v = Δ^d v + ξ v`, Monte Carlo over
//! random-walk local times, and discretisations of the continuum and lattice
//! variational problems that govern the moment asymptotics.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod numerics;
pub mod pam;
pub mod potential;
pub mod scales;
pub mod seed;
pub mod variational;
pub mod walk;

pub use error::{PamError, Result};
