//! Numerical core for the prescribed Weingarten curvature problem
//! `σ_k^{1/k}(κ[u]) = ψ^{1/k}(x, u)` for strictly locally convex vertical
//! graphs in the half-space model of hyperbolic space.
//!
//! The crate is `no_std` with `alloc` when the default `std` feature is
//! disabled. File formats, configuration and the command line live in the
//! `plateau` companion crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod continuation;
pub mod error;
pub mod families;
pub mod grid;
pub mod hypgeo;
pub mod linalg;
pub mod par;
pub mod solver;
pub mod sparse;
pub mod symfunc;
pub mod verify;
pub mod voper;

pub use error::{Error, Result};
pub use linalg::Mat;
