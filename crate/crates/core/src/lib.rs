//! Theory-guided neural surrogate for 2D transient saturated flow in a
//! stochastic log-conductivity field.
//!
//! The crate is `no_std` (with `alloc`) when built without the `std`
//! feature. It contains only numerics: the Karhunen–Loève field
//! representation, the finite-difference reference solver, the swish
//! network with input-derivative jets and parameter gradients, the
//! theory-guided trainer, and Monte Carlo statistics. File formats, the
//! experiment pipeline and the command line live in the `tgnn` crate.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(v > 0.0)` rejects NaN together with nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod darcy;
mod error;
pub mod field;
pub mod grid;
pub mod mlp;
mod parallel;
pub mod train;
pub mod uq;

pub use error::{Error, Result};
pub use field::{CovarianceSpec, Eigenpair1d, KleModel, KleMode, Truncation};
pub use grid::{BoundarySpec, GridSpec, TimeSpec};
pub use mlp::{Jet, NetworkSpec, Parameters};
