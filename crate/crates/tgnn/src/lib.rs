//! Experiment pipeline for the theory-guided surrogate: configuration
//! documents, file formats, cached pipeline stages, sweeps and SVG plots.
//! The numerics live in `tgnn-core`.

// `!(v > 0.0)` rejects NaN together with nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod io;
pub mod pipeline;
pub mod plot;
pub mod presets;
