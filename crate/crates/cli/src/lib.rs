//! Command-line front end: configuration, experiments and result files.

// `!(x > 0.0)` rejects NaN as well; the lint would have it spelled out.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
