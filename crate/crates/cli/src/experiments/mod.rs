//! Composite experiments built on the core library.

mod crosscheck;
mod describe;
mod figure1;
mod properties;

pub use crosscheck::{run_crosscheck, CrosscheckReport, CrosscheckRow};
pub use describe::{describe, Manifest};
pub use figure1::{run_figure1, Figure1Output, Figure1Row, PairSummary, Witness};
pub use properties::{run_property_suite, Check};
