//! Finite-difference solvers for the oscillatory viscous problem and its
//! effective limit, plus the `epsilon -> 0` sweep that compares the two.

mod hopf_cole;
mod inviscid;
mod sweep;
mod viscous;

pub use hopf_cole::{hopf_cole_linear, HopfColeResult};
pub use inviscid::{
    effective_table_range, self_convergence, solve_effective, HBarTable, SelfConvergence,
};
pub use sweep::{homogenization_sweep, SweepReport, SweepRow, ThetaSummary};
pub use viscous::{
    explicit_step, gradient_apriori, run_half_width, scheme_is_monotone, solve_viscous,
    InitialData, PdeOptions, PdeSolveResult, Snapshot,
};
