//! Controlled Brownian motion in the potential: path simulation, weighted
//! estimators of exponential functionals, the named control policies,
//! (sub)martingale audits and closed-form calibrations.

mod audit;
mod calibrate;
mod engine;
mod estimate;
mod policy;

pub use audit::{martingale_audit, MartingaleKind, MartingaleReport, MartingaleRow};
pub use calibrate::{
    confinement_oracle, confinement_rate, exp_chebyshev_check, hitting_laplace, local_time_oracle,
    local_time_rate, mc_hitting_laplace, ChebyshevReport, LocalTimeEstimator, McValue,
    RateEstimate,
};
pub use engine::{McOptions, Proposal};
pub use estimate::{
    estimate_functional, estimate_functional_from, policy_upper_bounds, select_valley,
    simulate_paths, LogMeanEstimate, PathBatch, PathEstimate, TrapSite, UpperBoundReport,
    ValleySelect,
};
pub use policy::Policy;
