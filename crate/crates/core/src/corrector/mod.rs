//! Correctors and the tilted free energy.
//!
//! With `u = theta + F'` the corrector equation
//! `F''/2 + (theta + F')^2/2 + beta V = lambda` becomes the Riccati equation
//! `u' = 2(lambda - beta V) - u^2`. Its positive branch is attracting when
//! integrated in increasing `x` and its negative branch in decreasing `x`,
//! so each is computed as an initial value problem started a relaxation
//! buffer away from the window of interest. The free energy is the level at
//! which the spatial average of `u` equals `theta`.

mod free_energy;
mod martingale;
mod riccati;

pub use free_energy::{
    find_lambda_o, free_energy_curve, tilted_free_energy, FreeEnergyCurve, FreeEnergyOptions,
    FreeEnergyResult,
};
pub use martingale::{log_martingale_weight, martingale_weights};
pub use riccati::{neg_log_v, solve_riccati, CorrectorProfile, RiccatiOptions};
