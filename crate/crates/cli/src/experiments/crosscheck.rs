use serde::{Deserialize, Serialize};

use nchj::effective::build;
use nchj::montecarlo::policy_upper_bounds;
use nchj::pde::{solve_viscous, InitialData};

use crate::config::ExperimentConfig;
use crate::error::{config_err, CliResult};
use crate::output::csv;

/// The effective Hamiltonian at one `theta` by all three methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckRow {
    pub theta: f64,
    /// Corrector value.
    #[serde(rename = "H_bar")]
    pub h_bar: f64,
    pub mc_value: f64,
    pub mc_stderr: f64,
    pub mc_policy: String,
    /// Viscous probe over `t` at the smallest epsilon.
    pub pde_value: f64,
    /// `|probe(eps_min) - probe(eps_prev)| / t`, the convergence-gap estimate.
    pub pde_gap: f64,
    /// Largest pairwise difference of the three values.
    pub discrepancy: f64,
    /// `3 mc_stderr + tol_lambda + pde_gap`.
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckReport {
    pub beta: f64,
    pub c: f64,
    /// False for constant potentials, which have no valleys or hills; the
    /// corrector plateau then differs from the true limit for `|theta| < c`.
    pub field_has_features: bool,
    pub rows: Vec<CrosscheckRow>,
    pub passed: bool,
}

impl CrosscheckReport {
    pub fn to_csv(&self) -> String {
        csv(
            &[
                "theta",
                "H_bar",
                "mc_value",
                "mc_stderr",
                "pde_value",
                "pde_gap",
                "discrepancy",
                "tolerance",
                "passed",
            ],
            self.rows.iter().map(|r| {
                vec![
                    r.theta.to_string(),
                    r.h_bar.to_string(),
                    r.mc_value.to_string(),
                    r.mc_stderr.to_string(),
                    r.pde_value.to_string(),
                    r.pde_gap.to_string(),
                    r.discrepancy.to_string(),
                    r.tolerance.to_string(),
                    r.passed.to_string(),
                ]
            }),
        )
    }
}

/// Compare the corrector, Monte Carlo and PDE values of the effective
/// Hamiltonian at each `pde.thetas` entry.
pub fn run_crosscheck(cfg: &ExperimentConfig) -> CliResult<CrosscheckReport> {
    let (beta, c) = (cfg.model.beta, cfg.model.c);
    let field = cfg.environment.build()?;
    let pde_field = cfg.pde_field()?;
    let mut eps = cfg.pde.epsilons.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    if eps.len() < 2 {
        return Err(config_err("crosscheck needs at least two pde.epsilons"));
    }
    let (e_prev, e_min) = (eps[eps.len() - 2], eps[eps.len() - 1]);
    let t = cfg.pde.t_final;
    let po = cfg.pde_options();
    let h = build(&field, beta, c, &cfg.pde.thetas, &cfg.effective_options())?;

    let mut rows = Vec::new();
    for (k, &theta) in cfg.pde.thetas.iter().enumerate() {
        let h_bar = h.h_bar(theta)?;
        let mc = policy_upper_bounds(
            &field,
            beta,
            c,
            theta,
            cfg.mc.t,
            Some(cfg.mc.valley),
            &cfg.mc_options_for("crosscheck", k as u64),
        )?;
        let probe = |e| {
            solve_viscous(
                &pde_field,
                beta,
                c,
                e,
                InitialData::Linear { theta },
                t,
                &po,
            )
            .map(|r| r.probe / t)
        };
        let (p_min, p_prev) = (probe(e_min)?, probe(e_prev)?);
        let values = [h_bar, mc.best_value, p_min];
        let discrepancy = values
            .iter()
            .flat_map(|a| values.iter().map(move |b| (a - b).abs()))
            .fold(0.0, f64::max);
        let pde_gap = (p_min - p_prev).abs();
        let tolerance = 3.0 * mc.best_stderr + cfg.tolerances.tol_lambda + pde_gap;
        rows.push(CrosscheckRow {
            theta,
            h_bar,
            mc_value: mc.best_value,
            mc_stderr: mc.best_stderr,
            mc_policy: mc.best_policy,
            pde_value: p_min,
            pde_gap,
            discrepancy,
            tolerance,
            passed: discrepancy <= tolerance,
        });
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(CrosscheckReport {
        beta,
        c,
        field_has_features: cfg.environment.constant_level().is_none(),
        rows,
        passed,
    })
}
