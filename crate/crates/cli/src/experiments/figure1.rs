use serde::{Deserialize, Serialize};

use nchj::corrector::free_energy_curve;
use nchj::effective::{build, Regime};
use nchj::montecarlo::policy_upper_bounds;

use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::output::csv;

/// One point of the Hbar curve of one `(beta, c)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure1Row {
    pub pair: usize,
    pub beta: f64,
    pub c: f64,
    pub theta: f64,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    #[serde(rename = "H_bar")]
    pub h_bar: f64,
    /// `theta^2/2 - c|theta|`, the value without the potential.
    pub free_motion: f64,
}

/// Policy simulation at one `theta`: the best of the three upper bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub theta: f64,
    #[serde(rename = "H_bar")]
    pub h_bar: f64,
    pub policy: String,
    pub value: f64,
    pub stderr: f64,
    pub t: f64,
    pub missing_valley: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub pair: usize,
    pub beta: f64,
    pub c: f64,
    pub regime: Regime,
    /// `H_bar(0)`; `beta - c^2/2` (weak) or `0` (strong).
    pub plateau_value: f64,
    pub plateau_half_width: f64,
    pub theta_bar: Option<f64>,
    pub theta_bar_interval: Option<(f64, f64)>,
    pub witnesses: Vec<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure1Output {
    /// `(theta, Lambda_beta(theta))` at the model `beta`.
    pub lambda: Vec<(f64, f64)>,
    pub rows: Vec<Figure1Row>,
    pub pairs: Vec<PairSummary>,
}

impl Figure1Output {
    pub fn curves_csv(&self) -> String {
        csv(
            &[
                "pair",
                "beta",
                "c",
                "theta",
                "Lambda",
                "H_bar",
                "free_motion",
            ],
            self.rows.iter().map(|r| {
                vec![
                    r.pair.to_string(),
                    r.beta.to_string(),
                    r.c.to_string(),
                    r.theta.to_string(),
                    r.lambda.to_string(),
                    r.h_bar.to_string(),
                    r.free_motion.to_string(),
                ]
            }),
        )
    }

    pub fn lambda_csv(&self) -> String {
        csv(
            &["theta", "Lambda"],
            self.lambda
                .iter()
                .map(|(t, l)| vec![t.to_string(), l.to_string()]),
        )
    }
}

/// Hbar curves for every configured `(beta, c)` pair over the theta grid,
/// with the plateau, `theta_bar` and optional policy witnesses.
pub fn run_figure1(cfg: &ExperimentConfig) -> CliResult<Figure1Output> {
    let field = cfg.environment.build()?;
    let grid = cfg.theta_grid.values();
    let opts = cfg.effective_options();
    let lambda = free_energy_curve(&field, cfg.model.beta, &grid, None, &opts.free_energy)?;
    let lambda: Vec<(f64, f64)> = lambda.thetas().into_iter().zip(lambda.values()).collect();

    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    for (pair, &[beta, c]) in cfg.figure1.pairs.iter().enumerate() {
        let h = build(&field, beta, c, &grid, &opts)?;
        for &theta in &grid {
            rows.push(Figure1Row {
                pair,
                beta,
                c,
                theta,
                lambda: h.lambda(theta)?,
                h_bar: h.h_bar(theta)?,
                free_motion: 0.5 * theta * theta - c * theta.abs(),
            });
        }
        let mut witnesses = Vec::new();
        if cfg.figure1.witnesses {
            for (k, &theta) in cfg.mc.witness_thetas.iter().enumerate() {
                let mc = cfg.mc_options_for("figure1", (pair * 1000 + k) as u64);
                let r = policy_upper_bounds(
                    &field,
                    beta,
                    c,
                    theta,
                    cfg.mc.t,
                    Some(cfg.mc.valley),
                    &mc,
                )?;
                witnesses.push(Witness {
                    theta,
                    h_bar: h.h_bar(theta)?,
                    policy: r.best_policy,
                    value: r.best_value,
                    stderr: r.best_stderr,
                    t: cfg.mc.t,
                    missing_valley: r.missing_valley,
                });
            }
        }
        pairs.push(PairSummary {
            pair,
            beta,
            c,
            regime: h.regime,
            plateau_value: h.h_bar(0.0)?,
            plateau_half_width: h.plateau_half_width(),
            theta_bar: h.theta_bar.as_ref().map(|t| t.value),
            theta_bar_interval: h.theta_bar.as_ref().map(|t| t.interval),
            witnesses,
        });
    }
    Ok(Figure1Output {
        lambda,
        rows,
        pairs,
    })
}
