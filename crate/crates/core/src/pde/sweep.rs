use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::viscous::{solve_viscous, InitialData, PdeOptions};
use crate::effective::EffectiveHamiltonian;
use crate::environment::PotentialField;
use crate::error::{invalid, Result};
use crate::numerics::fitted_order;

/// Errors below this are exact solves.
const ROUND_OFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: f64,
    pub epsilon: f64,
    /// `u^epsilon(t, 0)`.
    pub probe: f64,
    /// `Hbar(theta) t`.
    pub h_bar: f64,
    pub abs_error: f64,
    /// `max_{|x| <= r_probe} |u^epsilon(t, x) - theta x - Hbar(theta) t|`.
    pub box_error: f64,
    pub dx: f64,
    pub dt: f64,
    pub cfl_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSummary {
    pub theta: f64,
    pub h_bar: f64,
    /// Errors strictly decrease along the epsilon list (largest first). Pairs
    /// already at round-off (`<= 1e-12`) count as decreasing.
    pub monotone: bool,
    /// Error at the smallest epsilon over `max(1, |Hbar(theta) t|)`.
    pub final_relative_gap: f64,
    /// Least-squares slope of `log error` against `log epsilon`.
    pub fitted_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub beta: f64,
    pub c: f64,
    pub t_final: f64,
    pub rows: Vec<SweepRow>,
    pub summaries: Vec<ThetaSummary>,
}

impl SweepReport {
    pub fn summary(&self, theta: f64) -> Option<&ThetaSummary> {
        self.summaries
            .iter()
            .find(|s| (s.theta - theta).abs() < 1e-12)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("theta,epsilon,probe,H_bar,abs_error,box_error,fitted_order\n");
        for r in &self.rows {
            let order = self
                .summary(r.theta)
                .and_then(|s| s.fitted_order)
                .map(|o| o.to_string())
                .unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.theta, r.epsilon, r.probe, r.h_bar, r.abs_error, r.box_error, order
            ));
        }
        s
    }
}

/// Viscous solves for every `(theta, epsilon)` with linear data, compared
/// with `theta x + Hbar(theta) t`. Cells run in parallel.
pub fn homogenization_sweep(
    field: &PotentialField,
    h: &EffectiveHamiltonian,
    thetas: &[f64],
    epsilons: &[f64],
    t_final: f64,
    opts: &PdeOptions,
) -> Result<SweepReport> {
    if thetas.is_empty() || epsilons.is_empty() {
        return Err(invalid("theta grid and epsilon list must be non-empty"));
    }
    let mut eps = epsilons.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    let h_bars: Vec<f64> = thetas.iter().map(|&t| h.h_bar(t)).collect::<Result<_>>()?;
    let cells: Vec<(usize, f64)> = (0..thetas.len())
        .flat_map(|i| eps.iter().map(move |&e| (i, e)))
        .collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(i, epsilon)| {
            let theta = thetas[i];
            let target = h_bars[i] * t_final;
            let r = solve_viscous(
                field,
                h.beta,
                h.c,
                epsilon,
                InitialData::Linear { theta },
                t_final,
                opts,
            )?;
            Ok(SweepRow {
                theta,
                epsilon,
                probe: r.probe,
                h_bar: target,
                abs_error: (r.probe - target).abs(),
                box_error: r.box_error(theta, target, opts.r_probe),
                dx: r.dx,
                dt: r.dt,
                cfl_ratio: r.cfl_ratio,
            })
        })
        .collect::<Result<_>>()?;
    let summaries = thetas
        .iter()
        .zip(&h_bars)
        .map(|(&theta, &hb)| {
            let errs: Vec<f64> = rows
                .iter()
                .filter(|r| r.theta == theta)
                .map(|r| r.abs_error)
                .collect();
            ThetaSummary {
                theta,
                h_bar: hb * t_final,
                monotone: errs
                    .windows(2)
                    .all(|w| w[1] < w[0] || w[0].max(w[1]) <= ROUND_OFF),
                final_relative_gap: errs[errs.len() - 1] / (hb * t_final).abs().max(1.0),
                fitted_order: fitted_order(&eps, &errs),
            }
        })
        .collect();
    Ok(SweepReport {
        beta: h.beta,
        c: h.c,
        t_final,
        rows,
        summaries,
    })
}
