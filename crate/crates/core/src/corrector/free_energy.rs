use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::riccati::{integrate_branch, lambda_floor, RiccatiOptions};
use crate::environment::{PotentialField, Window};
use crate::error::{invalid, Error, Result};

/// Settings of the root search for `lambda_o`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FreeEnergyOptions {
    pub tol_root: f64,
    /// `eps_lambda = eps_lambda_rel * beta`: offset of the flatness probe
    /// above the floor.
    pub eps_lambda_rel: f64,
    /// Added to `beta + theta^2/2` at the top of the bracket.
    pub margin: f64,
    /// Shortest averaging window accepted.
    pub min_window: f64,
    pub max_iter: usize,
    pub riccati: RiccatiOptions,
}

impl Default for FreeEnergyOptions {
    fn default() -> Self {
        Self {
            tol_root: 1e-8,
            eps_lambda_rel: 1e-6,
            margin: 0.25,
            min_window: 200.0,
            max_iter: 200,
            riccati: RiccatiOptions::default(),
        }
    }
}

impl FreeEnergyOptions {
    pub fn validate(&self) -> Result<()> {
        self.riccati.validate()?;
        if !(self.tol_root > 0.0 && self.eps_lambda_rel > 0.0 && self.margin > 0.0) {
            return Err(invalid(
                "tol_root, eps_lambda_rel and margin must be positive",
            ));
        }
        if !(self.min_window >= 0.0) {
            return Err(invalid("min_window must be nonnegative"));
        }
        Ok(())
    }

    /// Largest averaging window inside `field` that leaves room for the
    /// capped buffer on the integration-start side of a `theta > 0` solve.
    pub fn averaging_window(&self, field: &PotentialField) -> Window {
        let w = field.window();
        // Grid steps are multiples of every refined step.
        let h = field.grid_step;
        let cap = (self.riccati.buffer_cap / h).ceil() * h + h;
        Window::new(w.lo + cap, w.hi)
    }
}

/// Tilted free energy at one `theta` with the root-search trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyResult {
    pub beta: f64,
    pub theta: f64,
    pub lambda_o: Option<f64>,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub flat: bool,
    pub bracket: (f64, f64),
    pub iterations: usize,
    /// `|mean_u - |theta||` at the returned level.
    pub residual: f64,
    pub window: Window,
    /// `(lambda, mean_u - |theta|)` at every evaluated level.
    pub trace: Vec<(f64, f64)>,
    /// Whether `mean_u` increased strictly along the sorted trace.
    pub monotone: bool,
    pub tol_root: f64,
}

/// Sign-adjusted average of `u` over `window` minus `|theta|`.
fn root_function(
    field: &PotentialField,
    beta: f64,
    theta: f64,
    lambda: f64,
    floor: f64,
    window: Window,
    opts: &FreeEnergyOptions,
) -> Result<f64> {
    let sign = theta.signum();
    let buffer = opts.riccati.buffer_for(lambda - floor);
    let br = integrate_branch(
        field,
        beta,
        sign,
        lambda,
        window.lo,
        window.hi,
        buffer,
        opts.riccati.refine_for(field.grid_step, lambda),
    )?;
    let n = br.w.len();
    let mean_u = (br.w[n - 1] - br.w[0]) / (br.node(n - 1) - br.node(0));
    Ok(sign * mean_u - theta.abs())
}

/// Root `lambda_o` of `mean_u(lambda) = theta`, or a flat result when the
/// root lies at the floor.
///
/// The floor is `beta sup V`, which is `beta` for potentials reaching 1. A
/// `theta` whose probe at `floor + eps_lambda` already has
/// `mean_u >= |theta|` is classified flat with `Lambda = floor`.
/// `window = None` averages over [`FreeEnergyOptions::averaging_window`]
/// (mirrored for negative `theta`).
pub fn find_lambda_o(
    field: &PotentialField,
    beta: f64,
    theta: f64,
    window: Option<Window>,
    opts: &FreeEnergyOptions,
) -> Result<FreeEnergyResult> {
    opts.validate()?;
    if !(beta > 0.0) {
        return Err(invalid(format!("beta must be positive, got {beta}")));
    }
    if theta == 0.0 || !theta.is_finite() {
        return Err(invalid("theta must be finite and nonzero"));
    }
    let window = window.unwrap_or_else(|| {
        let w = opts.averaging_window(field);
        if theta > 0.0 {
            w
        } else {
            let fw = field.window();
            Window::new(fw.lo, fw.hi - (w.lo - fw.lo))
        }
    });
    if window.length() < opts.min_window {
        return Err(invalid(format!(
            "averaging window of length {} is shorter than the configured minimum {}",
            window.length(),
            opts.min_window
        )));
    }
    let floor = lambda_floor(field, beta, field.window());
    let eps = opts.eps_lambda_rel * beta;
    let lo = floor + eps;
    let hi = floor.max(beta) + 0.5 * theta * theta + opts.margin;
    let mut trace = Vec::new();
    let mut eval = |lambda: f64| -> Result<f64> {
        let m = root_function(field, beta, theta, lambda, floor, window, opts)?;
        trace.push((lambda, m));
        Ok(m)
    };
    let m_lo = eval(lo)?;
    let (lambda_o, lam, flat, iterations, residual) = if m_lo >= 0.0 {
        (None, floor, true, 0, m_lo.abs())
    } else {
        let m_hi = eval(hi)?;
        if m_hi <= 0.0 {
            return Err(Error::NonBracketing {
                lo,
                hi,
                f_lo: m_lo,
                f_hi: m_hi,
            });
        }
        let (mut a, mut b) = (lo, hi);
        let mut it = 0;
        let mut m_mid = m_lo;
        while b - a > opts.tol_root && it < opts.max_iter {
            let mid = 0.5 * (a + b);
            m_mid = eval(mid)?;
            it += 1;
            if m_mid < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let root = 0.5 * (a + b);
        // Bisection that never left the floor classifies as flat.
        if a == lo && b - a <= opts.tol_root {
            (None, floor, true, it, m_mid.abs())
        } else {
            (Some(root), root, false, it, m_mid.abs())
        }
    };
    let mut sorted = trace.clone();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let monotone = sorted
        .windows(2)
        .all(|p| p[1].0 == p[0].0 || p[1].1 > p[0].1);
    Ok(FreeEnergyResult {
        beta,
        theta,
        lambda_o,
        lambda: lam,
        flat,
        bracket: (lo, hi),
        iterations,
        residual,
        window,
        trace,
        monotone,
        tol_root: opts.tol_root,
    })
}

/// `Lambda_beta(theta)`, computed at `|theta|` so the result is even in
/// `theta` by construction. `theta = 0` returns the floor (`beta` for
/// potentials reaching 1) without a solve.
pub fn tilted_free_energy(
    field: &PotentialField,
    beta: f64,
    theta: f64,
    window: Option<Window>,
    opts: &FreeEnergyOptions,
) -> Result<FreeEnergyResult> {
    opts.validate()?;
    if !theta.is_finite() {
        return Err(invalid("theta must be finite"));
    }
    if theta == 0.0 {
        if !(beta > 0.0) {
            return Err(invalid(format!("beta must be positive, got {beta}")));
        }
        let floor = lambda_floor(field, beta, field.window());
        let window = window.unwrap_or_else(|| opts.averaging_window(field));
        return Ok(FreeEnergyResult {
            beta,
            theta,
            lambda_o: None,
            lambda: floor,
            flat: true,
            bracket: (floor, floor),
            iterations: 0,
            residual: 0.0,
            window,
            trace: Vec::new(),
            monotone: true,
            tol_root: opts.tol_root,
        });
    }
    let mut r = find_lambda_o(field, beta, theta.abs(), window, opts)?;
    r.theta = theta;
    Ok(r)
}

/// Free energy on a grid plus the detected flat piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyCurve {
    pub beta: f64,
    pub results: Vec<FreeEnergyResult>,
    /// `[-theta_f, theta_f]`: the largest symmetric grid interval around 0
    /// on which every result is flat.
    pub flat_interval: Option<(f64, f64)>,
}

impl FreeEnergyCurve {
    pub fn thetas(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.theta).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.lambda).collect()
    }
}

/// Evaluate [`tilted_free_energy`] over a sorted grid, in parallel. Values
/// at `theta` and `-theta` come from the same solve.
pub fn free_energy_curve(
    field: &PotentialField,
    beta: f64,
    theta_grid: &[f64],
    window: Option<Window>,
    opts: &FreeEnergyOptions,
) -> Result<FreeEnergyCurve> {
    if theta_grid.windows(2).any(|p| p[1] < p[0]) {
        return Err(invalid("theta grid must be sorted"));
    }
    let mut abs: Vec<f64> = theta_grid.iter().map(|t| t.abs()).collect();
    abs.sort_by(f64::total_cmp);
    abs.dedup();
    let solved: Vec<FreeEnergyResult> = abs
        .par_iter()
        .map(|&t| tilted_free_energy(field, beta, t, window, opts))
        .collect::<Result<_>>()?;
    let results: Vec<FreeEnergyResult> = theta_grid
        .iter()
        .map(|&t| {
            let i = abs
                .iter()
                .position(|&a| a == t.abs())
                .expect("abs value present");
            let mut r = solved[i].clone();
            r.theta = t;
            r
        })
        .collect();
    let flat_interval = flat_piece(&results);
    Ok(FreeEnergyCurve {
        beta,
        results,
        flat_interval,
    })
}

fn flat_piece(results: &[FreeEnergyResult]) -> Option<(f64, f64)> {
    // Grid points ordered by |theta|; the flat piece extends while flat.
    let mut by_abs: Vec<&FreeEnergyResult> = results.iter().collect();
    by_abs.sort_by(|a, b| a.theta.abs().total_cmp(&b.theta.abs()));
    let mut edge: Option<f64> = None;
    for r in by_abs {
        if r.flat {
            edge = Some(r.theta.abs());
        } else {
            break;
        }
    }
    edge.map(|e| (-e, e))
}
