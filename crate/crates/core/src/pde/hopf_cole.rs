use serde::{Deserialize, Serialize};

use super::viscous::{run_half_width, Grid, PdeOptions};
use crate::environment::PotentialField;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfColeResult {
    pub epsilon: f64,
    pub theta: f64,
    pub dx: f64,
    pub dt: f64,
    pub steps: usize,
    pub domain: (f64, f64),
    /// `u(t_final, 0)`.
    pub probe: f64,
}

/// Solve `u_t = (epsilon/2) u_xx + (1/2) u_x^2 + beta V(x/epsilon)`,
/// `u(0, x) = theta x` (the `c = 0` problem) through the linear equation for
/// `w = exp(u/epsilon - theta x/epsilon)`:
///
/// `w_t = (epsilon/2) w_xx + theta w_x + (theta^2/2 + beta V(x/epsilon)) w / epsilon`,
///
/// with Crank–Nicolson in time, centered differences in space and reflecting
/// ends. `w` is renormalized every step and the scale kept in the log domain.
pub fn hopf_cole_linear(
    field: &PotentialField,
    beta: f64,
    epsilon: f64,
    theta: f64,
    t_final: f64,
    dt: f64,
    opts: &PdeOptions,
) -> Result<HopfColeResult> {
    opts.validate()?;
    if !(epsilon > 0.0) || !(t_final > 0.0) || !(dt > 0.0) || !(beta >= 0.0) {
        return Err(invalid(
            "epsilon, t_final and dt must be positive, beta non-negative",
        ));
    }
    let dx = epsilon / opts.dx_per_epsilon;
    let half = run_half_width(beta, 0.0, theta.abs(), t_final, opts.r_probe, opts.margin);
    let grid = Grid::new(half, dx);
    let n = grid.len();
    let steps = (t_final / dt).ceil() as usize;
    let dt = t_final / steps as f64;

    // Operator A w = a w_{j-1} + b_j w_j + d w_{j+1}.
    let diff = 0.5 * epsilon / (dx * dx);
    let adv = theta / (2.0 * dx);
    let a = diff - adv;
    let d = diff + adv;
    let reaction: Vec<f64> = (0..n)
        .map(|j| {
            field
                .value(grid.x(j) / epsilon)
                .map(|v| (0.5 * theta * theta + beta * v) / epsilon)
        })
        .collect::<Result<_>>()?;
    let h = 0.5 * dt;
    // Reflecting ends: the ghost value equals the interior neighbour.
    let lower = |j: usize| if j == n - 1 { a + d } else { a };
    let upper = |j: usize| if j == 0 { a + d } else { d };

    let mut w = vec![1.0; n];
    let mut rhs = vec![0.0; n];
    let mut cp = vec![0.0; n];
    let mut log_scale = 0.0;
    let center = grid.n_half;
    for k in 1..=steps {
        for j in 0..n {
            let b = -2.0 * diff + reaction[j];
            let wl = if j > 0 { w[j - 1] } else { 0.0 };
            let wr = if j + 1 < n { w[j + 1] } else { 0.0 };
            let lo = if j > 0 { lower(j) * wl } else { 0.0 };
            let up = if j + 1 < n { upper(j) * wr } else { 0.0 };
            rhs[j] = w[j] + h * (lo + b * w[j] + up);
        }
        // Thomas algorithm for (I - h A) w = rhs.
        let mut prev_c = 0.0;
        let mut prev_r = 0.0;
        for j in 0..n {
            let sub = if j > 0 { -h * lower(j) } else { 0.0 };
            let diag = 1.0 - h * (-2.0 * diff + reaction[j]);
            let sup = if j + 1 < n { -h * upper(j) } else { 0.0 };
            let m = diag - sub * prev_c;
            cp[j] = sup / m;
            rhs[j] = (rhs[j] - sub * prev_r) / m;
            prev_c = cp[j];
            prev_r = rhs[j];
        }
        w[n - 1] = rhs[n - 1];
        for j in (0..n - 1).rev() {
            w[j] = rhs[j] - cp[j] * w[j + 1];
        }
        let scale = w.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::NonFinite(format!("Hopf-Cole iterate at step {k}")));
        }
        w.iter_mut().for_each(|v| *v /= scale);
        log_scale += scale.ln();
    }
    if !(w[center] > 0.0) {
        return Err(Error::NonFinite(
            "non-positive Hopf-Cole value at the probe".into(),
        ));
    }
    Ok(HopfColeResult {
        epsilon,
        theta,
        dx,
        dt,
        steps,
        domain: (grid.x(0), grid.x(n - 1)),
        probe: epsilon * (log_scale + w[center].ln()),
    })
}
