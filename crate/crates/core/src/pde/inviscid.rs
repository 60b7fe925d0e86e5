use serde::{Deserialize, Serialize};

use super::viscous::{lipschitz, make_snapshot, snapshot_steps, Grid, InitialData, PdeSolveResult};
use crate::effective::EffectiveHamiltonian;
use crate::error::{invalid, Error, Result};
use crate::numerics::linspace;

/// Piecewise-linear table of the effective Hamiltonian. Slopes that matter
/// exactly (the far-field slopes of the data) are table nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HBarTable {
    pub thetas: Vec<f64>,
    pub values: Vec<f64>,
}

impl HBarTable {
    pub fn build(
        h: &EffectiveHamiltonian,
        half_range: f64,
        points: usize,
        extra: &[f64],
    ) -> Result<Self> {
        if points < 2 || !(half_range > 0.0) {
            return Err(invalid(
                "table needs at least two points and a positive range",
            ));
        }
        let mut thetas = linspace(-half_range, half_range, points);
        thetas.extend_from_slice(extra);
        if let Some(tb) = h.theta_bar {
            thetas.extend([-tb.value, tb.value]);
        }
        if h.c > 0.0 {
            thetas.extend([-h.c, h.c]);
        }
        thetas.retain(|t| t.abs() <= half_range);
        thetas.sort_by(f64::total_cmp);
        thetas.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let values = h.evaluate_grid(&thetas)?;
        Ok(Self { thetas, values })
    }

    pub fn eval(&self, p: f64) -> Result<f64> {
        let n = self.thetas.len();
        if !(p >= self.thetas[0] && p <= self.thetas[n - 1]) {
            return Err(invalid(format!(
                "slope {p} outside the tabulated range [{}, {}]",
                self.thetas[0],
                self.thetas[n - 1]
            )));
        }
        let i = self.thetas.partition_point(|&t| t <= p).clamp(1, n - 1);
        let (a, b) = (self.thetas[i - 1], self.thetas[i]);
        let s = (p - a) / (b - a);
        Ok(self.values[i - 1] + s * (self.values[i] - self.values[i - 1]))
    }

    /// Largest difference-quotient slope; bounds `|H'|`.
    pub fn lipschitz(&self) -> f64 {
        self.thetas
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, v)| ((v[1] - v[0]) / (t[1] - t[0])).abs())
            .fold(0.0, f64::max)
    }
}

/// Lax–Friedrichs solution of `u_t = Hbar(u_x)` with `u(0, .) = g`, using the
/// tabulated `Hbar`. Linear data give `theta x + Hbar(theta) t` exactly.
pub fn solve_effective(
    table: &HBarTable,
    initial: InitialData,
    t_final: f64,
    dx: f64,
    cfl_safety: f64,
    r_probe: f64,
    snapshot_times: &[f64],
) -> Result<PdeSolveResult> {
    if !(dx > 0.0) || !(t_final > 0.0) || !(cfl_safety > 0.0 && cfl_safety <= 1.0) {
        return Err(invalid(
            "dx, t_final must be positive and cfl_safety in (0, 1]",
        ));
    }
    let sigma = table.lipschitz().max(1e-12);
    let half = r_probe + t_final * sigma + 1.0 + 2.0 * dx;
    let grid = Grid::new(half, dx);
    let n = grid.len();
    let xs = grid.xs();
    let steps = (t_final * sigma / (cfl_safety * dx)).ceil().max(1.0) as usize;
    let dt = t_final / steps as f64;
    let (left, right) = initial.far_slopes();
    let mut u: Vec<f64> = xs.iter().map(|&x| initial.eval(x)).collect();
    let mut next = vec![0.0; n];
    let center = grid.n_half;
    let snap_at = snapshot_steps(snapshot_times, dt, steps);
    let trace_every = (steps / 100).max(1);
    let mut snapshots = Vec::new();
    let mut snap_idx = 0;
    if snap_at[0] == 0 {
        snapshots.push(make_snapshot(0.0, &xs, &u, 0.0));
        snap_idx = 1;
    }
    let mut trace = vec![(0.0, u[center])];
    let mut max_gradient: f64 = 0.0;
    for k in 1..=steps {
        let gl = u[0] - left * dx;
        let gr = u[n - 1] + right * dx;
        for j in 0..n {
            let ul = if j == 0 { gl } else { u[j - 1] };
            let ur = if j == n - 1 { gr } else { u[j + 1] };
            let pm = (u[j] - ul) / dx;
            let pp = (ur - u[j]) / dx;
            max_gradient = max_gradient.max(pm.abs().max(pp.abs()));
            next[j] = u[j] + dt * (table.eval(0.5 * (pm + pp))? + 0.5 * sigma * (pp - pm));
        }
        std::mem::swap(&mut u, &mut next);
        let t = k as f64 * dt;
        if u[center].is_nan() {
            return Err(Error::NonFinite(format!("effective solution at t = {t}")));
        }
        if k % trace_every == 0 || k == steps {
            trace.push((t, u[center]));
        }
        while snap_idx < snap_at.len() && snap_at[snap_idx] == k {
            snapshots.push(make_snapshot(t, &xs, &u, 0.0));
            snap_idx += 1;
        }
    }
    Ok(PdeSolveResult {
        epsilon: 0.0,
        initial,
        domain: (xs[0], xs[n - 1]),
        dx,
        dt,
        steps,
        t_final,
        snapshots,
        probe: u[center],
        probe_lipschitz: lipschitz(&trace),
        probe_trace: trace,
        cfl_ratio: sigma * dt / dx,
        max_gradient,
    })
}

/// Probe values of [`solve_effective`] under successive halving of `dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfConvergence {
    pub dx: Vec<f64>,
    pub probes: Vec<f64>,
    /// `|probe(dx_k) - probe(dx_{k+1})|`.
    pub differences: Vec<f64>,
    /// `log2` of successive difference ratios.
    pub observed_orders: Vec<f64>,
    /// Richardson extrapolation from the last two levels with the last
    /// observed order (first order when unavailable).
    pub extrapolated: f64,
}

pub fn self_convergence(
    table: &HBarTable,
    initial: InitialData,
    t_final: f64,
    dx0: f64,
    levels: usize,
) -> Result<SelfConvergence> {
    if levels < 2 {
        return Err(invalid("self-convergence needs at least two levels"));
    }
    let dx: Vec<f64> = (0..levels).map(|k| dx0 / 2f64.powi(k as i32)).collect();
    let probes: Vec<f64> = dx
        .iter()
        .map(|&h| solve_effective(table, initial, t_final, h, 0.9, 1.0, &[]).map(|r| r.probe))
        .collect::<Result<_>>()?;
    let differences: Vec<f64> = probes.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let observed_orders: Vec<f64> = differences
        .windows(2)
        .filter(|d| d[0] > 0.0 && d[1] > 0.0)
        .map(|d| (d[0] / d[1]).log2())
        .collect();
    let order = observed_orders
        .last()
        .copied()
        .filter(|p| *p > 0.0)
        .unwrap_or(1.0);
    let (a, b) = (probes[levels - 2], probes[levels - 1]);
    let extrapolated = b + (b - a) / (2f64.powf(order) - 1.0);
    Ok(SelfConvergence {
        dx,
        probes,
        differences,
        observed_orders,
        extrapolated,
    })
}

/// Largest half-width needed by the effective solver for data with the
/// given slopes; exposed so callers can size tables.
pub fn effective_table_range(initial: &InitialData) -> f64 {
    initial.max_slope() + 1.0
}
