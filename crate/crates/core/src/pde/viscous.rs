use serde::{Deserialize, Serialize};

use crate::environment::PotentialField;
use crate::error::{invalid, Error, Result};

/// Initial data `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialData {
    /// `g(x) = theta x`.
    Linear { theta: f64 },
    /// `g(x) = left x` for `x < 0` and `right x` for `x >= 0`. `min(a x, b x)`
    /// with `a < b` is `Kink { left: b, right: a }`; `-|x|` is
    /// `Kink { left: 1, right: -1 }`.
    Kink { left: f64, right: f64 },
}

impl InitialData {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            InitialData::Linear { theta } => theta * x,
            InitialData::Kink { left, right } => {
                if x < 0.0 {
                    left * x
                } else {
                    right * x
                }
            }
        }
    }

    /// Slopes at `-inf` and `+inf`.
    pub fn far_slopes(&self) -> (f64, f64) {
        match *self {
            InitialData::Linear { theta } => (theta, theta),
            InitialData::Kink { left, right } => (left, right),
        }
    }

    pub fn max_slope(&self) -> f64 {
        let (a, b) = self.far_slopes();
        a.abs().max(b.abs())
    }

    /// Slope removed analytically before time stepping.
    fn reference_slope(&self) -> f64 {
        match *self {
            InitialData::Linear { theta } => theta,
            InitialData::Kink { .. } => 0.0,
        }
    }

    pub fn tag(&self) -> String {
        match *self {
            InitialData::Linear { theta } => format!("linear({theta})"),
            InitialData::Kink { left, right } => format!("kink({left},{right})"),
        }
    }
}

/// Discretization settings shared by the explicit solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeOptions {
    /// `dx = epsilon / dx_per_epsilon` for the viscous problem.
    pub dx_per_epsilon: f64,
    /// Fraction of the largest stable step actually used.
    pub cfl_safety: f64,
    /// Half-width of the probe box around `0`.
    pub r_probe: f64,
    /// Extra half-width beyond the domain of influence.
    pub margin: f64,
    /// Abort when a discrete gradient exceeds this.
    pub gradient_bound: f64,
    /// Times at which `(x, u)` snapshots are kept; the final time is always
    /// kept.
    pub snapshot_times: Vec<f64>,
    /// Require at least four spatial steps per environment grid cell.
    pub check_resolution: bool,
}

impl Default for PdeOptions {
    fn default() -> Self {
        Self {
            dx_per_epsilon: 8.0,
            cfl_safety: 0.9,
            r_probe: 1.0,
            margin: 1.0,
            gradient_bound: 50.0,
            snapshot_times: Vec::new(),
            check_resolution: true,
        }
    }
}

impl PdeOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dx_per_epsilon > 0.0) {
            return Err(invalid("dx_per_epsilon must be positive"));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(invalid("cfl_safety must lie in (0, 1]"));
        }
        if !(self.r_probe >= 0.0) || !(self.margin >= 0.0) || !(self.gradient_bound > 0.0) {
            return Err(invalid(
                "r_probe, margin must be non-negative and gradient_bound positive",
            ));
        }
        Ok(())
    }
}

/// Solution snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

impl Snapshot {
    /// Two-column text `x u`, one node per line.
    pub fn to_columns(&self) -> String {
        let mut s = String::from("x u\n");
        for (x, u) in self.x.iter().zip(&self.u) {
            s.push_str(&format!("{x} {u}\n"));
        }
        s
    }

    /// Value at the node nearest to `x`.
    pub fn at(&self, x: f64) -> Option<f64> {
        let dx = self.x.get(1)? - self.x[0];
        let j = ((x - self.x[0]) / dx).round();
        if j < 0.0 || j as usize >= self.x.len() {
            return None;
        }
        Some(self.u[j as usize])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeSolveResult {
    /// `0` for the effective (inviscid) equation.
    pub epsilon: f64,
    pub initial: InitialData,
    pub domain: (f64, f64),
    pub dx: f64,
    pub dt: f64,
    pub steps: usize,
    pub t_final: f64,
    pub snapshots: Vec<Snapshot>,
    /// `u(t_final, 0)`.
    pub probe: f64,
    /// `(t, u(t, 0))` at evenly spaced times.
    pub probe_trace: Vec<(f64, f64)>,
    /// Largest `dt (epsilon + sigma_num dx) / dx^2` (viscous) or
    /// `sigma dt / dx` (inviscid) met during the run.
    pub cfl_ratio: f64,
    pub max_gradient: f64,
    /// Largest `|u(t,0) - u(s,0)| / (t - s)` over the probe trace.
    pub probe_lipschitz: f64,
}

impl PdeSolveResult {
    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("final snapshot is always stored")
    }

    /// `max_{|x| <= r} |u(t_final, x) - theta x - value|` on the final snapshot.
    pub fn box_error(&self, theta: f64, value: f64, r: f64) -> f64 {
        let s = self.final_snapshot();
        s.x.iter()
            .zip(&s.u)
            .filter(|(x, _)| x.abs() <= r + 1e-12)
            .map(|(x, u)| (u - theta * x - value).abs())
            .fold(0.0, f64::max)
    }
}

/// Half-width of the computational domain: the probe box plus the distance
/// information travels in time `t` for gradients up to `|theta| + c +
/// sqrt(2 (beta + theta^2/2))`.
pub fn run_half_width(beta: f64, c: f64, max_slope: f64, t: f64, r_probe: f64, margin: f64) -> f64 {
    r_probe + t * (max_slope + c + (2.0 * (beta + 0.5 * max_slope * max_slope)).sqrt()) + margin
}

/// A-priori bound on `|u_x|` used to size the time step: the steepest data
/// slope plus the spread of the gradient band and the control.
pub fn gradient_apriori(max_slope: f64, beta: f64, c: f64) -> f64 {
    max_slope + (2.0 * beta).sqrt() + c + 1.0
}

/// Largest stable explicit step for flux bound `sigma`, scaled by `safety`.
pub fn explicit_step(epsilon: f64, sigma: f64, dx: f64, safety: f64) -> f64 {
    let sigma_num = (sigma - epsilon / dx).max(0.0);
    safety * dx * dx / (epsilon + sigma_num * dx)
}

/// Whether the explicit update is monotone: nondecreasing in every stencil
/// value for gradients with `|H'| <= sigma`.
pub fn scheme_is_monotone(epsilon: f64, sigma: f64, dx: f64, dt: f64) -> bool {
    let sigma_num = (sigma - epsilon / dx).max(0.0);
    let diffusion = 0.5 * (epsilon + sigma_num * dx) / (dx * dx);
    let neighbour = diffusion - 0.5 * sigma / dx;
    let center = 1.0 - 2.0 * dt * diffusion;
    neighbour >= -1e-15 && center >= -1e-15
}

pub(crate) struct Grid {
    pub n_half: usize,
    pub dx: f64,
}

impl Grid {
    pub fn new(half_width: f64, dx: f64) -> Self {
        Self {
            n_half: (half_width / dx).ceil() as usize,
            dx,
        }
    }

    pub fn len(&self) -> usize {
        2 * self.n_half + 1
    }

    pub fn x(&self, j: usize) -> f64 {
        (j as f64 - self.n_half as f64) * self.dx
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.x(j)).collect()
    }
}

pub(crate) fn snapshot_steps(times: &[f64], dt: f64, steps: usize) -> Vec<usize> {
    let mut out: Vec<usize> = times
        .iter()
        .map(|t| ((t / dt).round() as usize).min(steps))
        .collect();
    out.push(steps);
    out.sort_unstable();
    out.dedup();
    out
}

pub(crate) fn lipschitz(trace: &[(f64, f64)]) -> f64 {
    trace
        .windows(2)
        .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
        .fold(0.0, f64::max)
}

/// Explicit finite-difference solution of
/// `u_t = (epsilon/2) u_xx + (1/2) u_x^2 - c |u_x| + beta V(x/epsilon)`
/// with `u(0, .) = g`.
///
/// Centered second differences for the viscous term and a local
/// Lax–Friedrichs flux for the Hamiltonian, whose numerical viscosity is
/// reduced by the physical one (`sigma_num = max(0, sigma - epsilon/dx)`).
/// Ghost nodes continue the solution affinely with the far-field slopes of
/// `g`. For linear data the slope is removed analytically, so spatially
/// linear solutions are reproduced to rounding.
pub fn solve_viscous(
    field: &PotentialField,
    beta: f64,
    c: f64,
    epsilon: f64,
    initial: InitialData,
    t_final: f64,
    opts: &PdeOptions,
) -> Result<PdeSolveResult> {
    opts.validate()?;
    if !(epsilon > 0.0) || !(t_final > 0.0) || !(beta >= 0.0) || !(c >= 0.0) {
        return Err(invalid(
            "epsilon and t_final must be positive, beta and c non-negative",
        ));
    }
    let dx = epsilon / opts.dx_per_epsilon;
    if opts.check_resolution && dx > epsilon * field.grid_step / 4.0 + 1e-15 {
        return Err(invalid(format!(
            "dx = {dx} does not resolve the environment: need dx <= epsilon * grid_step / 4 = {}",
            epsilon * field.grid_step / 4.0
        )));
    }
    let max_slope = initial.max_slope();
    let half = run_half_width(beta, c, max_slope, t_final, opts.r_probe, opts.margin);
    let grid = Grid::new(half, dx);
    let n = grid.len();
    let xs = grid.xs();
    let source: Vec<f64> = xs
        .iter()
        .map(|&x| field.value(x / epsilon).map(|v| beta * v))
        .collect::<Result<_>>()?;
    let sigma_apriori = gradient_apriori(max_slope, beta, c) + c;
    let dt_max = explicit_step(epsilon, sigma_apriori, dx, opts.cfl_safety);
    let steps = (t_final / dt_max).ceil() as usize;
    let dt = t_final / steps as f64;

    let theta_ref = initial.reference_slope();
    let (left, right) = initial.far_slopes();
    let mut w: Vec<f64> = xs
        .iter()
        .map(|&x| initial.eval(x) - theta_ref * x)
        .collect();
    let mut next = vec![0.0; n];
    let center = grid.n_half;
    let snap_at = snapshot_steps(&opts.snapshot_times, dt, steps);
    let trace_every = (steps / 100).max(1);
    let mut snapshots = Vec::with_capacity(snap_at.len());
    let mut trace = vec![(0.0, w[center])];
    let mut cfl_ratio: f64 = 0.0;
    let mut max_gradient: f64 = 0.0;
    let inv_dx = 1.0 / dx;
    let visc = 0.5 * epsilon;
    let mut snap_idx = 0;
    if snap_at[0] == 0 {
        snapshots.push(make_snapshot(0.0, &xs, &w, theta_ref));
        snap_idx = 1;
    }
    for k in 1..=steps {
        let ghost_l = w[0] - (left - theta_ref) * dx;
        let ghost_r = w[n - 1] + (right - theta_ref) * dx;
        let mut step_ratio: f64 = 0.0;
        let mut step_grad: f64 = 0.0;
        for j in 0..n {
            let wl = if j == 0 { ghost_l } else { w[j - 1] };
            let wr = if j == n - 1 { ghost_r } else { w[j + 1] };
            let wc = w[j];
            let pm = theta_ref + (wc - wl) * inv_dx;
            let pp = theta_ref + (wr - wc) * inv_dx;
            let pavg = 0.5 * (pm + pp);
            let sigma = pm.abs().max(pp.abs()) + c;
            let snum = (sigma - epsilon * inv_dx).max(0.0);
            let lap = (wr - 2.0 * wc + wl) * inv_dx * inv_dx;
            let ham = 0.5 * pavg * pavg - c * pavg.abs();
            next[j] = wc + dt * ((visc + 0.5 * snum * dx) * lap + ham + source[j]);
            step_ratio = step_ratio.max(dt * (epsilon + snum * dx) * inv_dx * inv_dx);
            step_grad = step_grad.max(pm.abs().max(pp.abs()));
        }
        cfl_ratio = cfl_ratio.max(step_ratio);
        max_gradient = max_gradient.max(step_grad);
        let t = k as f64 * dt;
        if step_ratio > 1.0 {
            return Err(Error::Cfl { ratio: step_ratio });
        }
        if !(step_grad <= opts.gradient_bound) {
            if step_grad.is_nan() {
                return Err(Error::NonFinite(format!("solution at t = {t}")));
            }
            return Err(Error::GradientBlowup {
                p: step_grad,
                bound: opts.gradient_bound,
                t,
            });
        }
        std::mem::swap(&mut w, &mut next);
        if k % trace_every == 0 || k == steps {
            trace.push((t, w[center]));
        }
        while snap_idx < snap_at.len() && snap_at[snap_idx] == k {
            snapshots.push(make_snapshot(t, &xs, &w, theta_ref));
            snap_idx += 1;
        }
    }
    Ok(PdeSolveResult {
        epsilon,
        initial,
        domain: (xs[0], xs[n - 1]),
        dx,
        dt,
        steps,
        t_final,
        snapshots,
        probe: w[center],
        probe_lipschitz: lipschitz(&trace),
        probe_trace: trace,
        cfl_ratio,
        max_gradient,
    })
}

pub(crate) fn make_snapshot(t: f64, xs: &[f64], w: &[f64], theta_ref: f64) -> Snapshot {
    Snapshot {
        t,
        x: xs.to_vec(),
        u: xs.iter().zip(w).map(|(x, w)| w + theta_ref * x).collect(),
    }
}
