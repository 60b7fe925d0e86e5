use serde::{Deserialize, Serialize};

use crate::environment::{PotentialField, Window};
use crate::error::{invalid, Error, Result};
use crate::numerics::hermite;

/// Settings shared by the Riccati solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiccatiOptions {
    /// Allowed excursion of `|u|` outside `[sqrt(2(lambda - beta)), sqrt(2 lambda)]`.
    pub tol_u: f64,
    /// Upper limit for the relaxation buffer.
    pub buffer_cap: f64,
    /// Buffer length in units of the slowest relaxation length
    /// `1 / sqrt(2(lambda - beta sup V))`.
    pub buffer_factor: f64,
    /// Minimum integration steps per field grid step. More are taken when
    /// the grid is coarse against the relaxation length `1/sqrt(2 lambda)`.
    pub refine: usize,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self {
            tol_u: 1e-6,
            buffer_cap: 100.0,
            buffer_factor: 20.0,
            refine: 1,
        }
    }
}

impl RiccatiOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_u >= 0.0) {
            return Err(invalid("tol_u must be nonnegative"));
        }
        if !(self.buffer_cap > 0.0 && self.buffer_factor > 0.0) {
            return Err(invalid("buffer_cap and buffer_factor must be positive"));
        }
        if self.refine == 0 {
            return Err(invalid("refine must be at least 1"));
        }
        Ok(())
    }

    /// Default buffer `buffer_factor / sqrt(2 gap)` capped at `buffer_cap`,
    /// where `gap = lambda - floor`.
    pub fn buffer_for(&self, gap: f64) -> f64 {
        if gap <= 0.0 {
            return self.buffer_cap;
        }
        (self.buffer_factor / (2.0 * gap).sqrt()).min(self.buffer_cap)
    }

    /// Steps per grid cell keeping `h sqrt(2 lambda) <= 0.2`, well inside the
    /// RK4 stability interval of the linearized equation.
    pub fn refine_for(&self, grid_step: f64, lambda: f64) -> usize {
        let auto = (grid_step * (2.0 * lambda.max(0.5)).sqrt() / 0.2).ceil() as usize;
        self.refine.max(auto)
    }
}

/// Solution of `u' = 2(lambda - beta V) - u^2` on the branch selected by the
/// sign of `theta`, together with the corrector `F(x) = int_0^x u - theta x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorProfile {
    pub beta: f64,
    pub theta: f64,
    pub lambda: f64,
    pub window: Window,
    pub grid_step: f64,
    pub first_index: i64,
    pub u_values: Vec<f64>,
    #[serde(rename = "F_values")]
    pub f_values: Vec<f64>,
    pub relax_buffer: f64,
    pub mean_u: f64,
    /// Point where `F` vanishes: 0 if inside the window, else its left end.
    pub anchor: f64,
    pub band: (f64, f64),
    /// Largest distance of `|u|` outside the band (0 when inside).
    pub band_excess: f64,
    /// Max over interior nodes of `|F''/2 + (theta + F')^2/2 + beta V - lambda|`.
    pub ode_residual: f64,
}

/// Raw branch solution on lattice nodes `k0..k0 + n` of step `h`:
/// `u` and an antiderivative `w` with `w' = u`.
pub(crate) struct Branch {
    pub k0: i64,
    pub h: f64,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

impl Branch {
    pub fn node(&self, i: usize) -> f64 {
        (self.k0 + i as i64) as f64 * self.h
    }

    /// Hermite interpolation of `w` using `u` as its derivative.
    pub fn w_at(&self, x: f64) -> f64 {
        let t = x / self.h - self.k0 as f64;
        let r = t.round();
        if (t - r).abs() <= 1e-12 * r.abs().max(1.0) && r >= 0.0 && (r as usize) < self.w.len() {
            return self.w[r as usize];
        }
        let i = (t.floor().max(0.0) as usize).min(self.w.len() - 2);
        let s = t - i as f64;
        hermite(
            self.w[i],
            self.u[i],
            self.w[i + 1],
            self.u[i + 1],
            self.h,
            s,
        )
        .0
    }
}

/// Round to the nearest integer when within rounding error of it, else
/// apply `dir`.
fn snap(t: f64, dir: fn(f64) -> f64) -> i64 {
    let r = t.round();
    if (t - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as i64
    } else {
        dir(t) as i64
    }
}

/// Smallest `lambda` for which `u` stays real: `beta * sup V` over the
/// nodes of `range`.
pub(crate) fn lambda_floor(field: &PotentialField, beta: f64, range: Window) -> f64 {
    let h = field.grid_step;
    let lo = ((range.lo / h).floor() as i64 - field.first_index).max(0) as usize;
    let hi =
        (((range.hi / h).ceil() as i64 - field.first_index).max(0) as usize).min(field.len() - 1);
    let vmax = field.values[lo.min(hi)..=hi]
        .iter()
        .copied()
        .fold(0.0, f64::max);
    beta * vmax
}

/// Integrate the branch with sign `sign` over nodes covering `[lo, hi]`,
/// starting `buffer` before the window on the stable side.
#[allow(clippy::too_many_arguments)]
pub(crate) fn integrate_branch(
    field: &PotentialField,
    beta: f64,
    sign: f64,
    lambda: f64,
    lo: f64,
    hi: f64,
    buffer: f64,
    refine: usize,
) -> Result<Branch> {
    let h = field.grid_step / refine as f64;
    let k_lo = snap(lo / h, f64::floor);
    let k_hi = snap(hi / h, f64::ceil);
    let nb = (buffer / h).ceil() as i64;
    let (k_start, k_end) = if sign > 0.0 {
        (k_lo - nb, k_hi)
    } else {
        (k_hi + nb, k_lo)
    };
    let need = Window::new(
        (k_start.min(k_end)) as f64 * h,
        (k_start.max(k_end)) as f64 * h,
    );
    field.require_window(need)?;

    let rhs = |v: f64, u: f64| 2.0 * (lambda - beta * v) - u * u;
    let v_start = field.value(k_start as f64 * h)?;
    let gap = lambda - beta * v_start;
    if gap < 0.0 {
        return Err(invalid(format!(
            "lambda = {lambda} is below beta V = {} at the integration start",
            beta * v_start
        )));
    }
    let mut u = sign * (2.0 * gap).sqrt();
    let mut w = 0.0;
    let steps = (k_end - k_start).unsigned_abs() as usize;
    let dir = if sign > 0.0 { 1i64 } else { -1i64 };
    let step = dir as f64 * h;
    let keep_from = (k_lo - k_start).unsigned_abs() as usize;
    let keep_to = (k_hi - k_start).unsigned_abs() as usize;
    let (keep_first, keep_last) = if sign > 0.0 {
        (keep_from, keep_to)
    } else {
        (keep_to, keep_from)
    };
    let n_keep = (k_hi - k_lo + 1) as usize;
    let mut us = vec![0.0; n_keep];
    let mut ws = vec![0.0; n_keep];
    let store = |j: usize, u: f64, w: f64, us: &mut Vec<f64>, ws: &mut Vec<f64>| {
        if j >= keep_first && j <= keep_last {
            let k = k_start + dir * j as i64;
            let idx = (k - k_lo) as usize;
            us[idx] = u;
            ws[idx] = w;
        }
    };
    store(0, u, w, &mut us, &mut ws);
    let mut v0 = v_start;
    for j in 0..steps {
        let k = k_start + dir * j as i64;
        let vm = field.value((k as f64 + 0.5 * dir as f64) * h)?;
        let v1 = field.value((k + dir) as f64 * h)?;
        let k1 = rhs(v0, u);
        let u2 = u + 0.5 * step * k1;
        let k2 = rhs(vm, u2);
        let u3 = u + 0.5 * step * k2;
        let k3 = rhs(vm, u3);
        let u4 = u + step * k3;
        let k4 = rhs(v1, u4);
        w += step / 6.0 * (u + 2.0 * u2 + 2.0 * u3 + u4);
        u += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !u.is_finite() {
            return Err(Error::NonFinite(format!(
                "Riccati solution at x = {}",
                (k + dir) as f64 * h
            )));
        }
        v0 = v1;
        store(j + 1, u, w, &mut us, &mut ws);
    }
    Ok(Branch {
        k0: k_lo,
        h,
        u: us,
        w: ws,
    })
}

/// Solve the corrector equation on `window` at level `lambda`.
///
/// `theta > 0` uses the positive branch, integrated forward from
/// `window.lo - relax_buffer`; `theta < 0` the negative branch, integrated
/// backward from `window.hi + relax_buffer`. Those are the directions in
/// which each branch is attracting. With `relax_buffer = None` the buffer is
/// chosen by [`RiccatiOptions::buffer_for`].
pub fn solve_riccati(
    field: &PotentialField,
    beta: f64,
    theta: f64,
    lambda: f64,
    window: Window,
    relax_buffer: Option<f64>,
    opts: &RiccatiOptions,
) -> Result<CorrectorProfile> {
    opts.validate()?;
    if !(beta > 0.0) {
        return Err(invalid(format!("beta must be positive, got {beta}")));
    }
    if theta == 0.0 || !theta.is_finite() {
        return Err(invalid("theta must be finite and nonzero"));
    }
    if !(window.hi > window.lo) {
        return Err(invalid("empty corrector window"));
    }
    let sign = theta.signum();
    let floor = lambda_floor(field, beta, field.window());
    if lambda < floor {
        return Err(invalid(format!(
            "lambda = {lambda} below the admissible floor beta sup V = {floor}"
        )));
    }
    let buffer = relax_buffer.unwrap_or_else(|| opts.buffer_for(lambda - floor));
    if !(buffer >= 0.0) {
        return Err(invalid("relax_buffer must be nonnegative"));
    }
    let br = integrate_branch(
        field,
        beta,
        sign,
        lambda,
        window.lo,
        window.hi,
        buffer,
        opts.refine_for(field.grid_step, lambda),
    )?;
    let h = br.h;
    let n = br.u.len();
    let lo = br.node(0);
    let hi = br.node(n - 1);
    let anchor = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo };
    let w_anchor = br.w_at(anchor);
    let f_values: Vec<f64> = (0..n)
        .map(|i| br.w[i] - w_anchor - theta * (br.node(i) - anchor))
        .collect();
    let mean_u = (br.w[n - 1] - br.w[0]) / (hi - lo);

    let band = (
        (2.0 * (lambda - beta).max(0.0)).sqrt(),
        (2.0 * lambda).sqrt(),
    );
    let mut band_excess: f64 = 0.0;
    let mut worst = (0.0, 0.0);
    for i in 0..n {
        let a = sign * br.u[i];
        let e = (band.0 - a).max(a - band.1).max(0.0);
        if e > band_excess {
            band_excess = e;
            worst = (br.node(i), br.u[i]);
        }
    }
    if band_excess > opts.tol_u {
        return Err(Error::RiccatiBand {
            x: worst.0,
            u: worst.1,
            lo: band.0,
            hi: band.1,
        });
    }

    let mut ode_residual: f64 = 0.0;
    for i in 2..n.saturating_sub(2) {
        let du = (br.u[i - 2] - 8.0 * br.u[i - 1] + 8.0 * br.u[i + 1] - br.u[i + 2]) / (12.0 * h);
        let v = field.value(br.node(i))?;
        let r = 0.5 * du + 0.5 * br.u[i] * br.u[i] + beta * v - lambda;
        ode_residual = ode_residual.max(r.abs());
    }

    Ok(CorrectorProfile {
        beta,
        theta,
        lambda,
        window: Window::new(lo, hi),
        grid_step: h,
        first_index: br.k0,
        u_values: br.u,
        f_values,
        relax_buffer: buffer,
        mean_u,
        anchor,
        band,
        band_excess,
        ode_residual,
    })
}

impl CorrectorProfile {
    pub fn node(&self, i: usize) -> f64 {
        (self.first_index + i as i64) as f64 * self.grid_step
    }

    fn locate(&self, x: f64) -> Result<(usize, f64)> {
        let t = x / self.grid_step - self.first_index as f64;
        let last = (self.u_values.len() - 1) as f64;
        if !(t >= -1e-12 && t <= last + 1e-12) {
            return Err(Error::OutOfWindow {
                x,
                lo: self.window.lo,
                hi: self.window.hi,
            });
        }
        let r = t.round();
        if (t - r).abs() <= 1e-12 * r.abs().max(1.0) {
            let i = r as usize;
            return Ok(if i + 1 == self.u_values.len() {
                (i - 1, 1.0)
            } else {
                (i, 0.0)
            });
        }
        let i = (t.floor() as usize).min(self.u_values.len() - 2);
        Ok((i, t - i as f64))
    }

    /// Corrector value `F(x)`, Hermite-interpolated with `F' = u - theta`.
    pub fn f_at(&self, x: f64) -> Result<f64> {
        let (i, s) = self.locate(x)?;
        if s == 0.0 {
            return Ok(self.f_values[i]);
        }
        if s == 1.0 {
            return Ok(self.f_values[i + 1]);
        }
        Ok(hermite(
            self.f_values[i],
            self.u_values[i] - self.theta,
            self.f_values[i + 1],
            self.u_values[i + 1] - self.theta,
            self.grid_step,
            s,
        )
        .0)
    }

    /// `u(x) = theta + F'(x)`, linearly interpolated.
    pub fn u_at(&self, x: f64) -> Result<f64> {
        let (i, s) = self.locate(x)?;
        Ok(self.u_values[i] * (1.0 - s) + self.u_values[i + 1] * s)
    }

    /// `max_{|x| <= L} |F(x)| / L` for each `L`, restricted to nodes in the
    /// window. Used to monitor sublinear growth.
    pub fn growth_ratios(&self, lengths: &[f64]) -> Vec<(f64, f64)> {
        lengths
            .iter()
            .map(|&l| {
                let m = (0..self.f_values.len())
                    .filter(|&i| self.node(i).abs() <= l)
                    .map(|i| self.f_values[i].abs())
                    .fold(0.0, f64::max);
                (l, m / l)
            })
            .collect()
    }
}

/// `-log v(x; y)` where `v(x; y) = E_x[exp(beta int_0^tau V - lambda tau)]`
/// and `tau` is the hitting time of `y`.
///
/// For `x < y` this is `int_x^y u_+`, for `x > y` it is `-int_y^x u_-`, with
/// `u_+` (`u_-`) the positive (negative) branch.
pub fn neg_log_v(
    field: &PotentialField,
    beta: f64,
    lambda: f64,
    x: f64,
    y: f64,
    opts: &RiccatiOptions,
) -> Result<f64> {
    opts.validate()?;
    if x == y {
        return Ok(0.0);
    }
    let floor = lambda_floor(field, beta, field.window());
    if lambda < floor || lambda < beta {
        return Err(invalid(format!(
            "lambda = {lambda} must be at least beta = {beta}"
        )));
    }
    let buffer = opts.buffer_for(lambda - floor);
    let (lo, hi) = (x.min(y), x.max(y));
    let sign = if x < y { 1.0 } else { -1.0 };
    let br = integrate_branch(
        field,
        beta,
        sign,
        lambda,
        lo,
        hi,
        buffer,
        opts.refine_for(field.grid_step, lambda),
    )?;
    Ok(sign * (br.w_at(hi) - br.w_at(lo)))
}
