//! Closed-form oracles for Brownian motion and the Monte Carlo estimators
//! they calibrate: hitting-time Laplace transforms, confinement in an
//! interval and the exponential moment of reflected local time.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{ess_fraction, resample, McOptions};
use super::policy::Policy;
use crate::error::{invalid, Error, Result};
use crate::numerics::{batch_mean_stderr, batch_rng, bisect, logsumexp};

/// `E_x[exp(-a tau_y)] = exp(-sqrt(2a) |x - y|)` for standard Brownian motion.
pub fn hitting_laplace(a: f64, x: f64, y: f64) -> f64 {
    (-(2.0 * a).sqrt() * (x - y).abs()).exp()
}

/// Plain Monte Carlo value with batch standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McValue {
    pub value: f64,
    pub stderr: f64,
    pub oracle: f64,
    pub n_paths: usize,
    pub dt: f64,
}

impl McValue {
    pub fn within(&self, sigmas: f64) -> bool {
        (self.value - self.oracle).abs() <= sigmas * self.stderr
    }
}

/// Probability that a Brownian bridge over `dt` between `a` and `b`, both on
/// the same side of `level`, touches it.
#[inline]
fn bridge_cross(a: f64, b: f64, level: f64, dt: f64) -> f64 {
    (-2.0 * (a - level) * (b - level) / dt).exp()
}

fn run_batches<T, F>(opts: &McOptions, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut Xoshiro256PlusPlus) -> Result<T> + Sync,
{
    opts.validate()?;
    (0..opts.batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = batch_rng(opts.seed, b as u64);
            f(b, &mut rng)
        })
        .collect()
}

/// Monte Carlo estimate of `E_x[exp(-a tau_y)]` with absorption at `y`
/// detected on the grid and by the Brownian-bridge crossing probability
/// between grid points. Paths stop once the remaining contribution is below
/// `1e-12`.
pub fn mc_hitting_laplace(a: f64, x: f64, y: f64, opts: &McOptions) -> Result<McValue> {
    if !(a > 0.0) {
        return Err(invalid("the Monte Carlo calibration needs a > 0"));
    }
    let dt = opts.dt;
    let sdt = dt.sqrt();
    let k = (2.0 * a).sqrt();
    let cutoff = 1e-12f64.ln();
    let n = opts.per_batch();
    let means = run_batches(opts, |_, rng| {
        let mut sum = 0.0;
        for _ in 0..n {
            let mut pos = x;
            let mut t = 0.0;
            let value = loop {
                if pos == y {
                    break (-a * t).exp();
                }
                if -a * t - k * (pos - y).abs() < cutoff {
                    break 0.0;
                }
                let z: f64 = rng.sample(StandardNormal);
                let next = pos + sdt * z;
                let crossed = (pos - y) * (next - y) <= 0.0
                    || rng.random::<f64>() < bridge_cross(pos, next, y, dt);
                if crossed {
                    break (-a * (t + 0.5 * dt)).exp();
                }
                pos = next;
                t += dt;
            };
            sum += value;
        }
        Ok(sum / n as f64)
    })?;
    let (value, stderr) = batch_mean_stderr(&means);
    Ok(McValue {
        value,
        stderr,
        oracle: hitting_laplace(a, x, y),
        n_paths: n * opts.batches,
        dt,
    })
}

/// A decay or growth rate estimate with its oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub value: f64,
    pub stderr: f64,
    pub oracle: f64,
    pub t: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub batch_values: Vec<f64>,
    /// Set when the step is coarse relative to the resolved length scale.
    pub bias_warning: bool,
}

impl RateEstimate {
    pub fn relative_error(&self) -> f64 {
        ((self.value - self.oracle) / self.oracle).abs()
    }
}

/// Principal Dirichlet rate `-pi^2 / (8 y^2)` of `(1/2) d^2/dx^2` on `(-y, y)`.
pub fn confinement_oracle(y: f64) -> f64 {
    -std::f64::consts::PI.powi(2) / (8.0 * y * y)
}

/// Estimate `(1/t) log P_0(tau_{+-y} > t)` by killing particles on exit
/// (grid or bridge crossing) and replacing them by copies of survivors.
pub fn confinement_rate(y: f64, t: f64, opts: &McOptions) -> Result<RateEstimate> {
    if !(y > 0.0) || !(t > 0.0) {
        return Err(invalid("y and t must be positive"));
    }
    let steps = opts.steps(t)?;
    let dt = opts.dt;
    let sdt = dt.sqrt();
    let n = opts.per_batch();
    let logs = run_batches(opts, |b, rng| {
        let mut xs = vec![0.0f64; n];
        let mut alive = vec![true; n];
        let mut log_p = 0.0;
        for k in 1..=steps {
            let mut survivors = 0usize;
            for (x, live) in xs.iter_mut().zip(alive.iter_mut()) {
                let z: f64 = rng.sample(StandardNormal);
                let next = *x + sdt * z;
                let out = next.abs() >= y || {
                    let p_up = bridge_cross(*x, next, y, dt);
                    let p_dn = bridge_cross(*x, next, -y, dt);
                    rng.random::<f64>() < 1.0 - (1.0 - p_up) * (1.0 - p_dn)
                };
                *live = !out;
                if !out {
                    *x = next;
                    survivors += 1;
                }
            }
            if survivors == 0 {
                return Err(Error::ZeroSurvivors {
                    batch: b,
                    t: k as f64 * dt,
                });
            }
            if survivors < n {
                log_p += (survivors as f64 / n as f64).ln();
                let pool: Vec<f64> = xs
                    .iter()
                    .zip(&alive)
                    .filter(|(_, a)| **a)
                    .map(|(x, _)| *x)
                    .collect();
                for (x, live) in xs.iter_mut().zip(alive.iter_mut()) {
                    if !*live {
                        *x = pool[rng.random_range(0..pool.len())];
                        *live = true;
                    }
                }
            }
        }
        Ok(log_p)
    })?;
    pooled_rate(&logs, t, confinement_oracle(y), opts, n, false)
}

fn pooled_rate(
    logs: &[f64],
    t: f64,
    oracle: f64,
    opts: &McOptions,
    n: usize,
    warn: bool,
) -> Result<RateEstimate> {
    let batch_values: Vec<f64> = logs.iter().map(|l| l / t).collect();
    let value = (logsumexp(logs) - (logs.len() as f64).ln()) / t;
    if !value.is_finite() {
        return Err(Error::NonFinite("rate estimate".into()));
    }
    let (_, se) = batch_mean_stderr(&batch_values);
    Ok(RateEstimate {
        value,
        stderr: se.max(1e-12 * value.abs().max(1.0)),
        oracle,
        t,
        dt: opts.dt,
        n_paths: n * opts.batches,
        batch_values,
        bias_warning: warn,
    })
}

/// `J_y(c) = k^2 / 2` where `k tanh(k y) = c`: principal eigenvalue of
/// `(1/2) d^2/dx^2` on `[0, y]` with `f'(0) + c f(0) = 0` and `f'(y) = 0`.
pub fn local_time_oracle(y: f64, c: f64) -> Result<f64> {
    if !(y > 0.0) || !(c >= 0.0) {
        return Err(invalid("y must be positive and c non-negative"));
    }
    if c == 0.0 {
        return Ok(0.0);
    }
    let hi = c + (c / y).sqrt() + 1.0;
    let root = bisect(|k| Ok(k * (k * y).tanh() - c), 0.0, hi, 1e-14, 200)?;
    Ok(0.5 * root.x * root.x)
}

/// How the local time at `0` is accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LocalTimeEstimator {
    /// Exact conditional law of the bridge local time given the endpoints.
    #[default]
    Bridge,
    /// Occupation of `[0, delta)` divided by `2 delta`, `delta = sqrt(dt)`.
    Occupation,
}

/// Reduce `x` into `[-y, y)` modulo `2 y`.
#[inline]
fn wrap(x: f64, y: f64) -> f64 {
    let p = 2.0 * y;
    x - p * ((x + y) / p).floor()
}

/// Growth rate `J_y(c)` of `E_0[exp(c l_t)]` with `l` the local time at `0`
/// of Brownian motion reflected in `[0, y]`.
///
/// The reflected path is `|X|` for `X` wrapped onto the circle of length
/// `2 y`, so both reflections are exact. Particles carry weights
/// `exp(c dl)` and are resampled when the effective sample size halves. The
/// rate is measured over `[t/2, t]` so the initial transient drops out.
pub fn local_time_rate(
    y: f64,
    c: f64,
    t: f64,
    estimator: LocalTimeEstimator,
    opts: &McOptions,
) -> Result<RateEstimate> {
    if !(y > 0.0) || !(c >= 0.0) || !(t > 0.0) {
        return Err(invalid("y, t must be positive and c non-negative"));
    }
    let steps = opts.steps(t)?;
    let half = steps / 2;
    if half == 0 {
        return Err(invalid("horizon too short for the step"));
    }
    let dt = opts.dt;
    let sdt = dt.sqrt();
    let n = opts.per_batch();
    let warn = dt > (0.01 * y.min(1.0)).powi(2);
    if warn {
        log::warn!(
            "local-time rate: dt = {dt} is coarse for y = {y}; occupation estimates are biased"
        );
    }
    let threshold = opts.resample_threshold.max(0.5);
    let logs = run_batches(opts, |_, rng| {
        let mut xs = vec![0.0f64; n];
        let mut logw = vec![0.0f64; n];
        let mut log_z = 0.0;
        let mut log_half = 0.0;
        for k in 1..=steps {
            for (x, w) in xs.iter_mut().zip(logw.iter_mut()) {
                let a = *x;
                let b = a + sdt * rng.sample::<f64, _>(StandardNormal);
                let l = match estimator {
                    LocalTimeEstimator::Bridge => {
                        let level = 2.0 * y * (0.5 * (a + b) / (2.0 * y)).round();
                        let e: f64 = rng.sample(Exp1);
                        ((a - b).powi(2) + 2.0 * dt * e).sqrt()
                            - (a - level).abs()
                            - (b - level).abs()
                    }
                    LocalTimeEstimator::Occupation => {
                        if wrap(b, y).abs() < sdt {
                            dt / (2.0 * sdt)
                        } else {
                            0.0
                        }
                    }
                };
                *w += c * l.max(0.0);
                *x = wrap(b, y);
            }
            if k == half || k == steps {
                let mut acc = logsumexp(&logw);
                acc -= (n as f64).ln();
                if k == half {
                    log_half = log_z + acc;
                } else {
                    log_z += acc;
                }
            }
            if k < steps && ess_fraction(&logw) < threshold {
                log_z += resample(&mut xs, &mut logw, rng);
            }
        }
        Ok(log_z - log_half)
    })?;
    let span = (steps - half) as f64 * dt;
    pooled_rate(&logs, span, local_time_oracle(y, c)?, opts, n, warn)
}

/// Empirical check of the exponential Chebyshev bound
/// `P(int (theta + alpha) dX <= -b t) <= exp(-b^2 t / (2 (|theta| + c)^2))`
/// for the controlled diffusion `dX = alpha dt + dW`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevReport {
    pub empirical: f64,
    pub stderr: f64,
    pub bound: f64,
    pub passed: bool,
}

pub fn exp_chebyshev_check(
    policy: Policy,
    theta: f64,
    c: f64,
    b: f64,
    t: f64,
    opts: &McOptions,
) -> Result<ChebyshevReport> {
    if !policy.admissible(c) {
        return Err(invalid("policy is not admissible for this c"));
    }
    let steps = opts.steps(t)?;
    let dt = opts.dt;
    let sdt = dt.sqrt();
    let n = opts.per_batch();
    let fractions = run_batches(opts, |_, rng| {
        let mut hits = 0usize;
        for _ in 0..n {
            let (mut x, mut integral) = (0.0f64, 0.0f64);
            for _ in 0..steps {
                let alpha = policy.drift(x);
                let dx = alpha * dt + sdt * rng.sample::<f64, _>(StandardNormal);
                integral += (theta + alpha) * dx;
                x += dx;
            }
            if integral <= -b * t {
                hits += 1;
            }
        }
        Ok(hits as f64 / n as f64)
    })?;
    let (empirical, stderr) = batch_mean_stderr(&fractions);
    let bound = (-b * b * t / (2.0 * (theta.abs() + c).powi(2))).exp();
    Ok(ChebyshevReport {
        empirical,
        stderr,
        bound,
        passed: empirical <= bound + 3.0 * stderr,
    })
}
