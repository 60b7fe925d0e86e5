//! Weighted particle propagation shared by all path estimators.
//!
//! Particles follow a proposal drift `q(x)`; each step multiplies the weight
//! by the exact Euler likelihood ratio of the target drift `alpha(x)` against
//! `q(x)` and by the exponential functional increment
//! `exp(beta V(mid) dt + theta dX)`. Weights are kept in the log domain and the
//! population is resampled (systematic) when the effective sample size falls
//! below a fraction of the particle count; the log normalizer collected at
//! each resampling keeps the estimate of `E[exp(...)]` unbiased.

use rand::Rng;
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use super::policy::Policy;
use crate::environment::PotentialField;
use crate::error::{invalid, Error, Result};
use crate::numerics::LogSumExp;

/// Which drift the simulated particles follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Proposal {
    /// `q = alpha(x) + tilt`.
    #[default]
    Controlled,
    /// `q = tilt`; the policy enters only through the weights.
    Girsanov,
}

/// Budget and variance-control settings for path estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McOptions {
    pub dt: f64,
    /// Total particle count over all batches.
    pub n_paths: usize,
    pub batches: usize,
    pub seed: u64,
    pub proposal: Proposal,
    /// Resample when `ESS < resample_threshold * n`; `0` disables resampling
    /// (plain importance sampling).
    pub resample_threshold: f64,
    /// Time between effective-sample-size checks.
    pub ess_interval: f64,
    /// Estimates whose ESS ever drops below this fraction are rejected.
    pub min_ess_fraction: f64,
    /// Extra room added to the pre-estimated excursion bound.
    pub window_margin: f64,
    /// Largest accepted `|tilt|`.
    pub max_tilt: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            n_paths: 20_000,
            batches: 16,
            seed: 0,
            proposal: Proposal::Controlled,
            resample_threshold: 0.5,
            ess_interval: 0.05,
            min_ess_fraction: 0.01,
            window_margin: 5.0,
            max_tilt: 20.0,
        }
    }
}

impl McOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt must be positive"));
        }
        if self.batches < 16 {
            return Err(invalid("at least 16 batches are required"));
        }
        if self.n_paths < self.batches {
            return Err(invalid("n_paths must be at least the number of batches"));
        }
        if !(0.0..=1.0).contains(&self.resample_threshold) {
            return Err(invalid("resample_threshold must lie in [0, 1]"));
        }
        if !(self.ess_interval > 0.0) {
            return Err(invalid("ess_interval must be positive"));
        }
        if !(0.0..1.0).contains(&self.min_ess_fraction) {
            return Err(invalid("min_ess_fraction must lie in [0, 1)"));
        }
        if !(self.window_margin >= 0.0) || !(self.max_tilt >= 0.0) {
            return Err(invalid("window_margin and max_tilt must be non-negative"));
        }
        Ok(())
    }

    pub fn per_batch(&self) -> usize {
        self.n_paths / self.batches
    }

    /// Number of Euler steps covering `[0, t]`; `t` must be a multiple of
    /// `dt` up to rounding.
    pub fn steps(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(invalid("horizon must be non-negative"));
        }
        let k = (t / self.dt).round();
        if (k * self.dt - t).abs() > 1e-9 * t.max(1.0) {
            return Err(invalid(format!(
                "horizon {t} is not a multiple of dt = {}",
                self.dt
            )));
        }
        Ok(k as usize)
    }
}

/// The exponential functional `exp(beta int V(X) + theta (X_t - X_0))` under
/// the target dynamics `dX = alpha(X) dt + dW`, `X_0 = start`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Target<'a> {
    pub field: &'a PotentialField,
    pub beta: f64,
    pub theta: f64,
    pub policy: Policy,
    pub tilt: f64,
    pub proposal: Proposal,
    pub start: f64,
}

impl Target<'_> {
    #[inline]
    fn proposal_drift(&self, alpha: f64) -> f64 {
        match self.proposal {
            Proposal::Controlled => alpha + self.tilt,
            Proposal::Girsanov => self.tilt,
        }
    }

    /// Half-width around `start` that paths are expected to stay within.
    pub fn required_half_width(&self, t: f64, margin: f64) -> f64 {
        let diffusive = 6.0 * t.sqrt() + margin;
        match (self.proposal, self.policy) {
            (Proposal::Controlled, Policy::ValleyTrap { x_star, c }) if self.tilt.abs() < c => {
                (x_star - self.start).abs() + 40.0 / (c - self.tilt.abs()) + diffusive
            }
            (Proposal::Controlled, p) => (self.tilt.abs() + p.max_speed()) * t + diffusive,
            (Proposal::Girsanov, _) => self.tilt.abs() * t + diffusive,
        }
    }

    pub fn check_window(&self, t: f64, margin: f64) -> Result<f64> {
        let need = self.required_half_width(t, margin);
        let w = self.field.window();
        let (need_lo, need_hi) = (self.start - need, self.start + need);
        if need_lo < w.lo || need_hi > w.hi {
            return Err(Error::WindowTooSmall {
                lo: w.lo,
                hi: w.hi,
                need_lo,
                need_hi,
            });
        }
        Ok(need)
    }
}

/// Per-batch output: log estimates of `E[exp(Y_t + g(X_t))]` at each
/// checkpoint.
#[derive(Debug, Clone)]
pub(crate) struct BatchRun {
    pub log_means: Vec<f64>,
    pub min_ess_fraction: f64,
    pub resamples: usize,
}

/// Normalized effective sample size of log weights.
pub(crate) fn ess_fraction(logw: &[f64]) -> f64 {
    let mut s1 = LogSumExp::default();
    let mut s2 = LogSumExp::default();
    for &w in logw {
        s1.push(w);
        s2.push(2.0 * w);
    }
    (2.0 * s1.value() - s2.value()).exp() / logw.len() as f64
}

/// Systematic resampling of `xs` according to `logw`; returns the log of
/// the mean weight that is factored out.
pub(crate) fn resample(xs: &mut Vec<f64>, logw: &mut [f64], rng: &mut Xoshiro256PlusPlus) -> f64 {
    let n = xs.len();
    let mut acc = LogSumExp::default();
    for &w in logw.iter() {
        acc.push(w);
    }
    let total = acc.value();
    let step = 1.0 / n as f64;
    let mut u = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    for (i, &w) in logw.iter().enumerate() {
        cum += (w - total).exp();
        while u < cum && out.len() < n {
            out.push(xs[i]);
            u += step;
        }
    }
    while out.len() < n {
        out.push(xs[n - 1]);
    }
    *xs = out;
    logw.iter_mut().for_each(|w| *w = 0.0);
    total - (n as f64).ln()
}

fn log_mean_with<G>(xs: &[f64], logw: &[f64], terminal: &G) -> Result<f64>
where
    G: Fn(f64) -> Result<f64>,
{
    let mut acc = LogSumExp::default();
    for (&x, &w) in xs.iter().zip(logw) {
        acc.push(w + terminal(x)?);
    }
    Ok(acc.value() - (xs.len() as f64).ln())
}

/// Propagate `n` particles for `steps` Euler steps and record the log mean
/// weight (times `exp(terminal(x))`) after each step index in `checkpoints`
/// (which must be sorted). A checkpoint `0` records the initial value.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_batch<G>(
    target: &Target<'_>,
    opts: &McOptions,
    n: usize,
    steps: usize,
    checkpoints: &[usize],
    terminal: &G,
    required: f64,
    rng: &mut Xoshiro256PlusPlus,
) -> Result<BatchRun>
where
    G: Fn(f64) -> Result<f64>,
{
    let dt = opts.dt;
    let sdt = dt.sqrt();
    let window = target.field.window();
    let (lo, hi) = (window.lo, window.hi);
    let ess_every = ((opts.ess_interval / dt).round() as usize).max(1);
    let mut xs = vec![target.start; n];
    let mut logw = vec![0.0; n];
    let mut log_z = 0.0;
    let mut min_ess: f64 = 1.0;
    let mut resamples = 0;
    let mut log_means = Vec::with_capacity(checkpoints.len());
    let mut next_cp = 0;
    while next_cp < checkpoints.len() && checkpoints[next_cp] == 0 {
        log_means.push(log_mean_with(&xs, &logw, terminal)?);
        next_cp += 1;
    }
    let bv = target.beta * dt;
    let interp = target.field.fast_interp();
    let mut zs = vec![0.0; n];
    for k in 1..=steps {
        zs.iter_mut().for_each(|z| *z = rng.sample(StandardNormal));
        for ((x, w), &z) in xs.iter_mut().zip(logw.iter_mut()).zip(&zs) {
            let alpha = target.policy.drift(*x);
            let q = target.proposal_drift(alpha);
            let dx = q * dt + sdt * z;
            let x1 = *x + dx;
            if !(x1 > lo && x1 < hi) {
                if x1.is_nan() {
                    return Err(Error::NonFinite(format!(
                        "particle position at t = {}",
                        k as f64 * dt
                    )));
                }
                return Err(Error::WindowExit {
                    t: k as f64 * dt,
                    x: x1,
                    required,
                });
            }
            let mid = *x + 0.5 * dx;
            let v = match interp.value(mid) {
                Some(v) => v,
                None => return Err(target.field.value(mid).unwrap_err()),
            };
            let d = alpha - q;
            *w += bv * v + target.theta * dx + d * sdt * z - 0.5 * d * d * dt;
            *x = x1;
        }
        let at_cp = next_cp < checkpoints.len() && checkpoints[next_cp] == k;
        if k % ess_every == 0 || at_cp || k == steps {
            let ess = ess_fraction(&logw);
            if !ess.is_finite() {
                return Err(Error::NonFinite(format!(
                    "weights at t = {}",
                    k as f64 * dt
                )));
            }
            min_ess = min_ess.min(ess);
            if at_cp {
                while next_cp < checkpoints.len() && checkpoints[next_cp] == k {
                    log_means.push(log_z + log_mean_with(&xs, &logw, terminal)?);
                    next_cp += 1;
                }
            }
            if ess < opts.resample_threshold && k < steps {
                log_z += resample(&mut xs, &mut logw, rng);
                resamples += 1;
            }
        }
    }
    Ok(BatchRun {
        log_means,
        min_ess_fraction: min_ess,
        resamples,
    })
}
