use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{run_batch, McOptions, Target};
use super::policy::Policy;
use crate::environment::{find_features, FeatureKind, PotentialField, TerrainFeature};
use crate::error::{invalid, Error, Result};
use crate::numerics::{batch_mean_stderr, batch_rng, logsumexp};

/// Monte Carlo estimate of `(1/t) log E[exp(beta int_0^t V(X^alpha) + theta X^alpha_t)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub t: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub value: f64,
    pub stderr: f64,
    pub batches: usize,
    pub tilt_used: f64,
    pub policy: Policy,
    pub beta: f64,
    pub theta: f64,
    pub start: f64,
    pub seed: u64,
    pub min_ess_fraction: f64,
    pub resamples: usize,
    /// Per-batch values of the same estimator.
    pub batch_values: Vec<f64>,
}

impl PathEstimate {
    /// Whether `target` lies within `k` standard errors plus `slack`.
    pub fn agrees_with(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr + slack
    }
}

/// Log-domain aggregate of one checkpoint across batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeanEstimate {
    pub t: f64,
    /// `log` of the pooled sample mean.
    pub log_mean: f64,
    /// Standard error of `log_mean` from the spread of batch log means.
    pub stderr: f64,
    pub batch_log_means: Vec<f64>,
}

/// Standard errors below this fraction of the magnitude are reported at the
/// floor so that the invariant `stderr > 0` holds for degenerate inputs.
const STDERR_FLOOR: f64 = 1e-12;

fn floor_stderr(se: f64, value: f64) -> f64 {
    se.max(STDERR_FLOOR * value.abs().max(1.0))
}

pub(crate) struct Pooled {
    pub checkpoints: Vec<LogMeanEstimate>,
    pub min_ess_fraction: f64,
    pub resamples: usize,
}

/// Run all batches of `target` and pool the checkpoint estimates.
pub(crate) fn pooled_run<G>(
    target: &Target<'_>,
    opts: &McOptions,
    times: &[f64],
    terminal: &G,
) -> Result<Pooled>
where
    G: Fn(f64) -> Result<f64> + Sync,
{
    opts.validate()?;
    if target.tilt.abs() > opts.max_tilt {
        return Err(invalid(format!(
            "|tilt| = {} exceeds the configured bound {}",
            target.tilt.abs(),
            opts.max_tilt
        )));
    }
    let checkpoints: Vec<usize> = times
        .iter()
        .map(|&t| opts.steps(t))
        .collect::<Result<_>>()?;
    if checkpoints.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("checkpoint times must be sorted"));
    }
    let steps = checkpoints.last().copied().unwrap_or(0);
    let t_end = steps as f64 * opts.dt;
    let required = target.check_window(t_end, opts.window_margin)?;
    let n = opts.per_batch();
    let runs: Vec<_> = (0..opts.batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = batch_rng(opts.seed, b as u64);
            run_batch(
                target,
                opts,
                n,
                steps,
                &checkpoints,
                terminal,
                required,
                &mut rng,
            )
        })
        .collect::<Result<_>>()?;
    let min_ess = runs.iter().map(|r| r.min_ess_fraction).fold(1.0, f64::min);
    if min_ess < opts.min_ess_fraction {
        return Err(Error::UnreliableEstimate {
            ess: min_ess * n as f64,
            min_ess: opts.min_ess_fraction * n as f64,
        });
    }
    let b = opts.batches as f64;
    let checkpoints = times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let batch: Vec<f64> = runs.iter().map(|r| r.log_means[j]).collect();
            let log_mean = logsumexp(&batch) - b.ln();
            let (_, se) = batch_mean_stderr(&batch);
            LogMeanEstimate {
                t,
                log_mean,
                stderr: floor_stderr(se, log_mean),
                batch_log_means: batch,
            }
        })
        .collect();
    Ok(Pooled {
        checkpoints,
        min_ess_fraction: min_ess,
        resamples: runs.iter().map(|r| r.resamples).sum(),
    })
}

/// Estimate the exponential functional for paths started at `0`, simulated
/// under the tilted proposal and reweighted.
pub fn estimate_functional(
    field: &PotentialField,
    policy: Policy,
    beta: f64,
    theta: f64,
    t: f64,
    tilt: f64,
    opts: &McOptions,
) -> Result<PathEstimate> {
    estimate_functional_from(field, policy, beta, theta, t, tilt, 0.0, opts)
}

/// As [`estimate_functional`] with paths started at `start`. The limit rate
/// does not depend on the start point.
#[allow(clippy::too_many_arguments)]
pub fn estimate_functional_from(
    field: &PotentialField,
    policy: Policy,
    beta: f64,
    theta: f64,
    t: f64,
    tilt: f64,
    start: f64,
    opts: &McOptions,
) -> Result<PathEstimate> {
    if !(t > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    if !(beta >= 0.0) || !theta.is_finite() || !tilt.is_finite() {
        return Err(invalid("beta must be non-negative and theta, tilt finite"));
    }
    let target = Target {
        field,
        beta,
        theta,
        policy,
        tilt,
        proposal: opts.proposal,
        start,
    };
    let pooled = pooled_run(&target, opts, &[t], &|_| Ok(0.0))?;
    let cp = &pooled.checkpoints[0];
    let batch_values: Vec<f64> = cp.batch_log_means.iter().map(|v| v / t).collect();
    let value = cp.log_mean / t;
    if !value.is_finite() {
        return Err(Error::NonFinite("path estimate".into()));
    }
    let (_, se) = batch_mean_stderr(&batch_values);
    Ok(PathEstimate {
        t,
        n_paths: opts.per_batch() * opts.batches,
        dt: opts.dt,
        value,
        stderr: floor_stderr(se, value),
        batches: opts.batches,
        tilt_used: tilt,
        policy,
        beta,
        theta,
        start,
        seed: opts.seed,
        min_ess_fraction: pooled.min_ess_fraction,
        resamples: pooled.resamples,
        batch_values,
    })
}

/// How the valley of the trapping policy is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValleySelect {
    /// Valley level: `V <= h` on the valley.
    pub h: f64,
    /// Half-length: valleys shorter than `2 y` are ignored.
    pub y: f64,
    /// When positive, only valleys bordered (within `max_gap`) by a hill of at
    /// least this length qualify.
    pub hill_length: f64,
    /// Hill level: `V >= hill_level` on the hill.
    pub hill_level: f64,
    pub max_gap: f64,
    /// Among qualifying valleys the one closest to this point is used.
    pub near: f64,
}

impl Default for ValleySelect {
    fn default() -> Self {
        Self {
            h: 0.1,
            y: 0.5,
            hill_length: 0.0,
            hill_level: 0.99,
            max_gap: 2.0,
            near: 0.0,
        }
    }
}

/// A trapping valley and, when requested, the hill next to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapSite {
    pub valley: TerrainFeature,
    pub hill: Option<TerrainFeature>,
}

fn gap(a: &TerrainFeature, b: &TerrainFeature) -> f64 {
    (b.a - a.b).max(a.a - b.b).max(0.0)
}

/// Find the trap site selected by `select`.
pub fn select_valley(field: &PotentialField, select: ValleySelect) -> Option<TrapSite> {
    let valleys = find_features(field, select.h, 2.0 * select.y)
        .into_iter()
        .filter(|f| f.kind == FeatureKind::Valley);
    let hills: Vec<TerrainFeature> = if select.hill_length > 0.0 {
        find_features(field, select.hill_level, select.hill_length)
            .into_iter()
            .filter(|f| f.kind == FeatureKind::Hill)
            .collect()
    } else {
        Vec::new()
    };
    valleys
        .filter_map(|v| {
            if select.hill_length <= 0.0 {
                return Some(TrapSite {
                    valley: v,
                    hill: None,
                });
            }
            hills
                .iter()
                .filter(|h| gap(&v, h) <= select.max_gap)
                .max_by(|a, b| a.length().total_cmp(&b.length()))
                .map(|h| TrapSite {
                    valley: v,
                    hill: Some(*h),
                })
        })
        .min_by(|a, b| {
            (a.valley.center() - select.near)
                .abs()
                .total_cmp(&(b.valley.center() - select.near).abs())
        })
}

/// Upper-bound witnesses for the effective Hamiltonian at one `theta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpperBoundReport {
    pub beta: f64,
    pub c: f64,
    pub theta: f64,
    pub const_left: PathEstimate,
    pub const_right: PathEstimate,
    pub site: Option<TrapSite>,
    pub valley_trap: Option<PathEstimate>,
    /// Set when no valley matched the selection; the report then omits the
    /// trapping bound.
    pub missing_valley: bool,
    pub best_policy: String,
    pub best_value: f64,
    pub best_stderr: f64,
}

/// Estimate the functional under `ConstLeft`, `ConstRight` and (when a
/// valley is found) `ValleyTrap`, each with tilt `theta`.
///
/// The limit does not depend on where paths start, but at finite `t` the
/// transient does. Trapped paths start where the limit is realized: on the
/// bordering hill when `beta >= c^2/2` and a hill was selected, at the valley
/// center otherwise.
pub fn policy_upper_bounds(
    field: &PotentialField,
    beta: f64,
    c: f64,
    theta: f64,
    t: f64,
    valley: Option<ValleySelect>,
    opts: &McOptions,
) -> Result<UpperBoundReport> {
    if !(c >= 0.0) {
        return Err(invalid("c must be non-negative"));
    }
    let run = |policy: Policy, start: f64| {
        let o = McOptions {
            seed: crate::numerics::derive_seed(opts.seed, policy.name(), 0),
            ..*opts
        };
        estimate_functional_from(field, policy, beta, theta, t, theta, start, &o)
    };
    let const_left = run(Policy::ConstLeft { c }, 0.0)?;
    let const_right = run(Policy::ConstRight { c }, 0.0)?;
    let site = valley.and_then(|s| select_valley(field, s));
    let valley_trap = match site {
        Some(s) => {
            let x_star = s.valley.center();
            let start = match s.hill {
                Some(h) if beta >= 0.5 * c * c => h.center(),
                _ => x_star,
            };
            Some(run(Policy::ValleyTrap { x_star, c }, start)?)
        }
        None => None,
    };
    let mut best = (
        const_left.policy.name(),
        const_left.value,
        const_left.stderr,
    );
    for e in std::iter::once(&const_right).chain(valley_trap.as_ref()) {
        if e.value < best.1 {
            best = (e.policy.name(), e.value, e.stderr);
        }
    }
    Ok(UpperBoundReport {
        beta,
        c,
        theta,
        missing_valley: valley.is_some() && site.is_none(),
        site,
        best_policy: best.0.to_string(),
        best_value: best.1,
        best_stderr: best.2,
        const_left,
        const_right,
        valley_trap,
    })
}

/// Raw trajectories under a policy without weighting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathBatch {
    pub t: f64,
    pub dt: f64,
    /// Snapshot times.
    pub times: Vec<f64>,
    /// `positions[j][i]`: path `i` at `times[j]`.
    pub positions: Vec<Vec<f64>>,
    /// `int_0^t V(X_s) ds` by the midpoint rule.
    pub integral_v: Vec<f64>,
    /// Local time at `0` by occupation of `(-delta, delta)` over `2 delta`,
    /// `delta = sqrt(dt)`.
    pub local_time: Vec<f64>,
}

/// Euler–Maruyama simulation of `dX = alpha(X) dt + dW` from `0`, with
/// `snapshots` evenly spaced recorded times ending at `t`.
pub fn simulate_paths(
    field: &PotentialField,
    policy: Policy,
    t: f64,
    snapshots: usize,
    opts: &McOptions,
) -> Result<PathBatch> {
    opts.validate()?;
    let steps = opts.steps(t)?;
    let snapshots = snapshots.max(1);
    let target = Target {
        field,
        beta: 0.0,
        theta: 0.0,
        policy,
        tilt: 0.0,
        proposal: super::engine::Proposal::Controlled,
        start: 0.0,
    };
    let required = target.check_window(t, opts.window_margin)?;
    let record_at: Vec<usize> = (1..=snapshots).map(|j| (j * steps) / snapshots).collect();
    let n = opts.per_batch();
    let dt = opts.dt;
    let sdt = dt.sqrt();
    let delta = sdt;
    let window = field.window();
    type Chunk = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>);
    let chunks: Vec<Chunk> = (0..opts.batches)
        .into_par_iter()
        .map(|b| -> Result<Chunk> {
            let mut rng = batch_rng(opts.seed, b as u64);
            let mut xs = vec![0.0; n];
            let mut iv = vec![0.0; n];
            let mut lt = vec![0.0; n];
            let mut snaps = Vec::with_capacity(snapshots);
            let mut next = 0;
            for k in 1..=steps {
                for i in 0..n {
                    let x = xs[i];
                    let z: f64 = rng.sample(StandardNormal);
                    let dx = policy.drift(x) * dt + sdt * z;
                    let x1 = x + dx;
                    if !window.contains(x1) {
                        return Err(Error::WindowExit {
                            t: k as f64 * dt,
                            x: x1,
                            required,
                        });
                    }
                    iv[i] += field.value(x + 0.5 * dx)? * dt;
                    if x1.abs() < delta {
                        lt[i] += dt / (2.0 * delta);
                    }
                    xs[i] = x1;
                }
                while next < record_at.len() && record_at[next] == k {
                    snaps.push(xs.clone());
                    next += 1;
                }
            }
            while snaps.len() < snapshots {
                snaps.push(xs.clone());
            }
            Ok((snaps, iv, lt))
        })
        .collect::<Result<_>>()?;
    let mut positions = vec![Vec::with_capacity(n * opts.batches); snapshots];
    let mut integral_v = Vec::with_capacity(n * opts.batches);
    let mut local_time = Vec::with_capacity(n * opts.batches);
    for (snaps, iv, lt) in chunks {
        for (dst, src) in positions.iter_mut().zip(snaps) {
            dst.extend(src);
        }
        integral_v.extend(iv);
        local_time.extend(lt);
    }
    Ok(PathBatch {
        t,
        dt,
        times: record_at.iter().map(|&k| k as f64 * dt).collect(),
        positions,
        integral_v,
        local_time,
    })
}
