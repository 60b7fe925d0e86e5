use serde::{Deserialize, Serialize};

use super::engine::{McOptions, Proposal, Target};
use super::estimate::pooled_run;
use super::policy::Policy;
use crate::corrector::CorrectorProfile;
use crate::environment::PotentialField;
use crate::error::{invalid, Result};

/// Whether a row is expected to have mean exactly one or at least one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MartingaleKind {
    Martingale,
    Submartingale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleRow {
    pub label: String,
    pub policy: Policy,
    pub kind: MartingaleKind,
    pub t: f64,
    /// Sample mean of `M_t` and its standard error (delta method from the
    /// log-domain batch spread).
    pub mean: f64,
    pub stderr: f64,
    pub log_mean: f64,
    pub log_stderr: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub beta: f64,
    pub theta: f64,
    pub c: f64,
    pub lambda_o: f64,
    pub rows: Vec<MartingaleRow>,
    pub passed: bool,
}

/// Number of standard errors allowed in each row.
const SIGMAS: f64 = 3.0;

fn rows_for(
    label: &str,
    kind: MartingaleKind,
    target: &Target<'_>,
    profile: &CorrectorProfile,
    rate: f64,
    t_list: &[f64],
    opts: &McOptions,
) -> Result<Vec<MartingaleRow>> {
    let f0 = profile.f_at(target.start)?;
    let terminal = |x: f64| Ok(profile.f_at(x)? - f0);
    let pooled = pooled_run(target, opts, t_list, &terminal)?;
    Ok(pooled
        .checkpoints
        .into_iter()
        .map(|cp| {
            let log_mean = cp.log_mean - rate * cp.t;
            let mean = log_mean.exp();
            let stderr = mean * cp.stderr;
            let passed = match kind {
                MartingaleKind::Martingale => (mean - 1.0).abs() <= SIGMAS * stderr,
                MartingaleKind::Submartingale => mean >= 1.0 - SIGMAS * stderr,
            };
            MartingaleRow {
                label: label.to_string(),
                policy: target.policy,
                kind,
                t: cp.t,
                mean,
                stderr,
                log_mean,
                log_stderr: cp.stderr,
                passed,
            }
        })
        .collect())
}

/// Empirical check of the exponential (sub)martingales built from correctors.
///
/// * Uncontrolled: `M_t = exp(beta int V + theta X_t + F(X_t) - lambda_o t)`
///   with `F` from `profile` (solved at `lambda_o` for `theta`) has mean one.
/// * Controlled (when `controlled` is given): with `F` solved for
///   `theta - c` at `Lambda(theta - c)`,
///   `M^a_t = exp(beta int V + theta X^a_t + F(X^a_t) - (Lambda(theta - c) - c^2/2) t)`
///   is a submartingale for every admissible policy and a martingale under
///   `ConstLeft`. The trapping policy is included when `x_star` is given.
///
/// Paths start at `0` and are sampled with tilt `theta`.
#[allow(clippy::too_many_arguments)]
pub fn martingale_audit(
    field: &PotentialField,
    profile: &CorrectorProfile,
    c: f64,
    controlled: Option<&CorrectorProfile>,
    x_star: Option<f64>,
    t_list: &[f64],
    opts: &McOptions,
) -> Result<MartingaleReport> {
    let (beta, theta) = (profile.beta, profile.theta);
    if t_list.is_empty() {
        return Err(invalid("t_list is empty"));
    }
    let base = Target {
        field,
        beta,
        theta,
        policy: Policy::Zero,
        tilt: theta,
        proposal: Proposal::Controlled,
        start: 0.0,
    };
    let mut rows = rows_for(
        "uncontrolled",
        MartingaleKind::Martingale,
        &base,
        profile,
        profile.lambda,
        t_list,
        opts,
    )?;
    if let Some(cp) = controlled {
        if cp.beta != beta || (cp.theta - (theta - c)).abs() > 1e-12 {
            return Err(invalid(
                "controlled profile must be solved for theta - c with the same beta",
            ));
        }
        let rate = cp.lambda - 0.5 * c * c;
        let mut policies = vec![
            (
                "const-left",
                MartingaleKind::Martingale,
                Policy::ConstLeft { c },
            ),
            (
                "const-right",
                MartingaleKind::Submartingale,
                Policy::ConstRight { c },
            ),
        ];
        if let Some(x) = x_star {
            policies.push((
                "valley-trap",
                MartingaleKind::Submartingale,
                Policy::ValleyTrap { x_star: x, c },
            ));
        }
        for (i, (label, kind, policy)) in policies.into_iter().enumerate() {
            let o = McOptions {
                seed: crate::numerics::derive_seed(opts.seed, label, i as u64),
                ..*opts
            };
            let target = Target { policy, ..base };
            rows.extend(rows_for(label, kind, &target, cp, rate, t_list, &o)?);
        }
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(MartingaleReport {
        beta,
        theta,
        c,
        lambda_o: profile.lambda,
        rows,
        passed,
    })
}
