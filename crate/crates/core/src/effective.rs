//! Effective Hamiltonian `H(theta)` of the controlled problem, assembled from
//! the tilted free energy `Lambda`:
//!
//! * weak control (`beta >= c^2/2`): `beta - c^2/2` for `|theta| < c`, else
//!   `Lambda(|theta| - c) - c^2/2`;
//! * strong control: `0` for `|theta| < theta_bar`, else
//!   `Lambda(|theta| - c) - c^2/2`, where `Lambda(theta_bar - c) = c^2/2`;
//! * `c = 0`: `H = Lambda`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrector::{tilted_free_energy, FreeEnergyOptions, FreeEnergyResult};
use crate::environment::{PotentialField, Window};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Weak,
    Strong,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Weak => "weak",
            Regime::Strong => "strong",
        })
    }
}

/// Weak iff `beta >= c^2/2`; the boundary counts as weak.
pub fn classify_regime(beta: f64, c: f64) -> Result<Regime> {
    if !(beta > 0.0) || !(c >= 0.0) || !beta.is_finite() || !c.is_finite() {
        return Err(invalid(format!(
            "need beta > 0 and c >= 0, got beta = {beta}, c = {c}"
        )));
    }
    Ok(if beta >= 0.5 * c * c {
        Regime::Weak
    } else {
        Regime::Strong
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EffectiveOptions {
    pub free_energy: FreeEnergyOptions,
    /// `eps_theta = eps_theta_rel * c` trims the `theta_bar` bracket.
    pub eps_theta_rel: f64,
    /// Bisection tolerance on `theta_bar`.
    pub tol_theta: f64,
    /// Accuracy attributed to computed `Lambda` values.
    pub tol_lambda: f64,
    /// Relative slack of the midpoint convexity test.
    pub tol_cvx: f64,
    /// Averaging window for every `Lambda` solve; `None` uses the default.
    pub window: Option<Window>,
}

impl Default for EffectiveOptions {
    fn default() -> Self {
        Self {
            free_energy: FreeEnergyOptions::default(),
            eps_theta_rel: 1e-9,
            tol_theta: 1e-10,
            tol_lambda: 1e-6,
            tol_cvx: 1e-6,
            window: None,
        }
    }
}

/// `theta_bar` with the range of `theta` values whose `Lambda(theta - c)`
/// is within `tol_lambda` of `c^2/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaBar {
    pub value: f64,
    pub interval: (f64, f64),
    pub iterations: usize,
}

/// Memoized `Lambda(|q|)` shared by evaluations on overlapping grids.
struct LambdaCache {
    field: Arc<PotentialField>,
    beta: f64,
    opts: EffectiveOptions,
    map: Mutex<HashMap<u64, FreeEnergyResult>>,
}

impl LambdaCache {
    fn get(&self, q: f64) -> Result<FreeEnergyResult> {
        let key = q.abs().to_bits();
        if let Some(r) = self.map.lock().expect("cache lock").get(&key) {
            return Ok(r.clone());
        }
        let r = tilted_free_energy(
            &self.field,
            self.beta,
            q.abs(),
            self.opts.window,
            &self.opts.free_energy,
        )?;
        self.map.lock().expect("cache lock").insert(key, r.clone());
        Ok(r)
    }
}

fn bisect_decreasing<F>(mut g: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, usize)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (g_lo, g_hi) = (g(lo)?, g(hi)?);
    if !(g_lo >= 0.0 && g_hi <= 0.0) {
        return Err(Error::NonBracketing {
            lo,
            hi,
            f_lo: g_lo,
            f_hi: g_hi,
        });
    }
    let mut it = 0;
    while hi - lo > tol && it < 200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        it += 1;
    }
    Ok((0.5 * (lo + hi), it))
}

fn theta_bar_with(cache: &LambdaCache, beta: f64, c: f64) -> Result<ThetaBar> {
    if classify_regime(beta, c)? == Regime::Weak {
        return Err(Error::WeakRegime { beta, c });
    }
    let opts = &cache.opts;
    let eps = opts.eps_theta_rel * c;
    let target = 0.5 * c * c;
    let (value, iterations) = bisect_decreasing(
        |t| Ok(cache.get(t - c)?.lambda - target),
        eps,
        c - eps,
        opts.tol_theta,
    )?;
    let tol = opts.tol_lambda;
    let left = bisect_decreasing(
        |t| Ok(cache.get(t - c)?.lambda - target - tol),
        eps,
        value,
        opts.tol_theta,
    )
    .map(|r| r.0)
    .unwrap_or(eps);
    let right = bisect_decreasing(
        |t| Ok(cache.get(t - c)?.lambda - target + tol),
        value,
        c - eps,
        opts.tol_theta,
    )
    .map(|r| r.0)
    .unwrap_or(c - eps);
    Ok(ThetaBar {
        value,
        interval: (left.min(value), right.max(value)),
        iterations,
    })
}

/// Solve `Lambda(theta - c) = c^2/2` for `theta` in `(0, c)` by bisection.
/// Only defined in the strong regime.
pub fn find_theta_bar(
    field: &PotentialField,
    beta: f64,
    c: f64,
    opts: &EffectiveOptions,
) -> Result<ThetaBar> {
    let cache = LambdaCache {
        field: Arc::new(field.clone()),
        beta,
        opts: *opts,
        map: Mutex::new(HashMap::new()),
    };
    theta_bar_with(&cache, beta, c)
}

/// Evaluator for the effective Hamiltonian on one environment.
pub struct EffectiveHamiltonian {
    pub beta: f64,
    pub c: f64,
    pub regime: Regime,
    pub theta_bar: Option<ThetaBar>,
    /// `beta - c^2/2` (weak) or `0` (strong).
    pub flat_value: f64,
    cache: LambdaCache,
}

impl std::fmt::Debug for EffectiveHamiltonian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EffectiveHamiltonian")
            .field("beta", &self.beta)
            .field("c", &self.c)
            .field("regime", &self.regime)
            .field("theta_bar", &self.theta_bar)
            .field("flat_value", &self.flat_value)
            .finish()
    }
}

/// Assemble the effective Hamiltonian; `theta_grid` values are evaluated
/// eagerly (in parallel) to warm the cache.
pub fn build(
    field: &PotentialField,
    beta: f64,
    c: f64,
    theta_grid: &[f64],
    opts: &EffectiveOptions,
) -> Result<EffectiveHamiltonian> {
    opts.free_energy.validate()?;
    let regime = classify_regime(beta, c)?;
    let cache = LambdaCache {
        field: Arc::new(field.clone()),
        beta,
        opts: *opts,
        map: Mutex::new(HashMap::new()),
    };
    let (theta_bar, flat_value) = if c == 0.0 {
        (None, f64::NAN)
    } else {
        match regime {
            Regime::Weak => (None, beta - 0.5 * c * c),
            Regime::Strong => (Some(theta_bar_with(&cache, beta, c)?), 0.0),
        }
    };
    let h = EffectiveHamiltonian {
        beta,
        c,
        regime,
        theta_bar,
        flat_value,
        cache,
    };
    h.evaluate_grid(theta_grid)?;
    Ok(h)
}

impl EffectiveHamiltonian {
    pub fn field(&self) -> &PotentialField {
        &self.cache.field
    }

    /// Cached `Lambda(q)`.
    pub fn lambda(&self, q: f64) -> Result<f64> {
        Ok(self.cache.get(q)?.lambda)
    }

    pub fn free_energy(&self, q: f64) -> Result<FreeEnergyResult> {
        self.cache.get(q)
    }

    pub fn options(&self) -> &EffectiveOptions {
        &self.cache.opts
    }

    /// Half-width of the central flat region: `c` (weak), `theta_bar`
    /// (strong) or 0 when `c = 0`.
    pub fn plateau_half_width(&self) -> f64 {
        if self.c == 0.0 {
            return 0.0;
        }
        match self.regime {
            Regime::Weak => self.c,
            Regime::Strong => self.theta_bar.map(|t| t.value).unwrap_or(0.0),
        }
    }

    /// `H(theta)`; even by construction.
    pub fn h_bar(&self, theta: f64) -> Result<f64> {
        let c = self.c;
        if c == 0.0 {
            return self.lambda(theta);
        }
        let a = theta.abs();
        if a < self.plateau_half_width() {
            return Ok(self.flat_value);
        }
        Ok(self.lambda(a - c)? - 0.5 * c * c)
    }

    pub fn evaluate_grid(&self, thetas: &[f64]) -> Result<Vec<f64>> {
        thetas.par_iter().map(|&t| self.h_bar(t)).collect()
    }

    /// `min{Lambda(theta - c), Lambda(theta + c)} - c^2/2`, the value under the
    /// better constant bang-bang policy.
    pub fn constant_policy_bound(&self, theta: f64) -> Result<f64> {
        let c = self.c;
        Ok(self.lambda(theta - c)?.min(self.lambda(theta + c)?) - 0.5 * c * c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub theta: f64,
    pub h_bar: f64,
    /// `min{Lambda(theta - c), Lambda(theta + c)} - c^2/2`.
    pub constant_policy_bound: f64,
    /// `beta - c^2/2`.
    pub lower_bound: f64,
    /// `theta^2/2 - c|theta|`.
    pub free_motion: f64,
    pub lambda_theta: f64,
    /// Whether the point fails the midpoint test with its neighbours.
    pub convexity_violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub beta: f64,
    pub c: f64,
    pub regime: Regime,
    pub theta_bar: Option<f64>,
    pub rows: Vec<BoundRow>,
    pub violations: Vec<String>,
    pub convex_on_grid: bool,
    /// Convexity holds on the grid exactly when the regime is weak.
    pub convexity_matches_regime: bool,
    pub passed: bool,
}

/// Check the upper/lower bound structure of `h` on a sorted grid. `tol`
/// is the absolute slack for the bound comparisons.
pub fn check_bound_structure(
    h: &EffectiveHamiltonian,
    theta_grid: &[f64],
    tol: f64,
) -> Result<BoundReport> {
    if theta_grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(invalid("theta grid must be strictly increasing"));
    }
    let (beta, c) = (h.beta, h.c);
    let hv = h.evaluate_grid(theta_grid)?;
    let mut rows = Vec::with_capacity(theta_grid.len());
    let mut violations = Vec::new();
    let edge = h.plateau_half_width();
    let tol_cvx = h.options().tol_cvx;
    let uniform = theta_grid.len() > 2 && {
        let d = theta_grid[1] - theta_grid[0];
        theta_grid
            .windows(2)
            .all(|p| ((p[1] - p[0]) - d).abs() <= 1e-9 * d.abs().max(1.0))
    };
    for (i, (&theta, &hb)) in theta_grid.iter().zip(&hv).enumerate() {
        let cub1 = h.constant_policy_bound(theta)?;
        let clb1 = beta - 0.5 * c * c;
        let free_motion = 0.5 * theta * theta - c * theta.abs();
        let lambda_theta = h.lambda(theta)?;
        if hb > cub1 + tol {
            violations.push(format!(
                "theta = {theta}: H = {hb} above constant-policy bound {cub1}"
            ));
        }
        if hb < clb1 - tol {
            violations.push(format!(
                "theta = {theta}: H = {hb} below beta - c^2/2 = {clb1}"
            ));
        }
        if theta.abs() <= c && hb > clb1.max(0.0) + tol {
            violations.push(format!("theta = {theta}: H = {hb} above (beta - c^2/2)^+"));
        }
        if c > 0.0 && theta.abs() >= edge && (hb - cub1).abs() > tol {
            violations.push(format!(
                "theta = {theta}: H = {hb} differs from constant-policy bound {cub1} outside the plateau"
            ));
        }
        if hb < free_motion - tol || hb > lambda_theta + tol {
            violations.push(format!(
                "theta = {theta}: H = {hb} outside [{free_motion}, {lambda_theta}]"
            ));
        }
        let convexity_violation = uniform
            && i > 0
            && i + 1 < theta_grid.len()
            && hv[i] > 0.5 * (hv[i - 1] + hv[i + 1]) + tol_cvx * (1.0 + hv[i].abs());
        rows.push(BoundRow {
            theta,
            h_bar: hb,
            constant_policy_bound: cub1,
            lower_bound: clb1,
            free_motion,
            lambda_theta,
            convexity_violation,
        });
    }
    let convex_on_grid = !rows.iter().any(|r| r.convexity_violation);
    let convexity_matches_regime = convex_on_grid == (h.regime == Regime::Weak);
    let passed = violations.is_empty() && convexity_matches_regime;
    Ok(BoundReport {
        beta,
        c,
        regime: h.regime,
        theta_bar: h.theta_bar.map(|t| t.value),
        rows,
        violations,
        convex_on_grid,
        convexity_matches_regime,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_boundaries() {
        assert_eq!(classify_regime(1.0, 1.0).unwrap(), Regime::Weak);
        assert_eq!(classify_regime(1.0, 2.0).unwrap(), Regime::Strong);
        assert_eq!(classify_regime(0.5, 1.0).unwrap(), Regime::Weak);
        assert!(classify_regime(0.0, 1.0).is_err());
    }
}
