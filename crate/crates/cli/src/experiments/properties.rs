use rand::Rng;
use serde::{Deserialize, Serialize};

use nchj::corrector::{
    free_energy_curve, neg_log_v, solve_riccati, tilted_free_energy, RiccatiOptions,
};
use nchj::effective::{build, check_bound_structure};
use nchj::montecarlo::{estimate_functional, McOptions, Policy};
use nchj::numerics::{derive_seed, stream_rng};
use nchj::pde::{explicit_step, gradient_apriori, scheme_is_monotone, solve_viscous, InitialData};

use crate::config::ExperimentConfig;
use crate::error::{config_err, CliResult};

/// Outcome of one property check. `slack` is `limit - value`; a check with
/// negative slack fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
    pub slack: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `value <= limit`.
    pub fn at_most(name: &str, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: value <= limit,
            value,
            limit,
            slack: limit - value,
            detail: detail.into(),
        }
    }

    /// Passes when `value < limit`.
    pub fn below(name: &str, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self {
            passed: value < limit,
            ..Self::at_most(name, value, limit, detail)
        }
    }

    pub fn flag(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        let value = if ok { 0.0 } else { 1.0 };
        Self::at_most(name, value, 0.0, detail)
    }
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

/// Run every property check for the configured environment and model.
pub fn run_property_suite(cfg: &ExperimentConfig) -> CliResult<Vec<Check>> {
    let field = cfg.environment.build()?;
    let (beta, c) = (cfg.model.beta, cfg.model.c);
    let tol = cfg.tolerances;
    let grid = cfg.theta_grid.values();
    let fo = cfg.free_energy_options();
    let sup_v = field.max_value();
    let mut out = Vec::new();

    out.push(Check::at_most(
        "environment.range",
        max_of([-field.min_value(), field.max_value() - 1.0]),
        0.0,
        format!("V in [{}, {}]", field.min_value(), field.max_value()),
    ));

    // Free energy.
    let curve = free_energy_curve(&field, beta, &grid, None, &fo)?;
    let lam = curve.values();
    let n = lam.len();
    let mut even = 0.0f64;
    for &t in &grid {
        let (a, b) = (
            tilted_free_energy(&field, beta, t, None, &fo)?.lambda,
            tilted_free_energy(&field, beta, -t, None, &fo)?.lambda,
        );
        even = even.max((a - b).abs());
    }
    out.push(Check::at_most(
        "free_energy.evenness",
        even,
        0.0,
        "max |Lambda(theta) - Lambda(-theta)|",
    ));
    let bound_gap = max_of(grid.iter().zip(&lam).map(|(&t, &l)| {
        let lower = (beta * sup_v).max(0.5 * t * t);
        let upper = beta * sup_v + 0.5 * t * t;
        (lower - l).max(l - upper)
    }));
    out.push(Check::at_most(
        "free_energy.bounds",
        bound_gap,
        tol.tol_lambda,
        "max{beta sup V, theta^2/2} <= Lambda <= beta sup V + theta^2/2",
    ));
    out.push(Check::at_most(
        "free_energy.convexity",
        max_of((1..n.saturating_sub(1)).map(|i| lam[i] - 0.5 * (lam[i - 1] + lam[i + 1]))),
        tol.tol_cvx,
        "largest midpoint excess on the theta grid",
    ));
    out.push(Check::flag(
        "free_energy.flat_piece",
        matches!(curve.flat_interval, Some((a, b)) if a <= 0.0 && b >= 0.0 && a == -b),
        format!("flat interval {:?}", curve.flat_interval),
    ));
    let probes: Vec<f64> = grid
        .iter()
        .copied()
        .filter(|t| *t >= 0.0)
        .step_by(grid.len() / 8 + 1)
        .collect();
    let mut mono = 0.0f64;
    for &t in &probes {
        let mut prev = f64::NEG_INFINITY;
        for b in [0.5 * beta, beta, 2.0 * beta] {
            let l = tilted_free_energy(&field, b, t, None, &fo)?.lambda;
            mono = mono.max(prev - l);
            prev = l;
        }
    }
    out.push(Check::at_most(
        "free_energy.beta_monotone",
        mono,
        tol.tol_root,
        "largest decrease of Lambda over beta/2, beta, 2 beta",
    ));

    // Correctors, solved with a loose band so the excess is measured rather
    // than rejected.
    let loose = RiccatiOptions {
        tol_u: 1.0,
        ..cfg.riccati_options()
    };
    let (mut excess, mut residual, mut anchor) = (0.0f64, 0.0f64, 0.0f64);
    let cw = cfg.corrector_window(&field)?;
    let top = grid.iter().copied().fold(0.0, f64::max);
    for theta in [0.5 * top, top, -top] {
        let l = tilted_free_energy(&field, beta, theta, None, &fo)?.lambda;
        let p = solve_riccati(&field, beta, theta, l, cw, None, &loose)?;
        excess = excess.max(p.band_excess);
        residual = residual.max(p.ode_residual);
        anchor = anchor.max(p.f_at(p.anchor)?.abs());
    }
    out.push(Check::below(
        "corrector.gradient_band",
        excess,
        tol.tol_u,
        "largest |u| outside [sqrt(2(Lambda - beta)), sqrt(2 Lambda)]",
    ));
    out.push(Check::at_most(
        "corrector.ode_residual",
        residual,
        tol.tol_ode,
        "max cell-problem residual",
    ));
    out.push(Check::at_most(
        "corrector.anchor",
        anchor,
        0.0,
        "|F| at the anchor",
    ));

    // Additivity of -log v over random triples inside the window.
    let ro = cfg.riccati_options();
    let (lo, hi) = (cw.lo + 1.0, cw.hi - 1.0);
    if !(hi > lo) {
        return Err(config_err(
            "environment window too small for the additivity check",
        ));
    }
    let mid = 0.5 * (lo + hi);
    let span = (0.25 * (hi - lo)).min(20.0);
    let mut rng = stream_rng(derive_seed(cfg.seed, "properties.triples", 0), 0);
    let (mut add, mut sandwich) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let lambda = beta * sup_v.max(1.0) + rng.random_range(0.2..2.0);
        let mut p = [0; 3].map(|_| rng.random_range(mid - span..mid + span));
        p.sort_by(f64::total_cmp);
        if rng.random_bool(0.5) {
            p.reverse();
        }
        let [x, y, z] = p;
        let (xz, xy, yz) = (
            neg_log_v(&field, beta, lambda, x, z, &ro)?,
            neg_log_v(&field, beta, lambda, x, y, &ro)?,
            neg_log_v(&field, beta, lambda, y, z, &ro)?,
        );
        add = add.max((xz - xy - yz).abs());
        let d = (z - x).abs();
        let (lo, hi) = (
            (2.0 * (lambda - beta * sup_v)).sqrt() * d,
            (2.0 * lambda).sqrt() * d,
        );
        sandwich = sandwich.max((lo - xz).max(xz - hi));
    }
    out.push(Check::at_most(
        "corrector.additivity",
        add,
        tol.tol_lambda,
        "max |L(x,z) - L(x,y) - L(y,z)| over 20 ordered random triples",
    ));
    out.push(Check::at_most(
        "corrector.sandwich",
        sandwich,
        tol.tol_lambda,
        "sqrt(2(lambda - beta sup V))|x - z| <= -log v <= sqrt(2 lambda)|x - z|",
    ));

    // Effective Hamiltonian.
    let h = build(&field, beta, c, &grid, &cfg.effective_options())?;
    let report = check_bound_structure(&h, &grid, tol.tol_lambda)?;
    out.push(Check::flag(
        "effective.bound_structure",
        report.violations.is_empty(),
        report.violations.first().cloned().unwrap_or_default(),
    ));
    out.push(Check::flag(
        "effective.convexity_matches_regime",
        report.convexity_matches_regime,
        format!(
            "regime {}, convex on grid: {}",
            report.regime, report.convex_on_grid
        ),
    ));
    let hv = h.evaluate_grid(&grid)?;
    let mut even = 0.0f64;
    for &t in &grid {
        even = even.max((h.h_bar(t)? - h.h_bar(-t)?).abs());
    }
    out.push(Check::at_most(
        "effective.evenness",
        even,
        0.0,
        "max |H(theta) - H(-theta)|",
    ));
    if c > 0.0 {
        let expected = (beta * sup_v - 0.5 * c * c).max(0.0);
        out.push(Check::at_most(
            "effective.plateau",
            (h.h_bar(0.0)? - expected).abs(),
            1e-12,
            format!("H(0) against (beta sup V - c^2/2)^+ = {expected}"),
        ));
    }

    // Closed forms on constant potentials.
    if let Some(v0) = cfg.environment.constant_level() {
        let b = beta * v0;
        out.push(Check::at_most(
            "closed_form.lambda",
            max_of(
                grid.iter()
                    .zip(&lam)
                    .map(|(&t, &l)| (l - (b + 0.5 * t * t)).abs()),
            ),
            1e-8,
            "Lambda = beta v0 + theta^2/2",
        ));
        let closed = |t: f64| {
            let a = t.abs();
            if b >= 0.5 * c * c {
                if a <= c {
                    b - 0.5 * c * c
                } else {
                    b + 0.5 * (a - c).powi(2) - 0.5 * c * c
                }
            } else {
                let tb = c - (c * c - 2.0 * b).sqrt();
                if a <= tb {
                    0.0
                } else {
                    b + 0.5 * (a - c).powi(2) - 0.5 * c * c
                }
            }
        };
        out.push(Check::at_most(
            "closed_form.h_bar",
            max_of(grid.iter().zip(&hv).map(|(&t, &v)| (v - closed(t)).abs())),
            1e-8,
            "H against its closed form",
        ));
        let pf = cfg.pde_field()?;
        let theta = 1.0;
        let r = solve_viscous(
            &pf,
            beta,
            c,
            cfg.pde.epsilons[0],
            InitialData::Linear { theta },
            cfg.pde.t_final,
            &cfg.pde_options(),
        )?;
        let exact = (0.5 * theta * theta - c * theta + b) * cfg.pde.t_final;
        out.push(Check::at_most(
            "closed_form.pde_linear",
            (r.probe - exact).abs(),
            1e-10,
            "viscous probe with linear data against theta x + H t",
        ));
    }

    // Monotonicity of the explicit scheme at every configured epsilon.
    let po = cfg.pde_options();
    let slope = cfg.pde.thetas.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let sigma = gradient_apriori(slope, beta, c) + c;
    let monotone = cfg.pde.epsilons.iter().all(|&eps| {
        let dx = eps / po.dx_per_epsilon;
        scheme_is_monotone(eps, sigma, dx, explicit_step(eps, sigma, dx, po.cfl_safety))
    });
    out.push(Check::flag(
        "pde.monotone_scheme",
        monotone,
        format!("flux bound {sigma}"),
    ));

    // Monte Carlo reruns with the same seed agree bit for bit.
    let mc = McOptions {
        n_paths: 1024,
        batches: 16,
        ..cfg.mc_options_for("properties", 0)
    };
    let run = || estimate_functional(&field, Policy::Zero, beta, 1.0, 1.0, 1.0, &mc);
    let (a, b) = (run()?, run()?);
    out.push(Check::flag(
        "montecarlo.determinism",
        a.value.to_bits() == b.value.to_bits() && a.batch_values == b.batch_values,
        format!("value {}", a.value),
    ));
    Ok(out)
}
