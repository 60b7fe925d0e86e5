//! Command-line parsing and dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use nchj::corrector::{free_energy_curve, solve_riccati, tilted_free_energy};
use nchj::effective::{build, check_bound_structure};
use nchj::environment::{audit_assumptions, find_features};
use nchj::montecarlo::{
    confinement_rate, estimate_functional, local_time_rate, martingale_audit, mc_hitting_laplace,
    select_valley, LocalTimeEstimator, Policy, RateEstimate,
};
use nchj::pde::{
    effective_table_range, homogenization_sweep, solve_effective, solve_viscous, HBarTable,
    InitialData, PdeOptions,
};

use crate::config::ExperimentConfig;
use crate::error::{config_err, CliResult};
use crate::experiments::{describe, run_crosscheck, run_figure1, run_property_suite};
use crate::output::{csv, OutDir};

#[derive(Debug, Parser)]
#[command(
    name = "nchj",
    version,
    about = "Effective Hamiltonians for viscous Hamilton-Jacobi equations in random potentials"
)]
pub struct Cli {
    /// Experiment configuration (TOML).
    #[arg(short, long, global = true, env = "NCHJ_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory; `NCHJ_OUT_DIR` takes precedence.
    #[arg(short, long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate and inspect the potential.
    #[command(subcommand)]
    Env(EnvCommand),
    /// Tilted free energy on the theta grid.
    FreeEnergy,
    /// Effective Hamiltonian on the theta grid with its bound checks.
    Effective,
    /// Monte Carlo estimators.
    #[command(subcommand)]
    Mc(McCommand),
    /// Finite-difference solvers.
    #[command(subcommand)]
    Pde(PdeCommand),
    /// Hbar curves for the configured (beta, c) pairs.
    Figure1,
    /// Property checks.
    Properties,
    /// Corrector, Monte Carlo and PDE values side by side.
    Crosscheck,
    /// Print the run manifest.
    Describe,
}

#[derive(Debug, Subcommand)]
pub enum EnvCommand {
    /// Build the field and save it.
    Gen,
    /// Report range and feature assumptions.
    Audit {
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1")]
        h: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
        y: Vec<f64>,
    },
    /// List valleys and hills.
    Features {
        #[arg(long, default_value_t = 0.1)]
        h: f64,
        #[arg(long, default_value_t = 1.0)]
        min_length: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PolicyArg {
    Zero,
    ConstLeft,
    ConstRight,
    ValleyTrap,
}

#[derive(Debug, Subcommand)]
pub enum McCommand {
    /// `(1/t) log E[exp(...)]` under one policy.
    Estimate {
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long, value_enum, default_value = "zero")]
        policy: PolicyArg,
        /// Trap point; defaults to the selected valley center.
        #[arg(long, allow_hyphen_values = true)]
        x_star: Option<f64>,
    },
    /// Check the corrector martingales along simulated paths.
    AuditMartingale {
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
        times: Vec<f64>,
    },
    /// Estimators with closed-form answers.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, default_value_t = 1.0)]
    pub hitting_a: f64,
    #[arg(long, default_value_t = 0.0)]
    pub hitting_x: f64,
    #[arg(long, default_value_t = 1.0)]
    pub hitting_y: f64,
    #[arg(long, default_value_t = 1.0)]
    pub confinement_y: f64,
    #[arg(long, default_value_t = 20.0)]
    pub confinement_t: f64,
    #[arg(long, default_value_t = 8.0)]
    pub local_time_y: f64,
    #[arg(long, default_value_t = 1.0)]
    pub local_time_c: f64,
    #[arg(long, default_value_t = 100.0)]
    pub local_time_t: f64,
}

#[derive(Debug, Subcommand)]
pub enum PdeCommand {
    /// One solve with linear or kink data.
    Solve {
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, allow_hyphen_values = true, conflicts_with = "kink")]
        theta: Option<f64>,
        /// Left and right slopes.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        kink: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        snapshots: Vec<f64>,
        /// Solve the effective equation instead of the oscillatory one.
        #[arg(long)]
        effective: bool,
    },
    /// Linear data over the theta and epsilon lists.
    Sweep,
}

/// Whether every check of a run passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Passed,
    ChecksFailed,
}

impl Outcome {
    fn from_passed(ok: bool) -> Self {
        if ok {
            Outcome::Passed
        } else {
            Outcome::ChecksFailed
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Passed => 0,
            Outcome::ChecksFailed => 1,
        }
    }
}

/// A run's outcome and the files it wrote.
#[derive(Debug)]
pub struct RunSummary {
    pub outcome: Outcome,
    pub files: Vec<PathBuf>,
}

pub fn run(cli: &Cli) -> CliResult<RunSummary> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| config_err("no configuration given (use --config or NCHJ_CONFIG)"))?;
    let cfg = ExperimentConfig::load(path)?;
    run_with(&cfg, &cli.command, cli.out.as_deref())
}

pub fn run_with(
    cfg: &ExperimentConfig,
    command: &Command,
    out: Option<&Path>,
) -> CliResult<RunSummary> {
    let mut dir = OutDir::create(&cfg.output_dir(out))?;
    let manifest = describe(cfg);
    dir.write("manifest.json", &serde_json::to_string_pretty(&manifest)?)?;
    let outcome = dispatch(cfg, command, &mut dir)?;
    Ok(RunSummary {
        outcome,
        files: dir.written().to_vec(),
    })
}

fn rate_json(name: &str, r: &RateEstimate) -> serde_json::Value {
    let passed = (r.value - r.oracle).abs() <= 3.0 * r.stderr + 0.05 * r.oracle.abs();
    json!({"name": name, "passed": passed, "estimate": r})
}

fn dispatch(cfg: &ExperimentConfig, command: &Command, dir: &mut OutDir) -> CliResult<Outcome> {
    let (beta, c) = (cfg.model.beta, cfg.model.c);
    let grid = cfg.theta_grid.values();
    match command {
        Command::Env(EnvCommand::Gen) => {
            let field = cfg.environment.build()?;
            field.save(dir.path().join("environment.json"))?;
            dir.write(
                "environment.csv",
                &csv(
                    &["x", "V"],
                    (0..field.len())
                        .map(|i| vec![field.node(i).to_string(), field.values[i].to_string()]),
                ),
            )?;
            Ok(Outcome::Passed)
        }
        Command::Env(EnvCommand::Audit { h, y }) => {
            let field = cfg.environment.build()?;
            let report = audit_assumptions(&field, h, y);
            dir.write_jsonl("audit.jsonl", &[&report])?;
            Ok(Outcome::from_passed(report.range_ok && report.features_ok))
        }
        Command::Env(EnvCommand::Features { h, min_length }) => {
            let field = cfg.environment.build()?;
            let features = find_features(&field, *h, *min_length);
            dir.write(
                "features.csv",
                &csv(
                    &["kind", "a", "b", "level", "length"],
                    features.iter().map(|f| {
                        vec![
                            serde_json::to_value(f.kind)
                                .ok()
                                .and_then(|v| v.as_str().map(String::from))
                                .unwrap_or_default(),
                            f.a.to_string(),
                            f.b.to_string(),
                            f.level.to_string(),
                            f.length().to_string(),
                        ]
                    }),
                ),
            )?;
            Ok(Outcome::Passed)
        }
        Command::FreeEnergy => {
            let field = cfg.environment.build()?;
            let curve = free_energy_curve(&field, beta, &grid, None, &cfg.free_energy_options())?;
            dir.write(
                "free_energy.csv",
                &csv(
                    &["theta", "Lambda", "flat", "residual", "iterations"],
                    curve.results.iter().map(|r| {
                        vec![
                            r.theta.to_string(),
                            r.lambda.to_string(),
                            r.flat.to_string(),
                            r.residual.to_string(),
                            r.iterations.to_string(),
                        ]
                    }),
                ),
            )?;
            dir.write_jsonl("free_energy.jsonl", &curve.results)?;
            Ok(Outcome::from_passed(
                curve.results.iter().all(|r| r.monotone),
            ))
        }
        Command::Effective => {
            let field = cfg.environment.build()?;
            let h = build(&field, beta, c, &grid, &cfg.effective_options())?;
            let report = check_bound_structure(&h, &grid, cfg.tolerances.tol_lambda)?;
            dir.write(
                "effective.csv",
                &csv(
                    &[
                        "theta",
                        "H_bar",
                        "constant_policy_bound",
                        "lower_bound",
                        "free_motion",
                        "Lambda",
                    ],
                    report.rows.iter().map(|r| {
                        vec![
                            r.theta.to_string(),
                            r.h_bar.to_string(),
                            r.constant_policy_bound.to_string(),
                            r.lower_bound.to_string(),
                            r.free_motion.to_string(),
                            r.lambda_theta.to_string(),
                        ]
                    }),
                ),
            )?;
            let summary = json!({
                "beta": beta,
                "c": c,
                "regime": h.regime,
                "plateau_half_width": h.plateau_half_width(),
                "theta_bar": h.theta_bar,
                "violations": report.violations,
                "convex_on_grid": report.convex_on_grid,
                "convexity_matches_regime": report.convexity_matches_regime,
                "passed": report.passed,
            });
            dir.write_jsonl("effective.jsonl", &[summary])?;
            Ok(Outcome::from_passed(report.passed))
        }
        Command::Mc(McCommand::Estimate {
            theta,
            policy,
            x_star,
        }) => {
            let field = cfg.environment.build()?;
            let policy = match policy {
                PolicyArg::Zero => Policy::Zero,
                PolicyArg::ConstLeft => Policy::ConstLeft { c },
                PolicyArg::ConstRight => Policy::ConstRight { c },
                PolicyArg::ValleyTrap => {
                    let x_star = match x_star {
                        Some(x) => *x,
                        None => select_valley(&field, cfg.mc.valley)
                            .ok_or_else(|| {
                                config_err("no valley matches mc.valley; pass --x-star")
                            })?
                            .valley
                            .center(),
                    };
                    Policy::ValleyTrap { x_star, c }
                }
            };
            let tilt = cfg.mc.tilt.unwrap_or(*theta);
            let r = estimate_functional(
                &field,
                policy,
                beta,
                *theta,
                cfg.mc.t,
                tilt,
                &cfg.mc_options_for("mc.estimate", 0),
            )?;
            dir.write_jsonl("mc_estimate.jsonl", &[&r])?;
            Ok(Outcome::Passed)
        }
        Command::Mc(McCommand::AuditMartingale { theta, times }) => {
            let field = cfg.environment.build()?;
            let fo = cfg.free_energy_options();
            let ro = cfg.riccati_options();
            let cw = cfg.corrector_window(&field)?;
            let lam = tilted_free_energy(&field, beta, *theta, None, &fo)?.lambda;
            let profile = solve_riccati(&field, beta, *theta, lam, cw, None, &ro)?;
            let controlled = if c > 0.0 && *theta != c {
                let l = tilted_free_energy(&field, beta, theta - c, None, &fo)?.lambda;
                Some(solve_riccati(&field, beta, theta - c, l, cw, None, &ro)?)
            } else {
                None
            };
            let x_star = select_valley(&field, cfg.mc.valley).map(|s| s.valley.center());
            let report = martingale_audit(
                &field,
                &profile,
                c,
                controlled.as_ref(),
                x_star.filter(|_| c > 0.0),
                times,
                &cfg.mc_options_for("mc.audit", 0),
            )?;
            dir.write(
                "martingale.csv",
                &csv(
                    &[
                        "label",
                        "t",
                        "mean",
                        "stderr",
                        "log_mean",
                        "log_stderr",
                        "passed",
                    ],
                    report.rows.iter().map(|r| {
                        vec![
                            r.label.clone(),
                            r.t.to_string(),
                            r.mean.to_string(),
                            r.stderr.to_string(),
                            r.log_mean.to_string(),
                            r.log_stderr.to_string(),
                            r.passed.to_string(),
                        ]
                    }),
                ),
            )?;
            dir.write_jsonl("martingale.jsonl", &[&report])?;
            Ok(Outcome::from_passed(report.passed))
        }
        Command::Mc(McCommand::Calibrate(a)) => {
            let o = |i| cfg.mc_options_for("mc.calibrate", i);
            let hit = mc_hitting_laplace(a.hitting_a, a.hitting_x, a.hitting_y, &o(0))?;
            let conf = confinement_rate(a.confinement_y, a.confinement_t, &o(1))?;
            let lt = local_time_rate(
                a.local_time_y,
                a.local_time_c,
                a.local_time_t,
                LocalTimeEstimator::Bridge,
                &o(2),
            )?;
            let lines = vec![
                json!({"name": "hitting_laplace", "passed": hit.within(3.0), "estimate": hit}),
                rate_json("confinement", &conf),
                rate_json("local_time", &lt),
            ];
            let ok = lines.iter().all(|l| l["passed"] == json!(true));
            dir.write_jsonl("calibrate.jsonl", &lines)?;
            Ok(Outcome::from_passed(ok))
        }
        Command::Pde(PdeCommand::Solve {
            epsilon,
            theta,
            kink,
            snapshots,
            effective,
        }) => {
            let initial = match (theta, kink.as_deref()) {
                (Some(theta), None) => InitialData::Linear { theta: *theta },
                (None, Some(&[left, right])) => InitialData::Kink { left, right },
                _ => return Err(config_err("pde solve needs --theta or --kink LEFT,RIGHT")),
            };
            let t = cfg.pde.t_final;
            let r = if *effective {
                let field = cfg.environment.build()?;
                let h = build(&field, beta, c, &[], &cfg.effective_options())?;
                let (left, right) = initial.far_slopes();
                let mut extra = vec![left, right, c, -c];
                extra.extend(h.theta_bar.iter().flat_map(|t| [t.value, -t.value]));
                let half = effective_table_range(&initial).max(c + 1.0);
                let table = HBarTable::build(&h, half, 201, &extra)?;
                solve_effective(
                    &table,
                    initial,
                    t,
                    cfg.pde.dx_effective,
                    cfg.pde.cfl_safety,
                    cfg.pde.r_probe,
                    snapshots,
                )?
            } else {
                let epsilon = epsilon.ok_or_else(|| config_err("pde solve needs --epsilon"))?;
                let opts = PdeOptions {
                    snapshot_times: snapshots.clone(),
                    ..cfg.pde_options()
                };
                solve_viscous(&cfg.pde_field()?, beta, c, epsilon, initial, t, &opts)?
            };
            for (i, s) in r.snapshots.iter().enumerate() {
                dir.write(&format!("snapshot_{i}.txt"), &s.to_columns())?;
            }
            let summary = json!({
                "epsilon": r.epsilon,
                "initial": r.initial,
                "dx": r.dx,
                "dt": r.dt,
                "steps": r.steps,
                "t_final": r.t_final,
                "probe": r.probe,
                "cfl_ratio": r.cfl_ratio,
                "max_gradient": r.max_gradient,
                "probe_lipschitz": r.probe_lipschitz,
                "snapshot_times": r.snapshots.iter().map(|s| s.t).collect::<Vec<_>>(),
            });
            dir.write_jsonl("pde_solve.jsonl", &[summary])?;
            Ok(Outcome::Passed)
        }
        Command::Pde(PdeCommand::Sweep) => {
            let field = cfg.environment.build()?;
            let h = build(&field, beta, c, &cfg.pde.thetas, &cfg.effective_options())?;
            let report = homogenization_sweep(
                &cfg.pde_field()?,
                &h,
                &cfg.pde.thetas,
                &cfg.pde.epsilons,
                cfg.pde.t_final,
                &cfg.pde_options(),
            )?;
            dir.write("sweep.csv", &report.to_csv())?;
            dir.write_jsonl("sweep.jsonl", &report.summaries)?;
            let ok = report
                .summaries
                .iter()
                .all(|s| s.monotone && s.final_relative_gap <= 0.1);
            Ok(Outcome::from_passed(ok))
        }
        Command::Figure1 => {
            let f = run_figure1(cfg)?;
            dir.write("figure1.csv", &f.curves_csv())?;
            dir.write("lambda.csv", &f.lambda_csv())?;
            dir.write_jsonl("figure1.jsonl", &f.pairs)?;
            Ok(Outcome::Passed)
        }
        Command::Properties => {
            let checks = run_property_suite(cfg)?;
            dir.write_jsonl("properties.jsonl", &checks)?;
            Ok(Outcome::from_passed(checks.iter().all(|c| c.passed)))
        }
        Command::Crosscheck => {
            let r = run_crosscheck(cfg)?;
            dir.write("crosscheck.csv", &r.to_csv())?;
            dir.write_jsonl("crosscheck.jsonl", &r.rows)?;
            Ok(Outcome::from_passed(r.passed))
        }
        Command::Describe => {
            println!("{}", serde_json::to_string_pretty(&describe(cfg))?);
            Ok(Outcome::Passed)
        }
    }
}
