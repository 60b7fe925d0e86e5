//! Experiment configuration, read from TOML. Unknown keys are rejected at
//! every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nchj::corrector::{FreeEnergyOptions, RiccatiOptions};
use nchj::effective::EffectiveOptions;
use nchj::environment::{FieldSpec, Generator, KernelShape, KernelSpec, PotentialField, Window};
use nchj::montecarlo::{McOptions, Proposal, ValleySelect};
use nchj::numerics::{derive_seed, linspace};
use nchj::pde::PdeOptions;

use crate::error::{config_err, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    /// Root of every derived seed except the environment's own.
    #[serde(default)]
    pub seed: u64,
    pub environment: EnvironmentConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub theta_grid: ThetaGrid,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub pde: PdeConfig,
    #[serde(default)]
    pub figure1: Figure1Config,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorConfig {
    PoissonMollified {
        rate: f64,
        kernel: KernelShape,
        radius: f64,
    },
    WienerMollified {
        scale: f64,
        kernel: KernelShape,
        radius: f64,
    },
    Periodic {
        period: f64,
    },
    Constant {
        level: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub seed: u64,
    pub lo: f64,
    pub hi: f64,
    pub grid_step: f64,
}

impl EnvironmentConfig {
    pub fn spec(&self) -> FieldSpec {
        let kernel = |shape, radius| KernelSpec {
            shape,
            radius,
            mass: 1.0,
        };
        let generator = match self.generator {
            GeneratorConfig::PoissonMollified {
                rate,
                kernel: s,
                radius,
            } => Generator::PoissonMollified {
                rate,
                kernel: kernel(s, radius),
            },
            GeneratorConfig::WienerMollified {
                scale,
                kernel: s,
                radius,
            } => Generator::WienerMollified {
                scale,
                kernel: kernel(s, radius),
            },
            GeneratorConfig::Periodic { period } => Generator::Periodic { period },
            GeneratorConfig::Constant { level } => Generator::Constant { level },
        };
        FieldSpec {
            generator,
            seed: self.seed,
            window: Window::new(self.lo, self.hi),
            grid_step: self.grid_step,
        }
    }

    pub fn build(&self) -> CliResult<PotentialField> {
        Ok(self.spec().build()?)
    }

    /// The same field at a coarser grid step, for the PDE solver.
    pub fn with_grid_step(&self, grid_step: f64) -> Self {
        Self { grid_step, ..*self }
    }

    pub fn constant_level(&self) -> Option<f64> {
        match self.generator {
            GeneratorConfig::Constant { level } => Some(level),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub beta: f64,
    #[serde(default)]
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThetaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for ThetaGrid {
    fn default() -> Self {
        Self {
            min: -3.0,
            max: 3.0,
            points: 61,
        }
    }
}

impl ThetaGrid {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.min, self.max, self.points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub tol_lambda: f64,
    pub tol_root: f64,
    /// Gradient-band slack; `0` is accepted and always fails the band check.
    pub tol_u: f64,
    pub tol_ode: f64,
    pub tol_cvx: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_lambda: 1e-4,
            tol_root: 1e-8,
            tol_u: 1e-6,
            tol_ode: 1e-2,
            tol_cvx: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub t: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub batches: usize,
    /// Fixed tilt; the default uses `theta`.
    pub tilt: Option<f64>,
    pub proposal: Proposal,
    pub resample_threshold: f64,
    pub min_ess_fraction: f64,
    pub window_margin: f64,
    /// Theta values at which policies are simulated.
    pub witness_thetas: Vec<f64>,
    pub valley: ValleySelect,
}

impl Default for McConfig {
    fn default() -> Self {
        let o = McOptions::default();
        Self {
            t: 20.0,
            dt: o.dt,
            n_paths: o.n_paths,
            batches: o.batches,
            tilt: None,
            proposal: o.proposal,
            resample_threshold: o.resample_threshold,
            min_ess_fraction: o.min_ess_fraction,
            window_margin: o.window_margin,
            witness_thetas: vec![0.0],
            valley: ValleySelect::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeConfig {
    pub epsilons: Vec<f64>,
    pub thetas: Vec<f64>,
    pub t_final: f64,
    pub dx_per_epsilon: f64,
    pub cfl_safety: f64,
    pub r_probe: f64,
    pub margin: f64,
    pub gradient_bound: f64,
    /// Grid step of the field handed to the PDE solver; `None` keeps the
    /// environment's own.
    pub grid_step: Option<f64>,
    /// Step of the effective-equation solver.
    pub dx_effective: f64,
}

impl Default for PdeConfig {
    fn default() -> Self {
        let o = PdeOptions::default();
        Self {
            epsilons: vec![0.25, 0.125, 0.0625],
            thetas: vec![0.0, 1.0, 2.0],
            t_final: 1.0,
            dx_per_epsilon: o.dx_per_epsilon,
            cfl_safety: o.cfl_safety,
            r_probe: o.r_probe,
            margin: o.margin,
            gradient_bound: o.gradient_bound,
            grid_step: Some(0.5),
            dx_effective: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure1Config {
    /// `(beta, c)` pairs drawn in the figure.
    pub pairs: Vec<[f64; 2]>,
    /// Simulate policy witnesses at `mc.witness_thetas`.
    pub witnesses: bool,
}

impl Default for Figure1Config {
    fn default() -> Self {
        Self {
            pairs: vec![[1.0, 1.0], [1.0, 2.0]],
            witnesses: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(config_err(m.to_string()));
        if self.format_version != FORMAT_VERSION {
            return Err(config_err(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let e = &self.environment;
        if !(e.hi > e.lo) || !(e.grid_step > 0.0) {
            return bad("environment window must be non-empty and grid_step positive");
        }
        if !(self.model.beta > 0.0) || !(self.model.c >= 0.0) {
            return bad("model.beta must be positive and model.c non-negative");
        }
        let g = &self.theta_grid;
        if g.points < 3 || !(g.max > g.min) {
            return bad("theta_grid needs max > min and at least 3 points");
        }
        let t = &self.tolerances;
        if !(t.tol_lambda > 0.0 && t.tol_root > 0.0 && t.tol_ode > 0.0 && t.tol_cvx > 0.0)
            || !(t.tol_u >= 0.0)
        {
            return bad("tolerances must be positive (tol_u may be 0)");
        }
        let m = &self.mc;
        if !(m.t > 0.0) || !(m.dt > 0.0) || m.n_paths == 0 || m.batches == 0 {
            return bad("mc budget must be positive");
        }
        let p = &self.pde;
        if p.epsilons.is_empty() || p.epsilons.iter().any(|e| !(*e > 0.0)) {
            return bad("pde.epsilons must be a non-empty list of positive values");
        }
        if !(p.t_final > 0.0) || !(p.dx_per_epsilon > 0.0) || !(p.dx_effective > 0.0) {
            return bad("pde budget must be positive");
        }
        if p.grid_step.is_some_and(|h| !(h > 0.0)) {
            return bad("pde.grid_step must be positive");
        }
        if self
            .figure1
            .pairs
            .iter()
            .any(|[b, c]| !(*b >= 0.0 && *c >= 0.0))
        {
            return bad("figure1.pairs must hold non-negative (beta, c)");
        }
        self.mc_options()
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        self.pde_options()
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        Ok(())
    }

    pub fn free_energy_options(&self) -> FreeEnergyOptions {
        FreeEnergyOptions {
            tol_root: self.tolerances.tol_root,
            riccati: self.riccati_options(),
            ..Default::default()
        }
    }

    /// Riccati settings used for solves (the band tolerance is applied by
    /// the property suite, not here).
    pub fn riccati_options(&self) -> RiccatiOptions {
        RiccatiOptions {
            tol_u: self.tolerances.tol_u.max(1e-6),
            ..Default::default()
        }
    }

    /// Window on which correctors are solved: the field window less the
    /// capped relaxation buffer at both ends, so either branch fits.
    pub fn corrector_window(&self, field: &PotentialField) -> CliResult<Window> {
        let a = self.free_energy_options().averaging_window(field);
        let w = Window::new(a.lo, field.window().hi - (a.lo - field.window().lo));
        if !(w.hi > w.lo) {
            return Err(config_err(format!(
                "environment window [{}, {}] leaves no room for corrector solves",
                field.window().lo,
                field.window().hi
            )));
        }
        Ok(w)
    }

    pub fn effective_options(&self) -> EffectiveOptions {
        EffectiveOptions {
            free_energy: self.free_energy_options(),
            tol_cvx: self.tolerances.tol_cvx,
            ..Default::default()
        }
    }

    /// MC options seeded from the root seed and a label.
    pub fn mc_options_for(&self, label: &str, index: u64) -> McOptions {
        McOptions {
            seed: derive_seed(self.seed, label, index),
            ..self.mc_options()
        }
    }

    pub fn mc_options(&self) -> McOptions {
        let m = &self.mc;
        McOptions {
            dt: m.dt,
            n_paths: m.n_paths,
            batches: m.batches,
            seed: derive_seed(self.seed, "mc", 0),
            proposal: m.proposal,
            resample_threshold: m.resample_threshold,
            min_ess_fraction: m.min_ess_fraction,
            window_margin: m.window_margin,
            ..Default::default()
        }
    }

    pub fn pde_options(&self) -> PdeOptions {
        let p = &self.pde;
        PdeOptions {
            dx_per_epsilon: p.dx_per_epsilon,
            cfl_safety: p.cfl_safety,
            r_probe: p.r_probe,
            margin: p.margin,
            gradient_bound: p.gradient_bound,
            ..Default::default()
        }
    }

    /// Field used by the PDE solver.
    pub fn pde_field(&self) -> CliResult<PotentialField> {
        match self.pde.grid_step {
            Some(h) => self.environment.with_grid_step(h).build(),
            _ => self.environment.build(),
        }
    }

    /// Output directory: `NCHJ_OUT_DIR`, then the command-line value, then
    /// the config, then `out`.
    pub fn output_dir(&self, cli: Option<&Path>) -> PathBuf {
        if let Some(dir) = std::env::var_os("NCHJ_OUT_DIR") {
            return PathBuf::from(dir);
        }
        cli.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}
