use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use nchj::environment::FieldSpec;
use nchj::numerics::derive_seed;

use crate::config::{ExperimentConfig, FORMAT_VERSION};

/// Everything needed to regenerate a run: the resolved configuration, the
/// field generator settings and every derived seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub field: FieldSpec,
    pub pde_field: FieldSpec,
    pub seeds: BTreeMap<String, u64>,
}

pub fn describe(cfg: &ExperimentConfig) -> Manifest {
    let mut seeds = BTreeMap::new();
    seeds.insert("environment".to_string(), cfg.environment.seed);
    seeds.insert("mc".to_string(), derive_seed(cfg.seed, "mc", 0));
    seeds.insert(
        "properties".to_string(),
        derive_seed(cfg.seed, "properties", 0),
    );
    seeds.insert(
        "properties.triples".to_string(),
        derive_seed(cfg.seed, "properties.triples", 0),
    );
    for k in 0..cfg.pde.thetas.len() {
        seeds.insert(
            format!("crosscheck.{k}"),
            derive_seed(cfg.seed, "crosscheck", k as u64),
        );
    }
    for p in 0..cfg.figure1.pairs.len() {
        for k in 0..cfg.mc.witness_thetas.len() {
            let i = (p * 1000 + k) as u64;
            seeds.insert(format!("figure1.{i}"), derive_seed(cfg.seed, "figure1", i));
        }
    }
    let pde_env = match cfg.pde.grid_step {
        Some(h) => cfg.environment.with_grid_step(h),
        None => cfg.environment,
    };
    Manifest {
        format_version: FORMAT_VERSION,
        tool: "nchj".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        field: cfg.environment.spec(),
        pde_field: pde_env.spec(),
        seeds,
    }
}
