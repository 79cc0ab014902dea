//! Run configuration: one flat JSON object.
//!
//! `n_k`, `n_t` and `dt` are required; everything else has a default.
//! Unknown keys are rejected. The only environment input is
//! `KBE_WORKERS`, which overrides `workers`.

use std::path::{Path, PathBuf};

use kbe_core::collision::{LimitMode, QuadratureKind};
use kbe_core::engine::{IndexMode, ReduceMode, Schedule};
use kbe_core::model::{HfMode, ModelConfig, UProtocol};
use kbe_core::propagator::StepConfig;
use kbe_core::state::DEFAULT_MEMORY_BUDGET;
use kbe_core::C64;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const WORKERS_ENV: &str = "KBE_WORKERS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UValue {
    Constant(f64),
    Tabulated(Vec<f64>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OnOff {
    #[default]
    Off,
    On,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    #[default]
    Trapezoid,
    Simpson,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Limit {
    #[default]
    AsPrinted,
    Langreth,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Index {
    Lookup,
    #[default]
    OnTheFly,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Reduce {
    Sequential,
    #[default]
    Tree,
}

impl From<Index> for IndexMode {
    fn from(i: Index) -> Self {
        match i {
            Index::Lookup => IndexMode::Lookup,
            Index::OnTheFly => IndexMode::OnTheFly,
        }
    }
}

impl From<Reduce> for ReduceMode {
    fn from(r: Reduce) -> Self {
        match r {
            Reduce::Sequential => ReduceMode::Sequential,
            Reduce::Tree => ReduceMode::Tree,
        }
    }
}

fn d_gap() -> f64 {
    2.0
}
fn d_hopping() -> f64 {
    0.5
}
fn d_u() -> UValue {
    UValue::Constant(0.0)
}
fn d_center() -> f64 {
    0.5
}
fn d_dipole() -> [f64; 2] {
    [1.0, 0.0]
}
fn d_eps() -> f64 {
    1e-9
}
fn d_max_iter() -> usize {
    6
}
fn d_one() -> usize {
    1
}
fn d_block() -> usize {
    128
}
fn d_true() -> bool {
    true
}
fn d_budget() -> u64 {
    DEFAULT_MEMORY_BUDGET
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_k: usize,
    pub n_t: usize,
    pub dt: f64,

    #[serde(default = "d_gap")]
    pub band_gap: f64,
    #[serde(default = "d_hopping")]
    pub hopping: f64,
    /// Constant, or one value per time point.
    #[serde(default = "d_u")]
    pub u: UValue,
    #[serde(default)]
    pub pulse_intensity: f64,
    #[serde(default = "d_center")]
    pub pulse_center: f64,
    /// `[re, im]`.
    #[serde(default = "d_dipole")]
    pub dipole: [f64; 2],
    #[serde(default)]
    pub hf_mode: OnOff,
    #[serde(default)]
    pub valence_band: Option<Vec<f64>>,
    #[serde(default)]
    pub conduction_band: Option<Vec<f64>>,

    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default = "d_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub quadrature: Quadrature,
    #[serde(default)]
    pub limit_mode: Limit,

    #[serde(default = "d_one")]
    pub n_shards: usize,
    #[serde(default = "d_one")]
    pub workers: usize,
    #[serde(default = "d_block")]
    pub block_size: usize,
    #[serde(default = "d_true")]
    pub batch: bool,
    #[serde(default = "d_true")]
    pub fusion: bool,
    #[serde(default)]
    pub index_mode: Index,
    #[serde(default)]
    pub reduce_mode: Reduce,
    #[serde(default = "d_budget")]
    pub memory_budget_bytes: u64,

    #[serde(default)]
    pub seed: u64,

    #[serde(default)]
    pub trajectory: Option<PathBuf>,
    #[serde(default)]
    pub observables: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<PathBuf>,
}

impl RunConfig {
    /// Minimal config with defaults for everything optional.
    pub fn new(n_k: usize, n_t: usize, dt: f64) -> Self {
        let json = format!(r#"{{"n_k": {n_k}, "n_t": {n_t}, "dt": {dt:e}}}"#);
        serde_json::from_str(&json).expect("minimal config parses")
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies the worker-count override, if set.
    pub fn apply_env(&mut self) -> CliResult<()> {
        if let Some(w) = workers_override()? {
            self.workers = w;
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            band_gap: self.band_gap,
            hopping: self.hopping,
            u: match &self.u {
                UValue::Constant(u) => UProtocol::Constant(*u),
                UValue::Tabulated(v) => UProtocol::Tabulated(v.clone()),
            },
            pulse_intensity: self.pulse_intensity,
            pulse_center: self.pulse_center,
            dipole: C64::new(self.dipole[0], self.dipole[1]),
            hf_mode: match self.hf_mode {
                OnOff::Off => HfMode::Off,
                OnOff::On => HfMode::On,
            },
            valence_band: self.valence_band.clone(),
            conduction_band: self.conduction_band.clone(),
        }
    }

    pub fn step_config(&self) -> StepConfig {
        StepConfig {
            eps: self.eps,
            max_iter: self.max_iter,
            quadrature: match self.quadrature {
                Quadrature::Trapezoid => QuadratureKind::Trapezoid,
                Quadrature::Simpson => QuadratureKind::Simpson,
            },
            limit_mode: match self.limit_mode {
                Limit::AsPrinted => LimitMode::AsPrinted,
                Limit::Langreth => LimitMode::Langreth,
            },
            memory_budget: self.memory_budget_bytes,
            ..StepConfig::new(self.dt, self.n_t)
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            n_shards: self.n_shards,
            workers: self.workers,
            block_size: self.block_size,
            batch_enabled: self.batch,
            fusion_enabled: self.fusion,
            index_mode: self.index_mode.into(),
            reduce_mode: self.reduce_mode.into(),
        }
    }

    /// Checks every key before anything is allocated.
    pub fn validate(&self) -> CliResult<()> {
        kbe_core::kgrid::KGrid::new(self.n_k)?;
        self.step_config().validate()?;
        self.model_config().validate(self.n_k, self.n_t)?;
        self.schedule().validate(self.n_k)?;
        if !self.dipole.iter().all(|x| x.is_finite()) {
            return Err(CliError::Config("invalid configuration `dipole`: must be finite".into()));
        }
        Ok(())
    }
}

/// Worker count from `KBE_WORKERS`, if set.
pub fn workers_override() -> CliResult<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w >= 1)
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("{WORKERS_ENV}={v} is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_json(r#"{"n_k": 8, "n_t": 4, "dt": 0.05}"#).unwrap();
        assert_eq!(c.block_size, 128);
        assert_eq!(c.u, UValue::Constant(0.0));
        assert_eq!(c.limit_mode, Limit::AsPrinted);
        assert!(c.batch && c.fusion);
        c.validate().unwrap();
        assert_eq!(RunConfig::new(8, 4, 0.05), c);
    }

    #[test]
    fn missing_key_is_named() {
        let e = RunConfig::from_json(r#"{"n_k": 8, "n_t": 4}"#).unwrap_err();
        assert!(e.to_string().contains("`dt`"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::from_json(r#"{"n_k": 8, "n_t": 4, "dt": 0.1, "n_kk": 3}"#).unwrap_err();
        assert!(e.to_string().contains("n_kk"), "{e}");
    }

    #[test]
    fn invalid_values_name_their_key() {
        for (json, key) in [
            (r#"{"n_k": 7, "n_t": 4, "dt": 0.1}"#, "n_k"),
            (r#"{"n_k": 8, "n_t": 4, "dt": -0.1}"#, "dt"),
            (r#"{"n_k": 8, "n_t": 4, "dt": 0.1, "n_shards": 3}"#, "n_shards"),
            (r#"{"n_k": 8, "n_t": 4, "dt": 0.1, "u": [1, 2]}"#, "u"),
            (r#"{"n_k": 8, "n_t": 4, "dt": 0.1, "hopping": -1}"#, "hopping"),
            (r#"{"n_k": 8, "n_t": 4, "dt": 0.1, "block_size": 0}"#, "block_size"),
        ] {
            let e = RunConfig::from_json(json).and_then(|c| c.validate()).unwrap_err();
            assert!(e.to_string().contains(&format!("`{key}`")), "{e}");
        }
    }

    #[test]
    fn enums_parse_kebab_case() {
        let c = RunConfig::from_json(
            r#"{"n_k": 8, "n_t": 4, "dt": 0.1, "limit_mode": "langreth", "index_mode": "lookup",
                "reduce_mode": "sequential", "quadrature": "simpson", "hf_mode": "on", "u": [0,1,2,3,4]}"#,
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.schedule().index_mode, IndexMode::Lookup);
        assert_eq!(c.step_config().limit_mode, LimitMode::Langreth);
        assert_eq!(c.model_config().u.at_index(3), 3.0);
    }
}
