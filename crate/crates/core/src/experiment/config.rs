//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bonus::BonusMethod;
use crate::class::ClassSpec;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::experiment::scenario::{BehaviorSpec, ScenarioSpec};
use crate::pnlsvi::{PnlsviConfig, RadiusMultipliers, RadiusProfile};

pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_K_VALUES: [usize; 5] = [500, 1000, 2000, 4000, 8000];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    /// sweep CSV
    pub csv: Option<PathBuf>,
    /// JSON summary (sweep) or report (run, verify)
    pub json: Option<PathBuf>,
}

/// Settings of the `verify` suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    /// K for the pessimism, sandwich and decomposition frequencies
    pub k: usize,
    pub runs: usize,
    /// required fraction of clean runs
    pub min_fraction: f64,
    /// random instances per oracle check
    pub instances: usize,
    /// binary-search precision
    pub alpha: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self { k: 4000, runs: 100, min_fraction: 0.9, instances: 20, alpha: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: ScenarioSpec,
    pub behavior: BehaviorSpec,
    pub class: ClassSpec,
    pub k_values: Vec<usize>,
    pub seeds: Vec<u64>,
    pub delta: f64,
    pub lambda: f64,
    pub c_var: f64,
    pub profile: RadiusProfile,
    pub practical_scale: f64,
    pub multipliers: RadiusMultipliers,
    pub bonus: BonusMethod,
    pub variance_weights: bool,
    pub execution: Execution,
    /// K whose runs fit the bound constant; smallest K when absent
    pub bound_fit_k: Option<usize>,
    pub verify: VerifySettings,
    pub output: OutputPaths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let planner = PnlsviConfig::default();
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: ScenarioSpec::default(),
            behavior: BehaviorSpec::default(),
            class: ClassSpec::Tabular { net_levels: 9 },
            k_values: DEFAULT_K_VALUES.to_vec(),
            seeds: (0..20).collect(),
            delta: planner.delta,
            lambda: planner.lambda,
            c_var: planner.c_var,
            profile: planner.profile,
            practical_scale: planner.practical_scale,
            multipliers: planner.multipliers,
            bonus: planner.bonus,
            variance_weights: planner.variance_weights,
            execution: planner.execution,
            bound_fit_k: None,
            verify: VerifySettings::default(),
            output: OutputPaths::default(),
        }
    }
}

impl ExperimentConfig {
    /// Rate-experiment setup: uniform behavior, practical radii, 50 seeds per K.
    pub fn rate_preset() -> Self {
        Self {
            behavior: BehaviorSpec::Uniform,
            seeds: (0..50).collect(),
            profile: RadiusProfile::Practical,
            ..Self::default()
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("schema_version {} unsupported (expected {SCHEMA_VERSION})", self.schema_version)));
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(Error::Config("k_values must be non-empty and positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta {} outside (0, 1)", self.delta)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda {} must be positive", self.lambda)));
        }
        if !(self.c_var >= 0.0 && self.practical_scale > 0.0) {
            return Err(Error::Config("c_var must be non-negative and practical_scale positive".into()));
        }
        let m = self.multipliers;
        if [m.beta_bar_1, m.beta_bar_2, m.beta, m.variance_offset].iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::Config("radius multipliers must be non-negative".into()));
        }
        if let Some(k) = self.bound_fit_k {
            if !self.k_values.contains(&k) {
                return Err(Error::Config(format!("bound_fit_k {k} is not in k_values")));
            }
        }
        if self.verify.k == 0 || self.verify.runs == 0 || self.verify.instances == 0 || !(self.verify.alpha > 0.0) {
            return Err(Error::Config("verify settings must be positive".into()));
        }
        Ok(())
    }

    /// Shift the seed list so it starts at `base`, keeping its length and spacing.
    pub fn rebase_seeds(&mut self, base: u64) {
        if let Some(&first) = self.seeds.first() {
            self.seeds = self.seeds.iter().map(|s| s.wrapping_sub(first).wrapping_add(base)).collect();
        }
    }

    /// Planner settings; `epsilon` and `kappa` are filled per cell.
    pub fn planner(&self) -> PnlsviConfig {
        PnlsviConfig {
            delta: self.delta,
            lambda: self.lambda,
            c_var: self.c_var,
            profile: self.profile,
            practical_scale: self.practical_scale,
            multipliers: self.multipliers,
            bonus: self.bonus,
            variance_weights: self.variance_weights,
            execution: self.execution,
            ..PnlsviConfig::default()
        }
    }

    pub fn bound_fit_k(&self) -> usize {
        self.bound_fit_k.unwrap_or_else(|| *self.k_values.iter().min().expect("validated"))
    }
}
