//! One TOML file holding every tunable; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{DeskProfile, ExperimentPlan, GridProfile, ModelSpec, Normalization, SplitConfig, Strategy, TrainingConfig};
use crate::labeling::LabelThresholds;
use crate::signal::{FilterSpec, PipelineConfig, SwnConfig};
use crate::synth::SynthConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub dataset: PathBuf,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { dataset: "data".into(), out: "results".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwnSettings {
    pub window_ms: u32,
    pub epsilon: f64,
}

impl Default for SwnSettings {
    fn default() -> Self {
        Self { window_ms: 1000, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSettings {
    pub strategies: Vec<Strategy>,
    pub normalizations: Vec<Normalization>,
    pub norm_windows_ms: Vec<u32>,
    pub feat_windows_ms: Vec<u32>,
    /// Empty means `[seed]`.
    pub seeds: Vec<u64>,
    pub subjects: Vec<usize>,
    pub emit_interval_ms: u32,
}

impl Default for GridSettings {
    fn default() -> Self {
        let p = ExperimentPlan::default();
        Self {
            strategies: p.strategies,
            normalizations: p.normalizations,
            norm_windows_ms: p.norm_windows_ms,
            feat_windows_ms: p.feat_windows_ms,
            seeds: Vec::new(),
            subjects: Vec::new(),
            emit_interval_ms: p.emit_interval_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub paths: Paths,
    pub labels: LabelThresholds,
    pub filter: FilterSpec,
    pub swn: SwnSettings,
    pub synth: SynthConfig,
    pub model: ModelSpec,
    pub training: TrainingConfig,
    pub splits: SplitConfig,
    pub grid: GridSettings,
    pub desk: DeskProfile,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            jobs: 0,
            paths: Paths::default(),
            labels: LabelThresholds::default(),
            filter: FilterSpec::default(),
            swn: SwnSettings::default(),
            synth: SynthConfig::default(),
            model: ModelSpec::default(),
            training: TrainingConfig::default(),
            splits: SplitConfig::default(),
            grid: GridSettings::default(),
            desk: DeskProfile::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.labels.validate()?;
        self.filter.validate(crate::signal::RAW_RATE_HZ)?;
        self.synth_config().validate()?;
        self.plan(GridProfile::Full).validate()
    }

    /// Overrides the root seed and collapses the seed list to it.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.grid.seeds = vec![seed];
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig { seed: self.seed, labels: self.labels, ..self.synth.clone() }
    }

    pub fn plan(&self, profile: GridProfile) -> ExperimentPlan {
        let g = &self.grid;
        let plan = ExperimentPlan {
            strategies: g.strategies.clone(),
            normalizations: g.normalizations.clone(),
            norm_windows_ms: g.norm_windows_ms.clone(),
            feat_windows_ms: g.feat_windows_ms.clone(),
            seeds: if g.seeds.is_empty() { vec![self.seed] } else { g.seeds.clone() },
            subjects: g.subjects.clone(),
            training: self.training.clone(),
            model: self.model.clone(),
            splits: self.splits.clone(),
            emit_interval_ms: g.emit_interval_ms,
            filter: self.filter,
            swn_epsilon: self.swn.epsilon,
        };
        match profile {
            GridProfile::Desk => plan.with_desk(&self.desk),
            GridProfile::Full => plan,
        }
    }

    /// Pipeline used by the self-checks.
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            filter: self.filter,
            swn: Some(SwnConfig { epsilon: self.swn.epsilon, ..SwnConfig::rolling(self.swn.window_ms) }),
            ..PipelineConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_values() {
        let c = Config::default();
        assert_eq!((c.labels.th_omega1, c.labels.th_omega2, c.labels.th_s, c.labels.w_t_ms), (3.0, 1.0, 5.0, 200.0));
        assert_eq!((c.filter.order, c.filter.low_hz, c.filter.high_hz), (6, 40.0, 200.0));
        assert_eq!((c.training.epochs, c.training.batch, c.training.tl_retrain_epochs), (40, 128, 10));
        assert_eq!(c.training.adam.lr, 1e-3);
        assert_eq!(c.training.focal.gamma, 2.0);
        assert_eq!(c.model.block_dropout, [0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn round_trip_and_partial() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        let p = Config::from_toml("seed = 9\n[labels]\nth_omega1 = 4.0\n").unwrap();
        assert_eq!(p.labels.th_omega1, 4.0);
        assert_eq!(p.synth_config().labels.th_omega1, 4.0);
        assert_eq!(p.plan(GridProfile::Desk).seeds, vec![9]);
    }

    #[test]
    fn unknown_key_named() {
        let e = Config::from_toml("[labels]\nth_omega3 = 1.0\n").unwrap_err().to_string();
        assert!(e.contains("th_omega3"), "{e}");
    }
}
