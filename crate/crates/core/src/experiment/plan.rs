use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, FocalConfig, GrlConfig, NormAxis};
use crate::signal::FilterSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Vanilla,
    Tl,
    Ada,
    Mix,
    Baseline,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Self::Vanilla, Self::Tl, Self::Ada, Self::Mix, Self::Baseline];

    pub fn name(self) -> &'static str {
        match self {
            Self::Vanilla => "vanilla",
            Self::Tl => "tl",
            Self::Ada => "ada",
            Self::Mix => "mix",
            Self::Baseline => "baseline",
        }
    }

    /// Trained on data from all three positions.
    pub fn is_mixed(self) -> bool {
        matches!(self, Self::Ada | Self::Mix)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown strategy '{s}'")))
    }
}

/// Parses a comma-separated strategy list.
pub fn parse_strategies(list: &str) -> Result<Vec<Strategy>> {
    let mut v: Vec<Strategy> = list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    v.sort();
    v.dedup();
    if v.is_empty() {
        return Err(Error::Config("empty strategy list".into()));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Swn,
    None,
}

impl Normalization {
    pub const ALL: [Normalization; 2] = [Self::Swn, Self::None];

    pub fn name(self) -> &'static str {
        match self {
            Self::Swn => "swn",
            Self::None => "none",
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "swn" => Ok(Self::Swn),
            "none" => Ok(Self::None),
            _ => Err(Error::Config(format!("unknown normalization '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPoint {
    pub norm_win_ms: Option<u32>,
    pub feat_win_ms: u32,
}

impl GridPoint {
    pub fn normalization(&self) -> Normalization {
        if self.norm_win_ms.is_some() {
            Normalization::Swn
        } else {
            Normalization::None
        }
    }
}

pub const DESK_WINDOWS_MS: [u32; 3] = [200, 600, 1000];
pub const FULL_WINDOWS_MS: [u32; 5] = [200, 400, 600, 800, 1000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridProfile {
    Desk,
    Full,
}

impl FromStr for GridProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "desk" => Ok(Self::Desk),
            "full" => Ok(Self::Full),
            _ => Err(Error::Config(format!("unknown grid '{s}' (expected desk or full)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub epochs: usize,
    /// Sequences per optimizer step.
    pub batch: usize,
    pub sequence_len_s: f64,
    pub tl_retrain_epochs: usize,
    /// Optimizer steps per epoch; unset means one pass over the training frames.
    pub steps_per_epoch: Option<usize>,
    /// Length of the chunks test blocks are cut into; unset means `sequence_len_s`.
    pub eval_chunk_s: Option<f64>,
    pub adam: AdamConfig,
    pub focal: FocalConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch: 128,
            sequence_len_s: 20.0,
            tl_retrain_epochs: 10,
            steps_per_epoch: None,
            eval_chunk_s: None,
            adam: AdamConfig::default(),
            focal: FocalConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 || !(self.sequence_len_s > 0.0) {
            return Err(Error::Config("epochs, batch and sequence_len_s must be positive".into()));
        }
        if self.steps_per_epoch == Some(0) || self.eval_chunk_s.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("steps_per_epoch and eval_chunk_s must be positive when set".into()));
        }
        self.adam.validate()?;
        self.focal.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub width: Option<usize>,
    pub norm_axis: NormAxis,
    pub block_dropout: [f64; 4],
    pub lstm_dropout: f64,
    pub grl: GrlConfig,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            width: None,
            norm_axis: NormAxis::default(),
            block_dropout: [0.1, 0.2, 0.3, 0.4],
            lstm_dropout: 0.1,
            grl: GrlConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Contiguous block length the splits operate on.
    pub block_s: f64,
    pub train_fraction: f64,
    pub tune_fraction: f64,
    pub mix_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { block_s: 20.0, train_fraction: 0.7, tune_fraction: 0.2, mix_fraction: 0.2, test_fraction: 0.3 }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_fraction, self.tune_fraction, self.mix_fraction, self.test_fraction];
        if !(self.block_s > 0.0) || fr.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::Config("split fractions must lie in (0, 1] and block_s be positive".into()));
        }
        if self.test_fraction != 0.3 {
            return Err(Error::Config("test_fraction must be 0.3".into()));
        }
        if self.train_fraction + self.test_fraction > 1.0 + 1e-12
            || self.tune_fraction + self.test_fraction > 1.0 + 1e-12
            || self.mix_fraction + self.test_fraction > 1.0 + 1e-12
        {
            return Err(Error::Config("per-position split fractions must sum to at most 1".into()));
        }
        Ok(())
    }
}

/// Settings that shrink the plan to desk scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeskProfile {
    pub epochs: usize,
    pub windows_ms: Vec<u32>,
    pub batch: usize,
    pub sequence_len_s: f64,
    pub steps_per_epoch: usize,
    pub eval_chunk_s: f64,
    pub width: Option<usize>,
}

impl Default for DeskProfile {
    fn default() -> Self {
        Self {
            epochs: 10,
            windows_ms: DESK_WINDOWS_MS.to_vec(),
            batch: 8,
            sequence_len_s: 0.5,
            steps_per_epoch: 20,
            eval_chunk_s: 2.0,
            width: Some(8),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentPlan {
    pub strategies: Vec<Strategy>,
    pub normalizations: Vec<Normalization>,
    pub norm_windows_ms: Vec<u32>,
    pub feat_windows_ms: Vec<u32>,
    pub seeds: Vec<u64>,
    /// Subset of subjects (0-based); empty means all.
    pub subjects: Vec<usize>,
    pub training: TrainingConfig,
    pub model: ModelSpec,
    pub splits: SplitConfig,
    pub emit_interval_ms: u32,
    pub filter: FilterSpec,
    pub swn_epsilon: f64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            strategies: Strategy::ALL.to_vec(),
            normalizations: Normalization::ALL.to_vec(),
            norm_windows_ms: FULL_WINDOWS_MS.to_vec(),
            feat_windows_ms: FULL_WINDOWS_MS.to_vec(),
            seeds: vec![0],
            subjects: Vec::new(),
            training: TrainingConfig::default(),
            model: ModelSpec::default(),
            splits: SplitConfig::default(),
            emit_interval_ms: 50,
            filter: FilterSpec::default(),
            swn_epsilon: 1e-8,
        }
    }
}

impl ExperimentPlan {
    /// Applies the desk profile: fewer epochs, a coarser grid and a small model.
    pub fn with_desk(mut self, desk: &DeskProfile) -> Self {
        self.training.epochs = desk.epochs;
        self.training.batch = desk.batch;
        self.training.sequence_len_s = desk.sequence_len_s;
        self.training.steps_per_epoch = Some(desk.steps_per_epoch);
        self.training.eval_chunk_s = Some(desk.eval_chunk_s);
        self.norm_windows_ms = desk.windows_ms.clone();
        self.feat_windows_ms = desk.windows_ms.clone();
        self.model.width = desk.width;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() || self.normalizations.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("plan needs strategies, normalizations and seeds".into()));
        }
        for w in self.norm_windows_ms.iter().chain(&self.feat_windows_ms) {
            if !FULL_WINDOWS_MS.contains(w) {
                return Err(Error::Config(format!("window {w} ms is not in 200..=1000 step 200")));
            }
        }
        if self.feat_windows_ms.is_empty() || (self.normalizations.contains(&Normalization::Swn) && self.norm_windows_ms.is_empty()) {
            return Err(Error::Config("window grids must not be empty".into()));
        }
        if !(self.swn_epsilon >= 0.0) {
            return Err(Error::Config("swn_epsilon must be >= 0".into()));
        }
        if self.emit_interval_ms == 0 {
            return Err(Error::Config("emit_interval_ms must be positive".into()));
        }
        self.training.validate()?;
        self.splits.validate()
    }

    /// Grid points for one normalization, norm window major.
    pub fn grid(&self, norm: Normalization) -> Vec<GridPoint> {
        let norms: Vec<Option<u32>> = match norm {
            Normalization::Swn => self.norm_windows_ms.iter().map(|w| Some(*w)).collect(),
            Normalization::None => vec![None],
        };
        let mut g = Vec::new();
        for n in norms {
            for f in &self.feat_windows_ms {
                g.push(GridPoint { norm_win_ms: n, feat_win_ms: *f });
            }
        }
        g
    }

    pub fn all_grid_points(&self) -> Vec<GridPoint> {
        self.normalizations.iter().flat_map(|n| self.grid(*n)).collect()
    }

    /// Longest history any grid point needs, so all points emit at the same times.
    pub fn common_first_emit_s(&self) -> f64 {
        let max = |v: &[u32]| v.iter().copied().max().unwrap_or(0);
        let norm = if self.normalizations.contains(&Normalization::Swn) { max(&self.norm_windows_ms) } else { 0 };
        f64::from(norm + max(&self.feat_windows_ms)) / 1000.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        let p = ExperimentPlan::default();
        assert_eq!(p.grid(Normalization::Swn).len(), 25);
        assert_eq!(p.grid(Normalization::None).len(), 5);
        let d = p.with_desk(&DeskProfile::default());
        assert_eq!(d.grid(Normalization::Swn).len(), 9);
        assert_eq!(d.grid(Normalization::None).len(), 3);
        assert_eq!(d.training.epochs, 10);
        assert!((d.common_first_emit_s() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn published_training_defaults() {
        let t = TrainingConfig::default();
        assert_eq!((t.epochs, t.batch, t.tl_retrain_epochs), (40, 128, 10));
        assert_eq!(t.sequence_len_s, 20.0);
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!(parse_strategies("mix, vanilla").unwrap(), vec![Strategy::Vanilla, Strategy::Mix]);
        assert!(parse_strategies("vanila").is_err());
        assert!("SWN".parse::<Normalization>().is_ok());
    }

    #[test]
    fn off_grid_window_rejected() {
        let p = ExperimentPlan { feat_windows_ms: vec![300], ..Default::default() };
        assert!(p.validate().is_err());
    }
}
