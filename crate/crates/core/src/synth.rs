//! Synthetic 12-channel EMG driven by the task kinematics, with per-position
//! amplitude changes standing in for electrode shift.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{generate_task_with, Task, TaskConfig, TaskKind};
use crate::labeling::{label_pipeline, LabelSeries, LabelThresholds, LABEL_RATE_HZ};
use crate::rng;
use crate::signal::filter::{design_bandpass, FilterSpec, SosState};
use crate::signal::io::{write_atomic, write_emg_f64le, DataFormat, ElectrodePosition, TrialManifest};
use crate::signal::{SignalBuffer, RAW_RATE_HZ};

/// Version of `dataset.json`.
pub const DATASET_VERSION: u32 = 1;

pub const N_CHANNELS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MuscleGroup {
    Flexor,
    Extensor,
    Neutral,
}

/// Recording sites in electrode order.
pub const SITES: [(&str, MuscleGroup); N_CHANNELS] = [
    ("biceps_1", MuscleGroup::Flexor),
    ("biceps_2", MuscleGroup::Flexor),
    ("biceps_3", MuscleGroup::Flexor),
    ("biceps_4", MuscleGroup::Flexor),
    ("brachialis", MuscleGroup::Flexor),
    ("brachioradialis", MuscleGroup::Flexor),
    ("anconeus", MuscleGroup::Extensor),
    ("triceps_lat_1", MuscleGroup::Extensor),
    ("triceps_lat_2", MuscleGroup::Extensor),
    ("triceps_long_1", MuscleGroup::Extensor),
    ("triceps_long_2", MuscleGroup::Extensor),
    ("ecrl", MuscleGroup::Neutral),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuscleModel {
    pub groups: Vec<MuscleGroup>,
    pub base_gain: Vec<f64>,
    pub tau_ms: f64,
    pub omega_ref: f64,
    /// Activation of the neutral group relative to |ω| / ω_ref.
    pub neutral_share: f64,
    /// Antagonist co-contraction as a fraction of the agonist drive.
    pub coactivation: f64,
}

impl MuscleModel {
    /// Subject-specific gains jittered around one.
    pub fn for_subject(seed: u64, cfg: &SynthConfig) -> Self {
        let mut r = rng::stream(seed, &[rng::label_key("muscle")]);
        let base_gain = SITES
            .iter()
            .map(|(_, g)| {
                let nominal = if *g == MuscleGroup::Neutral { 0.6 } else { 1.0 };
                nominal * r.random_range(1.0 - cfg.base_gain_jitter..=1.0 + cfg.base_gain_jitter)
            })
            .collect();
        Self {
            groups: SITES.iter().map(|s| s.1).collect(),
            base_gain,
            tau_ms: cfg.tau_ms,
            omega_ref: cfg.omega_ref,
            neutral_share: 0.3,
            coactivation: cfg.coactivation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.len() != N_CHANNELS || self.base_gain.len() != N_CHANNELS {
            return Err(Error::Config("muscle model needs 12 channels".into()));
        }
        if self.base_gain.iter().any(|g| !(*g > 0.0)) || !(self.tau_ms > 0.0) || !(self.omega_ref > 0.0) {
            return Err(Error::Config("muscle gains, tau and omega_ref must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.coactivation) {
            return Err(Error::Config("coactivation must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftModel {
    /// `[position][channel]` gain multipliers.
    pub gains: Vec<Vec<f64>>,
    pub crosstalk: f64,
    pub noise_floor: f64,
}

impl ShiftModel {
    pub fn for_subject(seed: u64, cfg: &SynthConfig) -> Result<Self> {
        let mut r = rng::stream(seed, &[rng::label_key("shift")]);
        let (lo, hi) = cfg.shift_gain_range;
        let up = (1.0 + 0.5 * (hi - 1.0)).min(hi)..=hi;
        let down = lo..=(1.0 - 0.5 * (1.0 - lo)).max(lo);
        // the neutral site sits on one side of the array, picked per subject
        let neutral_side = if r.random_bool(0.5) { 1.0 } else { -1.0 };
        let mut gains = Vec::with_capacity(3);
        for pos in ElectrodePosition::ALL {
            let dir = match pos {
                ElectrodePosition::Left => -1.0,
                ElectrodePosition::Center => 0.0,
                ElectrodePosition::Right => 1.0,
            };
            let g = SITES
                .iter()
                .map(|(_, group)| {
                    if dir == 0.0 {
                        return 1.0;
                    }
                    let side = match (cfg.shift_pattern, group) {
                        (ShiftPattern::Independent, _) => 0.0,
                        (_, MuscleGroup::Flexor) => 1.0,
                        (_, MuscleGroup::Extensor) => -1.0,
                        (_, MuscleGroup::Neutral) => neutral_side,
                    };
                    if side * dir > 0.0 {
                        r.random_range(up.clone())
                    } else if side * dir < 0.0 {
                        r.random_range(down.clone())
                    } else {
                        r.random_range(lo..=hi)
                    }
                })
                .collect::<Vec<f64>>();
            gains.push(g);
        }
        // left and right must differ from center on every channel
        for p in [0, 2] {
            for c in 0..N_CHANNELS {
                if (gains[p][c] - 1.0).abs() < 0.02 {
                    gains[p][c] = if gains[p][c] >= 1.0 { 1.02 } else { 0.98 };
                }
                if p == 2 && (gains[2][c] - gains[0][c]).abs() < 0.02 {
                    gains[2][c] = (gains[0][c] + if gains[0][c] < 1.0 { 0.04 } else { -0.04 }).clamp(lo, hi);
                }
            }
        }
        let m = Self { gains, crosstalk: cfg.crosstalk, noise_floor: cfg.noise_floor };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gains.len() != 3 || self.gains.iter().any(|g| g.len() != N_CHANNELS) {
            return Err(Error::Config("shift model needs 3 positions x 12 channels".into()));
        }
        if self.gains.iter().flatten().any(|g| !(0.3..=2.0).contains(g)) {
            return Err(Error::Config("shift gains must lie in [0.3, 2.0]".into()));
        }
        if !(0.0..=0.5).contains(&self.crosstalk) || !(self.noise_floor >= 0.0) {
            return Err(Error::Config("crosstalk must lie in [0, 0.5] and noise floor be >= 0".into()));
        }
        Ok(())
    }
}

/// How left/right gains are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftPattern {
    /// Every channel draws from the full range.
    Independent,
    /// Moving the array one way boosts flexor sites and attenuates extensor sites; the other way reverses it.
    Opposed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub trials_per_position: usize,
    /// Taken from the top-level seed when read from a config file.
    #[serde(skip)]
    pub seed: u64,
    pub shift_gain_range: (f64, f64),
    pub crosstalk: f64,
    pub noise_floor: f64,
    pub base_gain_jitter: f64,
    pub coactivation: f64,
    pub shift_pattern: ShiftPattern,
    pub tau_ms: f64,
    pub omega_ref: f64,
    /// Symmetric amplitude limit relative to the channel's base gain.
    pub saturation: f64,
    pub format: DataFormat,
    pub task: TaskConfig,
    /// Filled from the top-level thresholds when read from a config file.
    #[serde(skip)]
    pub labels: LabelThresholds,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 3,
            trials_per_position: 4,
            seed: 1,
            shift_gain_range: (0.4, 1.8),
            crosstalk: 0.1,
            noise_floor: 0.05,
            base_gain_jitter: 0.2,
            coactivation: 0.15,
            shift_pattern: ShiftPattern::Opposed,
            tau_ms: 50.0,
            omega_ref: 3.0,
            saturation: 10.0,
            format: DataFormat::Csv,
            task: TaskConfig::default(),
            labels: LabelThresholds::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.shift_gain_range;
        if !(0.3 <= lo && lo <= hi && hi <= 2.0) {
            return Err(Error::Config("shift_gain_range must lie within [0.3, 2.0]".into()));
        }
        if self.n_subjects == 0 || self.trials_per_position == 0 {
            return Err(Error::Config("need at least one subject and one trial".into()));
        }
        if !(0.0..1.0).contains(&self.base_gain_jitter) || !(self.saturation > 0.0) {
            return Err(Error::Config("invalid gain jitter or saturation".into()));
        }
        self.labels.validate()
    }

    fn subject_seed(&self, subject: usize) -> u64 {
        rng::derive_seed(self.seed, &[rng::label_key("subject"), subject as u64])
    }

    /// Task kind of trial `trial` (0-based) for `subject`.
    pub fn task_kind(&self, subject: usize, trial: usize) -> TaskKind {
        TaskKind::ALL[(subject + trial) % TaskKind::ALL.len()]
    }
}

/// Everything needed to render one trial.
#[derive(Debug, Clone)]
pub struct TrialSpec {
    pub subject: usize,
    pub position: ElectrodePosition,
    pub trial: usize,
    pub kind: TaskKind,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthTrial {
    pub spec: TrialSpec,
    pub emg: SignalBuffer,
    pub theta_elb: Vec<f64>,
    pub labels: LabelSeries,
}

/// Unit-variance noise band-limited to 40-200 Hz.
fn bandlimited_noise<R: Rng>(n: usize, rate: f64, r: &mut R) -> Result<Vec<f64>> {
    let cascade = design_bandpass(&FilterSpec::default(), rate)?;
    // power gain of the filter for white input
    let m = 4096;
    let power: f64 = (0..m).map(|i| cascade.gain((i as f64 + 0.5) * rate / 2.0 / m as f64).powi(2)).sum::<f64>() / m as f64;
    let scale = 1.0 / power.sqrt();
    let preroll = (0.5 * rate) as usize;
    let mut st = SosState::new(&cascade);
    let mut out = Vec::with_capacity(n);
    for i in 0..n + preroll {
        let y = st.step(r.sample::<f64, _>(StandardNormal));
        if i >= preroll {
            out.push(y * scale);
        }
    }
    Ok(out)
}

fn smooth(x: &[f64], tau_s: f64, rate: f64) -> Vec<f64> {
    let a = (-1.0 / (tau_s * rate)).exp();
    let mut s = 0.0;
    x.iter()
        .map(|&v| {
            s = a * s + (1.0 - a) * v;
            s
        })
        .collect()
}

/// Smoothed group activations `[flexor, extensor, neutral]` from elbow velocity.
pub fn activations(theta: &[f64], rate: f64, muscle: &MuscleModel) -> [Vec<f64>; 3] {
    let n = theta.len();
    let mut w: Vec<f64> = theta.windows(2).map(|p| (p[1] - p[0]) * rate).collect();
    w.push(w.last().copied().unwrap_or(0.0));
    w.truncate(n);
    let tau = muscle.tau_ms / 1000.0;
    let drive = |f: &dyn Fn(f64) -> f64| smooth(&w.iter().map(|&v| f(v).min(1.0)).collect::<Vec<_>>(), tau, rate);
    let c = muscle.coactivation;
    let flex = drive(&|v| (v.max(0.0) + c * (-v).max(0.0)) / muscle.omega_ref);
    let ext = drive(&|v| ((-v).max(0.0) + c * v.max(0.0)) / muscle.omega_ref);
    let neu = drive(&|v| muscle.neutral_share * v.abs() / muscle.omega_ref);
    [flex, ext, neu]
}

/// Renders EMG for an activation set; exposed so the shift mechanism can be tested in isolation.
pub fn render_emg(
    acts: &[Vec<f64>; 3],
    muscle: &MuscleModel,
    gains: &[f64],
    crosstalk: f64,
    noise_floor: f64,
    saturation: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let n = acts[0].len();
    let group_ix = |g: MuscleGroup| match g {
        MuscleGroup::Flexor => 0,
        MuscleGroup::Extensor => 1,
        MuscleGroup::Neutral => 2,
    };
    let mut sources = Vec::with_capacity(N_CHANNELS);
    for c in 0..N_CHANNELS {
        let mut r = rng::stream(seed, &[rng::label_key("source"), c as u64]);
        let noise = bandlimited_noise(n, RAW_RATE_HZ, &mut r)?;
        let a = &acts[group_ix(muscle.groups[c])];
        sources.push(noise.iter().zip(a).map(|(z, a)| muscle.base_gain[c] * a * z).collect::<Vec<f64>>());
    }
    let mut out = Vec::with_capacity(N_CHANNELS);
    for c in 0..N_CHANNELS {
        let mut r = rng::stream(seed, &[rng::label_key("floor"), c as u64]);
        let floor = if noise_floor > 0.0 { bandlimited_noise(n, RAW_RATE_HZ, &mut r)? } else { vec![0.0; n] };
        let limit = saturation * muscle.base_gain[c];
        let ch = (0..n)
            .map(|i| {
                let mut mix = sources[c][i];
                if c > 0 {
                    mix += crosstalk * sources[c - 1][i];
                }
                if c + 1 < N_CHANNELS {
                    mix += crosstalk * sources[c + 1][i];
                }
                (gains[c] * mix + noise_floor * floor[i]).clamp(-limit, limit)
            })
            .collect();
        out.push(ch);
    }
    Ok(out)
}

pub fn synthesize_trial(spec: &TrialSpec, cfg: &SynthConfig, muscle: &MuscleModel, shift: &ShiftModel) -> Result<SynthTrial> {
    muscle.validate()?;
    shift.validate()?;
    let task: Task = generate_task_with(spec.kind, spec.seed, &cfg.task)?;
    let n = (task.duration_s * RAW_RATE_HZ).round() as usize;
    let theta: Vec<f64> = (0..n).map(|i| task.joints_at(i as f64 / RAW_RATE_HZ).map(|j| j.theta_elb)).collect::<Result<_>>()?;
    let acts = activations(&theta, RAW_RATE_HZ, muscle);
    let emg = render_emg(&acts, muscle, &shift.gains[spec.position.index()], shift.crosstalk, shift.noise_floor, cfg.saturation, spec.seed)?;
    let names = SITES.iter().map(|s| s.0.to_string()).collect();
    let emg = SignalBuffer::new(emg, RAW_RATE_HZ, names)?;
    let n_lab = (task.duration_s * LABEL_RATE_HZ).round() as usize;
    let theta20: Vec<f64> = (0..n_lab).map(|i| task.joints_at(i as f64 / LABEL_RATE_HZ).map(|j| j.theta_elb)).collect::<Result<_>>()?;
    let labels = label_pipeline(&theta20, LABEL_RATE_HZ, &cfg.labels)?;
    Ok(SynthTrial { spec: spec.clone(), emg, theta_elb: theta, labels })
}

/// Trial specs of the whole dataset in a fixed order.
pub fn dataset_specs(cfg: &SynthConfig) -> Vec<TrialSpec> {
    let mut v = Vec::new();
    for s in 0..cfg.n_subjects {
        for pos in ElectrodePosition::ALL {
            for t in 0..cfg.trials_per_position {
                let seed = rng::derive_seed(cfg.subject_seed(s), &[pos.index() as u64, t as u64]);
                v.push(TrialSpec { subject: s, position: pos, trial: t, kind: cfg.task_kind(s, t), seed });
            }
        }
    }
    v
}

/// Models for one subject.
pub fn subject_models(cfg: &SynthConfig, subject: usize) -> Result<(MuscleModel, ShiftModel)> {
    let seed = cfg.subject_seed(subject);
    Ok((MuscleModel::for_subject(seed, cfg), ShiftModel::for_subject(seed, cfg)?))
}

pub fn subject_dir(root: &Path, subject: usize) -> PathBuf {
    root.join(format!("subject_{:02}", subject + 1))
}

pub fn trial_stem(root: &Path, spec: &TrialSpec) -> PathBuf {
    subject_dir(root, spec.subject).join(format!("position_{}", spec.position.name())).join(format!("trial_{:02}", spec.trial + 1))
}

/// Writes `trial_NN.{csv|bin}`, `trial_NN.labels.csv` and `trial_NN.json`.
pub fn write_trial(root: &Path, trial: &SynthTrial, format: DataFormat) -> Result<PathBuf> {
    let stem = trial_stem(root, &trial.spec);
    fs::create_dir_all(stem.parent().expect("trial has a parent directory"))?;
    let manifest_path = stem.with_extension("json");
    let manifest = TrialManifest {
        subject: format!("subject_{:02}", trial.spec.subject + 1),
        session: format!("trial_{:02}", trial.spec.trial + 1),
        electrode_position: trial.spec.position,
        sample_rate_hz: trial.emg.sample_rate_hz(),
        channels: trial.emg.channel_names().to_vec(),
        format,
        data_file: None,
    };
    let data_path = manifest.data_path(&manifest_path);
    match format {
        DataFormat::Csv => crate::signal::io::write_emg_csv(&data_path, &trial.emg)?,
        DataFormat::F64le => write_emg_f64le(&data_path, &trial.emg)?,
    }
    write_atomic(&labels_path(&manifest_path), &trial.labels.to_csv()?)?;
    manifest.write(&manifest_path)?;
    Ok(manifest_path)
}

pub fn labels_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("labels.csv")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub version: u32,
    pub n_subjects: usize,
    pub trials: usize,
    /// Relative to the dataset root.
    pub manifests: Vec<PathBuf>,
    pub rest_fraction: f64,
}

/// Renders the dataset trial by trial, handing each to `sink`.
pub fn for_each_trial(cfg: &SynthConfig, mut sink: impl FnMut(SynthTrial) -> Result<()>) -> Result<()> {
    cfg.validate()?;
    let specs = dataset_specs(cfg);
    let mut models = None;
    for spec in specs {
        if models.as_ref().is_none_or(|(s, _, _)| *s != spec.subject) {
            let (m, sh) = subject_models(cfg, spec.subject)?;
            models = Some((spec.subject, m, sh));
        }
        let (_, m, sh) = models.as_ref().expect("set above");
        sink(synthesize_trial(&spec, cfg, m, sh)?)?;
    }
    Ok(())
}

pub fn generate_dataset(cfg: &SynthConfig, root: &Path) -> Result<DatasetSummary> {
    fs::create_dir_all(root)?;
    let mut manifests = Vec::new();
    let (mut rest, mut total) = (0usize, 0usize);
    for_each_trial(cfg, |t| {
        rest += t.labels.labels.iter().filter(|l| **l == crate::labeling::Label::Rest).count();
        total += t.labels.len();
        let path = write_trial(root, &t, cfg.format)?;
        manifests.push(path.strip_prefix(root).map(Path::to_path_buf).unwrap_or(path));
        Ok(())
    })?;
    let summary = DatasetSummary { version: DATASET_VERSION, n_subjects: cfg.n_subjects, trials: manifests.len(), manifests, rest_fraction: rest as f64 / total.max(1) as f64 };
    write_atomic(&root.join("dataset.json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    Ok(summary)
}
