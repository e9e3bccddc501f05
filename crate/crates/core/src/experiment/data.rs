use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::labeling::LabelSeries;
use crate::signal::io::{load_trial, ElectrodePosition};
use crate::signal::{preprocess, PipelineConfig, ProcessedStream, SignalBuffer};
use crate::synth::{self, SynthConfig};

#[derive(Debug, Clone)]
pub struct Trial {
    pub position: ElectrodePosition,
    pub trial: usize,
    pub emg: SignalBuffer,
    pub labels: LabelSeries,
}

#[derive(Debug, Clone)]
pub struct Subject {
    pub name: String,
    pub trials: Vec<Trial>,
}

impl Subject {
    pub fn trials_at(&self, pos: ElectrodePosition) -> impl Iterator<Item = (usize, &Trial)> {
        self.trials.iter().enumerate().filter(move |(_, t)| t.position == pos)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub subjects: Vec<Subject>,
}

fn sorted_dirs(dir: &Path, prefix: &str) -> Result<Vec<std::path::PathBuf>> {
    let mut v: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with(prefix)))
        .collect();
    v.sort();
    Ok(v)
}

impl Dataset {
    /// Reads a dataset laid out as `subject_XX/position_*/trial_NN.json`.
    pub fn load(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, format!("dataset directory {} not found", root.display()))));
        }
        let mut subjects = Vec::new();
        for sdir in sorted_dirs(root, "subject_")? {
            let mut trials = Vec::new();
            for pdir in sorted_dirs(&sdir, "position_")? {
                let mut manifests: Vec<_> = fs::read_dir(&pdir)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "json"))
                    .collect();
                manifests.sort();
                for (i, m) in manifests.iter().enumerate() {
                    let (manifest, emg) = load_trial(m)?;
                    let labels = LabelSeries::from_csv(&fs::read(synth::labels_path(m))?)?;
                    trials.push(Trial { position: manifest.electrode_position, trial: i, emg, labels });
                }
            }
            let name = sdir.file_name().and_then(|n| n.to_str()).unwrap_or("subject").to_string();
            subjects.push(Subject { name, trials });
        }
        if subjects.is_empty() {
            return Err(Error::InsufficientData(format!("no subject_* directories under {}", root.display())));
        }
        Ok(Self { subjects })
    }

    /// Synthesizes the dataset in memory, identical to what `generate_dataset` writes.
    pub fn synthesize(cfg: &SynthConfig) -> Result<Self> {
        let mut subjects: Vec<Subject> = (0..cfg.n_subjects)
            .map(|s| Subject { name: format!("subject_{:02}", s + 1), trials: Vec::new() })
            .collect();
        synth::for_each_trial(cfg, |t| {
            subjects[t.spec.subject].trials.push(Trial { position: t.spec.position, trial: t.spec.trial, emg: t.emg, labels: t.labels });
            Ok(())
        })?;
        Ok(Self { subjects })
    }
}

/// A preprocessed trial with per-frame class labels.
#[derive(Debug, Clone)]
pub struct PreparedTrial {
    pub position: ElectrodePosition,
    pub stream: ProcessedStream,
    /// Label of each emission, indexed from `stream.emissions().start`.
    pub labels: Vec<usize>,
}

impl PreparedTrial {
    pub fn new(trial: &Trial, stream: ProcessedStream) -> Result<Self> {
        let labels = stream
            .emissions()
            .map(|k| {
                trial.labels.label_at(stream.emit_time(k)).map(|l| l.index()).ok_or_else(|| {
                    Error::InsufficientData(format!("no label at {:.3} s", stream.emit_time(k)))
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { position: trial.position, stream, labels })
    }

    pub fn reframe(&self, cfg: &PipelineConfig) -> Result<Self> {
        let stream = self.stream.reframe(cfg)?;
        let start = self.stream.emissions().start;
        let labels = stream
            .emissions()
            .map(|k| {
                k.checked_sub(start)
                    .and_then(|i| self.labels.get(i).copied())
                    .ok_or_else(|| Error::InsufficientData("reframed emissions precede the labeled range".into()))
            })
            .collect::<Result<_>>()?;
        Ok(Self { position: self.position, stream, labels })
    }

    pub fn label(&self, k: usize) -> usize {
        self.labels[k - self.stream.emissions().start]
    }
}

pub fn prepare_trial(trial: &Trial, cfg: &PipelineConfig) -> Result<PreparedTrial> {
    PreparedTrial::new(trial, preprocess(&trial.emg, cfg)?)
}

/// Contiguous run of emissions from one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub trial: usize,
    pub k0: usize,
    pub k1: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.k1 - self.k0
    }

    pub fn is_empty(&self) -> bool {
        self.k1 <= self.k0
    }
}

/// Number of whole blocks in a trial of `duration_s`.
pub fn blocks_per_trial(duration_s: f64, block_s: f64) -> usize {
    (duration_s / block_s + 1e-9).floor() as usize
}

/// Emissions of trial `ix` falling in `[b·block_s, (b+1)·block_s)`, for each whole block `b`.
pub fn trial_blocks(ix: usize, t: &PreparedTrial, duration_s: f64, block_s: f64) -> Vec<Block> {
    let em = t.stream.emissions();
    (0..blocks_per_trial(duration_s, block_s))
        .map(|b| {
            let (lo, hi) = (b as f64 * block_s, (b + 1) as f64 * block_s);
            let inside = |k: &usize| {
                let te = t.stream.emit_time(*k);
                te >= lo - 1e-9 && te < hi - 1e-9
            };
            let k0 = em.clone().find(inside).unwrap_or(em.end);
            let k1 = em.clone().rev().find(inside).map_or(k0, |k| k + 1);
            Block { trial: ix, k0, k1 }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::Label;

    #[test]
    fn labels_follow_emission_times() {
        let cfg = SynthConfig { n_subjects: 1, trials_per_position: 1, ..Default::default() };
        let ds = Dataset::synthesize(&cfg).unwrap();
        let tr = &ds.subjects[0].trials[0];
        let mut pc = PipelineConfig::with_windows(Some(600), 600);
        pc.first_emit_s = Some(2.0);
        let p = prepare_trial(tr, &pc).unwrap();
        let k = p.stream.emissions().start + 7;
        assert_eq!(Label::from_index(p.label(k)).ok(), tr.labels.label_at(p.stream.emit_time(k)));
        let blocks = trial_blocks(0, &p, 60.0, 20.0);
        assert_eq!(blocks.len(), 3);
        assert_eq!(blocks[0].len(), 360);
        assert_eq!(blocks[1].len(), 400);
        assert_eq!(blocks[1].k0, blocks[0].k1);
    }
}
