use rand::Rng as _;

use super::data::{Block, PreparedTrial};
use super::plan::TrainingConfig;
use crate::error::{Error, Result};
use crate::nn::layers::Act;
use crate::nn::{focal_loss_logits, Alpha, AdamState, FocalConfig, Mode, Model};
use crate::rng::Rng;

/// Blocks drawn from for training, each tagged with its domain (electrode position).
#[derive(Debug, Clone)]
pub struct TrainSet<'a> {
    pub trials: &'a [PreparedTrial],
    pub blocks: Vec<(Block, usize)>,
}

impl TrainSet<'_> {
    pub fn n_frames(&self) -> usize {
        self.blocks.iter().map(|(b, _)| b.len()).sum()
    }
}

/// Frames cut per sequence, given the configured length and the emission rate.
pub fn frames_for(seconds: f64, emit_interval_ms: u32) -> usize {
    ((seconds * 1000.0 / f64::from(emit_interval_ms)).round() as usize).max(1)
}

/// A batch of `batch` sequences of `steps` frames, time-major.
struct Batch {
    x: Act,
    labels: Vec<usize>,
    domains: Vec<usize>,
    batch: usize,
}

fn fill(trials: &[PreparedTrial], starts: &[(usize, usize, usize)], steps: usize, rows: usize, len: usize) -> Batch {
    let batch = starts.len();
    let n = steps * batch;
    let mut x = Act::zeros(rows, n, len);
    let mut labels = vec![0; n];
    let mut domains = vec![0; n];
    for t in 0..steps {
        for (b, &(trial, k0, dom)) in starts.iter().enumerate() {
            let col = t * batch + b;
            let tr = &trials[trial];
            tr.stream.fill_frame_rows(k0 + t, &mut x.data[col * len..], n * len);
            labels[col] = tr.label(k0 + t);
            domains[col] = dom;
        }
    }
    Batch { x, labels, domains, batch }
}

fn domain_loss() -> FocalConfig {
    FocalConfig { gamma: 0.0, alpha: Alpha::Fixed(vec![1.0; 3]) }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// Mean motion loss per frame, one entry per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Trains `model` in place. `frozen` marks tensors the optimizer must not touch;
/// `ada` adds the domain objective through the gradient reversal layer.
#[allow(clippy::too_many_arguments)]
pub fn train(
    model: &mut Model,
    set: &TrainSet<'_>,
    cfg: &TrainingConfig,
    emit_interval_ms: u32,
    epochs: usize,
    frozen: &[bool],
    ada: bool,
    rng: &mut Rng,
    run_id: &str,
) -> Result<TrainLog> {
    let min_block = set.blocks.iter().map(|(b, _)| b.len()).min().unwrap_or(0);
    if min_block == 0 {
        return Err(Error::InsufficientData(format!("{run_id}: empty training set")));
    }
    let steps = frames_for(cfg.sequence_len_s, emit_interval_ms).min(min_block);
    let (rows, len) = (model.config.in_channels, model.config.segment_len);
    let per_epoch = cfg.steps_per_epoch.unwrap_or_else(|| set.n_frames().div_ceil(cfg.batch * steps));
    let weights: Vec<usize> = set.blocks.iter().map(|(b, _)| b.len() - steps + 1).collect();
    let total: usize = weights.iter().sum();
    let dom_cfg = domain_loss();
    let mut adam = AdamState::new(cfg.adam, &model.params);
    let mut log = TrainLog::default();
    for epoch in 0..epochs {
        let mut sum = 0.0;
        for step in 0..per_epoch {
            let starts: Vec<(usize, usize, usize)> = (0..cfg.batch)
                .map(|_| {
                    // uniform over every valid start position
                    let mut r = rng.random_range(0..total);
                    let mut i = 0;
                    while r >= weights[i] {
                        r -= weights[i];
                        i += 1;
                    }
                    let (blk, dom) = set.blocks[i];
                    (blk.trial, blk.k0 + r, dom)
                })
                .collect();
            let b = fill(set.trials, &starts, steps, rows, len);
            let (out, cache) = model.forward_input(b.x, b.batch, Mode::Train(rng), ada)?;
            let (loss, dlogits) = focal_loss_logits(&out.probs, model.config.n_classes, &b.labels, &cfg.focal)?;
            let ddom = match (&out.domain_probs, ada) {
                (Some(dp), true) => Some(focal_loss_logits(dp, model.config.n_domains, &b.domains, &dom_cfg)?.1),
                _ => None,
            };
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("{run_id}: loss diverged at epoch {epoch} step {step}")));
            }
            sum += loss / out.n as f64;
            let grads = model.backward(&cache, &dlogits, ddom.as_deref())?;
            adam.update(&mut model.params, &grads, frozen)
                .map_err(|e| Error::NonFinite(format!("{run_id}: epoch {epoch} step {step}: {e}")))?;
        }
        log.epoch_loss.push(sum / per_epoch as f64);
    }
    Ok(log)
}

/// Correct and total frame counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Runs the model over test blocks cut into chunks of `chunk` frames, each
/// starting from a zero state, and scores every frame. With `domain` set, scores
/// the domain head against that label instead.
pub fn evaluate(model: &Model, trials: &[PreparedTrial], blocks: &[Block], chunk: usize, domain: Option<usize>) -> Result<Tally> {
    let (rows, len) = (model.config.in_channels, model.config.segment_len);
    let mut by_len: std::collections::BTreeMap<usize, Vec<(usize, usize, usize)>> = Default::default();
    for blk in blocks {
        let mut k = blk.k0;
        while k < blk.k1 {
            let steps = chunk.min(blk.k1 - k);
            by_len.entry(steps).or_default().push((blk.trial, k, domain.unwrap_or(0)));
            k += steps;
        }
    }
    // small batches keep activations cache-resident
    const MAX_FRAMES: usize = 128;
    let mut tally = Tally::default();
    for (steps, starts) in by_len {
        for group in starts.chunks((MAX_FRAMES / steps).max(1)) {
            let b = fill(trials, group, steps, rows, len);
            let (out, _) = model.forward_input(b.x, b.batch, Mode::Eval, domain.is_some())?;
            let (pred, truth) = match (&out.domain_probs, domain) {
                (Some(dp), Some(_)) => (crate::nn::model::argmax_columns(dp, out.n), &b.domains),
                _ => (out.argmax(), &b.labels),
            };
            tally.correct += pred.iter().zip(truth).filter(|(p, t)| p == t).count();
            tally.total += out.n;
        }
    }
    Ok(tally)
}
