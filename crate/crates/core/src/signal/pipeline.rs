//! Filter -> decimate -> SWN -> slice -> rectify -> segment/concat, emitting
//! one frame every 50 ms of signal time.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::buffer::{ms_to_samples, SignalBuffer};
use super::features::{FeatureFrame, Segmentation};
use super::filter::{decimate, design_bandpass, filter_stream, FilterSpec, SosCascade, SosState};
use super::swn::{rolling_normalize, window_stats, SwnConfig, SwnMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub filter: FilterSpec,
    pub decimation: usize,
    /// `None` disables normalization.
    pub swn: Option<SwnConfig>,
    pub feature_len_ms: u32,
    pub emit_interval_ms: u32,
    /// Frames before this time are suppressed (filter transient).
    pub warmup_s: f64,
    /// Optional common start time so different window settings emit the
    /// same frame times.
    #[serde(default)]
    pub first_emit_s: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            filter: FilterSpec::default(),
            decimation: 4,
            swn: Some(SwnConfig::rolling(1000)),
            feature_len_ms: 1000,
            emit_interval_ms: 50,
            warmup_s: 0.5,
            first_emit_s: None,
        }
    }
}

impl PipelineConfig {
    pub fn with_windows(swn_ms: Option<u32>, feature_len_ms: u32) -> Self {
        Self {
            swn: swn_ms.map(SwnConfig::rolling),
            feature_len_ms,
            ..Self::default()
        }
    }

    fn check_swn_mode(&self) -> Result<()> {
        match self.swn {
            Some(SwnConfig { mode: SwnMode::Block, .. }) => Err(Error::Config(
                "the streaming pipeline needs rolling-mode normalization".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// A fully preprocessed (normalized and rectified) trial at the working rate,
/// from which frames are cut on demand.
#[derive(Debug, Clone)]
pub struct ProcessedStream {
    data: SignalBuffer,
    /// Decimated-sample index of the first element of `data`.
    offset: usize,
    seg: Segmentation,
    emit_every: usize,
    first_k: usize,
    end_k: usize,
    feature_len_ms: u32,
}

impl ProcessedStream {
    pub fn n_channels(&self) -> usize {
        self.data.n_channels()
    }

    pub fn concat_channels(&self) -> usize {
        self.seg.concat_channels(self.data.n_channels())
    }

    pub fn segment_len(&self) -> usize {
        self.seg.segment_samples
    }

    /// Emission indices `k`; frame `k` is stamped `k * emit_interval`.
    pub fn emissions(&self) -> std::ops::Range<usize> {
        self.first_k..self.end_k.max(self.first_k)
    }

    pub fn n_frames(&self) -> usize {
        self.emissions().len()
    }

    pub fn emit_time(&self, k: usize) -> f64 {
        (k * self.emit_every) as f64 / self.data.sample_rate_hz()
    }

    fn tails(&self, k: usize) -> Vec<&[f64]> {
        let end = k * self.emit_every - self.offset + 1;
        let start = end - self.seg.feature_samples;
        self.data.channels().iter().map(|c| &c[start..end]).collect()
    }

    pub fn frame(&self, k: usize) -> FeatureFrame {
        assert!(self.emissions().contains(&k), "emission {k} out of range");
        self.seg.frame(&self.tails(k), self.emit_time(k), self.feature_len_ms)
    }

    /// Writes frame `k` in channel-major layout, the layout the model consumes.
    pub fn fill_frame(&self, k: usize, out: &mut [f64]) {
        assert!(self.emissions().contains(&k), "emission {k} out of range");
        self.seg.fill_channel_major(&self.tails(k), out);
    }

    /// Writes frame `k` with its channel rows `row_stride` apart, for filling
    /// a batch laid out channel-major across frames.
    pub fn fill_frame_rows(&self, k: usize, out: &mut [f64], row_stride: usize) {
        assert!(self.emissions().contains(&k), "emission {k} out of range");
        self.seg.fill_rows(&self.tails(k), out, row_stride);
    }

    pub fn frames(&self) -> Vec<FeatureFrame> {
        self.emissions().map(|k| self.frame(k)).collect()
    }
}

fn first_emission(
    cfg: &PipelineConfig,
    rate: f64,
    emit_every: usize,
    history: usize,
) -> usize {
    let by_history = history.saturating_sub(1).div_ceil(emit_every);
    let ceil_time = |t: f64| ((t * rate - 1e-9) / emit_every as f64).ceil().max(0.0) as usize;
    let by_warmup = ceil_time(cfg.warmup_s);
    let by_start = cfg.first_emit_s.map_or(0, ceil_time);
    by_history.max(by_warmup).max(by_start)
}

/// Runs filter, decimation, normalization and rectification over a whole trial.
pub fn preprocess(raw: &SignalBuffer, cfg: &PipelineConfig) -> Result<ProcessedStream> {
    cfg.check_swn_mode()?;
    let sos = design_bandpass(&cfg.filter, raw.sample_rate_hz())?;
    let filtered = filter_stream(&sos, raw)?;
    let dec = decimate(&filtered, cfg.decimation, cfg.filter.high_hz)?;
    let rate = dec.sample_rate_hz();

    let (normalized, offset) = match &cfg.swn {
        Some(swn_cfg) => {
            let l = swn_cfg.window_samples(rate)?;
            let chans: Vec<Vec<f64>> = dec
                .channels()
                .iter()
                .map(|c| rolling_normalize(c, l, swn_cfg.epsilon))
                .collect();
            (chans, l - 1)
        }
        None => (dec.channels().to_vec(), 0),
    };
    let rectified: Vec<Vec<f64>> = normalized
        .into_iter()
        .map(|c| c.into_iter().map(f64::abs).collect())
        .collect();
    let data = dec.with_samples(rectified, rate, dec.time_of(offset));
    frame_stage(data, offset, dec.len(), cfg)
}

fn frame_stage(data: SignalBuffer, offset: usize, dec_len: usize, cfg: &PipelineConfig) -> Result<ProcessedStream> {
    let rate = data.sample_rate_hz();
    let seg = Segmentation::new(cfg.feature_len_ms, rate)?;
    let emit_every = ms_to_samples(cfg.emit_interval_ms, rate)?;
    if emit_every == 0 {
        return Err(Error::Config("emission interval must be positive".into()));
    }
    let history = offset + seg.feature_samples;
    let first_k = first_emission(cfg, rate, emit_every, history);
    let end_k = if dec_len == 0 { 0 } else { (dec_len - 1) / emit_every + 1 };
    Ok(ProcessedStream {
        data,
        offset,
        seg,
        emit_every,
        first_k,
        end_k,
        feature_len_ms: cfg.feature_len_ms,
    })
}

impl ProcessedStream {
    /// Same normalized signal cut with the framing fields of `cfg` (feature
    /// length, emission interval, warmup, first emission); its filter and
    /// normalization fields are ignored.
    pub fn reframe(&self, cfg: &PipelineConfig) -> Result<ProcessedStream> {
        frame_stage(self.data.clone(), self.offset, self.offset + self.data.len(), cfg)
    }
}

/// Batch entry point: every frame of a trial.
pub fn run_pipeline(raw: &SignalBuffer, cfg: &PipelineConfig) -> Result<Vec<FeatureFrame>> {
    Ok(preprocess(raw, cfg)?.frames())
}

/// Sample-by-sample pipeline for live use. Produces the same frames,
/// bit for bit, as [`run_pipeline`] on the concatenated input.
#[derive(Debug)]
pub struct StreamingPipeline {
    filters: Vec<SosState>,
    decimation: usize,
    raw_seen: usize,
    dec_seen: usize,
    norm_window: Option<(usize, f64)>,
    history: Vec<VecDeque<f64>>,
    ready: Vec<VecDeque<f64>>,
    seg: Segmentation,
    emit_every: usize,
    first_k: usize,
    rate: f64,
    feature_len_ms: u32,
}

impl StreamingPipeline {
    pub fn new(cfg: &PipelineConfig, n_channels: usize, raw_rate_hz: f64) -> Result<Self> {
        cfg.check_swn_mode()?;
        let sos: SosCascade = design_bandpass(&cfg.filter, raw_rate_hz)?;
        if cfg.decimation == 0 {
            return Err(Error::Config("decimation factor must be at least 1".into()));
        }
        let rate = raw_rate_hz / cfg.decimation as f64;
        if cfg.decimation > 1 && cfg.filter.high_hz >= rate / 2.0 {
            return Err(Error::Config("decimation would alias the upper band edge".into()));
        }
        let seg = Segmentation::new(cfg.feature_len_ms, rate)?;
        let emit_every = ms_to_samples(cfg.emit_interval_ms, rate)?;
        let norm_window = match &cfg.swn {
            Some(s) => Some((s.window_samples(rate)?, s.epsilon)),
            None => None,
        };
        let offset = norm_window.map_or(0, |(l, _)| l - 1);
        let first_k = first_emission(cfg, rate, emit_every, offset + seg.feature_samples);
        Ok(Self {
            filters: (0..n_channels).map(|_| SosState::new(&sos)).collect(),
            decimation: cfg.decimation,
            raw_seen: 0,
            dec_seen: 0,
            norm_window,
            history: vec![VecDeque::new(); n_channels],
            ready: vec![VecDeque::new(); n_channels],
            seg,
            emit_every,
            first_k,
            rate,
            feature_len_ms: cfg.feature_len_ms,
        })
    }

    /// Feeds one multi-channel raw sample; returns a frame when one is due.
    pub fn push(&mut self, sample: &[f64]) -> Result<Option<FeatureFrame>> {
        if sample.len() != self.filters.len() {
            return Err(Error::Shape(format!(
                "expected {} channels, got {}",
                self.filters.len(),
                sample.len()
            )));
        }
        let keep = self.raw_seen.is_multiple_of(self.decimation);
        self.raw_seen += 1;
        let filtered: Vec<f64> = self.filters.iter_mut().zip(sample).map(|(f, &x)| f.step(x)).collect();
        if !keep {
            return Ok(None);
        }
        let i = self.dec_seen;
        self.dec_seen += 1;

        for (c, &x) in filtered.iter().enumerate() {
            let value = match self.norm_window {
                Some((l, eps)) => {
                    let h = &mut self.history[c];
                    h.push_back(x);
                    if h.len() > l {
                        h.pop_front();
                    }
                    if h.len() < l {
                        continue;
                    }
                    let w = h.make_contiguous();
                    let (m, s) = window_stats(w);
                    if s < eps {
                        0.0
                    } else {
                        (x - m) / s
                    }
                }
                None => x,
            };
            let r = &mut self.ready[c];
            r.push_back(value.abs());
            if r.len() > self.seg.feature_samples {
                r.pop_front();
            }
        }

        if !i.is_multiple_of(self.emit_every) {
            return Ok(None);
        }
        let k = i / self.emit_every;
        if k < self.first_k || self.ready[0].len() < self.seg.feature_samples {
            return Ok(None);
        }
        let tails: Vec<&[f64]> = self.ready.iter_mut().map(|r| &*r.make_contiguous()).collect();
        let t = i as f64 / self.rate;
        Ok(Some(self.seg.frame(&tails, t, self.feature_len_ms)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn noise_trial(seconds: f64, channels: usize, seed: u64) -> SignalBuffer {
        let mut r = rng::stream(seed, &[]);
        let n = (seconds * 2000.0) as usize;
        let data = (0..channels)
            .map(|_| (0..n).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        SignalBuffer::from_channels(data, 2000.0).unwrap()
    }

    #[test]
    fn frame_count_and_monotone_times() {
        let raw = noise_trial(6.0, 2, 1);
        let frames = run_pipeline(&raw, &PipelineConfig::with_windows(Some(200), 200)).unwrap();
        assert!(frames.len() <= 120);
        // warmup 0.5 s dominates history 0.2 + 0.2 s
        assert_eq!(frames.len(), 120 - 10);
        assert!(frames.windows(2).all(|w| w[1].t_emit > w[0].t_emit));
        assert!((frames[0].t_emit - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reframe_matches_fresh_preprocess() {
        let raw = noise_trial(4.0, 2, 3);
        let base = preprocess(&raw, &PipelineConfig::with_windows(Some(400), 200)).unwrap();
        let mut cfg = PipelineConfig::with_windows(Some(400), 600);
        cfg.first_emit_s = Some(1.5);
        let fresh = preprocess(&raw, &cfg).unwrap();
        let re = base.reframe(&cfg).unwrap();
        assert_eq!(fresh.emissions(), re.emissions());
        assert_eq!(fresh.frames(), re.frames());
    }

    #[test]
    fn disabled_swn_matches_manual_chain() {
        let raw = noise_trial(2.0, 3, 2);
        let cfg = PipelineConfig::with_windows(None, 300);
        let frames = run_pipeline(&raw, &cfg).unwrap();
        let sos = design_bandpass(&cfg.filter, 2000.0).unwrap();
        let dec = decimate(&filter_stream(&sos, &raw).unwrap(), 4, 200.0).unwrap();
        let last = frames.last().unwrap();
        let end = (last.t_emit * 500.0).round() as usize + 1;
        let manual = super::super::features::segment_and_concat(
            &super::super::features::rectify(&dec.slice(0, end).unwrap()),
            300,
        )
        .unwrap();
        assert_eq!(last.values, manual.values);
    }

    #[test]
    fn streaming_equals_batch() {
        let raw = noise_trial(3.0, 2, 3);
        let mut cfg = PipelineConfig::with_windows(Some(400), 200);
        cfg.first_emit_s = Some(1.2);
        let batch = run_pipeline(&raw, &cfg).unwrap();
        let mut sp = StreamingPipeline::new(&cfg, 2, 2000.0).unwrap();
        let mut streamed = Vec::new();
        for i in 0..raw.len() {
            let s = [raw.channel(0)[i], raw.channel(1)[i]];
            if let Some(f) = sp.push(&s).unwrap() {
                streamed.push(f);
            }
        }
        assert_eq!(batch.len(), streamed.len());
        for (a, b) in batch.iter().zip(&streamed) {
            assert_eq!(a.values, b.values);
            assert!((a.t_emit - b.t_emit).abs() < 1e-12);
        }
    }

    #[test]
    fn block_mode_rejected_for_streams() {
        let raw = noise_trial(1.0, 1, 4);
        let cfg = PipelineConfig { swn: Some(SwnConfig::block(200)), ..PipelineConfig::default() };
        assert!(run_pipeline(&raw, &cfg).is_err());
    }
}
