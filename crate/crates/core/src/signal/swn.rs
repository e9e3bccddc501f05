//! Sliding-window z-score normalization.
//!
//! Block mode re-normalizes the whole trailing window at an emission time.
//! Rolling mode normalizes each sample by the statistics of the window that
//! ends on it, which yields a continuous stream that can be sliced at any
//! feature length. Both modes share [`window_stats`], so the rolling value at
//! sample `n` is bit-identical to the last element of the block output at `n`.

use serde::{Deserialize, Serialize};

use super::buffer::{ms_to_samples, SignalBuffer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwnMode {
    Block,
    #[default]
    Rolling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwnConfig {
    pub window_len_ms: u32,
    #[serde(default)]
    pub mode: SwnMode,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    1e-8
}

impl SwnConfig {
    pub fn rolling(window_len_ms: u32) -> Self {
        Self { window_len_ms, mode: SwnMode::Rolling, epsilon: default_epsilon() }
    }

    pub fn block(window_len_ms: u32) -> Self {
        Self { window_len_ms, mode: SwnMode::Block, epsilon: default_epsilon() }
    }

    pub fn window_samples(&self, sample_rate_hz: f64) -> Result<usize> {
        let n = ms_to_samples(self.window_len_ms, sample_rate_hz)?;
        if n == 0 {
            return Err(Error::Config("normalization window must be at least one sample".into()));
        }
        Ok(n)
    }
}

/// Mean and population standard deviation (two-pass).
#[inline]
pub fn window_stats(w: &[f64]) -> (f64, f64) {
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[inline]
fn z(x: f64, mean: f64, std: f64, eps: f64) -> f64 {
    if std < eps {
        0.0
    } else {
        (x - mean) / std
    }
}

/// Z-scores a whole window with its own statistics.
pub fn normalize_window(w: &[f64], epsilon: f64) -> Vec<f64> {
    let (m, s) = window_stats(w);
    w.iter().map(|&x| z(x, m, s, epsilon)).collect()
}

/// Rolling normalization of one channel; output element `k` corresponds to
/// input sample `k + window - 1`.
pub fn rolling_normalize(x: &[f64], window: usize, epsilon: f64) -> Vec<f64> {
    if window == 0 || x.len() < window {
        return Vec::new();
    }
    x.windows(window)
        .map(|w| {
            let (m, s) = window_stats(w);
            z(w[window - 1], m, s, epsilon)
        })
        .collect()
}

/// Block-mode output for the window ending at sample index `t` (inclusive).
pub fn swn_block_at(buf: &SignalBuffer, t: usize, cfg: &SwnConfig) -> Result<SignalBuffer> {
    let l = cfg.window_samples(buf.sample_rate_hz())?;
    if t >= buf.len() || t + 1 < l {
        return Err(Error::InsufficientHistory { needed: l, available: (t + 1).min(buf.len()) });
    }
    let start = t + 1 - l;
    let out = buf
        .channels()
        .iter()
        .map(|ch| normalize_window(&ch[start..=t], cfg.epsilon))
        .collect();
    Ok(buf.with_samples(out, buf.sample_rate_hz(), buf.time_of(start)))
}

/// Applies sliding-window normalization per channel.
///
/// Block mode returns the normalized trailing window of the buffer. Rolling
/// mode returns one normalized value for every sample that has a full window
/// of history, so the output starts `window - 1` samples after the input.
pub fn swn(buf: &SignalBuffer, cfg: &SwnConfig) -> Result<SignalBuffer> {
    let l = cfg.window_samples(buf.sample_rate_hz())?;
    if buf.len() < l {
        return Err(Error::InsufficientHistory { needed: l, available: buf.len() });
    }
    match cfg.mode {
        SwnMode::Block => swn_block_at(buf, buf.len() - 1, cfg),
        SwnMode::Rolling => {
            let out = buf
                .channels()
                .iter()
                .map(|ch| rolling_normalize(ch, l, cfg.epsilon))
                .collect();
            Ok(buf.with_samples(out, buf.sample_rate_hz(), buf.time_of(l - 1)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(ch: Vec<f64>, fs: f64) -> SignalBuffer {
        SignalBuffer::from_channels(vec![ch], fs).unwrap()
    }

    #[test]
    fn three_sample_window() {
        let out = normalize_window(&[1.0, 2.0, 3.0], 1e-8);
        let s = (2.0f64 / 3.0).sqrt();
        for (o, w) in out.iter().zip([-1.0 / s, 0.0, 1.0 / s]) {
            assert!((o - w).abs() < 1e-12);
        }
        assert!((out[2] - 1.2247).abs() < 1e-4);
    }

    #[test]
    fn constant_window_is_zero() {
        assert_eq!(normalize_window(&[5.0; 4], 1e-8), vec![0.0; 4]);
    }

    #[test]
    fn window_grid_at_500hz() {
        let lens: Vec<usize> = [200, 400, 600, 800, 1000]
            .iter()
            .map(|&ms| SwnConfig::rolling(ms).window_samples(500.0).unwrap())
            .collect();
        assert_eq!(lens, vec![100, 200, 300, 400, 500]);
    }

    #[test]
    fn short_buffer_is_an_error() {
        let b = one(vec![1.0; 50], 500.0);
        assert!(matches!(
            swn(&b, &SwnConfig::rolling(200)),
            Err(Error::InsufficientHistory { needed: 100, available: 50 })
        ));
    }

    #[test]
    fn rolling_time_axis_starts_after_first_window() {
        let b = one((0..300).map(|i| (i as f64 * 0.1).sin()).collect(), 500.0);
        let r = swn(&b, &SwnConfig::rolling(200)).unwrap();
        assert_eq!(r.len(), 201);
        assert!((r.start_time_s() - 99.0 / 500.0).abs() < 1e-12);
        let blk = swn(&b, &SwnConfig::block(200)).unwrap();
        assert_eq!(blk.len(), 100);
        assert_eq!(blk.channel(0)[99], r.channel(0)[200]);
    }
}
