use serde::{Deserialize, Serialize};

use super::buffer::{ms_to_samples, SignalBuffer};
use crate::error::{Error, Result};

pub const SEGMENT_MS: u32 = 100;
pub const SEGMENT_HOP_MS: u32 = 50;

/// One model input: `segment_len` rows by `concat_channels` columns, row-major.
/// Column `seg * base_channels + ch` holds segment `seg` of channel `ch`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub values: Vec<f64>,
    pub segment_len: usize,
    pub concat_channels: usize,
    pub t_emit: f64,
    pub feature_len_ms: u32,
}

impl FeatureFrame {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.concat_channels + col]
    }

    /// Channel-major copy (`concat_channels` rows of `segment_len`).
    pub fn to_channel_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.values.len()];
        for r in 0..self.segment_len {
            for c in 0..self.concat_channels {
                out[c * self.segment_len + r] = self.values[r * self.concat_channels + c];
            }
        }
        out
    }
}

/// Number of 100 ms segments with 50 ms hop that tile a feature window.
pub fn segment_count(feature_len_ms: u32) -> Result<usize> {
    if feature_len_ms < SEGMENT_MS || !(feature_len_ms - SEGMENT_MS).is_multiple_of(SEGMENT_HOP_MS) {
        return Err(Error::Config(format!(
            "feature length {feature_len_ms} ms is not {SEGMENT_MS} ms plus a multiple of {SEGMENT_HOP_MS} ms"
        )));
    }
    Ok(((feature_len_ms - SEGMENT_MS) / SEGMENT_HOP_MS) as usize + 1)
}

/// Geometry of the segmentation at a given rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segmentation {
    pub feature_samples: usize,
    pub segment_samples: usize,
    pub hop_samples: usize,
    pub n_segments: usize,
}

impl Segmentation {
    pub fn new(feature_len_ms: u32, sample_rate_hz: f64) -> Result<Self> {
        let n_segments = segment_count(feature_len_ms)?;
        Ok(Self {
            feature_samples: ms_to_samples(feature_len_ms, sample_rate_hz)?,
            segment_samples: ms_to_samples(SEGMENT_MS, sample_rate_hz)?,
            hop_samples: ms_to_samples(SEGMENT_HOP_MS, sample_rate_hz)?,
            n_segments,
        })
    }

    pub fn concat_channels(&self, base_channels: usize) -> usize {
        base_channels * self.n_segments
    }

    /// Writes the channel-major `[concat × segment]` tensor for trailing
    /// windows `tails` (one slice of `feature_samples` per base channel).
    pub fn fill_channel_major(&self, tails: &[&[f64]], out: &mut [f64]) {
        debug_assert_eq!(out.len(), tails.len() * self.n_segments * self.segment_samples);
        self.fill_rows(tails, out, self.segment_samples);
    }

    /// Like [`Self::fill_channel_major`] but with rows `row_stride` apart.
    pub fn fill_rows(&self, tails: &[&[f64]], out: &mut [f64], row_stride: usize) {
        let base = tails.len();
        for seg in 0..self.n_segments {
            let off = seg * self.hop_samples;
            for (ch, tail) in tails.iter().enumerate() {
                let o = (seg * base + ch) * row_stride;
                out[o..o + self.segment_samples].copy_from_slice(&tail[off..off + self.segment_samples]);
            }
        }
    }

    pub fn frame(&self, tails: &[&[f64]], t_emit: f64, feature_len_ms: u32) -> FeatureFrame {
        let cc = self.concat_channels(tails.len());
        let mut values = vec![0.0; cc * self.segment_samples];
        let base = tails.len();
        for seg in 0..self.n_segments {
            let off = seg * self.hop_samples;
            for (ch, tail) in tails.iter().enumerate() {
                let col = seg * base + ch;
                for r in 0..self.segment_samples {
                    values[r * cc + col] = tail[off + r];
                }
            }
        }
        FeatureFrame {
            values,
            segment_len: self.segment_samples,
            concat_channels: cc,
            t_emit,
            feature_len_ms,
        }
    }
}

pub fn rectify(buf: &SignalBuffer) -> SignalBuffer {
    let out = buf
        .channels()
        .iter()
        .map(|ch| ch.iter().map(|x| x.abs()).collect())
        .collect();
    buf.with_samples(out, buf.sample_rate_hz(), buf.start_time_s())
}

/// Cuts the trailing feature window into overlapping segments and stacks
/// them along the channel axis.
pub fn segment_and_concat(buf: &SignalBuffer, feature_len_ms: u32) -> Result<FeatureFrame> {
    let seg = Segmentation::new(feature_len_ms, buf.sample_rate_hz())?;
    if buf.len() < seg.feature_samples {
        return Err(Error::InsufficientHistory { needed: seg.feature_samples, available: buf.len() });
    }
    let start = buf.len() - seg.feature_samples;
    let tails: Vec<&[f64]> = buf.channels().iter().map(|c| &c[start..]).collect();
    Ok(seg.frame(&tails, buf.time_of(buf.len() - 1), feature_len_ms))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_buffer(channels: usize, len: usize) -> SignalBuffer {
        let data = (0..channels)
            .map(|c| (0..len).map(|i| (c * 10_000 + i) as f64).collect())
            .collect();
        SignalBuffer::from_channels(data, 500.0).unwrap()
    }

    #[test]
    fn frame_shapes() {
        let b = ramp_buffer(12, 600);
        let f = segment_and_concat(&b, 1000).unwrap();
        assert_eq!((f.segment_len, f.concat_channels), (50, 228));
        let f = segment_and_concat(&b, 200).unwrap();
        assert_eq!((f.segment_len, f.concat_channels), (50, 36));
    }

    #[test]
    fn single_segment_is_trailing_window() {
        let b = ramp_buffer(2, 80);
        let f = segment_and_concat(&b, 100).unwrap();
        assert_eq!(f.concat_channels, 2);
        for r in 0..50 {
            assert_eq!(f.get(r, 0), (30 + r) as f64);
            assert_eq!(f.get(r, 1), (10_000 + 30 + r) as f64);
        }
    }

    #[test]
    fn segments_hop_by_half_a_window() {
        let b = ramp_buffer(1, 100);
        let f = segment_and_concat(&b, 200).unwrap();
        // trailing 100 samples: 0..100, segments start at 0, 25, 50
        assert_eq!(f.get(0, 0), 0.0);
        assert_eq!(f.get(0, 1), 25.0);
        assert_eq!(f.get(49, 2), 99.0);
    }

    #[test]
    fn bad_feature_length() {
        let b = ramp_buffer(1, 600);
        assert!(segment_and_concat(&b, 125).is_err());
        assert!(segment_and_concat(&b, 50).is_err());
    }

    #[test]
    fn rectify_basics() {
        let b = SignalBuffer::from_channels(vec![vec![-1.0, 2.0, -3.0]], 10.0).unwrap();
        let r = rectify(&b);
        assert_eq!(r.channel(0), &[1.0, 2.0, 3.0]);
        assert_eq!(rectify(&r), r);
    }

    #[test]
    fn channel_major_transpose() {
        let b = ramp_buffer(3, 200);
        let f = segment_and_concat(&b, 300).unwrap();
        let cm = f.to_channel_major();
        let seg = Segmentation::new(300, 500.0).unwrap();
        let tails: Vec<&[f64]> = b.channels().iter().map(|c| &c[50..]).collect();
        let mut direct = vec![0.0; cm.len()];
        seg.fill_channel_major(&tails, &mut direct);
        assert_eq!(cm, direct);
    }
}
