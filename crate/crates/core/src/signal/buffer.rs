use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multi-channel time series, stored channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalBuffer {
    samples: Vec<Vec<f64>>,
    sample_rate_hz: f64,
    channel_names: Vec<String>,
    /// Time of the first sample, in seconds.
    start_time_s: f64,
}

impl SignalBuffer {
    pub fn new(samples: Vec<Vec<f64>>, sample_rate_hz: f64, channel_names: Vec<String>) -> Result<Self> {
        Self::with_start(samples, sample_rate_hz, channel_names, 0.0)
    }

    pub fn with_start(
        samples: Vec<Vec<f64>>,
        sample_rate_hz: f64,
        channel_names: Vec<String>,
        start_time_s: f64,
    ) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::Config(format!("sample rate must be positive, got {sample_rate_hz}")));
        }
        if samples.len() != channel_names.len() {
            return Err(Error::Shape(format!(
                "{} channels of data but {} channel names",
                samples.len(),
                channel_names.len()
            )));
        }
        if let Some(first) = samples.first() {
            if let Some((i, ch)) = samples.iter().enumerate().find(|(_, c)| c.len() != first.len()) {
                return Err(Error::Shape(format!(
                    "channel {i} has {} samples, expected {}",
                    ch.len(),
                    first.len()
                )));
            }
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("signal buffer contains NaN or Inf".into()));
        }
        Ok(Self { samples, sample_rate_hz, channel_names, start_time_s })
    }

    /// Builds a buffer with default names `ch01..chNN`.
    pub fn from_channels(samples: Vec<Vec<f64>>, sample_rate_hz: f64) -> Result<Self> {
        let names = default_channel_names(samples.len());
        Self::new(samples, sample_rate_hz, names)
    }

    pub fn n_channels(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn start_time_s(&self) -> f64 {
        self.start_time_s
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    /// Time stamp of sample `i`.
    pub fn time_of(&self, i: usize) -> f64 {
        self.start_time_s + i as f64 / self.sample_rate_hz
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.samples[c]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.samples
    }

    /// Returns a buffer with the same metadata and new per-channel data.
    /// Used by stages that guarantee finite output themselves.
    pub(crate) fn with_samples(&self, samples: Vec<Vec<f64>>, sample_rate_hz: f64, start_time_s: f64) -> Self {
        debug_assert_eq!(samples.len(), self.channel_names.len());
        Self {
            samples,
            sample_rate_hz,
            channel_names: self.channel_names.clone(),
            start_time_s,
        }
    }

    /// Trailing `n` samples of every channel.
    pub fn tail(&self, n: usize) -> Result<SignalBuffer> {
        let len = self.len();
        if n > len {
            return Err(Error::InsufficientHistory { needed: n, available: len });
        }
        self.slice(len - n, len)
    }

    /// Samples `[start, end)` of every channel.
    pub fn slice(&self, start: usize, end: usize) -> Result<SignalBuffer> {
        if start > end || end > self.len() {
            return Err(Error::Shape(format!("slice {start}..{end} out of range 0..{}", self.len())));
        }
        let samples = self.samples.iter().map(|c| c[start..end].to_vec()).collect();
        Ok(self.with_samples(samples, self.sample_rate_hz, self.time_of(start)))
    }

    /// Converts a duration in milliseconds to a whole number of samples.
    pub fn ms_to_samples(&self, ms: u32) -> Result<usize> {
        ms_to_samples(ms, self.sample_rate_hz)
    }
}

pub fn default_channel_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("ch{i:02}")).collect()
}

/// Converts milliseconds to an integer sample count, rejecting fractional results.
pub fn ms_to_samples(ms: u32, sample_rate_hz: f64) -> Result<usize> {
    let exact = ms as f64 * sample_rate_hz / 1000.0;
    let rounded = exact.round();
    if (exact - rounded).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "{ms} ms is not a whole number of samples at {sample_rate_hz} Hz"
        )));
    }
    Ok(rounded as usize)
}
