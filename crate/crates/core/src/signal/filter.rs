//! Butterworth band-pass design as cascaded second-order sections, and causal
//! filtering with zero initial state.
//!
//! The design follows the classic analog-prototype route: Butterworth
//! low-pass poles, low-pass to band-pass transform, then the bilinear
//! transform with pre-warped band edges so the -3 dB points land exactly on
//! the requested frequencies.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::buffer::SignalBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSpec {
    /// Order of the low-pass prototype; the band-pass has twice as many poles.
    pub order: usize,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self { order: 6, low_hz: 40.0, high_hz: 200.0 }
    }
}

impl FilterSpec {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if self.order == 0 {
            return Err(Error::Config("filter order must be at least 1".into()));
        }
        let nyquist = sample_rate_hz / 2.0;
        if !(self.low_hz > 0.0 && self.low_hz < self.high_hz && self.high_hz < nyquist) {
            return Err(Error::Config(format!(
                "band edges must satisfy 0 < low < high < nyquist: got {} / {} Hz at nyquist {nyquist} Hz",
                self.low_hz, self.high_hz
            )));
        }
        Ok(())
    }
}

/// One biquad: `b0 + b1 z^-1 + b2 z^-2` over `1 + a1 z^-1 + a2 z^-2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosCascade {
    pub sections: Vec<Biquad>,
    pub sample_rate_hz: f64,
}

impl SosCascade {
    /// Complex frequency response at `freq_hz`, evaluated section by section.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.sample_rate_hz;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections.iter().fold(Complex64::new(1.0, 0.0), |acc, s| {
            let num = s.b[0] + s.b[1] * z1 + s.b[2] * z2;
            let den = s.a[0] + s.a[1] * z1 + s.a[2] * z2;
            acc * num / den
        })
    }

    pub fn gain(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }
}

pub fn design_bandpass(spec: &FilterSpec, sample_rate_hz: f64) -> Result<SosCascade> {
    spec.validate(sample_rate_hz)?;
    let n = spec.order;
    let fs2 = 2.0 * sample_rate_hz;
    let warp = |f: f64| fs2 * (PI * f / sample_rate_hz).tan();
    let (wl, wh) = (warp(spec.low_hz), warp(spec.high_hz));
    let bw = wh - wl;
    let w0_sq = wl * wh;

    // Analog low-pass prototype poles on the left half of the unit circle.
    let proto: Vec<Complex64> = (0..n)
        .map(|k| {
            let m = -(n as f64) + 1.0 + 2.0 * k as f64;
            -Complex64::from_polar(1.0, PI * m / (2.0 * n as f64))
        })
        .collect();

    // Low-pass to band-pass: each prototype pole splits into two.
    let mut analog_poles = Vec::with_capacity(2 * n);
    for p in &proto {
        let p = p * (bw / 2.0);
        let disc = (p * p - w0_sq).sqrt();
        analog_poles.push(p + disc);
        analog_poles.push(p - disc);
    }
    // n zeros at s = 0, n at infinity; gain bw^n.
    let analog_gain = bw.powi(n as i32);

    // Bilinear transform.
    let digital_poles: Vec<Complex64> = analog_poles.iter().map(|&p| (fs2 + p) / (fs2 - p)).collect();
    let num: Complex64 = (0..n).map(|_| Complex64::new(fs2, 0.0)).product();
    let den: Complex64 = analog_poles.iter().map(|&p| fs2 - p).product();
    let gain = analog_gain * (num / den).re;

    let sections = pair_sections(&digital_poles, gain)?;
    Ok(SosCascade { sections, sample_rate_hz })
}

/// Groups poles into conjugate pairs (real poles with each other) and gives
/// every section one zero at z = +1 and one at z = -1. Sections are ordered
/// with the poles closest to the unit circle last; the overall gain goes on
/// the first section.
fn pair_sections(poles: &[Complex64], gain: f64) -> Result<Vec<Biquad>> {
    const IMAG_TOL: f64 = 1e-12;
    let mut complex: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > IMAG_TOL).collect();
    let mut real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= IMAG_TOL).map(|p| p.re).collect();
    if 2 * complex.len() + real.len() != poles.len() || !real.len().is_multiple_of(2) {
        return Err(Error::Config("pole set cannot be paired into second-order sections".into()));
    }
    complex.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    real.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    let mut denominators: Vec<(f64, [f64; 3])> = complex
        .iter()
        .map(|p| (p.norm(), [1.0, -2.0 * p.re, p.norm_sqr()]))
        .collect();
    for pair in real.chunks(2) {
        let (r1, r2) = (pair[0], pair[1]);
        denominators.push((r1.abs().max(r2.abs()), [1.0, -(r1 + r2), r1 * r2]));
    }
    denominators.sort_by(|a, b| a.0.total_cmp(&b.0));

    Ok(denominators
        .into_iter()
        .enumerate()
        .map(|(i, (_, a))| {
            let k = if i == 0 { gain } else { 1.0 };
            Biquad { b: [k, 0.0, -k], a }
        })
        .collect())
}

/// Per-channel streaming state for a cascade (transposed direct form II).
#[derive(Debug, Clone)]
pub struct SosState {
    sections: Vec<Biquad>,
    z: Vec<[f64; 2]>,
}

impl SosState {
    pub fn new(cascade: &SosCascade) -> Self {
        Self {
            sections: cascade.sections.clone(),
            z: vec![[0.0; 2]; cascade.sections.len()],
        }
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        let mut v = x;
        for (s, z) in self.sections.iter().zip(self.z.iter_mut()) {
            let y = s.b[0] * v + z[0];
            z[0] = s.b[1] * v - s.a[1] * y + z[1];
            z[1] = s.b[2] * v - s.a[2] * y;
            v = y;
        }
        v
    }

    pub fn reset(&mut self) {
        self.z.iter_mut().for_each(|z| *z = [0.0; 2]);
    }
}

/// Causal filtering of every channel from zero initial state.
pub fn filter_stream(cascade: &SosCascade, buf: &SignalBuffer) -> Result<SignalBuffer> {
    if (cascade.sample_rate_hz - buf.sample_rate_hz()).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "filter designed for {} Hz applied to {} Hz signal",
            cascade.sample_rate_hz,
            buf.sample_rate_hz()
        )));
    }
    let out = buf
        .channels()
        .iter()
        .map(|ch| {
            let mut st = SosState::new(cascade);
            ch.iter().map(|&x| st.step(x)).collect()
        })
        .collect();
    Ok(buf.with_samples(out, buf.sample_rate_hz(), buf.start_time_s()))
}

/// Keeps every `factor`-th sample starting at index 0. `band_upper_hz` is the
/// upper edge of the band-pass already applied; it must sit below the new
/// Nyquist frequency.
pub fn decimate(buf: &SignalBuffer, factor: usize, band_upper_hz: f64) -> Result<SignalBuffer> {
    if factor == 0 {
        return Err(Error::Config("decimation factor must be at least 1".into()));
    }
    let new_rate = buf.sample_rate_hz() / factor as f64;
    if factor > 1 && band_upper_hz >= new_rate / 2.0 {
        return Err(Error::Config(format!(
            "decimating by {factor} to {new_rate} Hz would alias the {band_upper_hz} Hz band edge"
        )));
    }
    let out = buf
        .channels()
        .iter()
        .map(|ch| ch.iter().step_by(factor).copied().collect())
        .collect();
    Ok(buf.with_samples(out, new_rate, buf.start_time_s()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form magnitude of a bilinear-transformed Butterworth band-pass.
    fn butterworth_bandpass_magnitude(spec: &FilterSpec, fs: f64, f: f64) -> f64 {
        let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
        let (wl, wh, w) = (warp(spec.low_hz), warp(spec.high_hz), warp(f));
        let ratio = (w * w - wl * wh) / (w * (wh - wl));
        1.0 / (1.0 + ratio.powi(2 * spec.order as i32)).sqrt()
    }

    #[test]
    fn matches_closed_form_magnitude() {
        let spec = FilterSpec::default();
        let sos = design_bandpass(&spec, 2000.0).unwrap();
        assert_eq!(sos.sections.len(), 6);
        for f in [5.0, 10.0, 40.0, 70.0, 100.0, 150.0, 200.0, 300.0, 400.0, 900.0] {
            let got = sos.gain(f);
            let want = butterworth_bandpass_magnitude(&spec, 2000.0, f);
            assert!((got - want).abs() < 1e-9, "f={f}: {got} vs {want}");
        }
    }

    #[test]
    fn dc_blocked_and_passband_flat() {
        let sos = design_bandpass(&FilterSpec::default(), 2000.0).unwrap();
        assert!(sos.gain(0.0) < 1e-12);
        assert!((sos.gain(100.0) - 1.0).abs() < 0.01);
        assert!(sos.gain(10.0) <= 0.1);
    }

    #[test]
    fn invalid_edges_rejected() {
        let bad = FilterSpec { order: 6, low_hz: 200.0, high_hz: 40.0 };
        assert!(design_bandpass(&bad, 2000.0).is_err());
        let above_nyquist = FilterSpec { order: 6, low_hz: 40.0, high_hz: 1200.0 };
        assert!(design_bandpass(&above_nyquist, 2000.0).is_err());
    }

    #[test]
    fn odd_order_pairs_real_poles() {
        let spec = FilterSpec { order: 3, low_hz: 40.0, high_hz: 200.0 };
        let sos = design_bandpass(&spec, 2000.0).unwrap();
        assert_eq!(sos.sections.len(), 3);
        for f in [20.0, 40.0, 90.0, 200.0, 500.0] {
            let want = butterworth_bandpass_magnitude(&spec, 2000.0, f);
            assert!((sos.gain(f) - want).abs() < 1e-9);
        }
    }

    #[test]
    fn decimate_selects_indices() {
        let b = SignalBuffer::from_channels(vec![(0..8).map(f64::from).collect()], 2000.0).unwrap();
        let d = decimate(&b, 4, 200.0).unwrap();
        assert_eq!(d.channel(0), &[0.0, 4.0]);
        assert_eq!(d.sample_rate_hz(), 500.0);
        assert_eq!(decimate(&b, 1, 200.0).unwrap(), b);
        assert!(decimate(&b, 8, 200.0).is_err());
        assert!(decimate(&b, 0, 200.0).is_err());
    }
}
