//! Rest / flexion / extension labels from elbow angular velocity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LABEL_RATE_HZ: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Rest,
    Flexion,
    Extension,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Rest, Label::Flexion, Label::Extension];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or_else(|| Error::Config(format!("label index {i} out of range")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Rest => "rest",
            Label::Flexion => "flexion",
            Label::Extension => "extension",
        }
    }

    pub fn is_movement(self) -> bool {
        self != Label::Rest
    }

    fn flipped(self) -> Self {
        match self {
            Label::Rest => Label::Rest,
            Label::Flexion => Label::Extension,
            Label::Extension => Label::Flexion,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rest" => Ok(Label::Rest),
            "flexion" => Ok(Label::Flexion),
            "extension" => Ok(Label::Extension),
            _ => Err(Error::Config(format!("unknown label '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelThresholds {
    pub th_omega1: f64,
    pub th_omega2: f64,
    pub th_s: f64,
    pub w_t_ms: f64,
}

impl Default for LabelThresholds {
    fn default() -> Self {
        Self { th_omega1: 3.0, th_omega2: 1.0, th_s: 5.0, w_t_ms: 200.0 }
    }
}

impl LabelThresholds {
    pub fn validate(&self) -> Result<()> {
        let all = [self.th_omega1, self.th_omega2, self.th_s, self.w_t_ms];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Config("label thresholds must be positive".into()));
        }
        if self.th_omega2 >= self.th_omega1 {
            return Err(Error::Config("th_omega2 must be below th_omega1".into()));
        }
        Ok(())
    }

    /// Minimum run length in samples.
    pub fn min_run(&self, rate_hz: f64) -> usize {
        (self.w_t_ms * rate_hz / 1000.0 - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSeries {
    pub labels: Vec<Label>,
    pub omega: Vec<f64>,
    pub rate_hz: f64,
    pub start_time_s: f64,
}

impl LabelSeries {
    pub fn new(labels: Vec<Label>, omega: Vec<f64>, rate_hz: f64) -> Result<Self> {
        if labels.len() != omega.len() {
            return Err(Error::Shape(format!("{} labels vs {} omega samples", labels.len(), omega.len())));
        }
        Ok(Self { labels, omega, rate_hz, start_time_s: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn time_of(&self, i: usize) -> f64 {
        self.start_time_s + i as f64 / self.rate_hz
    }

    /// Label in effect at time `t` (nearest earlier sample).
    pub fn label_at(&self, t: f64) -> Option<Label> {
        let pos = ((t - self.start_time_s) * self.rate_hz + 1e-9).floor();
        if pos < 0.0 {
            return None;
        }
        self.labels.get(pos as usize).copied()
    }

    pub fn runs(&self) -> Vec<Run> {
        runs(&self.labels)
    }

    pub fn class_fractions(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for l in &self.labels {
            c[l.index()] += 1.0;
        }
        let n = self.labels.len().max(1) as f64;
        c.map(|v| v / n)
    }

    fn with_labels(&self, labels: Vec<Label>) -> Self {
        Self { labels, omega: self.omega.clone(), rate_hz: self.rate_hz, start_time_s: self.start_time_s }
    }

    /// CSV `time_s,label`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time_s", "label"])?;
        for (i, l) in self.labels.iter().enumerate() {
            w.write_record([format!("{:.6}", self.time_of(i)), l.name().to_string()])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    /// Reads labels written by [`to_csv`](Self::to_csv). Omega is not stored and comes back as zeros.
    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["time_s", "label"] {
            return Err(Error::Format { path: "<labels>".into(), msg: "expected header time_s,label".into() });
        }
        let mut times = Vec::new();
        let mut labels = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let t: f64 = rec[0]
                .parse()
                .map_err(|_| Error::Format { path: "<labels>".into(), msg: format!("bad time '{}'", &rec[0]) })?;
            times.push(t);
            labels.push(rec[1].parse()?);
        }
        let rate_hz = if times.len() >= 2 { 1.0 / (times[1] - times[0]) } else { LABEL_RATE_HZ };
        let rate_hz = (rate_hz * 1e3).round() / 1e3;
        let n = labels.len();
        Ok(Self { labels, omega: vec![0.0; n], rate_hz, start_time_s: times.first().copied().unwrap_or(0.0) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub label: Label,
    pub start: usize,
    pub len: usize,
}

impl Run {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

pub fn runs(labels: &[Label]) -> Vec<Run> {
    let mut out: Vec<Run> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(r) if r.label == l => r.len += 1,
            _ => out.push(Run { label: l, start: i, len: 1 }),
        }
    }
    out
}

/// Forward difference scaled by the sample rate; the last value is repeated.
pub fn angular_velocity(theta: &[f64], rate_hz: f64) -> Result<Vec<f64>> {
    if theta.len() < 2 {
        return Err(Error::InsufficientData("angular velocity needs at least 2 samples".into()));
    }
    let mut w: Vec<f64> = theta.windows(2).map(|p| (p[1] - p[0]) * rate_hz).collect();
    w.push(*w.last().unwrap());
    Ok(w)
}

pub fn step1_threshold(omega: &[f64], th: &LabelThresholds, rate_hz: f64) -> LabelSeries {
    let labels = omega
        .iter()
        .map(|&w| {
            if w > th.th_omega1 {
                Label::Flexion
            } else if w < -th.th_omega1 {
                Label::Extension
            } else {
                Label::Rest
            }
        })
        .collect();
    LabelSeries { labels, omega: omega.to_vec(), rate_hz, start_time_s: 0.0 }
}

pub fn step2_drop_short(series: &LabelSeries, th: &LabelThresholds) -> LabelSeries {
    let min = th.min_run(series.rate_hz);
    let mut labels = series.labels.clone();
    for r in series.runs() {
        if r.label.is_movement() && r.len < min {
            labels[r.start..r.end()].fill(Label::Rest);
        }
    }
    series.with_labels(labels)
}

pub fn step3_extend_onsets(series: &LabelSeries, th: &LabelThresholds) -> LabelSeries {
    let mut labels = series.labels.clone();
    let w = &series.omega;
    for r in series.runs().into_iter().filter(|r| r.label.is_movement()) {
        let mut i = r.start;
        while i > 0 && labels[i - 1] == Label::Rest && w[i - 1].abs() > th.th_omega2 {
            i -= 1;
            labels[i] = r.label;
        }
        let mut j = r.end();
        while j < labels.len() && series.labels[j] == Label::Rest && w[j].abs() > th.th_omega2 {
            labels[j] = r.label;
            j += 1;
        }
    }
    series.with_labels(labels)
}

/// Ordinary least-squares slope of `y` against time in seconds.
pub fn ols_slope(y: &[f64], rate_hz: f64) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let tm = (n - 1) as f64 / 2.0;
    let ym = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dt = i as f64 - tm;
        sxy += dt * (v - ym);
        sxx += dt * dt;
    }
    sxy / sxx * rate_hz
}

pub fn step4_bridge_transitions(series: &LabelSeries, th: &LabelThresholds) -> LabelSeries {
    let mut labels = series.labels.clone();
    let rs = series.runs();
    for k in 1..rs.len().saturating_sub(1) {
        let gap = rs[k];
        if gap.label != Label::Rest || !rs[k - 1].label.is_movement() || !rs[k + 1].label.is_movement() {
            continue;
        }
        let w = &series.omega[gap.start..gap.end()];
        let s = ols_slope(w, series.rate_hz);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let relabel = if s < th.th_s {
            None
        } else if mean >= th.th_omega2 {
            Some(Label::Flexion)
        } else if mean < -th.th_omega2 {
            Some(Label::Extension)
        } else {
            None
        };
        if let Some(l) = relabel {
            labels[gap.start..gap.end()].fill(l);
        }
    }
    series.with_labels(labels)
}

pub fn step5_absorb_short(series: &LabelSeries, th: &LabelThresholds) -> LabelSeries {
    let min = th.min_run(series.rate_hz);
    let mut out: Vec<Run> = Vec::new();
    let mut pending = 0usize;
    for r in series.runs() {
        if r.len < min {
            match out.last_mut() {
                Some(last) => last.len += r.len,
                None => pending += r.len,
            }
            continue;
        }
        match out.last_mut() {
            Some(last) if last.label == r.label => last.len += r.len,
            _ => out.push(Run { label: r.label, start: 0, len: r.len + pending }),
        }
        pending = 0;
    }
    let mut labels = Vec::with_capacity(series.len());
    for r in &out {
        labels.extend(std::iter::repeat_n(r.label, r.len));
    }
    if pending > 0 {
        // every run was short; nothing to absorb into, keep as is
        return series.clone();
    }
    series.with_labels(labels)
}

pub fn label_from_omega(omega: &[f64], rate_hz: f64, th: &LabelThresholds) -> Result<LabelSeries> {
    th.validate()?;
    let s = step1_threshold(omega, th, rate_hz);
    let s = step2_drop_short(&s, th);
    let s = step3_extend_onsets(&s, th);
    let s = step4_bridge_transitions(&s, th);
    Ok(step5_absorb_short(&s, th))
}

/// Runs all five steps on an elbow-angle series.
pub fn label_pipeline(theta: &[f64], rate_hz: f64, th: &LabelThresholds) -> Result<LabelSeries> {
    let omega = angular_velocity(theta, rate_hz)?;
    label_from_omega(&omega, rate_hz, th)
}

/// Negates flexion/extension; used by symmetry checks.
pub fn mirror(labels: &[Label]) -> Vec<Label> {
    labels.iter().map(|l| l.flipped()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    fn th() -> LabelThresholds {
        LabelThresholds::default()
    }

    fn series(labels: Vec<Label>) -> LabelSeries {
        let n = labels.len();
        LabelSeries::new(labels, vec![0.0; n], 20.0).unwrap()
    }

    #[test]
    fn velocity_of_ramp() {
        let theta: Vec<f64> = (0..10).map(|i| 0.1 * i as f64).collect();
        let w = angular_velocity(&theta, 20.0).unwrap();
        assert_eq!(w.len(), 10);
        assert!(w.iter().all(|v| (v - 2.0).abs() < 1e-12));
        assert!(angular_velocity(&[1.0], 20.0).is_err());
    }

    #[test]
    fn threshold_constant_omega() {
        assert!(step1_threshold(&[4.0; 5], &th(), 20.0).labels.iter().all(|&l| l == Flexion));
        assert!(step1_threshold(&[-4.0; 5], &th(), 20.0).labels.iter().all(|&l| l == Extension));
        assert!(step1_threshold(&[0.0; 5], &th(), 20.0).labels.iter().all(|&l| l == Rest));
        // strict inequality
        assert_eq!(step1_threshold(&[3.0], &th(), 20.0).labels, vec![Rest]);
    }

    #[test]
    fn drop_short_blips() {
        let mut l = vec![Rest; 20];
        l[5..7].fill(Flexion); // 100 ms
        l[10..16].fill(Flexion); // 300 ms
        let out = step2_drop_short(&series(l), &th());
        assert!(out.labels[5..7].iter().all(|&x| x == Rest));
        assert!(out.labels[10..16].iter().all(|&x| x == Flexion));
        let four = [vec![Rest; 3], vec![Extension; 4], vec![Rest; 3]].concat();
        assert_eq!(step2_drop_short(&series(four.clone()), &th()).labels, four);
    }

    #[test]
    fn absorb_short_runs() {
        let l = [vec![Flexion; 10], vec![Rest; 2], vec![Flexion; 10]].concat();
        assert!(step5_absorb_short(&series(l), &th()).labels.iter().all(|&x| x == Flexion));
        let l = [vec![Extension; 2], vec![Rest; 10]].concat();
        assert!(step5_absorb_short(&series(l), &th()).labels.iter().all(|&x| x == Rest));
        let l = [vec![Rest; 4], vec![Flexion; 4], vec![Extension; 5]].concat();
        assert_eq!(step5_absorb_short(&series(l.clone()), &th()).labels, l);
    }

    #[test]
    fn absorb_into_previous_output_label() {
        // two short runs in a row both go to the preceding long run
        let l = [vec![Rest; 6], vec![Flexion; 2], vec![Extension; 1], vec![Flexion; 6]].concat();
        let out = step5_absorb_short(&series(l), &th()).labels;
        assert_eq!(out, [vec![Rest; 9], vec![Flexion; 6]].concat());
    }

    #[test]
    fn extend_to_lower_threshold() {
        // triangular profile 0 -> 4 -> 0 over 40 samples at 20 Hz
        let omega: Vec<f64> = (0..41).map(|i| 4.0 - (i as f64 - 20.0).abs() * 0.2).collect();
        let s1 = step1_threshold(&omega, &th(), 20.0);
        let first3 = s1.labels.iter().position(|&l| l == Flexion).unwrap();
        // omega > 3 first at 4 - 0.2*d > 3 => d < 5 => i = 16
        assert_eq!(first3, 16);
        let s3 = step3_extend_onsets(&s1, &th());
        let first1 = s3.labels.iter().position(|&l| l == Flexion).unwrap();
        let last1 = s3.labels.iter().rposition(|&l| l == Flexion).unwrap();
        // omega > 1 => d < 15 => i in 6..=34
        assert_eq!((first1, last1), (6, 34));
    }

    #[test]
    fn extension_saturates() {
        let omega = [vec![2.0; 10], vec![5.0; 5], vec![2.0; 10]].concat();
        let s = step3_extend_onsets(&step1_threshold(&omega, &th(), 20.0), &th());
        assert!(s.labels.iter().all(|&l| l == Flexion));
    }

    #[test]
    fn bridge_steep_gap() {
        // flexion | ramp gap (slope 8 rad/s^2, mean above 1) | flexion
        let ramp: Vec<f64> = (0..6).map(|i| 0.2 + 0.4 * i as f64).collect(); // slope 0.4*20 = 8
        let s = ols_slope(&ramp, 20.0);
        assert!((s - 8.0).abs() < 1e-12);
        let omega = [vec![4.0; 5], ramp.clone(), vec![4.0; 5]].concat();
        let labels = [vec![Flexion; 5], vec![Rest; 6], vec![Flexion; 5]].concat();
        let out = step4_bridge_transitions(&LabelSeries::new(labels, omega, 20.0).unwrap(), &th());
        assert!(out.labels.iter().all(|&l| l == Flexion));
    }

    #[test]
    fn bridge_flat_gap_unchanged() {
        let omega = [vec![4.0; 5], vec![1.5; 6], vec![4.0; 5]].concat();
        let labels = [vec![Flexion; 5], vec![Rest; 6], vec![Flexion; 5]].concat();
        let s = LabelSeries::new(labels.clone(), omega, 20.0).unwrap();
        assert_eq!(step4_bridge_transitions(&s, &th()).labels, labels);
    }

    #[test]
    fn bridge_ignores_edge_gaps() {
        let ramp: Vec<f64> = (0..6).map(|i| 0.2 + 0.4 * i as f64).collect();
        let omega = [ramp, vec![4.0; 5]].concat();
        let labels = [vec![Rest; 6], vec![Flexion; 5]].concat();
        let s = LabelSeries::new(labels.clone(), omega, 20.0).unwrap();
        assert_eq!(step4_bridge_transitions(&s, &th()).labels, labels);
    }

    #[test]
    fn csv_round_trip() {
        let s = series([vec![Rest; 3], vec![Flexion; 4], vec![Extension; 2]].concat());
        let bytes = s.to_csv().unwrap();
        assert!(String::from_utf8_lossy(&bytes).starts_with("time_s,label\n0.000000,rest\n"));
        let back = LabelSeries::from_csv(&bytes).unwrap();
        assert_eq!(back.labels, s.labels);
        assert_eq!(back.rate_hz, 20.0);
    }

    #[test]
    fn threshold_validation() {
        assert!(th().validate().is_ok());
        let bad = LabelThresholds { th_omega2: 3.5, ..th() };
        assert!(bad.validate().is_err());
        assert_eq!(th().min_run(20.0), 4);
    }
}
