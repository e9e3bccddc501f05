//! EMG trial files: CSV (`time_s,ch01,...`) or little-endian f64 binary,
//! each described by a JSON sidecar manifest.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::buffer::SignalBuffer;
use super::features::FeatureFrame;
use crate::error::{Error, Result};

pub const TRIAL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElectrodePosition {
    Left,
    Center,
    Right,
}

impl ElectrodePosition {
    pub const ALL: [ElectrodePosition; 3] = [Self::Left, Self::Center, Self::Right];

    pub fn index(self) -> usize {
        match self {
            Self::Left => 0,
            Self::Center => 1,
            Self::Right => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Left => "left",
            Self::Center => "center",
            Self::Right => "right",
        }
    }
}

impl std::str::FromStr for ElectrodePosition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Self::Left),
            "center" => Ok(Self::Center),
            "right" => Ok(Self::Right),
            other => Err(Error::Config(format!("unknown electrode position {other:?}"))),
        }
    }
}

impl std::fmt::Display for ElectrodePosition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Csv,
    /// Row-interleaved little-endian f64, no header.
    F64le,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialManifest {
    pub subject: String,
    pub session: String,
    pub electrode_position: ElectrodePosition,
    pub sample_rate_hz: f64,
    pub channels: Vec<String>,
    #[serde(default)]
    pub format: DataFormat,
    /// Data file relative to the manifest; defaults to the manifest stem.
    #[serde(default)]
    pub data_file: Option<String>,
}

impl TrialManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_owned(), msg: e.to_string() })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn data_path(&self, manifest_path: &Path) -> PathBuf {
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        match &self.data_file {
            Some(f) => dir.join(f),
            None => {
                let stem = manifest_path.file_stem().and_then(|s| s.to_str()).unwrap_or("trial");
                let ext = match self.format {
                    DataFormat::Csv => "csv",
                    DataFormat::F64le => "bin",
                };
                dir.join(format!("{stem}.{ext}"))
            }
        }
    }
}

/// Writes via a temporary file and rename so readers never see partial files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = BufWriter::new(fs::File::create(&tmp)?);
        f.write_all(bytes)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn emg_csv_bytes(buf: &SignalBuffer) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["time_s".to_string()];
    header.extend(buf.channel_names().iter().cloned());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(buf.n_channels() + 1);
    for i in 0..buf.len() {
        row.clear();
        row.push(format!("{:.6}", buf.time_of(i)));
        row.extend(buf.channels().iter().map(|c| format!("{:e}", c[i])));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_emg_csv(path: &Path, buf: &SignalBuffer) -> Result<()> {
    write_atomic(path, &emg_csv_bytes(buf)?)
}

pub fn read_emg_csv(path: &Path, sample_rate_hz: f64) -> Result<SignalBuffer> {
    let fmt_err = |msg: String| Error::Format { path: path.to_owned(), msg };
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.get(0) != Some("time_s") {
        return Err(fmt_err("first column must be time_s".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let mut data = vec![Vec::new(); names.len()];
    let mut start = None;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != names.len() + 1 {
            return Err(fmt_err(format!("row has {} fields, expected {}", rec.len(), names.len() + 1)));
        }
        if start.is_none() {
            start = Some(rec[0].parse::<f64>().map_err(|e| fmt_err(e.to_string()))?);
        }
        for (c, field) in rec.iter().skip(1).enumerate() {
            data[c].push(field.trim().parse::<f64>().map_err(|e| fmt_err(format!("{field:?}: {e}")))?);
        }
    }
    SignalBuffer::with_start(data, sample_rate_hz, names, start.unwrap_or(0.0))
}

pub fn write_emg_f64le(path: &Path, buf: &SignalBuffer) -> Result<()> {
    let mut bytes = Vec::with_capacity(buf.len() * buf.n_channels() * 8);
    for i in 0..buf.len() {
        for c in buf.channels() {
            bytes.extend_from_slice(&c[i].to_le_bytes());
        }
    }
    write_atomic(path, &bytes)
}

pub fn read_emg_f64le(path: &Path, manifest: &TrialManifest) -> Result<SignalBuffer> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let n_ch = manifest.channels.len();
    if n_ch == 0 || bytes.len() % (8 * n_ch) != 0 {
        return Err(Error::Format { path: path.to_owned(), msg: "size is not a whole number of rows".into() });
    }
    let mut data = vec![Vec::with_capacity(bytes.len() / (8 * n_ch)); n_ch];
    for (i, chunk) in bytes.chunks_exact(8).enumerate() {
        data[i % n_ch].push(f64::from_le_bytes(chunk.try_into().expect("8-byte chunk")));
    }
    SignalBuffer::new(data, manifest.sample_rate_hz, manifest.channels.clone())
}

/// Loads a trial given its manifest path.
pub fn load_trial(manifest_path: &Path) -> Result<(TrialManifest, SignalBuffer)> {
    let m = TrialManifest::read(manifest_path)?;
    let data_path = m.data_path(manifest_path);
    let buf = match m.format {
        DataFormat::Csv => read_emg_csv(&data_path, m.sample_rate_hz)?,
        DataFormat::F64le => read_emg_f64le(&data_path, &m)?,
    };
    if buf.channel_names() != m.channels.as_slice() {
        return Err(Error::Format {
            path: data_path,
            msg: "channel names disagree with manifest".into(),
        });
    }
    Ok((m, buf))
}

/// One row per frame, flattened row-major, preceded by the emission time.
pub fn write_frames_csv(path: &Path, frames: &[FeatureFrame]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(f) = frames.first() {
        let mut header = vec!["t_emit".to_string()];
        for r in 0..f.segment_len {
            for c in 0..f.concat_channels {
                header.push(format!("r{r:02}_c{c:03}"));
            }
        }
        w.write_record(&header)?;
    }
    for f in frames {
        let mut row = vec![format!("{:.6}", f.t_emit)];
        row.extend(f.values.iter().map(|v| format!("{v:e}")));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}
