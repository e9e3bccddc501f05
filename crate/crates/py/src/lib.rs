//! Python bindings: preprocessing, labeling, kinematics, statistics, dataset
//! synthesis and the experiment runner.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use emgshift::checks::{run_checks, CheckOptions};
use emgshift::config::Config;
use emgshift::experiment::{parse_strategies, run_experiment, Dataset, GridProfile};
use emgshift::geometry::{alignment_transform, Frame3, Vec3};
use emgshift::kinematics::{self as kin, JointState, TaskKind, WristTarget};
use emgshift::labeling::{self, LabelThresholds};
use emgshift::signal::{self, swn::rolling_normalize, FilterSpec, PipelineConfig, SignalBuffer};

fn py_err(e: emgshift::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Parsed configuration; an empty string gives the defaults.
#[pyclass(name = "Config")]
struct PyConfig {
    inner: Config,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (toml = ""))]
    fn new(toml: &str) -> PyResult<Self> {
        Ok(Self { inner: Config::from_toml(toml).map_err(py_err)? })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn set_seed(&mut self, seed: u64) {
        self.inner.set_seed(seed);
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(py_err)
    }
}

fn config_or_default(cfg: Option<PyRef<'_, PyConfig>>) -> Config {
    cfg.map(|c| c.inner.clone()).unwrap_or_default()
}

/// Magnitude response of the band-pass at each frequency.
#[pyfunction]
#[pyo3(signature = (freqs_hz, order = 6, low_hz = 40.0, high_hz = 200.0, sample_rate_hz = 2000.0))]
fn bandpass_gain(freqs_hz: Vec<f64>, order: usize, low_hz: f64, high_hz: f64, sample_rate_hz: f64) -> PyResult<Vec<f64>> {
    let spec = FilterSpec { order, low_hz, high_hz };
    let sos = signal::design_bandpass(&spec, sample_rate_hz).map_err(py_err)?;
    Ok(freqs_hz.iter().map(|&f| sos.gain(f)).collect())
}

/// Rolling z-score; element k normalizes sample k + window - 1.
#[pyfunction]
#[pyo3(signature = (x, window, epsilon = 1e-8))]
fn swn(x: Vec<f64>, window: usize, epsilon: f64) -> Vec<f64> {
    rolling_normalize(&x, window, epsilon)
}

/// Raw EMG `[channel][sample]` at 2 kHz to feature frames and their emit times.
#[pyfunction]
#[pyo3(signature = (emg, swn_ms = Some(1000), feature_ms = 1000))]
fn preprocess(emg: Vec<Vec<f64>>, swn_ms: Option<u32>, feature_ms: u32) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let buf = SignalBuffer::from_channels(emg, signal::RAW_RATE_HZ).map_err(py_err)?;
    let cfg = PipelineConfig::with_windows(swn_ms, feature_ms);
    let stream = signal::preprocess(&buf, &cfg).map_err(py_err)?;
    Ok(stream.frames().into_iter().map(|f| (f.values, f.t_emit)).unzip())
}

/// Motion labels ("rest", "flexion", "extension") for an elbow-angle series.
#[pyfunction]
#[pyo3(signature = (theta, rate_hz = 20.0))]
fn label_elbow(theta: Vec<f64>, rate_hz: f64) -> PyResult<Vec<&'static str>> {
    let s = labeling::label_pipeline(&theta, rate_hz, &LabelThresholds::default()).map_err(py_err)?;
    Ok(s.labels.iter().map(|l| l.name()).collect())
}

/// Elbow angle of a generated target-tracking task (kind 1..=5).
#[pyfunction]
#[pyo3(signature = (kind, seed, rate_hz = 20.0))]
fn task_elbow_angles(kind: u8, seed: u64, rate_hz: f64) -> PyResult<Vec<f64>> {
    let kind = TaskKind::from_number(kind).map_err(py_err)?;
    let task = kin::generate_task(kind, seed).map_err(py_err)?;
    Ok(task.sample(rate_hz).map_err(py_err)?.elbow_angles())
}

#[pyfunction]
fn forward_kinematics(theta_sld: f64, theta_elb: f64) -> (f64, f64) {
    let w = kin::forward_kinematics(JointState { theta_sld, theta_elb }, &Default::default());
    (w.x, w.y)
}

#[pyfunction]
fn inverse_kinematics(x: f64, y: f64) -> PyResult<(f64, f64)> {
    let j = kin::inverse_kinematics(WristTarget { x, y }, &Default::default()).map_err(py_err)?;
    Ok((j.theta_sld, j.theta_elb))
}

/// Rotation rows and translation mapping the marked frame onto the canonical basis.
#[pyfunction]
fn align_frame(x_tip: [f64; 3], y_tip: [f64; 3], z_tip: [f64; 3], origin: [f64; 3]) -> PyResult<(Vec<[f64; 3]>, [f64; 3])> {
    let v = |a: [f64; 3]| Vec3::new(a[0], a[1], a[2]);
    let tf = alignment_transform(&Frame3::from_points(v(x_tip), v(y_tip), v(z_tip), v(origin))).map_err(py_err)?;
    let r = &tf.rotation;
    let rows = (0..3).map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]).collect();
    let t = &tf.translation;
    Ok((rows, [t[0], t[1], t[2]]))
}

/// Two-sided Wilcoxon rank-sum test: `(statistic, p_value, exact)`.
#[pyfunction]
fn rank_sum(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64, bool)> {
    let r = emgshift::experiment::wilcoxon_rank_sum(&a, &b).map_err(py_err)?;
    Ok((r.statistic, r.p_value, r.exact))
}

#[pyfunction]
fn bonferroni(pvals: Vec<f64>, m: usize) -> PyResult<Vec<f64>> {
    emgshift::experiment::bonferroni(&pvals, m).map_err(py_err)
}

/// Writes a synthetic dataset; returns `(trials, rest_fraction)`.
#[pyfunction]
#[pyo3(signature = (out_dir, config = None))]
fn synthesize_dataset(out_dir: PathBuf, config: Option<PyRef<'_, PyConfig>>) -> PyResult<(usize, f64)> {
    let cfg = config_or_default(config);
    let s = emgshift::synth::generate_dataset(&cfg.synth_config(), &out_dir).map_err(py_err)?;
    Ok((s.trials, s.rest_fraction))
}

/// Self-checks as `(name, value, tolerance, passed)` tuples.
#[pyfunction]
#[pyo3(signature = (config = None, inject_fault = false))]
fn self_checks(config: Option<PyRef<'_, PyConfig>>, inject_fault: bool) -> PyResult<Vec<(String, f64, f64, bool)>> {
    let cfg = config_or_default(config);
    let r = run_checks(&cfg, CheckOptions { inject_fault }).map_err(py_err)?;
    Ok(r.checks.into_iter().map(|c| (c.name.to_string(), c.value, c.tolerance, c.passed)).collect())
}

/// Runs the experiment plan on a dataset directory; returns one dict per result row.
#[pyfunction]
#[pyo3(signature = (dataset_dir, config = None, strategies = None, full_grid = false, jobs = 0))]
fn run(
    py: Python<'_>,
    dataset_dir: PathBuf,
    config: Option<PyRef<'_, PyConfig>>,
    strategies: Option<&str>,
    full_grid: bool,
    jobs: usize,
) -> PyResult<Vec<Py<PyDict>>> {
    let cfg = config_or_default(config);
    let mut plan = cfg.plan(if full_grid { GridProfile::Full } else { GridProfile::Desk });
    if let Some(s) = strategies {
        plan.strategies = parse_strategies(s).map_err(py_err)?;
    }
    let data = Dataset::load(&dataset_dir).map_err(py_err)?;
    let out = py.detach(|| run_experiment(&data, &plan, jobs)).map_err(py_err)?;
    out.records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("subject", &r.subject)?;
            d.set_item("strategy", r.strategy.name())?;
            d.set_item("norm", r.norm.name())?;
            d.set_item("train_pos", r.train_pos.map(|p| p.name()))?;
            d.set_item("test_pos", r.test_pos.name())?;
            d.set_item("norm_win_ms", r.norm_win_ms)?;
            d.set_item("feat_win_ms", r.feat_win_ms)?;
            d.set_item("accuracy", r.accuracy)?;
            d.set_item("baseline", r.baseline)?;
            d.set_item("differential", r.differential)?;
            d.set_item("seed", r.seed)?;
            Ok(d.unbind())
        })
        .collect()
}

#[pymodule]
fn emgshift_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(bandpass_gain, m)?)?;
    m.add_function(wrap_pyfunction!(swn, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(label_elbow, m)?)?;
    m.add_function(wrap_pyfunction!(task_elbow_angles, m)?)?;
    m.add_function(wrap_pyfunction!(forward_kinematics, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_kinematics, m)?)?;
    m.add_function(wrap_pyfunction!(align_frame, m)?)?;
    m.add_function(wrap_pyfunction!(rank_sum, m)?)?;
    m.add_function(wrap_pyfunction!(bonferroni, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(self_checks, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
