//! Self-checks run by `emgshift check`.

use rand::Rng;
use serde::Serialize;

use crate::config::Config;
use crate::error::Result;
use crate::kinematics::{forward_kinematics, generate_task_with, inverse_kinematics, TaskKind, WristTarget};
use crate::labeling::{self, LABEL_RATE_HZ};
use crate::nn::gradcheck::{self, TinySetup};
use crate::rng;
use crate::signal::swn::{normalize_window, rolling_normalize, window_stats};
use crate::signal::{design_bandpass, RAW_RATE_HZ};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    /// Worst observed deviation.
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn at_most(name: &'static str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self { name, value, tolerance, passed: value <= tolerance, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub checks: Vec<CheckResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CheckOptions {
    /// Scales analytic gradients so the gradient check must fail.
    pub inject_fault: bool,
}

pub fn run_checks(cfg: &Config, opts: CheckOptions) -> Result<CheckReport> {
    let seed = cfg.seed;
    let mut checks = Vec::new();

    let setup = TinySetup { seed, fault_scale: if opts.inject_fault { 1.05 } else { 1.0 }, ..TinySetup::default() };
    let g = gradcheck::grad_check(&setup)?;
    checks.push(CheckResult::at_most("grad_full_model", g.max_rel_error(), 1e-3, format!("{} tensors", g.tensors.len())));
    checks.push(CheckResult::at_most("grad_linear", gradcheck::check_linear(seed), 1e-6, ""));
    checks.push(CheckResult::at_most("grad_lstm", gradcheck::check_lstm(seed), 1e-4, ""));
    checks.push(CheckResult::at_most("grad_focal", gradcheck::check_focal(seed)?, 1e-5, ""));

    checks.extend(filter_checks(cfg)?);
    checks.push(fk_ik_check(cfg, seed)?);
    checks.extend(swn_checks(seed));
    checks.extend(labeling_checks(cfg, seed)?);
    Ok(CheckReport { checks })
}

fn filter_checks(cfg: &Config) -> Result<Vec<CheckResult>> {
    let sos = design_bandpass(&cfg.filter, RAW_RATE_HZ)?;
    let corner = std::f64::consts::FRAC_1_SQRT_2;
    let dev = [cfg.filter.low_hz, cfg.filter.high_hz]
        .iter()
        .map(|&f| (sos.gain(f) / corner - 1.0).abs())
        .fold(0.0, f64::max);
    // attenuation margin in dB below the 20 dB requirement; negative passes
    let stop = [cfg.filter.low_hz / 4.0, cfg.filter.high_hz * 2.0]
        .iter()
        .map(|&f| 20.0 + 20.0 * sos.gain(f).log10())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![
        CheckResult::at_most("filter_corner_gain", dev, 0.02, "relative deviation from 1/sqrt(2)"),
        CheckResult::at_most("filter_stopband", stop, 0.0, "dB above -20 dB at low/4 and 2*high"),
    ])
}

fn fk_ik_check(cfg: &Config, seed: u64) -> Result<CheckResult> {
    let arm = cfg.synth.task.arm;
    let mut r = rng::stream(seed, &[rng::label_key("check-fkik")]);
    let inner = (arm.l_sld - arm.l_elb).abs() + 1e-3;
    let outer = arm.reach() - 1e-3;
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let rad = r.random_range(inner..outer);
        let phi = r.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let t = WristTarget { x: rad * phi.cos(), y: rad * phi.sin() };
        let back = forward_kinematics(inverse_kinematics(t, &arm)?, &arm);
        worst = worst.max((back.x - t.x).hypot(back.y - t.y));
    }
    Ok(CheckResult::at_most("fk_ik_round_trip", worst, 1e-9, "metres over 10^4 targets"))
}

fn swn_checks(seed: u64) -> Vec<CheckResult> {
    let mut r = rng::stream(seed, &[rng::label_key("check-swn")]);
    let (mut mean_err, mut std_err, mut mismatches) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..10_000 {
        let n = r.random_range(16..256);
        let scale = 10f64.powf(r.random_range(-2.0..2.0));
        let offset = r.random_range(-50.0..50.0);
        let w: Vec<f64> = (0..n).map(|_| offset + scale * r.random_range(-1.0..1.0)).collect();
        let z = normalize_window(&w, 1e-8);
        let (m, s) = window_stats(&z);
        mean_err = mean_err.max(m.abs());
        std_err = std_err.max((s - 1.0).abs());
    }
    for _ in 0..50 {
        let win = r.random_range(4..64);
        let x: Vec<f64> = (0..win * 4).map(|_| r.random_range(-1.0..1.0)).collect();
        for (k, v) in rolling_normalize(&x, win, 1e-8).iter().enumerate() {
            let block = normalize_window(&x[k..k + win], 1e-8);
            if v.to_bits() != block[win - 1].to_bits() {
                mismatches += 1;
            }
        }
    }
    vec![
        CheckResult::at_most("swn_block_mean", mean_err, 1e-10, "over 10^4 windows"),
        CheckResult::at_most("swn_block_std", std_err, 1e-10, "over 10^4 windows"),
        CheckResult::at_most("swn_rolling_block", mismatches as f64, 0.0, "bitwise mismatches"),
    ]
}

fn labeling_checks(cfg: &Config, seed: u64) -> Result<Vec<CheckResult>> {
    let th = cfg.labels;
    let min = th.min_run(LABEL_RATE_HZ);
    let (mut short, mut non_idem, mut asym) = (0usize, 0usize, 0usize);
    for i in 0..100u64 {
        let kind = TaskKind::ALL[i as usize % TaskKind::ALL.len()];
        let task = generate_task_with(kind, rng::derive_seed(seed, &[rng::label_key("check-label"), i]), &cfg.synth.task)?;
        let theta = task.sample(LABEL_RATE_HZ)?.elbow_angles();
        let out = labeling::label_pipeline(&theta, LABEL_RATE_HZ, &th)?;
        let runs = out.runs();
        if runs.iter().any(|r| r.len >= min) {
            short += runs.iter().filter(|r| r.len < min).count();
        }
        let omega = labeling::angular_velocity(&theta, LABEL_RATE_HZ)?;
        let s1 = labeling::step1_threshold(&omega, &th, LABEL_RATE_HZ);
        let s2 = labeling::step2_drop_short(&s1, &th);
        non_idem += usize::from(labeling::step2_drop_short(&s2, &th).labels != s2.labels);
        non_idem += usize::from(labeling::step5_absorb_short(&out, &th).labels != out.labels);
        let neg: Vec<f64> = omega.iter().map(|w| -w).collect();
        let flipped = labeling::step1_threshold(&neg, &th, LABEL_RATE_HZ);
        asym += usize::from(flipped.labels != labeling::mirror(&s1.labels));
    }
    let check = |name, n: usize, what: &str| CheckResult::at_most(name, n as f64, 0.0, format!("{what} over 100 trials"));
    Ok(vec![
        check("label_min_run", short, "runs shorter than w_t"),
        check("label_idempotent", non_idem, "steps 2/5 changing their own output"),
        check("label_sign_symmetry", asym, "step 1 mirror mismatches"),
    ])
}
