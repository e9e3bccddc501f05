//! Reverse-mode versus central finite-difference gradients.

use rand::Rng;
use serde::Serialize;

use super::layers::{self, Act, NormAxis};
use super::loss::{focal_loss_logits, FocalConfig};
use super::lstm::{lstm_backward, lstm_forward, LstmWeights};
use super::model::{Mode, Model, ModelConfig};
use crate::error::Result;
use crate::rng;

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }
}

/// Settings of the tiny full-model check.
#[derive(Debug, Clone)]
pub struct TinySetup {
    pub channels: usize,
    pub frames: usize,
    pub segment_len: usize,
    pub width: Option<usize>,
    pub norm_axis: NormAxis,
    pub seed: u64,
    /// Multiplies the analytic gradient; anything but 1 should fail the check.
    pub fault_scale: f64,
}

impl Default for TinySetup {
    fn default() -> Self {
        Self { channels: 4, frames: 3, segment_len: 10, width: None, norm_axis: NormAxis::Channel, seed: 7, fault_scale: 1.0 }
    }
}

/// Checks every parameter tensor of the model, domain head and dropout included.
pub fn grad_check(setup: &TinySetup) -> Result<GradReport> {
    let mut cfg = ModelConfig::new(setup.channels, setup.segment_len);
    cfg.width = setup.width;
    cfg.norm_axis = setup.norm_axis;
    let mut model = Model::new(cfg, &mut rng::stream(setup.seed, &[1]))?;
    let mut r = rng::stream(setup.seed, &[2]);
    let x: Vec<f64> = (0..setup.frames * setup.channels * setup.segment_len).map(|_| r.random_range(0.0..2.0)).collect();
    let labels: Vec<usize> = (0..setup.frames).map(|i| i % 3).collect();
    let domains: Vec<usize> = (0..setup.frames).map(|i| (i + 2) % 3).collect();
    let focal = FocalConfig::default();

    // Upstream of the reversal layer the reverse pass follows L_m - lambda * L_d by construction.
    let lambda = model.config.grl.lambda;
    let ada = model.ada_mask();
    let loss_and_grads = |m: &Model, want_grad: bool| -> Result<(f64, f64, Option<Vec<super::tensor::Tensor>>)> {
        let mut drng = rng::stream(setup.seed, &[3]);
        let (out, cache) = m.forward(&x, 1, Mode::Train(&mut drng), true)?;
        let (lm, dm) = focal_loss_logits(&out.probs, 3, &labels, &focal)?;
        let dp = out.domain_probs.as_ref().expect("domain head ran");
        let (ld, dd) = focal_loss_logits(dp, 3, &domains, &focal)?;
        let grads = if want_grad { Some(m.backward(&cache, &dm, Some(&dd))?) } else { None };
        Ok((lm, ld, grads))
    };

    let (_, _, grads) = loss_and_grads(&model, true)?;
    let grads = grads.expect("requested");
    let mut tensors = Vec::new();
    for ti in 0..model.params.len() {
        let mut worst: f64 = 0.0;
        for k in 0..model.params[ti].values.len() {
            let orig = model.params[ti].values[k];
            model.params[ti].values[k] = orig + FD_STEP;
            let (pm, pd, _) = loss_and_grads(&model, false)?;
            model.params[ti].values[k] = orig - FD_STEP;
            let (mm, md, _) = loss_and_grads(&model, false)?;
            model.params[ti].values[k] = orig;
            let w = if ada[ti] { 1.0 } else { -lambda };
            let numeric = ((pm + w * pd) - (mm + w * md)) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(grads[ti].values[k] * setup.fault_scale, numeric));
        }
        tensors.push(TensorCheck { name: model.names[ti].clone(), max_rel_error: worst });
    }
    Ok(GradReport { tensors })
}

fn weighted_sum(y: &Act, wts: &[f64]) -> f64 {
    y.data.iter().zip(wts).map(|(a, b)| a * b).sum()
}

/// Linear layer against finite differences on `sum(c * y)`.
pub fn check_linear(seed: u64) -> f64 {
    let mut r = rng::stream(seed, &[10]);
    let (i, o, n) = (4, 3, 5);
    let mut v = |k: usize| (0..k).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let x = Act { rows: i, frames: n, len: 1, data: v(i * n) };
    let mut w = v(o * i);
    let b = v(o);
    let c = v(o * n);
    let y = layers::linear(&x, &w, &b, o);
    let mut dw = vec![0.0; o * i];
    let mut db = vec![0.0; o];
    let dy = Act { rows: o, frames: n, len: 1, data: c.clone() };
    let dx = layers::linear_backward(&dy, &x, &w, &mut dw, &mut db);
    let _ = y;
    let mut worst: f64 = 0.0;
    for k in 0..w.len() {
        let orig = w[k];
        w[k] = orig + FD_STEP;
        let lp = weighted_sum(&layers::linear(&x, &w, &b, o), &c);
        w[k] = orig - FD_STEP;
        let lm = weighted_sum(&layers::linear(&x, &w, &b, o), &c);
        w[k] = orig;
        worst = worst.max(relative_error(dw[k], (lp - lm) / (2.0 * FD_STEP)));
    }
    let mut xp = x.clone();
    for k in 0..x.data.len() {
        xp.data[k] = x.data[k] + FD_STEP;
        let lp = weighted_sum(&layers::linear(&xp, &w, &b, o), &c);
        xp.data[k] = x.data[k] - FD_STEP;
        let lm = weighted_sum(&layers::linear(&xp, &w, &b, o), &c);
        xp.data[k] = x.data[k];
        worst = worst.max(relative_error(dx.data[k], (lp - lm) / (2.0 * FD_STEP)));
    }
    worst
}

/// Two-sequence LSTM layer against finite differences on `sum(c * h)`.
pub fn check_lstm(seed: u64) -> f64 {
    let mut r = rng::stream(seed, &[11]);
    let (ni, hs, batch, steps) = (3, 4, 2, 4);
    let mut v = |k: usize| (0..k).map(|_| r.random_range(-0.8..0.8)).collect::<Vec<f64>>();
    let mut params = [v(4 * hs * ni), v(4 * hs * hs), v(4 * hs)];
    let x = Act { rows: ni, frames: batch * steps, len: 1, data: v(ni * batch * steps) };
    let c = v(hs * batch * steps);
    let run = |p: &[Vec<f64>; 3], x: &Act| {
        let w = LstmWeights { wih: &p[0], whh: &p[1], b: &p[2], hidden: hs };
        weighted_sum(&lstm_forward(x, &w, batch).0, &c)
    };
    let w = LstmWeights { wih: &params[0], whh: &params[1], b: &params[2], hidden: hs };
    let (_, cache) = lstm_forward(&x, &w, batch);
    let dy = Act { rows: hs, frames: batch * steps, len: 1, data: c.clone() };
    let mut g = [vec![0.0; params[0].len()], vec![0.0; params[1].len()], vec![0.0; params[2].len()]];
    let [g0, g1, g2] = &mut g;
    let dx = lstm_backward(&dy, &x, &cache, &w, g0, g1, g2);
    let mut worst: f64 = 0.0;
    for t in 0..3 {
        for k in 0..params[t].len() {
            let orig = params[t][k];
            params[t][k] = orig + FD_STEP;
            let lp = run(&params, &x);
            params[t][k] = orig - FD_STEP;
            let lm = run(&params, &x);
            params[t][k] = orig;
            worst = worst.max(relative_error(g[t][k], (lp - lm) / (2.0 * FD_STEP)));
        }
    }
    let mut xp = x.clone();
    for k in 0..x.data.len() {
        xp.data[k] = x.data[k] + FD_STEP;
        let lp = run(&params, &xp);
        xp.data[k] = x.data[k] - FD_STEP;
        let lm = run(&params, &xp);
        xp.data[k] = x.data[k];
        worst = worst.max(relative_error(dx.data[k], (lp - lm) / (2.0 * FD_STEP)));
    }
    worst
}

/// Focal loss gradient with respect to logits.
pub fn check_focal(seed: u64) -> Result<f64> {
    let mut r = rng::stream(seed, &[12]);
    let (k, n) = (3, 6);
    let mut z: Vec<f64> = (0..k * n).map(|_| r.random_range(-2.0..2.0)).collect();
    let labels: Vec<usize> = (0..n).map(|i| (i * 7 + 1) % 3).collect();
    let cfg = FocalConfig::default();
    let eval = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
        let p = layers::softmax_columns(&Act { rows: k, frames: n, len: 1, data: z.to_vec() });
        focal_loss_logits(&p.data, k, &labels, &cfg)
    };
    let (_, dz) = eval(&z)?;
    let mut worst: f64 = 0.0;
    for i in 0..z.len() {
        let orig = z[i];
        z[i] = orig + FD_STEP;
        let (lp, _) = eval(&z)?;
        z[i] = orig - FD_STEP;
        let (lm, _) = eval(&z)?;
        z[i] = orig;
        worst = worst.max(relative_error(dz[i], (lp - lm) / (2.0 * FD_STEP)));
    }
    Ok(worst)
}
