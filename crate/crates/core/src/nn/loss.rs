//! Focal loss with per-batch label-rate weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PROB_FLOOR: f64 = 1e-12;

/// Class weights for the loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alpha {
    /// `count_l / count` over the current batch.
    LabelRate,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FocalConfig {
    pub gamma: f64,
    pub alpha: Alpha,
}

impl Default for FocalConfig {
    fn default() -> Self {
        Self { gamma: 2.0, alpha: Alpha::LabelRate }
    }
}

impl FocalConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::Config("focal gamma must be >= 0".into()));
        }
        if let Alpha::Fixed(a) = &self.alpha {
            if a.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Config("focal alpha must be >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn weights(&self, labels: &[usize], k: usize) -> Vec<f64> {
        match &self.alpha {
            Alpha::Fixed(a) => a.clone(),
            Alpha::LabelRate => {
                let mut c = vec![0.0; k];
                for &l in labels {
                    c[l] += 1.0;
                }
                let n = labels.len().max(1) as f64;
                c.iter().map(|v| v / n).collect()
            }
        }
    }
}

pub struct FocalOutput {
    pub loss: f64,
    /// Gradient with respect to the probabilities (`[K, N]`, only the true-class entries are non-zero).
    pub grad_probs: Vec<f64>,
}

fn focal_terms(p: f64, gamma: f64) -> (f64, f64) {
    let pc = p.max(PROB_FLOOR);
    let q = 1.0 - p;
    let ce = -pc.ln();
    let loss = q.powf(gamma) * ce;
    let first = if q > 0.0 && gamma != 0.0 { gamma * q.powf(gamma - 1.0) * pc.ln() } else { 0.0 };
    let dldp = if p > PROB_FLOOR { first - q.powf(gamma) / p } else { first };
    (loss, dldp)
}

/// Summed focal loss over the columns of `probs` (`[K, N]`, column-major classes).
pub fn focal_loss(probs: &[f64], k: usize, labels: &[usize], cfg: &FocalConfig) -> Result<FocalOutput> {
    let n = labels.len();
    if probs.len() != k * n {
        return Err(Error::Shape(format!("probs hold {} values, expected {k}x{n}", probs.len())));
    }
    if labels.iter().any(|&l| l >= k) {
        return Err(Error::Shape("label out of range".into()));
    }
    let alpha = cfg.weights(labels, k);
    let mut grad = vec![0.0; k * n];
    let mut loss = 0.0;
    for (j, &l) in labels.iter().enumerate() {
        let (li, d) = focal_terms(probs[l * n + j], cfg.gamma);
        loss += alpha[l] * li;
        grad[l * n + j] = alpha[l] * d;
    }
    Ok(FocalOutput { loss, grad_probs: grad })
}

/// Focal loss evaluated from softmax probabilities, with the gradient taken
/// through the softmax to the logits.
pub fn focal_loss_logits(probs: &[f64], k: usize, labels: &[usize], cfg: &FocalConfig) -> Result<(f64, Vec<f64>)> {
    let out = focal_loss(probs, k, labels, cfg)?;
    let n = labels.len();
    let mut dz = vec![0.0; k * n];
    for (j, &l) in labels.iter().enumerate() {
        let g = out.grad_probs[l * n + j];
        let p = probs[l * n + j];
        for i in 0..k {
            let delta = if i == l { 1.0 } else { 0.0 };
            dz[i * n + j] = g * p * (delta - probs[i * n + j]);
        }
    }
    Ok((out.loss, dz))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_case() {
        let cfg = FocalConfig { gamma: 2.0, alpha: Alpha::Fixed(vec![1.0, 1.0]) };
        let out = focal_loss(&[0.5, 0.5], 2, &[0], &cfg).unwrap();
        assert!((out.loss - 0.25 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_is_free() {
        let probs = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let out = focal_loss(&probs, 3, &[0, 1, 2], &FocalConfig::default()).unwrap();
        assert_eq!(out.loss, 0.0);
        let cfg = FocalConfig { gamma: 0.0, ..Default::default() };
        assert_eq!(focal_loss(&probs, 3, &[0, 1, 2], &cfg).unwrap().loss, 0.0);
    }

    #[test]
    fn gamma_zero_balanced_is_scaled_ce() {
        let probs = [0.2, 0.5, 0.1, 0.3, 0.4, 0.6, 0.5, 0.1, 0.3];
        let labels = [0, 1, 2];
        let cfg = FocalConfig { gamma: 0.0, ..Default::default() };
        let ce: f64 = labels.iter().enumerate().map(|(j, &l)| -(probs[l * 3 + j] as f64).ln()).sum();
        let out = focal_loss(&probs, 3, &labels, &cfg).unwrap();
        assert!((out.loss - ce / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let out = focal_loss(&[0.0, 1.0], 2, &[0], &FocalConfig::default()).unwrap();
        assert!(out.loss.is_finite() && out.loss > 0.0);
        assert!(out.grad_probs.iter().all(|v| v.is_finite()));
    }
}
