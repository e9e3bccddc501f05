//! Layers over activations stored as `[features, frames × time]`, row-major.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::gemm;

pub const LN_EPS: f64 = 1e-5;
pub const BLUR_KERNEL: [f64; 3] = [0.25, 0.5, 0.25];

/// Activation block: `rows` features, `frames` frames of `len` time steps each.
#[derive(Debug, Clone, PartialEq)]
pub struct Act {
    pub rows: usize,
    pub frames: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl Act {
    pub fn zeros(rows: usize, frames: usize, len: usize) -> Self {
        Self { rows, frames, len, data: vec![0.0; rows * frames * len] }
    }

    pub fn cols(&self) -> usize {
        self.frames * self.len
    }

    pub fn same_shape(&self) -> Self {
        Self::zeros(self.rows, self.frames, self.len)
    }
}

/// Axis a layer norm statistic is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormAxis {
    /// Over features at each time step.
    #[default]
    Channel,
    /// Over time within each frame, separately per feature.
    Time,
}

pub struct LnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    axis: NormAxis,
}

/// Layer norm with per-feature affine `gamma`, `beta`.
pub fn layer_norm(x: &Act, gamma: &[f64], beta: &[f64], axis: NormAxis) -> (Act, LnCache) {
    let (r, n) = (x.rows, x.cols());
    let mut xhat = vec![0.0; r * n];
    let inv_std;
    match axis {
        NormAxis::Channel => {
            let mut mean = vec![0.0; n];
            for i in 0..r {
                for (m, v) in mean.iter_mut().zip(&x.data[i * n..(i + 1) * n]) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= r as f64);
            let mut var = vec![0.0; n];
            for i in 0..r {
                for ((s, v), m) in var.iter_mut().zip(&x.data[i * n..(i + 1) * n]).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            inv_std = var.iter().map(|s| 1.0 / (s / r as f64 + LN_EPS).sqrt()).collect::<Vec<_>>();
            for i in 0..r {
                for j in 0..n {
                    xhat[i * n + j] = (x.data[i * n + j] - mean[j]) * inv_std[j];
                }
            }
        }
        NormAxis::Time => {
            let l = x.len;
            let mut s = Vec::with_capacity(r * x.frames);
            for i in 0..r {
                for f in 0..x.frames {
                    let o = i * n + f * l;
                    let seg = &x.data[o..o + l];
                    let m = seg.iter().sum::<f64>() / l as f64;
                    let v = seg.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / l as f64;
                    let is = 1.0 / (v + LN_EPS).sqrt();
                    for t in 0..l {
                        xhat[o + t] = (seg[t] - m) * is;
                    }
                    s.push(is);
                }
            }
            inv_std = s;
        }
    }
    let mut y = x.same_shape();
    for i in 0..r {
        for j in 0..n {
            y.data[i * n + j] = gamma[i] * xhat[i * n + j] + beta[i];
        }
    }
    (y, LnCache { xhat, inv_std, axis })
}

/// Returns dx and accumulates into dgamma, dbeta.
pub fn layer_norm_backward(dy: &Act, cache: &LnCache, gamma: &[f64], dgamma: &mut [f64], dbeta: &mut [f64]) -> Act {
    let (r, n) = (dy.rows, dy.cols());
    let xh = &cache.xhat;
    let mut dxhat = vec![0.0; r * n];
    for i in 0..r {
        for j in 0..n {
            let k = i * n + j;
            dgamma[i] += dy.data[k] * xh[k];
            dbeta[i] += dy.data[k];
            dxhat[k] = dy.data[k] * gamma[i];
        }
    }
    let mut dx = dy.same_shape();
    match cache.axis {
        NormAxis::Channel => {
            let mut s1 = vec![0.0; n];
            let mut s2 = vec![0.0; n];
            for i in 0..r {
                for j in 0..n {
                    s1[j] += dxhat[i * n + j];
                    s2[j] += dxhat[i * n + j] * xh[i * n + j];
                }
            }
            let m = r as f64;
            for i in 0..r {
                for j in 0..n {
                    let k = i * n + j;
                    dx.data[k] = cache.inv_std[j] / m * (m * dxhat[k] - s1[j] - xh[k] * s2[j]);
                }
            }
        }
        NormAxis::Time => {
            let l = dy.len;
            let m = l as f64;
            for i in 0..r {
                for f in 0..dy.frames {
                    let o = i * n + f * l;
                    let is = cache.inv_std[i * dy.frames + f];
                    let s1: f64 = dxhat[o..o + l].iter().sum();
                    let s2: f64 = (o..o + l).map(|k| dxhat[k] * xh[k]).sum();
                    for k in o..o + l {
                        dx.data[k] = is / m * (m * dxhat[k] - s1 - xh[k] * s2);
                    }
                }
            }
        }
    }
    dx
}

pub fn relu(x: &Act) -> Act {
    let mut y = x.clone();
    y.data.iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Gradient through ReLU given its output.
pub fn relu_backward(dy: &Act, y: &Act) -> Act {
    let mut dx = dy.clone();
    for (d, v) in dx.data.iter_mut().zip(&y.data) {
        if *v <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// Inverted dropout mask (values 0 or 1/(1-rate)).
pub fn dropout_mask<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..n).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect()
}

pub fn apply_mask(x: &mut Act, mask: &[f64]) {
    for (v, m) in x.data.iter_mut().zip(mask) {
        *v *= m;
    }
}

pub const CONV_K: usize = 3;
pub const CONV_PAD: usize = 2;

pub struct ConvCache {
    cols: Vec<f64>,
    in_len: usize,
}

fn im2col(x: &Act, out_len: usize) -> Vec<f64> {
    let (c, nf, l) = (x.rows, x.frames, x.len);
    let n_out = nf * out_len;
    let mut cols = vec![0.0; c * CONV_K * n_out];
    for ci in 0..c {
        for k in 0..CONV_K {
            let row = &mut cols[(ci * CONV_K + k) * n_out..(ci * CONV_K + k + 1) * n_out];
            for f in 0..nf {
                let src = &x.data[ci * nf * l + f * l..ci * nf * l + (f + 1) * l];
                for t in 0..out_len {
                    let ti = t as isize + k as isize - CONV_PAD as isize;
                    if ti >= 0 && (ti as usize) < l {
                        row[f * out_len + t] = src[ti as usize];
                    }
                }
            }
        }
    }
    cols
}

/// 1-D convolution, kernel 3, stride 1, padding 2. Weight `[out, in, 3]`.
pub fn conv1d(x: &Act, w: &[f64], b: &[f64], out_ch: usize) -> (Act, ConvCache) {
    let out_len = x.len + 2 * CONV_PAD - CONV_K + 1;
    let cols = im2col(x, out_len);
    let n_out = x.frames * out_len;
    let mut y = Act::zeros(out_ch, x.frames, out_len);
    for o in 0..out_ch {
        y.data[o * n_out..(o + 1) * n_out].fill(b[o]);
    }
    gemm(out_ch, x.rows * CONV_K, n_out, 1.0, w, false, &cols, false, 1.0, &mut y.data);
    (y, ConvCache { cols, in_len: x.len })
}

pub fn conv1d_backward(dy: &Act, cache: &ConvCache, w: &[f64], in_ch: usize, dw: &mut [f64], db: &mut [f64]) -> Act {
    let out_ch = dy.rows;
    let n_out = dy.cols();
    let kk = in_ch * CONV_K;
    gemm(out_ch, n_out, kk, 1.0, &dy.data, false, &cache.cols, true, 1.0, dw);
    for o in 0..out_ch {
        db[o] += dy.data[o * n_out..(o + 1) * n_out].iter().sum::<f64>();
    }
    let mut dcols = vec![0.0; kk * n_out];
    gemm(kk, out_ch, n_out, 1.0, w, true, &dy.data, false, 0.0, &mut dcols);
    let l = cache.in_len;
    let nf = dy.frames;
    let out_len = dy.len;
    let mut dx = Act::zeros(in_ch, nf, l);
    for ci in 0..in_ch {
        for k in 0..CONV_K {
            let row = &dcols[(ci * CONV_K + k) * n_out..(ci * CONV_K + k + 1) * n_out];
            for f in 0..nf {
                let dst = &mut dx.data[ci * nf * l + f * l..ci * nf * l + (f + 1) * l];
                for t in 0..out_len {
                    let ti = t as isize + k as isize - CONV_PAD as isize;
                    if ti >= 0 && (ti as usize) < l {
                        dst[ti as usize] += row[f * out_len + t];
                    }
                }
            }
        }
    }
    dx
}

pub fn blur_out_len(l: usize) -> usize {
    (l - 1) / 2 + 1
}

/// Per-feature [1,2,1]/4 smoothing with stride 2 and zero padding 1.
pub fn blur_pool(x: &Act) -> Act {
    let l = x.len;
    let lo = blur_out_len(l);
    let mut y = Act::zeros(x.rows, x.frames, lo);
    for r in 0..x.rows {
        for f in 0..x.frames {
            let src = &x.data[(r * x.frames + f) * l..(r * x.frames + f + 1) * l];
            let dst = &mut y.data[(r * x.frames + f) * lo..(r * x.frames + f + 1) * lo];
            for (t, d) in dst.iter_mut().enumerate() {
                let mut s = 0.0;
                for (k, w) in BLUR_KERNEL.iter().enumerate() {
                    let ti = 2 * t as isize + k as isize - 1;
                    if ti >= 0 && (ti as usize) < l {
                        s += w * src[ti as usize];
                    }
                }
                *d = s;
            }
        }
    }
    y
}

pub fn blur_pool_backward(dy: &Act, in_len: usize) -> Act {
    let lo = dy.len;
    let mut dx = Act::zeros(dy.rows, dy.frames, in_len);
    for r in 0..dy.rows {
        for f in 0..dy.frames {
            let src = &dy.data[(r * dy.frames + f) * lo..(r * dy.frames + f + 1) * lo];
            let dst = &mut dx.data[(r * dy.frames + f) * in_len..(r * dy.frames + f + 1) * in_len];
            for (t, g) in src.iter().enumerate() {
                for (k, w) in BLUR_KERNEL.iter().enumerate() {
                    let ti = 2 * t as isize + k as isize - 1;
                    if ti >= 0 && (ti as usize) < in_len {
                        dst[ti as usize] += w * g;
                    }
                }
            }
        }
    }
    dx
}

/// Mean over time within each frame; output has `len` 1.
pub fn gap(x: &Act) -> Act {
    let mut y = Act::zeros(x.rows, x.frames, 1);
    for (i, v) in y.data.iter_mut().enumerate() {
        *v = x.data[i * x.len..(i + 1) * x.len].iter().sum::<f64>() / x.len as f64;
    }
    y
}

pub fn gap_backward(dy: &Act, len: usize) -> Act {
    let mut dx = Act::zeros(dy.rows, dy.frames, len);
    for (i, g) in dy.data.iter().enumerate() {
        dx.data[i * len..(i + 1) * len].fill(g / len as f64);
    }
    dx
}

/// `y = W x + b` over columns; weight `[out, in]`.
pub fn linear(x: &Act, w: &[f64], b: &[f64], out: usize) -> Act {
    let n = x.cols();
    let mut y = Act::zeros(out, x.frames, x.len);
    for o in 0..out {
        y.data[o * n..(o + 1) * n].fill(b[o]);
    }
    gemm(out, x.rows, n, 1.0, w, false, &x.data, false, 1.0, &mut y.data);
    y
}

/// Parameter gradients only, for layers whose input needs no gradient.
pub fn linear_backward_params(dy: &Act, x: &Act, dw: &mut [f64], db: &mut [f64]) {
    let n = dy.cols();
    gemm(dy.rows, n, x.rows, 1.0, &dy.data, false, &x.data, true, 1.0, dw);
    for o in 0..dy.rows {
        db[o] += dy.data[o * n..(o + 1) * n].iter().sum::<f64>();
    }
}

pub fn linear_backward(dy: &Act, x: &Act, w: &[f64], dw: &mut [f64], db: &mut [f64]) -> Act {
    let n = dy.cols();
    linear_backward_params(dy, x, dw, db);
    let mut dx = x.same_shape();
    gemm(x.rows, dy.rows, n, 1.0, w, true, &dy.data, false, 0.0, &mut dx.data);
    dx
}

/// Gradient reversal: identity forward, `-lambda * g` backward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrlConfig {
    pub lambda: f64,
}

impl Default for GrlConfig {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

pub fn grl_forward(x: &Act) -> Act {
    x.clone()
}

pub fn grl_backward(dy: &Act, cfg: GrlConfig) -> Act {
    let mut dx = dy.clone();
    dx.data.iter_mut().for_each(|v| *v *= -cfg.lambda);
    dx
}

/// Column-wise softmax over `rows` classes.
pub fn softmax_columns(logits: &Act) -> Act {
    let (k, n) = (logits.rows, logits.cols());
    let mut p = logits.same_shape();
    for j in 0..n {
        let m = (0..k).map(|i| logits.data[i * n + j]).fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for i in 0..k {
            let e = (logits.data[i * n + j] - m).exp();
            p.data[i * n + j] = e;
            s += e;
        }
        for i in 0..k {
            p.data[i * n + j] /= s;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_act(rows: usize, frames: usize, len: usize, seed: u64) -> Act {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Act::zeros(rows, frames, len);
        a.data.iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0));
        a
    }

    #[test]
    fn conv_lengths_and_direct_oracle() {
        let x = rand_act(2, 2, 50, 1);
        let w: Vec<f64> = (0..2 * 2 * 3).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = [0.1, -0.2];
        let (y, _) = conv1d(&x, &w, &b, 2);
        assert_eq!(y.len, 52);
        for o in 0..2 {
            for f in 0..2 {
                for t in 0..52 {
                    let mut s = b[o];
                    for i in 0..2 {
                        for k in 0..3 {
                            let ti = t as isize + k as isize - 2;
                            if (0..50).contains(&ti) {
                                s += w[(o * 2 + i) * 3 + k] * x.data[i * 100 + f * 50 + ti as usize];
                            }
                        }
                    }
                    assert!((y.data[o * 104 + f * 52 + t] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn blur_pool_cases() {
        assert_eq!(blur_out_len(52), 26);
        assert_eq!(blur_out_len(54), 27);
        let mut x = Act::zeros(1, 1, 10);
        x.data.fill(3.0);
        let y = blur_pool(&x);
        assert!(y.data[1..].iter().all(|v| (v - 3.0).abs() < 1e-15));
        let x = Act { rows: 1, frames: 1, len: 10, data: (0..10).map(|i| if i % 2 == 1 { 4.0 } else { 0.0 }).collect() };
        let y = blur_pool(&x);
        assert!(y.data[1..].iter().all(|v| (v - 2.0).abs() < 1e-15));
    }

    #[test]
    fn layer_norm_statistics() {
        for axis in [NormAxis::Channel, NormAxis::Time] {
            let x = rand_act(6, 3, 8, 2);
            let (y, _) = layer_norm(&x, &[1.0; 6], &[0.0; 6], axis);
            let n = x.cols();
            match axis {
                NormAxis::Channel => {
                    for j in 0..n {
                        let col: Vec<f64> = (0..6).map(|i| y.data[i * n + j]).collect();
                        let m = col.iter().sum::<f64>() / 6.0;
                        let v = col.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 6.0;
                        assert!(m.abs() < 1e-6 && (v - 1.0).abs() < 1e-3);
                    }
                }
                NormAxis::Time => {
                    for seg in y.data.chunks(8) {
                        let m = seg.iter().sum::<f64>() / 8.0;
                        assert!(m.abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn gap_and_softmax() {
        let x = rand_act(3, 4, 7, 3);
        let g = gap(&x);
        assert!((g.data[5] - x.data[35..42].iter().sum::<f64>() / 7.0).abs() < 1e-15);
        let p = softmax_columns(&x);
        for j in 0..x.cols() {
            let s: f64 = (0..3).map(|i| p.data[i * x.cols() + j]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grl_is_exact() {
        let x = rand_act(2, 2, 3, 4);
        assert_eq!(grl_forward(&x), x);
        let g = grl_backward(&x, GrlConfig { lambda: 1.0 });
        assert!(g.data.iter().zip(&x.data).all(|(a, b)| *a == -*b));
        let z = grl_backward(&x, GrlConfig { lambda: 0.0 });
        assert!(z.data.iter().all(|a| *a == 0.0));
    }
}
