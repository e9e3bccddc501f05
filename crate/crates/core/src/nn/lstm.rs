//! LSTM over sequences whose columns are ordered time-major (`t * batch + b`).

use super::layers::Act;
use super::tensor::{gemm, gemm_strided};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate order: input, forget, cell candidate, output.
pub struct LstmWeights<'a> {
    pub wih: &'a [f64],
    pub whh: &'a [f64],
    pub b: &'a [f64],
    pub hidden: usize,
}

pub struct LstmCache {
    /// Post-nonlinearity gates `[4H, N]`.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    batch: usize,
}

/// Single step for one sample with explicit state; used as a reference.
pub fn lstm_step(x: &[f64], h: &[f64], c: &[f64], w: &LstmWeights<'_>) -> (Vec<f64>, Vec<f64>) {
    let hs = w.hidden;
    let ni = x.len();
    let mut a = w.b.to_vec();
    for (r, av) in a.iter_mut().enumerate() {
        *av += (0..ni).map(|k| w.wih[r * ni + k] * x[k]).sum::<f64>();
        *av += (0..hs).map(|k| w.whh[r * hs + k] * h[k]).sum::<f64>();
    }
    let mut h2 = vec![0.0; hs];
    let mut c2 = vec![0.0; hs];
    for j in 0..hs {
        let i = sigmoid(a[j]);
        let f = sigmoid(a[hs + j]);
        let g = a[2 * hs + j].tanh();
        let o = sigmoid(a[3 * hs + j]);
        c2[j] = f * c[j] + i * g;
        h2[j] = o * c2[j].tanh();
    }
    (h2, c2)
}

/// Runs the layer from zero state over `x` of shape `[in, T * batch]`.
pub fn lstm_forward(x: &Act, w: &LstmWeights<'_>, batch: usize) -> (Act, LstmCache) {
    let hs = w.hidden;
    let n = x.cols();
    let steps = n / batch;
    let mut a = vec![0.0; 4 * hs * n];
    for r in 0..4 * hs {
        a[r * n..(r + 1) * n].fill(w.b[r]);
    }
    gemm(4 * hs, x.rows, n, 1.0, w.wih, false, &x.data, false, 1.0, &mut a);
    let mut c = vec![0.0; hs * n];
    let mut tanh_c = vec![0.0; hs * n];
    let mut h = vec![0.0; hs * n];
    let mut hprev = vec![0.0; hs * batch];
    for t in 0..steps {
        let off = t * batch;
        if t > 0 {
            gemm_strided(4 * hs, hs, batch, 1.0, w.whh, false, &hprev, false, 1.0, &mut a[off..], n);
        }
        for j in 0..hs {
            for b in 0..batch {
                let col = off + b;
                let i = sigmoid(a[j * n + col]);
                let f = sigmoid(a[(hs + j) * n + col]);
                let g = a[(2 * hs + j) * n + col].tanh();
                let o = sigmoid(a[(3 * hs + j) * n + col]);
                a[j * n + col] = i;
                a[(hs + j) * n + col] = f;
                a[(2 * hs + j) * n + col] = g;
                a[(3 * hs + j) * n + col] = o;
                let cp = if t > 0 { c[j * n + col - batch] } else { 0.0 };
                let cv = f * cp + i * g;
                let tc = cv.tanh();
                c[j * n + col] = cv;
                tanh_c[j * n + col] = tc;
                h[j * n + col] = o * tc;
                hprev[j * batch + b] = o * tc;
            }
        }
    }
    let out = Act { rows: hs, frames: x.frames, len: x.len, data: h.clone() };
    (out, LstmCache { gates: a, c, tanh_c, h, batch })
}

/// Backpropagation through time; accumulates weight gradients and returns dx.
pub fn lstm_backward(
    dh_out: &Act,
    x: &Act,
    cache: &LstmCache,
    w: &LstmWeights<'_>,
    dwih: &mut [f64],
    dwhh: &mut [f64],
    db: &mut [f64],
) -> Act {
    let hs = w.hidden;
    let n = dh_out.cols();
    let batch = cache.batch;
    let steps = n / batch;
    let g = &cache.gates;
    let mut da = vec![0.0; 4 * hs * n];
    let mut dh_next = vec![0.0; hs * batch];
    let mut dc_next = vec![0.0; hs * batch];
    let mut da_t = vec![0.0; 4 * hs * batch];
    let mut hprev = vec![0.0; hs * batch];
    for t in (0..steps).rev() {
        let off = t * batch;
        for j in 0..hs {
            for b in 0..batch {
                let col = off + b;
                let i = g[j * n + col];
                let f = g[(hs + j) * n + col];
                let gg = g[(2 * hs + j) * n + col];
                let o = g[(3 * hs + j) * n + col];
                let tc = cache.tanh_c[j * n + col];
                let cp = if t > 0 { cache.c[j * n + col - batch] } else { 0.0 };
                let dh = dh_out.data[j * n + col] + dh_next[j * batch + b];
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j * batch + b];
                let vals = [dc * gg * i * (1.0 - i), dc * cp * f * (1.0 - f), dc * i * (1.0 - gg * gg), dh * tc * o * (1.0 - o)];
                for (q, v) in vals.iter().enumerate() {
                    da[(q * hs + j) * n + col] = *v;
                    da_t[(q * hs + j) * batch + b] = *v;
                }
                dc_next[j * batch + b] = dc * f;
            }
        }
        if t > 0 {
            for j in 0..hs {
                for b in 0..batch {
                    hprev[j * batch + b] = cache.h[j * n + off - batch + b];
                }
            }
            gemm(4 * hs, batch, hs, 1.0, &da_t, false, &hprev, true, 1.0, dwhh);
            gemm(hs, 4 * hs, batch, 1.0, w.whh, true, &da_t, false, 0.0, &mut dh_next);
        }
    }
    gemm(4 * hs, n, x.rows, 1.0, &da, false, &x.data, true, 1.0, dwih);
    for r in 0..4 * hs {
        db[r] += da[r * n..(r + 1) * n].iter().sum::<f64>();
    }
    let mut dx = x.same_shape();
    gemm(x.rows, 4 * hs, n, 1.0, w.wih, true, &da, false, 0.0, &mut dx.data);
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batched_matches_stepwise() {
        let (ni, hs, batch, steps) = (3, 4, 2, 5);
        let mut r = ChaCha8Rng::seed_from_u64(9);
        let mut v = |n: usize| (0..n).map(|_| r.random_range(-0.5..0.5)).collect::<Vec<f64>>();
        let (wih, whh, b) = (v(4 * hs * ni), v(4 * hs * hs), v(4 * hs));
        let xs = v(ni * batch * steps);
        let w = LstmWeights { wih: &wih, whh: &whh, b: &b, hidden: hs };
        let x = Act { rows: ni, frames: batch * steps, len: 1, data: xs.clone() };
        let (out, _) = lstm_forward(&x, &w, batch);
        let n = batch * steps;
        for bi in 0..batch {
            let (mut h, mut c) = (vec![0.0; hs], vec![0.0; hs]);
            for t in 0..steps {
                let xt: Vec<f64> = (0..ni).map(|k| xs[k * n + t * batch + bi]).collect();
                (h, c) = lstm_step(&xt, &h, &c, &w);
                for j in 0..hs {
                    assert!((out.data[j * n + t * batch + bi] - h[j]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let z = vec![0.0; 16];
        let w = LstmWeights { wih: &z[..8], whh: &z, b: &z[..8], hidden: 2 };
        let (h, c) = lstm_step(&[1.0], &[0.0, 0.0], &[0.0, 0.0], &w);
        assert_eq!(h, vec![0.0, 0.0]);
        assert_eq!(c, vec![0.0, 0.0]);
    }

    #[test]
    fn saturated_forget_keeps_cell() {
        // hidden 1: input gate -> 0, forget gate -> 1
        let b = [-50.0, 50.0, 0.0, 0.0];
        let z = [0.0; 4];
        let w = LstmWeights { wih: &z, whh: &z, b: &b, hidden: 1 };
        let (_, c) = lstm_step(&[0.3], &[0.1], &[0.7], &w);
        assert!((c[0] - 0.7).abs() < 1e-12);
    }
}
