//! Minimum-jerk segments: the quintic that meets position, velocity and
//! acceleration at both ends.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Boundary {
    pub pos: f64,
    pub vel: f64,
    pub acc: f64,
}

impl Boundary {
    pub fn rest(pos: f64) -> Self {
        Self { pos, vel: 0.0, acc: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinJerkSegment {
    pub t0: f64,
    pub t1: f64,
    pub start: Boundary,
    pub end: Boundary,
}

impl MinJerkSegment {
    pub fn rest_to_rest(t0: f64, t1: f64, from: f64, to: f64) -> Self {
        Self { t0, t1, start: Boundary::rest(from), end: Boundary::rest(to) }
    }
}

/// `x(t) = sum c[k] (t - t0)^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quintic {
    pub t0: f64,
    pub coeffs: [f64; 6],
}

impl Quintic {
    pub fn pos(&self, t: f64) -> f64 {
        let s = t - self.t0;
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    pub fn vel(&self, t: f64) -> f64 {
        let s = t - self.t0;
        (1..6).rev().fold(0.0, |acc, k| acc * s + k as f64 * self.coeffs[k])
    }

    pub fn acc(&self, t: f64) -> f64 {
        let s = t - self.t0;
        (2..6).rev().fold(0.0, |acc, k| acc * s + (k * (k - 1)) as f64 * self.coeffs[k])
    }

    pub fn jerk(&self, t: f64) -> f64 {
        let s = t - self.t0;
        (3..6).rev().fold(0.0, |acc, k| acc * s + (k * (k - 1) * (k - 2)) as f64 * self.coeffs[k])
    }
}

/// Gaussian elimination with partial pivoting.
pub(crate) fn solve_dense<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Result<[f64; N]> {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for col in 0..N {
        let piv = (col..N)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[piv][col].abs() <= 1e-13 * scale {
            return Err(Error::Singular(format!("pivot {col} vanishes")));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..N {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let s: f64 = (row + 1..N).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

/// Solves the six boundary conditions for the quintic coefficients.
pub fn min_jerk_coeffs(seg: &MinJerkSegment) -> Result<Quintic> {
    let t = seg.t1 - seg.t0;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Singular(format!("segment duration {t} must be positive")));
    }
    let row_pos = |s: f64| [1.0, s, s * s, s.powi(3), s.powi(4), s.powi(5)];
    let row_vel = |s: f64| [0.0, 1.0, 2.0 * s, 3.0 * s * s, 4.0 * s.powi(3), 5.0 * s.powi(4)];
    let row_acc = |s: f64| [0.0, 0.0, 2.0, 6.0 * s, 12.0 * s * s, 20.0 * s.powi(3)];
    let a = [row_pos(0.0), row_vel(0.0), row_acc(0.0), row_pos(t), row_vel(t), row_acc(t)];
    let b = [seg.start.pos, seg.start.vel, seg.start.acc, seg.end.pos, seg.end.vel, seg.end.acc];
    let coeffs = solve_dense(a, b)?;
    Ok(Quintic { t0: seg.t0, coeffs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_midpoint() {
        let q = min_jerk_coeffs(&MinJerkSegment::rest_to_rest(0.0, 2.0, 0.0, 1.0)).unwrap();
        assert!((q.pos(1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stationary_segment_is_constant() {
        let q = min_jerk_coeffs(&MinJerkSegment::rest_to_rest(1.0, 3.0, 0.7, 0.7)).unwrap();
        assert!((q.coeffs[0] - 0.7).abs() < 1e-15);
        assert!(q.coeffs[1..].iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn zero_duration_is_singular() {
        assert!(matches!(
            min_jerk_coeffs(&MinJerkSegment::rest_to_rest(1.0, 1.0, 0.0, 1.0)),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn boundaries_met_with_nonzero_rates() {
        let seg = MinJerkSegment {
            t0: 0.5,
            t1: 1.7,
            start: Boundary { pos: -0.2, vel: 0.8, acc: -3.0 },
            end: Boundary { pos: 1.1, vel: -0.4, acc: 2.5 },
        };
        let q = min_jerk_coeffs(&seg).unwrap();
        for (t, b) in [(seg.t0, seg.start), (seg.t1, seg.end)] {
            assert!((q.pos(t) - b.pos).abs() < 1e-9);
            assert!((q.vel(t) - b.vel).abs() < 1e-9);
            assert!((q.acc(t) - b.acc).abs() < 1e-9);
        }
    }
}
