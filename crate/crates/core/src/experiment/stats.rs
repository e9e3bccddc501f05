use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Smaller-sample size below which p-values are computed exactly.
pub const EXACT_BELOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSum {
    /// Sum of the ranks of the first sample.
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled sample.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut ix: Vec<usize> = (0..x.len()).collect();
    ix.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < ix.len() {
        let mut j = i;
        while j + 1 < ix.len() && x[ix[j + 1]] == x[ix[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &ix[i..=j] {
            r[k] = mid;
        }
        i = j + 1;
    }
    r
}

fn pooled(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("rank-sum test needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rank-sum sample".into()));
    }
    Ok(a.iter().chain(b).copied().collect())
}

/// Two-sided Wilcoxon rank-sum test: exact when the smaller sample has fewer
/// than 8 values, normal approximation with continuity and tie correction otherwise.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<RankSum> {
    let x = pooled(a, b)?;
    let ranks = midranks(&x);
    let w: f64 = ranks[..a.len()].iter().sum();
    if x.iter().all(|v| *v == x[0]) {
        return Ok(RankSum { statistic: w, p_value: 1.0, exact: a.len().min(b.len()) < EXACT_BELOW });
    }
    if a.len().min(b.len()) < EXACT_BELOW {
        Ok(RankSum { statistic: w, p_value: exact_p(&ranks, a.len()), exact: true })
    } else {
        Ok(RankSum { statistic: w, p_value: normal_p(&ranks, a.len(), w), exact: false })
    }
}

/// Exact p over all `C(N, n1)` rank assignments, by counting subset sums of doubled ranks.
fn exact_p(ranks: &[f64], n1: usize) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    // ways[k][s]: subsets of size k with doubled-rank sum s
    let mut ways = vec![vec![0f64; max + 1]; n1 + 1];
    ways[0][0] = 1.0;
    for &d in &doubled {
        for k in (1..=n1).rev() {
            for s in (d..=max).rev() {
                let add = ways[k - 1][s - d];
                if add != 0.0 {
                    ways[k][s] += add;
                }
            }
        }
    }
    let w2: usize = doubled[..n1].iter().sum();
    // doubled mean is n1 (N+1)
    let twice_mean = n1 * (ranks.len() + 1);
    let dev = w2.abs_diff(twice_mean);
    let (mut hit, mut all) = (0.0, 0.0);
    for (s, c) in ways[n1].iter().enumerate() {
        all += c;
        if s.abs_diff(twice_mean) >= dev {
            hit += c;
        }
    }
    (hit / all).min(1.0)
}

fn normal_p(ranks: &[f64], n1: usize, w: f64) -> f64 {
    let n = ranks.len() as f64;
    let (n1f, n2f) = (n1 as f64, n - n1 as f64);
    let mean = n1f * (n + 1.0) / 2.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|r| **r == sorted[i]).count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let var = n1f * n2f / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if !(var > 0.0) {
        return 1.0;
    }
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let norm = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - norm.cdf(z))).min(1.0)
}

/// Bonferroni adjustment for `m` comparisons.
pub fn bonferroni(pvals: &[f64], m: usize) -> Result<Vec<f64>> {
    if m < pvals.len() || m == 0 {
        return Err(Error::Config(format!("bonferroni needs m >= {} tests, got {m}", pvals.len().max(1))));
    }
    Ok(pvals.iter().map(|p| (p * m as f64).min(1.0)).collect())
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        f64::NAN
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_threes() {
        let r = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!(r.exact);
        assert_eq!(r.statistic, 6.0);
        assert!((r.p_value - 0.1).abs() < 1e-12);
    }

    #[test]
    fn identical_samples() {
        let a = [0.3, 0.1, 0.7, 0.2];
        assert!(wilcoxon_rank_sum(&a, &a).unwrap().p_value >= 0.99);
        assert_eq!(wilcoxon_rank_sum(&[1.0; 4], &[1.0; 9]).unwrap().p_value, 1.0);
    }

    #[test]
    fn midranks_with_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn bonferroni_cases() {
        assert_eq!(bonferroni(&[0.03], 1).unwrap(), vec![0.03]);
        assert!((bonferroni(&[0.03], 4).unwrap()[0] - 0.12).abs() < 1e-15);
        assert_eq!(bonferroni(&[0.5], 3).unwrap(), vec![1.0]);
        assert!(bonferroni(&[0.1, 0.2], 1).is_err());
    }

    #[test]
    fn empty_sample_rejected() {
        assert!(wilcoxon_rank_sum(&[], &[1.0]).is_err());
    }
}
