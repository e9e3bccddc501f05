use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::plan::{SplitConfig, Strategy};
use crate::error::{Error, Result};
use crate::rng;
use crate::signal::io::ElectrodePosition;

/// Block indices of one position, by role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionSplit {
    pub test: Vec<usize>,
    /// 70% share used when training at this position alone.
    pub train: Vec<usize>,
    /// Re-training share for transfer learning into this position.
    pub tune: Vec<usize>,
    /// Share contributed to mixed-position training.
    pub mix: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub subject: usize,
    pub positions: Vec<PositionSplit>,
}

impl SplitSpec {
    pub fn at(&self, pos: ElectrodePosition) -> &PositionSplit {
        &self.positions[pos.index()]
    }
}

fn share(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).round() as usize
}

/// Resolves block-level splits for one subject. Test blocks depend only on
/// `(seed, subject, position)`, so every strategy and normalization sees the same test data.
pub fn make_splits(blocks_per_position: [usize; 3], cfg: &SplitConfig, seed: u64, subject: usize) -> Result<SplitSpec> {
    cfg.validate()?;
    let mut positions = Vec::with_capacity(3);
    for pos in ElectrodePosition::ALL {
        let n = blocks_per_position[pos.index()];
        let n_test = share(cfg.test_fraction, n);
        let n_train = share(cfg.train_fraction, n).min(n.saturating_sub(n_test));
        let n_tune = share(cfg.tune_fraction, n).min(n_train);
        let n_mix = share(cfg.mix_fraction, n).min(n_train);
        if n_test == 0 || n_train == 0 || n_tune == 0 || n_mix == 0 {
            return Err(Error::InsufficientData(format!(
                "subject {subject} position {}: {n} blocks cannot hold test/train/tune/mix shares",
                pos.name()
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(seed, &[rng::label_key("test-blocks"), subject as u64, pos.index() as u64]));
        let mut test = order[..n_test].to_vec();
        let mut rest = order[n_test..].to_vec();
        rest.shuffle(&mut rng::stream(seed, &[rng::label_key("train-blocks"), subject as u64, pos.index() as u64]));
        let mut train = rest[..n_train].to_vec();
        let mut tune = train[..n_tune].to_vec();
        let mut mix = train[train.len() - n_mix..].to_vec();
        for v in [&mut test, &mut train, &mut tune, &mut mix] {
            v.sort_unstable();
        }
        positions.push(PositionSplit { test, train, tune, mix });
    }
    Ok(SplitSpec { seed, subject, positions })
}

/// One train/test pairing; `train_pos` is `None` for mixed-position training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Combo {
    pub train_pos: Option<ElectrodePosition>,
    pub test_pos: ElectrodePosition,
}

pub fn combinations(strategy: Strategy) -> Vec<Combo> {
    let all = ElectrodePosition::ALL;
    match strategy {
        Strategy::Vanilla | Strategy::Tl => all
            .iter()
            .flat_map(|&i| all.iter().filter(move |&&j| j != i).map(move |&j| Combo { train_pos: Some(i), test_pos: j }))
            .collect(),
        Strategy::Ada | Strategy::Mix => all.iter().map(|&j| Combo { train_pos: None, test_pos: j }).collect(),
        Strategy::Baseline => all.iter().map(|&j| Combo { train_pos: Some(j), test_pos: j }).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combination_counts() {
        assert_eq!(combinations(Strategy::Vanilla).len(), 6);
        assert_eq!(combinations(Strategy::Tl).len(), 6);
        assert_eq!(combinations(Strategy::Mix).len(), 3);
        assert_eq!(combinations(Strategy::Ada).len(), 3);
        assert!(combinations(Strategy::Baseline).iter().all(|c| c.train_pos == Some(c.test_pos)));
    }

    #[test]
    fn twelve_blocks() {
        let s = make_splits([12; 3], &SplitConfig::default(), 3, 0).unwrap();
        for p in &s.positions {
            assert_eq!((p.test.len(), p.train.len(), p.tune.len(), p.mix.len()), (4, 8, 2, 2));
            assert!(p.test.iter().all(|b| !p.train.contains(b)));
            assert!(p.tune.iter().chain(&p.mix).all(|b| p.train.contains(b)));
        }
        assert_eq!(s, make_splits([12; 3], &SplitConfig::default(), 3, 0).unwrap());
    }

    #[test]
    fn too_few_blocks() {
        assert!(make_splits([2, 12, 12], &SplitConfig::default(), 0, 0).is_err());
    }
}
