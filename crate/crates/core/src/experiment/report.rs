use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::plan::{GridPoint, Normalization, Strategy};
use super::stats::{bonferroni, mean, sd, wilcoxon_rank_sum};
use crate::error::{Error, Result};
use crate::signal::io::{write_atomic, ElectrodePosition};

pub const RESULTS_FORMAT_VERSION: u32 = 1;
pub const SUMMARY_FORMAT: &str = "emgshift-summary";
pub const SUMMARY_VERSION: u32 = 1;

/// Test accuracy of one trained model on one test position, with its matched baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub subject: String,
    pub strategy: Strategy,
    pub norm: Normalization,
    /// `None` when the model was trained on all positions.
    pub train_pos: Option<ElectrodePosition>,
    pub test_pos: ElectrodePosition,
    pub norm_win_ms: Option<u32>,
    pub feat_win_ms: u32,
    pub accuracy: f64,
    pub baseline: f64,
    pub differential: f64,
    pub seed: u64,
}

impl ResultRecord {
    pub fn grid(&self) -> GridPoint {
        GridPoint { norm_win_ms: self.norm_win_ms, feat_win_ms: self.feat_win_ms }
    }

    fn baseline_key(&self) -> (String, Normalization, ElectrodePosition, GridPoint, u64) {
        (self.subject.clone(), self.norm, self.test_pos, self.grid(), self.seed)
    }
}

/// Fills `baseline` and `differential` of every record from the BASELINE
/// records in the same slice: `y = x - x_baseline` for the test position.
pub fn differential_accuracy(records: &mut [ResultRecord]) -> Result<()> {
    let mut base = BTreeMap::new();
    for r in records.iter().filter(|r| r.strategy == Strategy::Baseline) {
        if r.train_pos != Some(r.test_pos) {
            return Err(Error::Config(format!("baseline record for {} trains on another position", r.subject)));
        }
        base.insert(r.baseline_key(), r.accuracy);
    }
    for r in records.iter_mut() {
        let key = r.baseline_key();
        let b = *base.get(&key).ok_or_else(|| {
            Error::MissingBaseline(format!(
                "{} {} {} test {} grid {:?}/{} seed {}",
                r.subject, r.strategy, r.norm, r.test_pos.name(), r.norm_win_ms, r.feat_win_ms, r.seed
            ))
        })?;
        r.baseline = b;
        r.differential = r.accuracy - b;
    }
    Ok(())
}

/// Grid point with the highest score; ties go to the smaller normalization
/// window, then the smaller feature window.
pub fn sweep_windows(scores: &[(GridPoint, f64)]) -> Result<GridPoint> {
    let mut best: Option<(GridPoint, f64)> = None;
    for &(g, s) in scores {
        best = match best {
            Some((bg, bs)) if bs > s || (bs == s && bg <= g) => Some((bg, bs)),
            _ => Some((g, s)),
        };
    }
    best.map(|b| b.0).ok_or_else(|| Error::Config("empty window grid".into()))
}

fn select(records: &[ResultRecord], strategy: Strategy, norm: Normalization) -> impl Iterator<Item = &ResultRecord> {
    records.iter().filter(move |r| r.strategy == strategy && r.norm == norm)
}

/// Mean accuracy per grid point for one condition.
pub fn grid_scores(records: &[ResultRecord], strategy: Strategy, norm: Normalization) -> Vec<(GridPoint, f64)> {
    let mut acc: BTreeMap<GridPoint, Vec<f64>> = BTreeMap::new();
    for r in select(records, strategy, norm) {
        acc.entry(r.grid()).or_default().push(r.accuracy);
    }
    acc.into_iter().map(|(g, v)| (g, mean(&v))).collect()
}

/// Mean differential over position combinations, keyed by (subject, seed).
pub fn combo_means(records: &[ResultRecord], strategy: Strategy, norm: Normalization, grid: GridPoint) -> BTreeMap<(String, u64), f64> {
    let mut m: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for r in select(records, strategy, norm).filter(|r| r.grid() == grid) {
        m.entry((r.subject.clone(), r.seed)).or_default().push(r.differential);
    }
    // sorted so the sum does not depend on record order
    m.into_iter()
        .map(|(k, mut v)| {
            v.sort_by(f64::total_cmp);
            (k, mean(&v))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub strategy: Strategy,
    pub norm: Normalization,
    pub best: GridPoint,
    pub mean_accuracy: f64,
    /// Mean over (subject, seed) of the per-subject mean differential.
    pub mean_differential: f64,
    pub sd_differential: f64,
    pub seed_mean_differential: BTreeMap<u64, f64>,
    pub subject_mean_differential: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub strategy: Strategy,
    /// Rank sum of the SWN sample.
    pub statistic: f64,
    pub exact: bool,
    pub p_value: f64,
    pub p_bonferroni: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub format: String,
    pub version: u32,
    pub conditions: Vec<ConditionSummary>,
    /// SWN against None per strategy, on (subject, seed) mean differentials.
    pub tests: Vec<TestSummary>,
}

impl Summary {
    pub fn condition(&self, strategy: Strategy, norm: Normalization) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|c| c.strategy == strategy && c.norm == norm)
    }
}

pub fn summarize(records: &[ResultRecord]) -> Result<Summary> {
    let mut conds: Vec<(Strategy, Normalization)> = records.iter().map(|r| (r.strategy, r.norm)).collect();
    conds.sort();
    conds.dedup();
    let mut conditions = Vec::new();
    let mut samples: BTreeMap<(Strategy, Normalization), Vec<f64>> = BTreeMap::new();
    for (strategy, norm) in conds {
        let scores = grid_scores(records, strategy, norm);
        let best = sweep_windows(&scores)?;
        let mean_accuracy = scores.iter().find(|s| s.0 == best).map_or(f64::NAN, |s| s.1);
        let per = combo_means(records, strategy, norm, best);
        let values: Vec<f64> = per.values().copied().collect();
        let mut by_seed: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        let mut by_subject: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for ((subj, seed), v) in &per {
            by_seed.entry(*seed).or_default().push(*v);
            by_subject.entry(subj.clone()).or_default().push(*v);
        }
        conditions.push(ConditionSummary {
            strategy,
            norm,
            best,
            mean_accuracy,
            mean_differential: mean(&values),
            sd_differential: sd(&values),
            seed_mean_differential: by_seed.into_iter().map(|(k, v)| (k, mean(&v))).collect(),
            subject_mean_differential: by_subject.into_iter().map(|(k, v)| (k, mean(&v))).collect(),
        });
        samples.insert((strategy, norm), values);
    }
    let mut tests = Vec::new();
    for s in Strategy::ALL {
        if s == Strategy::Baseline {
            continue;
        }
        if let (Some(a), Some(b)) = (samples.get(&(s, Normalization::Swn)), samples.get(&(s, Normalization::None))) {
            let r = wilcoxon_rank_sum(a, b)?;
            tests.push(TestSummary { strategy: s, statistic: r.statistic, exact: r.exact, p_value: r.p_value, p_bonferroni: r.p_value, n: a.len() });
        }
    }
    let adj = bonferroni(&tests.iter().map(|t| t.p_value).collect::<Vec<_>>(), tests.len().max(1))?;
    for (t, p) in tests.iter_mut().zip(adj) {
        t.p_bonferroni = p;
    }
    Ok(Summary { format: SUMMARY_FORMAT.into(), version: SUMMARY_VERSION, conditions, tests })
}

pub const RESULTS_HEADER: [&str; 11] = [
    "subject", "strategy", "norm", "train_pos", "test_pos", "norm_win_ms", "feat_win_ms", "accuracy", "baseline", "differential", "seed",
];

pub fn results_csv(records: &[ResultRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_HEADER)?;
    for r in records {
        w.write_record([
            r.subject.clone(),
            r.strategy.name().into(),
            r.norm.name().into(),
            r.train_pos.map_or("all", |p| p.name()).into(),
            r.test_pos.name().into(),
            r.norm_win_ms.map(|w| w.to_string()).unwrap_or_default(),
            r.feat_win_ms.to_string(),
            format!("{:?}", r.accuracy),
            format!("{:?}", r.baseline),
            format!("{:?}", r.differential),
            r.seed.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_results(dir: &Path, records: &[ResultRecord], summary: &Summary) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("results.csv"), &results_csv(records)?)?;
    write_atomic(&dir.join("summary.json"), serde_json::to_string_pretty(summary)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(strategy: Strategy, i: Option<ElectrodePosition>, j: ElectrodePosition, acc: f64) -> ResultRecord {
        ResultRecord {
            subject: "s".into(),
            strategy,
            norm: Normalization::None,
            train_pos: i,
            test_pos: j,
            norm_win_ms: None,
            feat_win_ms: 200,
            accuracy: acc,
            baseline: f64::NAN,
            differential: f64::NAN,
            seed: 0,
        }
    }

    #[test]
    fn differential_arithmetic() {
        use ElectrodePosition::*;
        let mut v = vec![rec(Strategy::Baseline, Some(Center), Center, 0.70), rec(Strategy::Vanilla, Some(Left), Center, 0.65)];
        differential_accuracy(&mut v).unwrap();
        assert_eq!(v[0].differential, 0.0);
        assert!((v[1].differential + 0.05).abs() < 1e-12);
        let mut missing = vec![rec(Strategy::Vanilla, Some(Left), Right, 0.5)];
        assert!(matches!(differential_accuracy(&mut missing), Err(Error::MissingBaseline(_))));
    }

    #[test]
    fn sweep_tie_breaks() {
        let g = |n, f| GridPoint { norm_win_ms: n, feat_win_ms: f };
        assert_eq!(sweep_windows(&[(g(Some(200), 600), 0.5)]).unwrap(), g(Some(200), 600));
        let s = [(g(Some(600), 200), 0.8), (g(Some(200), 1000), 0.8), (g(Some(200), 600), 0.8), (g(Some(1000), 200), 0.7)];
        assert_eq!(sweep_windows(&s).unwrap(), g(Some(200), 600));
        assert!(sweep_windows(&[]).is_err());
    }

    #[test]
    fn csv_columns() {
        let out = String::from_utf8(results_csv(&[rec(Strategy::Mix, None, ElectrodePosition::Left, 0.5)]).unwrap()).unwrap();
        let mut lines = out.lines();
        assert_eq!(lines.next().unwrap(), RESULTS_HEADER.join(","));
        assert!(lines.next().unwrap().starts_with("s,mix,none,all,left,,200,0.5,"));
    }
}
