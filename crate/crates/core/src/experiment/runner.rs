use rayon::prelude::*;

use super::data::{prepare_trial, trial_blocks, Block, Dataset, PreparedTrial, Subject};
use super::plan::{ExperimentPlan, GridPoint, Normalization, Strategy};
use super::report::{differential_accuracy, summarize, ResultRecord, Summary};
use super::splits::{make_splits, SplitSpec};
use super::train::{evaluate, frames_for, train, Tally, TrainSet};
use crate::error::{Error, Result};
use crate::nn::{Model, ModelConfig};
use crate::rng;
use crate::signal::io::ElectrodePosition;
use crate::signal::PipelineConfig;

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<ResultRecord>,
    pub summary: Summary,
}

/// One subject's trials preprocessed for a grid point, with blocks per position.
pub struct PreparedSubject {
    pub name: String,
    pub index: usize,
    pub trials: Vec<PreparedTrial>,
    /// `[position][block]`
    pub blocks: Vec<Vec<Block>>,
}

impl PreparedSubject {
    fn new(subject: &Subject, index: usize, trials: Vec<PreparedTrial>, block_s: f64) -> Self {
        let mut blocks = vec![Vec::new(); 3];
        for (ix, (src, t)) in subject.trials.iter().zip(&trials).enumerate() {
            blocks[t.position.index()].extend(trial_blocks(ix, t, src.emg.duration_s(), block_s));
        }
        Self { name: subject.name.clone(), index, trials, blocks }
    }

    fn pick(&self, pos: ElectrodePosition, ix: &[usize]) -> Vec<Block> {
        ix.iter().map(|&b| self.blocks[pos.index()][b]).collect()
    }

    fn set<'a>(&'a self, parts: &[(ElectrodePosition, &[usize])]) -> TrainSet<'a> {
        let blocks = parts.iter().flat_map(|(p, ix)| self.pick(*p, ix).into_iter().map(move |b| (b, p.index()))).collect();
        TrainSet { trials: &self.trials, blocks }
    }

    pub fn blocks_per_position(&self) -> [usize; 3] {
        [self.blocks[0].len(), self.blocks[1].len(), self.blocks[2].len()]
    }
}

pub fn pipeline_config(plan: &ExperimentPlan, grid: GridPoint) -> PipelineConfig {
    let mut c = PipelineConfig::with_windows(grid.norm_win_ms, grid.feat_win_ms);
    c.filter = plan.filter;
    if let Some(s) = c.swn.as_mut() {
        s.epsilon = plan.swn_epsilon;
    }
    c.emit_interval_ms = plan.emit_interval_ms;
    c.first_emit_s = Some(plan.common_first_emit_s());
    c
}

fn strategy_key(s: Strategy) -> u64 {
    rng::label_key(s.name())
}

fn run_seed(plan: &ExperimentPlan, grid: GridPoint, subject: usize, seed: u64, strategy: Strategy, pos: u64, purpose: &str) -> rng::Rng {
    rng::stream(
        seed,
        &[
            rng::label_key(purpose),
            subject as u64,
            u64::from(grid.norm_win_ms.unwrap_or(0)),
            u64::from(grid.feat_win_ms),
            strategy_key(strategy),
            pos,
            u64::from(plan.emit_interval_ms),
        ],
    )
}

fn model_config(plan: &ExperimentPlan, trials: &[PreparedTrial]) -> Result<ModelConfig> {
    let s = &trials.first().ok_or_else(|| Error::InsufficientData("subject has no trials".into()))?.stream;
    let mut c = ModelConfig::new(s.concat_channels(), s.segment_len());
    c.width = plan.model.width;
    c.norm_axis = plan.model.norm_axis;
    c.block_dropout = plan.model.block_dropout;
    c.lstm_dropout = plan.model.lstm_dropout;
    c.grl = plan.model.grl;
    c.validate()?;
    Ok(c)
}

fn or_mask(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(x, y)| *x || *y).collect()
}

/// Trains every model one (subject, grid point, seed) needs and scores it on the test blocks.
pub fn run_unit(plan: &ExperimentPlan, subj: &PreparedSubject, splits: &SplitSpec, grid: GridPoint, seed: u64) -> Result<Vec<ResultRecord>> {
    let cfg = model_config(plan, &subj.trials)?;
    let t = &plan.training;
    let chunk = frames_for(t.eval_chunk_s.unwrap_or(t.sequence_len_s), plan.emit_interval_ms);
    let id = |s: Strategy, extra: &str| format!("subject {} seed {seed} {s} {extra} grid {:?}/{}", subj.name, grid.norm_win_ms, grid.feat_win_ms);
    let record = |strategy: Strategy, train_pos: Option<ElectrodePosition>, test_pos: ElectrodePosition, tally: Tally| ResultRecord {
        subject: subj.name.clone(),
        strategy,
        norm: grid.normalization(),
        train_pos,
        test_pos,
        norm_win_ms: grid.norm_win_ms,
        feat_win_ms: grid.feat_win_ms,
        accuracy: tally.accuracy(),
        baseline: f64::NAN,
        differential: f64::NAN,
        seed,
    };
    let test_blocks = |j: ElectrodePosition| subj.pick(j, &splits.at(j).test);
    let eval = |m: &Model, j: ElectrodePosition| evaluate(m, &subj.trials, &test_blocks(j), chunk, None);
    let fresh = |s: Strategy, pos: u64| -> Result<Model> { Model::new(cfg.clone(), &mut run_seed(plan, grid, subj.index, seed, s, pos, "init")) };
    let wants = |s: Strategy| plan.strategies.contains(&s);
    let mut out = Vec::new();

    // single-position models serve Vanilla, BASELINE and the TL source
    let mut single = Vec::with_capacity(3);
    for i in ElectrodePosition::ALL {
        let mut m = fresh(Strategy::Vanilla, i.index() as u64)?;
        let set = subj.set(&[(i, &splits.at(i).train)]);
        let frozen = m.ada_mask();
        let mut r = run_seed(plan, grid, subj.index, seed, Strategy::Vanilla, i.index() as u64, "train");
        train(&mut m, &set, t, plan.emit_interval_ms, t.epochs, &frozen, false, &mut r, &id(Strategy::Vanilla, i.name()))?;
        for j in ElectrodePosition::ALL {
            let tally = eval(&m, j)?;
            if i == j {
                out.push(record(Strategy::Baseline, Some(i), j, tally));
            } else if wants(Strategy::Vanilla) {
                out.push(record(Strategy::Vanilla, Some(i), j, tally));
            }
        }
        single.push(m);
    }

    let mix_parts: Vec<(ElectrodePosition, &[usize])> = ElectrodePosition::ALL.iter().map(|&p| (p, splits.at(p).mix.as_slice())).collect();
    for (s, ada) in [(Strategy::Mix, false), (Strategy::Ada, true)] {
        if !wants(s) {
            continue;
        }
        let mut m = fresh(s, 3)?;
        let frozen = if ada { vec![false; m.params.len()] } else { m.ada_mask() };
        let mut r = run_seed(plan, grid, subj.index, seed, s, 3, "train");
        train(&mut m, &subj.set(&mix_parts), t, plan.emit_interval_ms, t.epochs, &frozen, ada, &mut r, &id(s, "mixed"))?;
        for j in ElectrodePosition::ALL {
            out.push(record(s, None, j, eval(&m, j)?));
        }
    }

    if wants(Strategy::Tl) {
        for i in ElectrodePosition::ALL {
            for j in ElectrodePosition::ALL.into_iter().filter(|&j| j != i) {
                let mut m = single[i.index()].clone();
                let frozen = or_mask(&m.cnn_mask(), &m.ada_mask());
                let mut r = run_seed(plan, grid, subj.index, seed, Strategy::Tl, (i.index() * 3 + j.index()) as u64, "train");
                let set = subj.set(&[(j, &splits.at(j).tune)]);
                train(&mut m, &set, t, plan.emit_interval_ms, t.tl_retrain_epochs, &frozen, false, &mut r, &id(Strategy::Tl, &format!("{}->{}", i.name(), j.name())))?;
                out.push(record(Strategy::Tl, Some(i), j, eval(&m, j)?));
            }
        }
    }
    Ok(out)
}

/// Normalization settings in plan order: each SWN window, then none.
fn norm_settings(plan: &ExperimentPlan) -> Vec<Option<u32>> {
    let mut v = Vec::new();
    for n in &plan.normalizations {
        match n {
            Normalization::Swn => v.extend(plan.norm_windows_ms.iter().map(|w| Some(*w))),
            Normalization::None => v.push(None),
        }
    }
    v
}

/// Runs the plan end to end on `jobs` worker threads (0 = all cores). Results
/// do not depend on `jobs`.
pub fn run_experiment(dataset: &Dataset, plan: &ExperimentPlan, jobs: usize) -> Result<ExperimentOutput> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records = pool.install(|| run_all(dataset, plan))?;
    let summary = summarize(&records)?;
    Ok(ExperimentOutput { records, summary })
}

fn run_all(dataset: &Dataset, plan: &ExperimentPlan) -> Result<Vec<ResultRecord>> {
    let subjects: Vec<usize> = if plan.subjects.is_empty() { (0..dataset.subjects.len()).collect() } else { plan.subjects.clone() };
    let mut all = Vec::new();
    for &si in &subjects {
        let subject = dataset.subjects.get(si).ok_or_else(|| Error::Config(format!("subject index {si} out of range")))?;
        for p in ElectrodePosition::ALL {
            if subject.trials_at(p).next().is_none() {
                return Err(Error::InsufficientData(format!("{} has no trials at position {}", subject.name, p.name())));
            }
        }
        let mut splits: Option<Vec<SplitSpec>> = None;
        for setting in norm_settings(plan) {
            let first = GridPoint { norm_win_ms: setting, feat_win_ms: plan.feat_windows_ms[0] };
            let base: Vec<PreparedTrial> = subject.trials.par_iter().map(|t| prepare_trial(t, &pipeline_config(plan, first))).collect::<Result<_>>()?;
            let prepared: Vec<(GridPoint, PreparedSubject)> = plan
                .feat_windows_ms
                .iter()
                .map(|&f| {
                    let g = GridPoint { norm_win_ms: setting, feat_win_ms: f };
                    let pc = pipeline_config(plan, g);
                    let trials = base.par_iter().map(|t| t.reframe(&pc)).collect::<Result<Vec<_>>>()?;
                    Ok((g, PreparedSubject::new(subject, si, trials, plan.splits.block_s)))
                })
                .collect::<Result<_>>()?;
            drop(base);
            if splits.is_none() {
                let counts = prepared[0].1.blocks_per_position();
                splits = Some(plan.seeds.iter().map(|&s| make_splits(counts, &plan.splits, s, si)).collect::<Result<_>>()?);
            }
            let sp = splits.as_ref().expect("set above");
            let units: Vec<(usize, usize)> = (0..prepared.len()).flat_map(|g| (0..plan.seeds.len()).map(move |s| (g, s))).collect();
            let results: Vec<Vec<ResultRecord>> = units
                .par_iter()
                .map(|&(g, s)| {
                    let (grid, ps) = &prepared[g];
                    let r = run_unit(plan, ps, &sp[s], *grid, plan.seeds[s]);
                    log::info!("{} grid {:?}/{} seed {} done", ps.name, grid.norm_win_ms, grid.feat_win_ms, plan.seeds[s]);
                    r
                })
                .collect::<Result<_>>()?;
            all.extend(results.into_iter().flatten());
        }
    }
    differential_accuracy(&mut all)?;
    all.retain(|r| plan.strategies.contains(&r.strategy));
    Ok(all)
}
