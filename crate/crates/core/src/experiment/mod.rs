//! Splits, strategies, training runs, differential accuracy and statistics.

pub mod data;
pub mod plan;
pub mod report;
pub mod runner;
pub mod splits;
pub mod stats;
pub mod train;

pub use data::{Dataset, PreparedTrial, Subject, Trial};
pub use plan::{parse_strategies, DeskProfile, ExperimentPlan, GridPoint, GridProfile, ModelSpec, Normalization, SplitConfig, Strategy, TrainingConfig};
pub use report::{differential_accuracy, summarize, sweep_windows, write_results, ResultRecord, Summary};
pub use runner::{run_experiment, run_unit, ExperimentOutput};
pub use splits::{combinations, make_splits, Combo, SplitSpec};
pub use stats::{bonferroni, wilcoxon_rank_sum, RankSum};
