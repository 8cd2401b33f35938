//! Correlation with human judgements and the analyses built on it:
//! system-level agreement, score normalization, length bias, failure
//! slices, and retraining sweeps.

mod bias;
mod corr;
mod failure;
mod normalize;
mod sweep;
mod system;
mod tables;

pub use bias::{length_bias_report, welch_t_test, GroupStats, LengthBiasReport};
pub use corr::{average_ranks, pearson, spearman, t_two_tailed, CorrelationResult};
pub use failure::{failure_slice, FailureSlices, FailureThresholds};
pub use normalize::{affine_normalize, normalize_scores};
pub use sweep::{
    context_subset, correlate, data_efficiency_sweep, leave_one_out_eval, loo_training_sets, without_source, CorrPair,
    LooReport, LooRow, LooSplit, SweepRow, DEFAULT_FRACTIONS,
};
pub use system::{system_level_correlation, SystemRow, SystemSummary};
pub use tables::{
    evaluate, loo_csv, meta_from_csv, meta_to_csv, sweep_csv, EvalConfig, ExampleMeta, ScoreTable, Tables, EVAL_TABLES,
    FAILURE_EXAMPLES_TABLE, FAILURE_TABLE, LENGTH_BIAS_TABLE, LOO_TABLE, SCATTER_TABLE,
    SWEEP_TABLE, SYSTEM_MEANS_TABLE, SYSTEM_TABLE, UTTERANCE_TABLE,
};
