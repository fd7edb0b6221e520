//! Optimization, evaluation and experiment drivers.

mod adam;
mod config;
mod experiment;
mod gradcheck;
mod metrics;
mod trainer;

pub use adam::{Adam, AdamConfig};
pub use config::{RunConfig, KEYS};
pub use experiment::{
    ablate, ablation_tsv, full_grid, sweep_buckets, sweep_csv, train_and_evaluate, AblationCell, AblationRow, SweepRow,
    SweepTarget, METHODS,
};
pub use gradcheck::{gradcheck_problem, run_gradcheck, GradCheckOutcome, GradCheckSpec};
pub use metrics::{evaluate, rank_of, report_from_scores, EvalReport, Metrics, CUTOFFS};
pub use trainer::{
    batch_gradient, save_metrics_csv, train, write_metrics_csv, EpochLog, TrainConfig, TrainOutcome, METRICS_HEADER,
};
