//! Hyperparameter search, persisted experiment runs, model selection
//! protocols, label-budget curves, ensembles and reports.

mod config;
mod ensemble;
mod fit;
mod record;
mod select;
mod suite;

pub use config::{apply_overrides, default_grid, sample_configs, short_hash, DetectorConfig, DetectorKind, Grid};
pub use ensemble::{average_scores, delta_table, ensemble_topk, EnsembleRow};
pub use fit::{autoencoder_spec, fit_autoencoder_config, fit_detector, two_stage_fit, EncoderSource, Fitted, TwoStage};
pub use record::{
    evaluate_scores, load_records, load_scores, metric_names, pr_metric, read_record, records_dir, run_experiment,
    scores_dir, EvalRecord, RunOptions, RunStatus, ScoreSidecar, SplitData, AUC, PR_NS, TPR5,
};
pub use select::{
    knowledge_curve, select, select_max, select_mean, selection_matrix, selection_ranks, CurvePoint, Protocol,
    SeedChoice, Selection, SelectionResult, DEFAULT_MIN_REPS,
};
pub use suite::{curve_csv, run_suite, write_report, ReportOptions, ReportSummary, SuiteConfig};
