//! Metrics, stratified cross-validation and hyperparameter search.

pub mod cv;
pub mod metrics;
pub mod search;

pub use cv::{
    cross_validate, paired_t_test, render_cv_table, render_metrics_table, stratified_kfold, CvConfig, CvReport,
    FoldResult, PairedTTest,
};
pub use metrics::{lr_plus, metrics, prc_auc, roc_auc, MetricSet};
pub use search::{random_search, rank_entries, Leaderboard, LeaderboardEntry, Outcome, SearchSpace};
