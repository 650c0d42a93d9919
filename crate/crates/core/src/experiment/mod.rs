//! End-to-end experiments: cluster once, train, report.

pub mod baseline;
pub mod config;
pub mod run;
pub mod truncation;

pub use config::{BaselineMode, ExperimentConfig};
pub use run::{
    cluster_only, cluster_users, load_users, run_experiment, run_loaded, train_repetition, ClusterReport,
    ExperimentReport, LoadedUsers, RepetitionResult, Stat,
};
pub use truncation::{task_margin, truncation_on_users, truncation_study, TruncationReport};
