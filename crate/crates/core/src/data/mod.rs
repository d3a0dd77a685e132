//! Dataset ingestion and preprocessing.

pub mod cohort;
pub mod csv_io;
pub mod impute;
pub mod rebalance;
pub mod select;
pub mod standardize;
pub mod synthetic;

pub use cohort::{Cohort, Standardization};
pub use csv_io::{load_csv, read_csv, write_csv, write_csv_to, LABEL_COLUMN};
pub use impute::{impute_chained, ChainedImputer, DEFAULT_ROUNDS};
pub use rebalance::{pos_weight, rebalance, smote, undersample, Rebalanced, Strategy};
pub use select::{select_features, FeatureReport, SelectionConfig};
pub use standardize::{standardize_apply, standardize_fit};
pub use synthetic::{
    default_synthetic_cohort, generate_synthetic_cohort, generate_with_config, DefaultCohort, ShiftSpec, SyntheticConfig,
};
