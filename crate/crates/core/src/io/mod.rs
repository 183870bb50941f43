//! File formats and the monthly cross-validation driver.
//!
//! Datasets are CSV tables, run settings are TOML files and results are
//! versioned JSON reports with CSV renderings.

pub mod center;
pub mod config;
pub mod cv;
pub mod report;
pub mod table;

pub use center::{center, Centering};
pub use config::{ConfigFile, EstimateOptions};
pub use cv::{monthly_cv, select_gamma, CvConfig, CvResult, EnvSplit};
pub use report::{CvReport, EnvSummary, EstimateReport, Format, Report};
pub use table::{load_csv, read_table, write_dataset_csv, Record, Table};
