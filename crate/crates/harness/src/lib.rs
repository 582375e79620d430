//! Batch front end for `berm-core`: simulation suites with replicate
//! management and CSV reports, and a case-study runner for tabular data.

pub mod case;
pub mod config;
pub mod error;
pub mod output;
pub mod stats;
pub mod suite;

pub use config::{parse_config, parse_config_str, CaseStudyConfig, Config, SuiteConfig};
pub use error::{HarnessError, Result};
