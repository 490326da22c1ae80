//! Demographic bias auditing for generated marketing slogans.
//!
//! The pipeline generates (or loads) a slogan corpus per target group, counts
//! thematic dictionary terms in every slogan, turns the counts into relative
//! bias percentages, and compares each target group's per-slogan count
//! distribution with the baseline group using two-sample KS tests.
//!
//! ```text
//! generate ─▶ corpus.jsonl ─▶ count ─▶ counts.json ─┬─▶ bias_table.csv
//!                                                     └─▶ ks_results.csv, cdf_export.json
//! ```

pub mod bias;
pub mod config;
pub mod corpus;
pub mod digest;
pub mod error;
pub mod generate;
pub mod lexicon;
pub mod report;
pub mod stats;

pub use error::{Error, Result};
