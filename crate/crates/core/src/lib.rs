//! Confidence calibration pipeline: corpus partitioning, elicitation,
//! grading, consistency targets, psychometric metrics, hidden-state probes,
//! go/no-go gating and synthetic responder worlds.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod corpus;
pub mod elicit;
pub mod error;
pub mod gate;
pub mod grade;
pub mod jsonl;
pub mod probe;
pub mod psychometrics;
pub mod rng;
pub mod simlab;
pub mod stats;
pub mod targets;

pub use corpus::{Benchmark, Item, SplitManifest, SplitPlan};
pub use error::{Error, Result};
pub use grade::{GradeRecord, ParseStatus};
pub use psychometrics::{MetricReport, ScoredSet};
pub use targets::{Bin, ConsistencyProfile, TargetMap};
