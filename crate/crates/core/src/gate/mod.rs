//! Pre-registered decision rules and the study report.

mod render;
mod rules;

pub use render::{render_report, RenderedReport, Table};
pub use rules::{
    evaluate_gate, flatten_metrics, Clause, Evidence, GateConfig, GateOutcome, HypothesisRule, Metrics, Op,
    OutcomeMapping, RuleOutcome,
};
