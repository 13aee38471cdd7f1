//! Type-2 evaluation statistics.

mod aurc;
mod auroc;
mod bootstrap;
mod compare;
mod entropy;
mod report;
mod vrs;

pub use aurc::{aurc, risk_coverage};
pub use auroc::{auroc2, auroc_pairs, auroc_brute_force};
pub use compare::{compare_conditions, ConditionInput, ConditionReport};
pub use bootstrap::{bin_deltas, bootstrap_auroc, paired_bootstrap_delta, BootstrapCI, Estimate};
pub use entropy::{entropy_signal, first_token_entropy, EntropySignal, LogprobRecord};
pub use report::{
    ceiling_rate, distinct_levels, metric_report, n_correct_signal, verbal_signal, MetricPolicy,
    MetricReport, UnparsedPolicy,
};
pub use vrs::{vrs_screen, VrsEvidence, VrsLabel, VrsPolicy, VrsVerdict};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalSemantics {
    VerbalConfidencePct,
    EntropyNegated,
    NCorrect,
    ProbeScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub item_id: String,
    pub correct: bool,
    pub signal: f64,
}

/// Correctness paired with a confidence signal; higher signal means more
/// confident.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    pub semantics: SignalSemantics,
    entries: Vec<Scored>,
}

impl ScoredSet {
    pub fn new(semantics: SignalSemantics, entries: Vec<Scored>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !e.signal.is_finite() {
                return Err(Error::Invalid(format!("non-finite signal for {}", e.item_id)));
            }
            if !seen.insert(e.item_id.as_str()) {
                return Err(Error::Invalid(format!("duplicate item {}", e.item_id)));
            }
        }
        Ok(ScoredSet { semantics, entries })
    }

    /// Convenience constructor with synthetic ids `0..n`.
    pub fn from_parts(semantics: SignalSemantics, correct: &[bool], signal: &[f64]) -> Result<Self> {
        if correct.len() != signal.len() {
            return Err(Error::Invalid("correctness and signal lengths differ".into()));
        }
        Self::new(
            semantics,
            correct
                .iter()
                .zip(signal)
                .enumerate()
                .map(|(i, (&c, &s))| Scored { item_id: i.to_string(), correct: c, signal: s })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[Scored] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn correct(&self) -> Vec<bool> {
        self.entries.iter().map(|e| e.correct).collect()
    }

    pub fn signals(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.signal).collect()
    }

    /// Subset with the given ids, keeping this set's order.
    pub fn restrict(&self, ids: &HashSet<&str>) -> ScoredSet {
        ScoredSet {
            semantics: self.semantics,
            entries: self
                .entries
                .iter()
                .filter(|e| ids.contains(e.item_id.as_str()))
                .cloned()
                .collect(),
        }
    }
}
