use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_auroc, Estimate};
use super::vrs::{vrs_screen, VrsPolicy, VrsVerdict};
use super::{aurc, Scored, ScoredSet, SignalSemantics};
use crate::error::{Error, Result};
use crate::grade::{parse_rate, GradeRecord, ParseRate, Verdict};
use crate::stats;
use crate::targets::ConsistencyProfile;

/// How unparseable responses enter accuracy. They never enter AUROC2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnparsedPolicy {
    #[default]
    CountIncorrect,
    ExcludeFromAccuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPolicy {
    pub ceiling_threshold_pct: f64,
    pub unparsed: UnparsedPolicy,
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
    pub level: f64,
    pub vrs: VrsPolicy,
}

impl Default for MetricPolicy {
    fn default() -> Self {
        MetricPolicy {
            ceiling_threshold_pct: 95.0,
            unparsed: UnparsedPolicy::CountIncorrect,
            bootstrap_resamples: 10_000,
            bootstrap_seed: 0,
            level: 0.95,
            vrs: VrsPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auroc2: Estimate,
    pub accuracy: f64,
    pub n_correct: usize,
    pub n_attempted: usize,
    pub ceiling_rate: f64,
    pub aurc: Option<f64>,
    pub vrs: VrsVerdict,
    pub distinct_levels: usize,
    pub parse_rate: ParseRate,
    /// Records with a judged answer and a confidence value.
    pub n_scored: usize,
    /// Records without one of the two; `n_scored + n_excluded = n_attempted`.
    pub n_excluded: usize,
}

/// Verbal confidence as a signal. Records that are unjudgeable or lack a
/// confidence are excluded; the second value is their count.
pub fn verbal_signal(grades: &[GradeRecord]) -> Result<(ScoredSet, usize)> {
    let mut entries = Vec::new();
    let mut excluded = 0;
    for g in grades {
        match (g.correct, g.confidence_pct) {
            (Verdict::Correct | Verdict::Incorrect, Some(c)) => entries.push(Scored {
                item_id: g.item_id.clone(),
                correct: g.correct.is_correct(),
                signal: c,
            }),
            _ => excluded += 1,
        }
    }
    Ok((ScoredSet::new(SignalSemantics::VerbalConfidencePct, entries)?, excluded))
}

/// Self-consistency count as a signal for held-out correctness.
pub fn n_correct_signal(
    profiles: &[ConsistencyProfile],
    correctness: &HashMap<String, bool>,
) -> Result<ScoredSet> {
    let entries = profiles
        .iter()
        .filter_map(|p| {
            correctness.get(&p.item_id).map(|&c| Scored {
                item_id: p.item_id.clone(),
                correct: c,
                signal: p.n_correct as f64,
            })
        })
        .collect();
    ScoredSet::new(SignalSemantics::NCorrect, entries)
}

/// Share of attempted items stating confidence at or above `threshold_pct`.
/// The denominator counts unparsed items too.
pub fn ceiling_rate(scored: &ScoredSet, attempted: usize, threshold_pct: f64) -> Result<f64> {
    if scored.semantics != SignalSemantics::VerbalConfidencePct {
        return Err(Error::Invalid(format!(
            "ceiling rate needs verbal confidence, got {:?}",
            scored.semantics
        )));
    }
    if attempted < scored.len() {
        return Err(Error::Invalid("attempted count below scored count".into()));
    }
    if attempted == 0 {
        return Ok(0.0);
    }
    let at = scored.entries().iter().filter(|e| e.signal >= threshold_pct).count();
    Ok(at as f64 / attempted as f64)
}

pub fn distinct_levels(scored: &ScoredSet) -> usize {
    stats::histogram(scored.entries().iter().map(|e| e.signal)).len()
}

/// Score one greedy pass: one graded record per item.
pub fn metric_report(grades: &[GradeRecord], policy: &MetricPolicy) -> Result<MetricReport> {
    if grades.is_empty() {
        return Err(Error::Invalid("no graded records".into()));
    }
    let mut ids = HashSet::new();
    if let Some(dup) = grades.iter().find(|g| !ids.insert(g.item_id.as_str())) {
        return Err(Error::Invalid(format!(
            "item {} graded more than once; metrics expect one greedy record per item",
            dup.item_id
        )));
    }
    let n_attempted = grades.len();
    let n_correct = grades.iter().filter(|g| g.correct.is_correct()).count();
    let judged = grades.iter().filter(|g| g.correct != Verdict::Unjudgeable).count();
    let accuracy = match policy.unparsed {
        UnparsedPolicy::CountIncorrect => n_correct as f64 / n_attempted as f64,
        UnparsedPolicy::ExcludeFromAccuracy if judged == 0 => 0.0,
        UnparsedPolicy::ExcludeFromAccuracy => n_correct as f64 / judged as f64,
    };

    let (scored, n_excluded) = verbal_signal(grades)?;
    let auroc2 = bootstrap_auroc(&scored, policy.bootstrap_resamples, policy.bootstrap_seed, policy.level);
    let ceiling = ceiling_rate(&scored, n_attempted, policy.ceiling_threshold_pct)?;
    let levels = distinct_levels(&scored);
    let aurc = (!scored.is_empty()).then(|| aurc(&scored)).transpose()?;
    let vrs = vrs_screen(auroc2.ci().map(|c| (c.lo, c.hi)), ceiling, levels, &policy.vrs);
    let parse_rate = parse_rate(grades.iter().map(|g| &g.parse_status))?;

    Ok(MetricReport {
        auroc2,
        accuracy,
        n_correct,
        n_attempted,
        ceiling_rate: ceiling,
        aurc,
        vrs,
        distinct_levels: levels,
        parse_rate,
        n_scored: scored.len(),
        n_excluded,
    })
}
