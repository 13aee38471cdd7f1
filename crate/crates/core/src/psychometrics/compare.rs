use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::bootstrap::{bin_deltas, paired_bootstrap_delta, Estimate};
use super::report::{metric_report, verbal_signal, MetricPolicy, MetricReport};
use super::ScoredSet;
use crate::error::{Error, Result};
use crate::grade::GradeRecord;
use crate::targets::Bin;

/// Metrics for one evaluated condition, with deltas against the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    /// Identifies the evaluated item set; conditions on different sets are
    /// not comparable.
    pub split: String,
    pub metrics: MetricReport,
    /// AUROC2(condition) - AUROC2(baseline) over items scored in both.
    pub auroc2_delta: Option<Estimate>,
    pub accuracy_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bin_deltas: BTreeMap<Bin, Estimate>,
    /// Further signals evaluated on this condition, e.g. first-token entropy.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub signals: BTreeMap<String, Estimate>,
}

/// Graded greedy pass for one condition.
pub struct ConditionInput<'a> {
    pub name: &'a str,
    pub split: &'a str,
    pub grades: &'a [GradeRecord],
}

fn common(a: &ScoredSet, b: &ScoredSet) -> (ScoredSet, ScoredSet) {
    let ia: HashSet<&str> = a.entries().iter().map(|e| e.item_id.as_str()).collect();
    let both: HashSet<&str> = b.entries().iter().map(|e| e.item_id.as_str()).filter(|id| ia.contains(id)).collect();
    (a.restrict(&both), b.restrict(&both))
}

/// Reports for the baseline (first input) and every other condition.
/// Deltas are paired over items with a verbal score in both conditions.
pub fn compare_conditions(
    inputs: &[ConditionInput<'_>],
    bins: Option<&HashMap<String, Bin>>,
    policy: &MetricPolicy,
) -> Result<Vec<ConditionReport>> {
    let Some(base) = inputs.first() else {
        return Err(Error::Invalid("no conditions to compare".into()));
    };
    let mut names = HashSet::new();
    if let Some(dup) = inputs.iter().find(|c| !names.insert(c.name)) {
        return Err(Error::Invalid(format!("condition {} listed twice", dup.name)));
    }
    let base_metrics = metric_report(base.grades, policy)?;
    let (base_scored, _) = verbal_signal(base.grades)?;
    let mut out = vec![ConditionReport {
        condition: base.name.to_owned(),
        split: base.split.to_owned(),
        metrics: base_metrics.clone(),
        auroc2_delta: None,
        accuracy_delta: None,
        bin_deltas: BTreeMap::new(),
        signals: BTreeMap::new(),
    }];
    for c in &inputs[1..] {
        let metrics = metric_report(c.grades, policy)?;
        let (scored, _) = verbal_signal(c.grades)?;
        let (a, b) = common(&base_scored, &scored);
        let delta = paired_bootstrap_delta(&a, &b, policy.bootstrap_resamples, policy.bootstrap_seed, policy.level)?;
        let per_bin = match bins {
            Some(bins) => bin_deltas(&a, &b, bins, policy.bootstrap_resamples, policy.bootstrap_seed, policy.level)?,
            None => BTreeMap::new(),
        };
        out.push(ConditionReport {
            condition: c.name.to_owned(),
            split: c.split.to_owned(),
            accuracy_delta: Some(metrics.accuracy - base_metrics.accuracy),
            metrics,
            auroc2_delta: Some(delta),
            bin_deltas: per_bin,
            signals: BTreeMap::new(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grade::{JudgeMethod, ParseStatus, Verdict};

    fn grades(n: usize, conf: impl Fn(usize, bool) -> f64) -> Vec<GradeRecord> {
        (0..n)
            .map(|i| {
                let correct = i % 3 != 0;
                GradeRecord {
                    item_id: format!("q{i}"),
                    sample_index: 0,
                    correct: if correct { Verdict::Correct } else { Verdict::Incorrect },
                    confidence_pct: Some(conf(i, correct)),
                    judge_method: JudgeMethod::AliasMatch,
                    parse_status: ParseStatus::Full,
                    answer_text: None,
                    canonical_answer: None,
                }
            })
            .collect()
    }

    #[test]
    fn deltas_against_baseline() {
        let base = grades(90, |i, _| (i % 4) as f64 * 10.0);
        let post = grades(90, |i, c| if c { 90.0 } else { 10.0 } + (i % 2) as f64);
        let policy = MetricPolicy { bootstrap_resamples: 300, ..Default::default() };
        let reports = compare_conditions(
            &[
                ConditionInput { name: "baseline", split: "eval", grades: &base },
                ConditionInput { name: "post", split: "eval", grades: &post },
            ],
            None,
            &policy,
        )
        .unwrap();
        assert_eq!(reports.len(), 2);
        assert!(reports[0].auroc2_delta.is_none());
        let ci = reports[1].auroc2_delta.as_ref().unwrap().ci().unwrap().clone();
        assert!(ci.lo > 0.0);
        assert_eq!(reports[1].accuracy_delta, Some(0.0));
    }

    #[test]
    fn identical_conditions_give_zero_delta() {
        let base = grades(60, |i, _| (i % 5) as f64 * 20.0);
        let policy = MetricPolicy { bootstrap_resamples: 200, ..Default::default() };
        let reports = compare_conditions(
            &[
                ConditionInput { name: "a", split: "s", grades: &base },
                ConditionInput { name: "b", split: "s", grades: &base },
            ],
            None,
            &policy,
        )
        .unwrap();
        let ci = reports[1].auroc2_delta.as_ref().unwrap().ci().unwrap().clone();
        assert_eq!((ci.point, ci.lo, ci.hi), (0.0, 0.0, 0.0));
    }

    #[test]
    fn duplicate_condition_names() {
        let base = grades(10, |_, _| 50.0);
        let inputs = [
            ConditionInput { name: "a", split: "s", grades: &base },
            ConditionInput { name: "a", split: "s", grades: &base },
        ];
        assert!(compare_conditions(&inputs, None, &MetricPolicy::default()).is_err());
    }
}
