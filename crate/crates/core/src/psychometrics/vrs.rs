//! Validity screening of a confidence signal.
//!
//! The thresholds are a reconstruction, not a published standard. The rule is
//! versioned so alternatives can be swapped in, and every verdict carries the
//! policy name so reports can flag it.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VrsLabel {
    Valid,
    Indeterminate,
    Invalid,
}

impl std::fmt::Display for VrsLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VrsLabel::Valid => "Valid",
            VrsLabel::Indeterminate => "Indeterminate",
            VrsLabel::Invalid => "Invalid",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VrsPolicy {
    pub name: String,
    /// Ceiling rate at or above which the signal is Invalid.
    pub invalid_ceiling: f64,
    /// Fewer distinct levels than this is Invalid.
    pub invalid_min_levels: usize,
    /// Valid needs at least this many distinct levels.
    pub valid_min_levels: usize,
    pub chance: f64,
}

impl Default for VrsPolicy {
    fn default() -> Self {
        VrsPolicy {
            name: "vrs-reconstructed-v1".into(),
            invalid_ceiling: 0.90,
            invalid_min_levels: 2,
            valid_min_levels: 3,
            chance: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VrsEvidence {
    /// AUROC2 confidence interval; `None` when AUROC2 is undefined.
    pub auroc_ci: Option<(f64, f64)>,
    pub ceiling_rate: f64,
    pub distinct_levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VrsVerdict {
    pub label: VrsLabel,
    pub evidence: VrsEvidence,
    pub policy: String,
}

/// Invalid if the CI contains chance, the ceiling rate is at or above the
/// limit, or fewer than two levels are used. Valid if the CI lies above
/// chance with a sub-ceiling rate and at least three levels. Otherwise
/// Indeterminate.
pub fn vrs_screen(
    auroc_ci: Option<(f64, f64)>,
    ceiling_rate: f64,
    distinct_levels: usize,
    policy: &VrsPolicy,
) -> VrsVerdict {
    let ci_contains_chance = auroc_ci.is_none_or(|(lo, hi)| lo <= policy.chance && policy.chance <= hi);
    let label = if ci_contains_chance
        || ceiling_rate >= policy.invalid_ceiling
        || distinct_levels < policy.invalid_min_levels
    {
        VrsLabel::Invalid
    } else if auroc_ci.is_some_and(|(lo, _)| lo > policy.chance)
        && distinct_levels >= policy.valid_min_levels
    {
        VrsLabel::Valid
    } else {
        VrsLabel::Indeterminate
    };
    VrsVerdict {
        label,
        evidence: VrsEvidence { auroc_ci, ceiling_rate, distinct_levels },
        policy: policy.name.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn screen(ci: Option<(f64, f64)>, ceiling: f64, levels: usize) -> VrsLabel {
        vrs_screen(ci, ceiling, levels, &VrsPolicy::default()).label
    }

    #[test]
    fn baseline_ceiling_is_invalid() {
        assert_eq!(screen(Some((0.51, 0.60)), 0.977, 6), VrsLabel::Invalid);
        assert_eq!(screen(Some((0.47, 0.63)), 0.977, 6), VrsLabel::Invalid);
    }

    #[test]
    fn binary_discriminator_is_indeterminate() {
        assert_eq!(screen(Some((0.745, 0.803)), 0.498, 2), VrsLabel::Indeterminate);
    }

    #[test]
    fn graded_signal_is_valid() {
        assert_eq!(screen(Some((0.6, 0.7)), 0.3, 11), VrsLabel::Valid);
    }

    #[test]
    fn other_invalid_paths() {
        assert_eq!(screen(None, 0.1, 5), VrsLabel::Invalid);
        assert_eq!(screen(Some((0.7, 0.8)), 0.1, 1), VrsLabel::Invalid);
        // below-chance interval is not Valid
        assert_eq!(screen(Some((0.2, 0.4)), 0.1, 5), VrsLabel::Indeterminate);
    }

    #[test]
    fn verdict_is_recomputable_from_evidence() {
        let p = VrsPolicy::default();
        let v = vrs_screen(Some((0.55, 0.65)), 0.4, 4, &p);
        let again = vrs_screen(v.evidence.auroc_ci, v.evidence.ceiling_rate, v.evidence.distinct_levels, &p);
        assert_eq!(v, again);
    }
}
