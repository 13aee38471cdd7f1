use statrs::distribution::{ContinuousCDF, Normal};

use super::world::{ConfidenceProcess, GradedLink, SyntheticWorld};
use crate::error::{Error, Result};

/// P(hi | correct) = a, P(hi | incorrect) = b.
pub fn binary_auroc(a: f64, b: f64) -> f64 {
    a * (1.0 - b) + 0.5 * (a * b + (1.0 - a) * (1.0 - b))
}

/// Equal-variance normal classes whose means differ by `separation`.
pub fn binormal_auroc(separation: f64, noise_sd: f64) -> f64 {
    if noise_sd == 0.0 {
        return match separation.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => 1.0,
            Some(std::cmp::Ordering::Less) => 0.0,
            _ => 0.5,
        };
    }
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    std_normal.cdf(separation / (noise_sd * std::f64::consts::SQRT_2))
}

/// Population AUROC of the latent confidence signal against correctness.
/// Rounding and clamping of stated values are not modelled, so estimates
/// from parsed logs converge to this only when the process emits
/// whole-number percentages inside [0, 100].
pub fn analytic_auroc(world: &SyntheticWorld) -> Result<f64> {
    if world.items.is_empty() {
        return Err(Error::Degenerate("empty world".into()));
    }
    let mean = world.mean_p();
    if mean <= 0.0 || mean >= 1.0 {
        return Err(Error::Degenerate("world has a single correctness class".into()));
    }
    match &world.confidence {
        ConfidenceProcess::DegenerateCeiling { .. } => Ok(0.5),
        ConfidenceProcess::BinaryDiscriminator { hit_rate, false_alarm_rate, .. } => {
            Ok(binary_auroc(*hit_rate, *false_alarm_rate))
        }
        ConfidenceProcess::Graded { link: GradedLink::Gaussian, separation, noise_sd, .. } => {
            Ok(binormal_auroc(*separation, *noise_sd))
        }
        ConfidenceProcess::Graded { link: GradedLink::Logistic, .. } => Err(Error::Invalid(
            "no closed-form AUROC for logistic noise; use a Gaussian link".into(),
        )),
    }
}
