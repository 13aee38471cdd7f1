use serde::{Deserialize, Serialize};

use super::{Scored, ScoredSet, SignalSemantics};
use crate::elicit::log::TokenLogprob;
use crate::error::{Error, Result};

/// Entropy in nats of the renormalised top-k distribution at one position,
/// together with the probability mass the endpoint did not return.
pub fn first_token_entropy(logprobs: &[TokenLogprob]) -> Result<(f64, f64)> {
    if logprobs.is_empty() {
        return Err(Error::Invalid("no logprobs at the first position".into()));
    }
    if let Some(bad) = logprobs.iter().find(|t| !(t.logprob <= 0.0)) {
        return Err(Error::Invalid(format!("logprob {} for {:?} is not <= 0", bad.logprob, bad.token)));
    }
    let max = logprobs.iter().map(|t| t.logprob).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logprobs.iter().map(|t| (t.logprob - max).exp()).collect();
    let z: f64 = weights.iter().sum();
    let h = weights
        .iter()
        .map(|w| w / z)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum::<f64>()
        .max(0.0);
    let returned: f64 = logprobs.iter().map(|t| t.logprob.exp()).sum();
    Ok((h, (1.0 - returned).max(0.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogprobRecord {
    pub item_id: String,
    pub correct: bool,
    pub logprobs: Option<Vec<TokenLogprob>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySignal {
    pub scored: ScoredSet,
    /// Per item, aligned with `scored`.
    pub truncation_mass: Vec<f64>,
    pub max_truncation_mass: f64,
}

/// Negated first-token entropy as a confidence signal.
pub fn entropy_signal(records: &[LogprobRecord]) -> Result<EntropySignal> {
    let mut entries = Vec::with_capacity(records.len());
    let mut truncation = Vec::with_capacity(records.len());
    for r in records {
        let lps = r
            .logprobs
            .as_deref()
            .ok_or_else(|| Error::Invalid(format!("item {} has no logprobs", r.item_id)))?;
        let (h, mass) = first_token_entropy(lps)?;
        entries.push(Scored { item_id: r.item_id.clone(), correct: r.correct, signal: -h });
        truncation.push(mass);
    }
    let max_truncation_mass = truncation.iter().copied().fold(0.0, f64::max);
    Ok(EntropySignal {
        scored: ScoredSet::new(SignalSemantics::EntropyNegated, entries)?,
        truncation_mass: truncation,
        max_truncation_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(xs: &[f64]) -> Vec<TokenLogprob> {
        xs.iter()
            .enumerate()
            .map(|(i, &l)| TokenLogprob { token: format!("t{i}"), logprob: l })
            .collect()
    }

    #[test]
    fn certain_token_has_zero_entropy() {
        let (h, mass) = first_token_entropy(&lp(&[0.0])).unwrap();
        assert_eq!(h, 0.0);
        assert_eq!(mass, 0.0);
    }

    #[test]
    fn two_equal_tokens() {
        let (h, _) = first_token_entropy(&lp(&[0.5f64.ln(), 0.5f64.ln()])).unwrap();
        assert!((h - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn three_truncated_tokens_match_closed_form() {
        let raw = [-0.5f64, -1.5, -3.0];
        let (h, mass) = first_token_entropy(&lp(&raw)).unwrap();
        let ps: Vec<f64> = raw.iter().map(|l| l.exp()).collect();
        let z: f64 = ps.iter().sum();
        let expected: f64 = ps.iter().map(|p| -(p / z) * (p / z).ln()).sum();
        assert!((h - expected).abs() < 1e-12);
        assert!((h - 0.766_784_544_089).abs() < 1e-9, "{h}");
        assert!((mass - (1.0 - z)).abs() < 1e-12);
    }

    #[test]
    fn signal_is_negated_entropy() {
        let recs = vec![
            LogprobRecord { item_id: "a".into(), correct: true, logprobs: Some(lp(&[0.0])) },
            LogprobRecord {
                item_id: "b".into(),
                correct: false,
                logprobs: Some(lp(&[0.5f64.ln(), 0.5f64.ln()])),
            },
        ];
        let sig = entropy_signal(&recs).unwrap();
        assert_eq!(sig.scored.signals()[0], 0.0);
        assert!(sig.scored.signals()[1] < 0.0);
        let missing = vec![LogprobRecord { item_id: "c".into(), correct: true, logprobs: None }];
        assert!(entropy_signal(&missing).is_err());
        assert!(first_token_entropy(&lp(&[0.1])).is_err());
    }
}
