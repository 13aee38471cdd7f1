use super::ScoredSet;
use crate::error::{Error, Result};

/// Selective risk at each coverage `1/n, 2/n, ..., 1`, ranking by signal
/// descending. Inside a block of tied signals the block's pooled error rate
/// is used, so the curve does not depend on input order.
pub fn risk_coverage(scored: &ScoredSet) -> Result<Vec<f64>> {
    if scored.is_empty() {
        return Err(Error::Invalid("risk-coverage of an empty set".into()));
    }
    let mut rows: Vec<(f64, bool)> = scored.entries().iter().map(|e| (e.signal, e.correct)).collect();
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n = rows.len();
    let mut risks = Vec::with_capacity(n);
    let mut errors_before = 0.0;
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end < n && rows[end].0 == rows[start].0 {
            end += 1;
        }
        let block = (end - start) as f64;
        let block_errors = rows[start..end].iter().filter(|r| !r.1).count() as f64;
        let rate = block_errors / block;
        for taken in 1..=(end - start) {
            let covered = (start + taken) as f64;
            risks.push((errors_before + rate * taken as f64) / covered);
        }
        errors_before += block_errors;
        start = end;
    }
    Ok(risks)
}

/// Area under the risk-coverage curve as the mean risk over item-level
/// coverage steps.
pub fn aurc(scored: &ScoredSet) -> Result<f64> {
    let risks = risk_coverage(scored)?;
    Ok(risks.iter().sum::<f64>() / risks.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psychometrics::SignalSemantics;

    fn set(correct: &[bool], signal: &[f64]) -> ScoredSet {
        ScoredSet::from_parts(SignalSemantics::VerbalConfidencePct, correct, signal).unwrap()
    }

    #[test]
    fn hand_case() {
        let s = set(&[true, true, false, false], &[90.0, 80.0, 70.0, 60.0]);
        let r = risk_coverage(&s).unwrap();
        assert_eq!(r, vec![0.0, 0.0, 1.0 / 3.0, 0.5]);
        assert!((aurc(&s).unwrap() - 0.208_333_333_3).abs() < 1e-9);
    }

    #[test]
    fn extremes() {
        assert_eq!(aurc(&set(&[true; 5], &[1.0, 2.0, 3.0, 4.0, 5.0])).unwrap(), 0.0);
        assert_eq!(aurc(&set(&[false; 5], &[1.0, 2.0, 3.0, 4.0, 5.0])).unwrap(), 1.0);
        assert!(aurc(&set(&[], &[])).is_err());
    }

    #[test]
    fn ties_are_pooled() {
        // one block of four with half errors: every coverage level sees 0.5
        let s = set(&[true, false, true, false], &[5.0; 4]);
        assert_eq!(risk_coverage(&s).unwrap(), vec![0.5; 4]);
        let s2 = set(&[false, false, true, true], &[5.0; 4]);
        assert_eq!(aurc(&s).unwrap(), aurc(&s2).unwrap());
    }
}
