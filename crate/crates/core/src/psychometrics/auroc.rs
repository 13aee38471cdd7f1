use super::ScoredSet;
use crate::error::{Error, Result};

/// Mann-Whitney AUROC over `(correct, signal)` pairs, ties counting one half.
/// Returns `None` when either class is empty.
pub fn auroc_pairs(pairs: &mut [(f64, bool)]) -> Option<f64> {
    let n_pos = pairs.iter().filter(|p| p.1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of midranks of the positives, doubled to stay in integers.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j, midrank = (i + 1 + j) / 2
        let pos_in_block = pairs[i..j].iter().filter(|p| p.1).count() as u128;
        rank_sum2 += pos_in_block * (i as u128 + 1 + j as u128);
        i = j;
    }
    let n_pos_u = n_pos as u128;
    // U = R - n_pos (n_pos + 1) / 2; all doubled.
    let u2 = rank_sum2 - n_pos_u * (n_pos_u + 1);
    Some(u2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

pub fn auroc2(scored: &ScoredSet) -> Result<f64> {
    let mut pairs: Vec<(f64, bool)> = scored.entries().iter().map(|e| (e.signal, e.correct)).collect();
    auroc_pairs(&mut pairs).ok_or_else(|| {
        Error::Degenerate("AUROC2 needs at least one correct and one incorrect item".into())
    })
}

/// Quadratic pair enumeration. Reference implementation for tests.
pub fn auroc_brute_force(correct: &[bool], signal: &[f64]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &ci) in correct.iter().enumerate() {
        if !ci {
            continue;
        }
        for (j, &cj) in correct.iter().enumerate() {
            if cj {
                continue;
            }
            den += 1.0;
            if signal[i] > signal[j] {
                num += 1.0;
            } else if signal[i] == signal[j] {
                num += 0.5;
            }
        }
    }
    (den > 0.0).then(|| num / den)
}
