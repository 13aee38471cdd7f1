//! Small numeric helpers shared across modules.

use std::collections::BTreeMap;

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Pearson correlation; `None` when either vector has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len(), "pearson needs paired vectors");
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Key for grouping real values that are meant to be exact (table entries,
/// integer percentages).
pub fn level_key(x: f64) -> i64 {
    (x * 1e6).round() as i64
}

/// Empirical histogram of values, keyed by [`level_key`].
pub fn histogram(xs: impl IntoIterator<Item = f64>) -> BTreeMap<i64, usize> {
    let mut h = BTreeMap::new();
    for x in xs {
        *h.entry(level_key(x)).or_insert(0) += 1;
    }
    h
}

/// Shannon entropy in bits of an empirical count distribution.
pub fn entropy_bits<'a>(counts: impl IntoIterator<Item = &'a usize>) -> f64 {
    let counts: Vec<f64> = counts.into_iter().map(|&c| c as f64).filter(|&c| c > 0.0).collect();
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let h: f64 = counts.iter().map(|c| {
        let p = c / total;
        -p * p.log2()
    }).sum();
    // -0.0 for a single level
    h.max(0.0)
}

/// Percentile with linear interpolation between order statistics
/// (type-7 estimator). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
