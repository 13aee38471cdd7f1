//! Percentile bootstrap for AUROC2 and paired AUROC2 deltas.
//!
//! Resample `r` draws its indices from `rng::substream(seed, r)`, so results
//! are identical whether resamples run serially or on the rayon pool.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::auroc::auroc_pairs;
use super::ScoredSet;
use crate::error::{Error, Result};
use crate::rng;
use crate::stats;
use crate::targets::Bin;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    /// Resamples that produced a defined statistic.
    pub resamples: usize,
    /// Resamples dropped because a class was empty.
    pub dropped: usize,
    pub level: f64,
    pub seed: u64,
}

impl BootstrapCI {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Estimate {
    Estimated(BootstrapCI),
    Degenerate { reason: String, dropped: usize },
}

impl Estimate {
    pub fn ci(&self) -> Option<&BootstrapCI> {
        match self {
            Estimate::Estimated(ci) => Some(ci),
            Estimate::Degenerate { .. } => None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Estimate::Degenerate { .. })
    }
}

fn percentile_ci(mut stats_: Vec<f64>, point: f64, dropped: usize, level: f64, seed: u64) -> Estimate {
    if stats_.is_empty() {
        return Estimate::Degenerate {
            reason: "every resample had a single correctness class".into(),
            dropped,
        };
    }
    stats_.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Estimate::Estimated(BootstrapCI {
        point,
        lo: stats::quantile_sorted(&stats_, alpha),
        hi: stats::quantile_sorted(&stats_, 1.0 - alpha),
        resamples: stats_.len(),
        dropped,
        level,
        seed,
    })
}

fn draw_indices(n: usize, seed: u64, r: usize) -> Vec<usize> {
    let mut g = rng::substream(seed, r as u64);
    (0..n).map(|_| rng::below(&mut g, n as u64) as usize).collect()
}

/// Bootstrap CI for AUROC2 of a single scored set.
pub fn bootstrap_auroc(scored: &ScoredSet, resamples: usize, seed: u64, level: f64) -> Estimate {
    let rows: Vec<(f64, bool)> = scored.entries().iter().map(|e| (e.signal, e.correct)).collect();
    let Some(point) = auroc_pairs(&mut rows.clone()) else {
        return Estimate::Degenerate {
            reason: "single correctness class".into(),
            dropped: 0,
        };
    };
    let n = rows.len();
    let outcomes: Vec<Option<f64>> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut sample: Vec<(f64, bool)> = draw_indices(n, seed, r).into_iter().map(|i| rows[i]).collect();
            auroc_pairs(&mut sample)
        })
        .collect();
    let dropped = outcomes.iter().filter(|o| o.is_none()).count();
    percentile_ci(outcomes.into_iter().flatten().collect(), point, dropped, level, seed)
}

/// Align `b` to `a`'s item order. Both sets must cover the same ids.
fn pair_up(a: &ScoredSet, b: &ScoredSet) -> Result<Vec<(bool, f64, bool, f64)>> {
    let b_by_id: HashMap<&str, (bool, f64)> =
        b.entries().iter().map(|e| (e.item_id.as_str(), (e.correct, e.signal))).collect();
    if a.len() != b.len() {
        return Err(Error::Invalid(format!(
            "paired sets differ in size ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    a.entries()
        .iter()
        .map(|e| {
            let (cb, sb) = b_by_id
                .get(e.item_id.as_str())
                .ok_or_else(|| Error::Invalid(format!("item {} missing from paired set", e.item_id)))?;
            Ok((e.correct, e.signal, *cb, *sb))
        })
        .collect()
}

fn is_constant(xs: impl Iterator<Item = f64>) -> bool {
    let mut it = xs;
    match it.next() {
        None => true,
        Some(first) => it.all(|x| x == first),
    }
}

/// Paired percentile bootstrap of AUROC2(b) - AUROC2(a), resampling items.
///
/// Reported degenerate when either condition's confidence is uniform over the
/// set, or when no resample has both classes in both conditions.
pub fn paired_bootstrap_delta(
    a: &ScoredSet,
    b: &ScoredSet,
    resamples: usize,
    seed: u64,
    level: f64,
) -> Result<Estimate> {
    let rows = pair_up(a, b)?;
    if rows.is_empty() {
        return Ok(Estimate::Degenerate { reason: "empty set".into(), dropped: 0 });
    }
    if is_constant(rows.iter().map(|r| r.1)) || is_constant(rows.iter().map(|r| r.3)) {
        return Ok(Estimate::Degenerate { reason: "uniform confidence".into(), dropped: 0 });
    }
    let delta_of = |idx: &mut dyn Iterator<Item = usize>| {
        let (mut pa, mut pb): (Vec<_>, Vec<_>) = idx.map(|i| ((rows[i].1, rows[i].0), (rows[i].3, rows[i].2))).unzip();
        Some(auroc_pairs(&mut pb)? - auroc_pairs(&mut pa)?)
    };
    let Some(point) = delta_of(&mut (0..rows.len())) else {
        return Ok(Estimate::Degenerate { reason: "single correctness class".into(), dropped: 0 });
    };
    let n = rows.len();
    let outcomes: Vec<Option<f64>> = (0..resamples)
        .into_par_iter()
        .map(|r| delta_of(&mut draw_indices(n, seed, r).into_iter()))
        .collect();
    let dropped = outcomes.iter().filter(|o| o.is_none()).count();
    Ok(percentile_ci(outcomes.into_iter().flatten().collect(), point, dropped, level, seed))
}

/// Paired deltas restricted to each difficulty bin. Empty bins are reported
/// as degenerate rather than raised.
pub fn bin_deltas(
    a: &ScoredSet,
    b: &ScoredSet,
    bins: &HashMap<String, Bin>,
    resamples: usize,
    seed: u64,
    level: f64,
) -> Result<BTreeMap<Bin, Estimate>> {
    let mut out = BTreeMap::new();
    for bin in [Bin::Easy, Bin::Medium, Bin::Hard] {
        let ids: HashSet<&str> = bins
            .iter()
            .filter(|(_, b)| **b == bin)
            .map(|(id, _)| id.as_str())
            .collect();
        let ra = a.restrict(&ids);
        let rb = b.restrict(&ids);
        let est = if ra.is_empty() {
            Estimate::Degenerate { reason: "empty bin".into(), dropped: 0 }
        } else {
            paired_bootstrap_delta(&ra, &rb, resamples, seed, level)?
        };
        out.insert(bin, est);
    }
    Ok(out)
}
