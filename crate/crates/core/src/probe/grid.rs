use std::collections::{HashMap, HashSet};

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{cross_validate, FoldReport};
use super::logistic::{fit_logistic_l2, ProbeConfig};
use super::tensor::{Cell, HiddenStateBundle, HiddenStateMatrix, LayerTag, TokenTag};
use crate::error::{Error, Result};
use crate::psychometrics::{auroc2, paired_bootstrap_delta, Estimate, Scored, ScoredSet, SignalSemantics};

/// Headline probe configuration.
pub const PRIMARY_CELL: Cell = (LayerTag::Last, TokenTag::LastAnswer);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub layer: LayerTag,
    pub token: TokenTag,
    pub primary: bool,
    /// AUROC2 of probe scores on the evaluation split.
    pub auroc2: f64,
    /// Out-of-fold AUROC2 on the training split.
    pub cv_auroc2: Option<f64>,
    /// Probe minus verbal baseline on the evaluation split.
    pub delta_vs_verbal: Option<Estimate>,
    pub folds: Vec<FoldReport>,
    pub iterations: usize,
    pub converged: bool,
    pub coefficients: String,
    pub train_source: String,
    pub eval_source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub config: ProbeConfig,
    pub n_train: usize,
    pub n_eval: usize,
    pub baseline_auroc2: Option<f64>,
    pub cells: Vec<CellResult>,
}

impl ProbeResult {
    pub fn cell(&self, layer: LayerTag, token: TokenTag) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.layer == layer && c.token == token)
    }
}

fn all_cells() -> Vec<Cell> {
    LayerTag::ALL.iter().flat_map(|&l| TokenTag::ALL.iter().map(move |&t| (l, t))).collect()
}

fn require(bundle: &HiddenStateBundle, cell: Cell, which: &str) -> Result<HiddenStateMatrix> {
    bundle.get(cell).cloned().ok_or_else(|| {
        Error::Invalid(format!("{which} bundle lacks cell {}/{}", cell.0.label(), cell.1.label()))
    })
}

fn labels_for(m: &HiddenStateMatrix, labels: &HashMap<String, bool>) -> Result<Vec<bool>> {
    m.item_ids
        .iter()
        .map(|id| labels.get(id).copied().ok_or_else(|| Error::Invalid(format!("no correctness label for {id}"))))
        .collect()
}

fn aligned(matrices: &[HiddenStateMatrix], which: &str) -> Result<()> {
    let first = &matrices[0];
    for m in &matrices[1..] {
        if m.item_ids != first.item_ids {
            return Err(Error::Invalid(format!("{which} bundle cells {first} and {m} list different items")));
        }
    }
    Ok(())
}

/// Fit each of the six cells on the training bundle and score the
/// evaluation bundle. `baseline` is the verbal signal on evaluation items.
pub fn grid_eval(
    train: &HiddenStateBundle,
    eval: &HiddenStateBundle,
    labels: &HashMap<String, bool>,
    baseline: Option<&ScoredSet>,
    cfg: &ProbeConfig,
    resamples: usize,
    level: f64,
) -> Result<ProbeResult> {
    cfg.validate()?;
    let cells = all_cells();
    for bundle_cell in train.cells().chain(eval.cells()) {
        if !cells.contains(&bundle_cell) {
            return Err(Error::Invalid("bundle contains an unknown cell".into()));
        }
    }
    let tr: Vec<HiddenStateMatrix> = cells.iter().map(|&c| require(train, c, "training")).collect::<Result<_>>()?;
    let ev: Vec<HiddenStateMatrix> = cells.iter().map(|&c| require(eval, c, "evaluation")).collect::<Result<_>>()?;
    aligned(&tr, "training")?;
    aligned(&ev, "evaluation")?;
    let y_train = labels_for(&tr[0], labels)?;
    let y_eval = labels_for(&ev[0], labels)?;

    let results: Vec<CellResult> = cells
        .par_iter()
        .zip(tr.par_iter().zip(ev.par_iter()))
        .map(|(&(layer, token), (t, e))| {
            if t.features.ncols() != e.features.ncols() {
                return Err(Error::Invalid(format!("{t} and {e} differ in width")));
            }
            let model = fit_logistic_l2(t.features.view(), &y_train, cfg)?;
            let cv = cross_validate(t.features.view(), &y_train, cfg)?;
            let scored = probe_scores(e, &y_eval, &model.predict_proba(e.features.view()))?;
            let auc = auroc2(&scored)?;
            let cv_scored = probe_scores(t, &y_train, &cv.scores)?;
            let delta = match baseline {
                Some(b) => {
                    let (b, p) = common_items(b, &scored);
                    Some(paired_bootstrap_delta(&b, &p, resamples, cfg.seed, level)?)
                }
                None => None,
            };
            Ok(CellResult {
                layer,
                token,
                primary: (layer, token) == PRIMARY_CELL,
                auroc2: auc,
                cv_auroc2: auroc2(&cv_scored).ok(),
                delta_vs_verbal: delta,
                folds: cv.folds,
                iterations: model.iterations,
                converged: model.converged,
                coefficients: model.fingerprint(),
                train_source: t.source.clone(),
                eval_source: e.source.clone(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ProbeResult {
        config: cfg.clone(),
        n_train: y_train.len(),
        n_eval: y_eval.len(),
        baseline_auroc2: baseline.and_then(|b| auroc2(b).ok()),
        cells: results,
    })
}

/// Both sets restricted to the items they share. Verbal scores omit
/// unparsed responses, so the baseline usually covers fewer items.
fn common_items(a: &ScoredSet, b: &ScoredSet) -> (ScoredSet, ScoredSet) {
    let ia: HashSet<&str> = a.entries().iter().map(|e| e.item_id.as_str()).collect();
    let both: HashSet<&str> = b.entries().iter().map(|e| e.item_id.as_str()).filter(|id| ia.contains(id)).collect();
    (a.restrict(&both), b.restrict(&both))
}

fn probe_scores(m: &HiddenStateMatrix, y: &[bool], p: &[f64]) -> Result<ScoredSet> {
    ScoredSet::new(
        SignalSemantics::ProbeScore,
        m.item_ids
            .iter()
            .zip(y.iter().zip(p))
            .map(|(id, (&c, &s))| Scored { item_id: id.clone(), correct: c, signal: s })
            .collect(),
    )
}

/// Rows of `m` restricted to `ids`, in that order.
pub fn select_rows(m: &HiddenStateMatrix, ids: &[&str]) -> Result<Array2<f64>> {
    let pos: HashMap<&str, usize> = m.item_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let rows: Vec<usize> = ids
        .iter()
        .map(|id| pos.get(id).copied().ok_or_else(|| Error::Invalid(format!("{m} lacks item {id}"))))
        .collect::<Result<_>>()?;
    Ok(m.features.select(Axis(0), &rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Six cells of Gaussian noise; the primary cell also carries the label
    /// on its first column.
    pub(crate) fn planted(n: usize, d: usize, prefix: &str, seed: u64) -> (HiddenStateBundle, HashMap<String, bool>) {
        let mut r = rng::stream(seed);
        let ids: Vec<String> = (0..n).map(|i| format!("{prefix}{i}")).collect();
        let y: Vec<bool> = (0..n).map(|_| rng::unit(&mut r) < 0.6).collect();
        let mats = all_cells()
            .into_iter()
            .map(|(l, t)| {
                let mut f = Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut r));
                if (l, t) == PRIMARY_CELL {
                    for (i, &c) in y.iter().enumerate() {
                        f[[i, 0]] += if c { 2.5 } else { -2.5 };
                    }
                }
                HiddenStateMatrix::new(ids.clone(), f, l, t).unwrap()
            })
            .collect();
        let labels = ids.into_iter().zip(y).collect();
        (HiddenStateBundle::from_matrices(mats).unwrap(), labels)
    }

    #[test]
    fn planted_cell_stands_out() {
        let (train, mut labels) = planted(600, 8, "t", 1);
        let (eval, l2) = planted(600, 8, "e", 2);
        labels.extend(l2);
        let res = grid_eval(&train, &eval, &labels, None, &ProbeConfig::default(), 0, 0.95).unwrap();
        assert_eq!(res.cells.len(), 6);
        for c in &res.cells {
            if c.primary {
                assert!(c.auroc2 >= 0.95, "{}", c.auroc2);
            } else {
                assert!((c.auroc2 - 0.5).abs() < 0.1, "{:?}/{:?} {}", c.layer, c.token, c.auroc2);
            }
        }
    }

    #[test]
    fn missing_cell_is_an_error() {
        let (train, labels) = planted(50, 2, "t", 1);
        let partial = HiddenStateBundle::from_matrices(
            train.cells().filter(|c| *c != PRIMARY_CELL).map(|c| train.get(c).unwrap().clone()).collect(),
        )
        .unwrap();
        let err = grid_eval(&train, &partial, &labels, None, &ProbeConfig::default(), 0, 0.95).unwrap_err();
        assert!(err.to_string().contains("last/last_answer"), "{err}");
    }

    #[test]
    fn deterministic() {
        let (train, mut labels) = planted(200, 4, "t", 3);
        let (eval, l2) = planted(200, 4, "e", 4);
        labels.extend(l2);
        let verbal = ScoredSet::new(
            SignalSemantics::VerbalConfidencePct,
            eval.get(PRIMARY_CELL)
                .unwrap()
                .item_ids
                .iter()
                .enumerate()
                .map(|(i, id)| Scored { item_id: id.clone(), correct: labels[id], signal: (i % 3) as f64 })
                .collect(),
        )
        .unwrap();
        let a = grid_eval(&train, &eval, &labels, Some(&verbal), &ProbeConfig::default(), 200, 0.95).unwrap();
        let b = grid_eval(&train, &eval, &labels, Some(&verbal), &ProbeConfig::default(), 200, 0.95).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.cells.iter().all(|c| c.delta_vs_verbal.is_some()));
    }
}
