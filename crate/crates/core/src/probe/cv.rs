use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::{fit_logistic_l2, ProbeConfig};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Training part had one class; its test items got the training base rate.
    pub degenerate: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Out-of-fold probability per row.
    pub scores: Vec<f64>,
    pub folds: Vec<FoldReport>,
}

/// Fold index per row: a seeded permutation dealt round-robin, so fold
/// sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::stream(seed), &mut order);
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % folds;
    }
    fold
}

pub fn cross_validate(x: ArrayView2<f64>, y: &[bool], cfg: &ProbeConfig) -> Result<CvResult> {
    cfg.validate()?;
    let n = x.nrows();
    if n != y.len() {
        return Err(Error::Invalid(format!("{n} feature rows but {} labels", y.len())));
    }
    if cfg.folds > n {
        return Err(Error::Config(format!("{} folds for {n} items", cfg.folds)));
    }
    let assignment = fold_assignment(n, cfg.folds, cfg.seed);
    let per_fold: Vec<(FoldReport, Vec<(usize, f64)>)> = (0..cfg.folds)
        .into_par_iter()
        .map(|k| {
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != k).collect();
            let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == k).collect();
            let xt = x.select(Axis(0), &train);
            let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
            let xs = x.select(Axis(0), &test);
            let mut report = FoldReport {
                fold: k,
                n_train: train.len(),
                n_test: test.len(),
                degenerate: false,
                iterations: 0,
                grad_norm: 0.0,
                converged: false,
            };
            let scores = match fit_logistic_l2(xt.view(), &yt, cfg) {
                Ok(model) => {
                    report.iterations = model.iterations;
                    report.grad_norm = model.grad_norm;
                    report.converged = model.converged;
                    model.predict_proba(xs.view())
                }
                Err(Error::Degenerate(_)) => {
                    report.degenerate = true;
                    let base = yt.iter().filter(|&&v| v).count() as f64 / yt.len().max(1) as f64;
                    vec![base; test.len()]
                }
                Err(e) => return Err(e),
            };
            Ok((report, test.into_iter().zip(scores).collect()))
        })
        .collect::<Result<_>>()?;
    let mut scores = vec![f64::NAN; n];
    let mut folds = Vec::with_capacity(cfg.folds);
    for (report, pairs) in per_fold {
        for (i, s) in pairs {
            scores[i] = s;
        }
        folds.push(report);
    }
    Ok(CvResult { scores, folds })
}
