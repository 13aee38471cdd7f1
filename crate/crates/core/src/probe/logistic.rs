//! L2-regularised logistic regression fitted by L-BFGS.

use std::collections::VecDeque;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Penalty on the weights; the intercept is not penalised.
    pub l2_strength: f64,
    pub folds: usize,
    /// Stop when the gradient's Euclidean norm falls below this.
    pub tolerance: f64,
    pub max_iter: usize,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { l2_strength: 1.0, folds: 5, tolerance: 1e-6, max_iter: 500, standardize: true, seed: 0 }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2_strength >= 0.0 && self.l2_strength.is_finite()) {
            return Err(Error::Config(format!("l2_strength must be finite and non-negative, got {}", self.l2_strength)));
        }
        if self.folds < 2 {
            return Err(Error::Config("probe folds must be at least 2".into()));
        }
        if !(self.tolerance > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("probe tolerance and max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Column means and scales from a training fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: ArrayView2<f64>) -> Scaler {
        let n = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).expect("non-empty").to_vec();
        let scale = x
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(col, m)| {
                let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Scaler { mean, scale }
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (mut col, (m, s)) in out.axis_iter_mut(Axis(1)).zip(self.mean.iter().zip(&self.scale)) {
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub scaler: Option<Scaler>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Objective value after each accepted step, starting from the initial point.
    pub trace: Vec<f64>,
}

impl LogisticModel {
    pub fn decision(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let w = ArrayView1::from(&self.weights);
        match &self.scaler {
            Some(s) => s.transform(x).dot(&w) + self.intercept,
            None => x.dot(&w) + self.intercept,
        }
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Vec<f64> {
        self.decision(x).iter().map(|&z| sigmoid(z)).collect()
    }

    /// Short hash of the fitted coefficients.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for w in self.weights.iter().chain(std::iter::once(&self.intercept)) {
            h.update(w.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean log-loss plus (lambda/2)|w|^2 at `theta = [w.., b]`, with its
/// gradient.
pub fn objective(x: ArrayView2<f64>, y: &[bool], lambda: f64, theta: &[f64]) -> (f64, Vec<f64>) {
    let d = x.ncols();
    let n = x.nrows() as f64;
    let w = ArrayView1::from(&theta[..d]);
    let b = theta[d];
    let z = x.dot(&w) + b;
    let mut loss = 0.0;
    let mut resid = Array1::zeros(z.len());
    for (i, (&zi, &yi)) in z.iter().zip(y).enumerate() {
        loss += softplus(zi) - if yi { zi } else { 0.0 };
        resid[i] = sigmoid(zi) - if yi { 1.0 } else { 0.0 };
    }
    let mut grad = (x.t().dot(&resid) / n).to_vec();
    let penalty: f64 = w.iter().map(|v| v * v).sum::<f64>() * lambda / 2.0;
    for (g, wi) in grad.iter_mut().zip(w.iter()) {
        *g += lambda * wi;
    }
    grad.push(resid.sum() / n);
    (loss / n + penalty, grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

const HISTORY: usize = 10;
const ARMIJO: f64 = 1e-4;

/// Limited-memory BFGS with backtracking Armijo steps; every accepted step
/// strictly lowers the objective.
fn minimise(x: ArrayView2<f64>, y: &[bool], cfg: &ProbeConfig) -> (Vec<f64>, usize, f64, bool, Vec<f64>) {
    let p = x.ncols() + 1;
    // start at the base-rate log-odds, the optimum when every weight is zero
    let base = y.iter().filter(|&&v| v).count() as f64 / y.len() as f64;
    let mut theta = vec![0.0; p];
    theta[p - 1] = (base / (1.0 - base)).ln();
    let (mut f, mut g) = objective(x, y, cfg.l2_strength, &theta);
    let mut trace = vec![f];
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(HISTORY);
    let mut iter = 0;
    while iter < cfg.max_iter {
        if norm(&g) <= cfg.tolerance {
            return (theta, iter, norm(&g), true, trace);
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, yv, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(yv) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, yv, _)) = hist.back() {
            let gamma = dot(s, yv) / dot(yv, yv);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, yv, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let beta = rho * dot(yv, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - beta) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = if hist.is_empty() { (1.0 / norm(&g)).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            let (fc, gc) = objective(x, y, cfg.l2_strength, &cand);
            if fc <= f + ARMIJO * step * slope && fc < f {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            // no further decrease representable
            let gn = norm(&g);
            return (theta, iter, gn, gn <= cfg.tolerance, trace);
        };
        let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 {
            if hist.len() == HISTORY {
                hist.pop_front();
            }
            hist.push_back((s, yv, 1.0 / sy));
        }
        theta = cand;
        f = fc;
        g = gc;
        trace.push(f);
        iter += 1;
    }
    let gn = norm(&g);
    (theta, iter, gn, gn <= cfg.tolerance, trace)
}

/// Fit on `x` (rows are items) against `y`.
pub fn fit_logistic_l2(x: ArrayView2<f64>, y: &[bool], cfg: &ProbeConfig) -> Result<LogisticModel> {
    cfg.validate()?;
    let (n, d) = x.dim();
    if n != y.len() {
        return Err(Error::Invalid(format!("{n} feature rows but {} labels", y.len())));
    }
    if n < 2 || d == 0 {
        return Err(Error::Insufficient { needed: 2, available: n });
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::Degenerate("probe labels have a single class".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite probe feature".into()));
    }
    let scaler = cfg.standardize.then(|| Scaler::fit(x));
    let design = match &scaler {
        Some(s) => s.transform(x),
        None => x.to_owned(),
    };
    let (theta, iterations, grad_norm, converged, trace) = minimise(design.view(), y, cfg);
    Ok(LogisticModel {
        weights: theta[..d].to_vec(),
        intercept: theta[d],
        scaler,
        iterations,
        grad_norm,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psychometrics::auroc_brute_force;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_problem(n: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<bool>) {
        let mut r = rng::stream(seed);
        let x = Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut r));
        let y = (0..n).map(|i| (x[[i, 0]] + rng::unit(&mut r) - 0.5) > 0.0).collect();
        (x, y)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (x, y) = random_problem(50, 5, 1);
        let mut r = rng::stream(2);
        for _ in 0..10 {
            let theta: Vec<f64> = (0..6).map(|_| StandardNormal.sample(&mut r)).collect();
            let (_, g) = objective(x.view(), &y, 0.7, &theta);
            let h = 1e-5;
            for j in 0..6 {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (objective(x.view(), &y, 0.7, &up).0 - objective(x.view(), &y, 0.7, &dn).0) / (2.0 * h);
                let rel = (fd - g[j]).abs() / g[j].abs().max(1e-8);
                assert!(rel <= 1e-5, "coordinate {j}: analytic {} vs fd {fd}", g[j]);
            }
        }
    }

    #[test]
    fn separable_points() {
        let x = Array2::from_shape_vec((2, 1), vec![-1.0, 1.0]).unwrap();
        let y = [false, true];
        let cfg = ProbeConfig { l2_strength: 1e-3, standardize: false, ..Default::default() };
        let m = fit_logistic_l2(x.view(), &y, &cfg).unwrap();
        let boundary = -m.intercept / m.weights[0];
        assert!(boundary > -1.0 && boundary < 1.0);
        let p = m.predict_proba(x.view());
        assert_eq!(auroc_brute_force(&y, &p), Some(1.0));
    }

    #[test]
    fn heavy_penalty_predicts_base_rate() {
        let (x, y) = random_problem(80, 4, 3);
        let cfg = ProbeConfig { l2_strength: 1e8, ..Default::default() };
        let m = fit_logistic_l2(x.view(), &y, &cfg).unwrap();
        let base = y.iter().filter(|&&v| v).count() as f64 / y.len() as f64;
        assert!(m.weights.iter().all(|w| w.abs() < 1e-6));
        for p in m.predict_proba(x.view()) {
            assert!((p - base).abs() < 1e-6);
        }
    }

    #[test]
    fn objective_never_increases() {
        for seed in 0..5 {
            let (x, y) = random_problem(100, 20, seed);
            let cfg = ProbeConfig { l2_strength: 0.01, ..Default::default() };
            let m = fit_logistic_l2(x.view(), &y, &cfg).unwrap();
            assert!(m.converged);
            assert!(m.trace.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn standardisation_does_not_change_unpenalised_predictions() {
        let (mut x, y) = random_problem(200, 3, 9);
        x.column_mut(1).mapv_inplace(|v| 40.0 * v + 7.0);
        let base = ProbeConfig { l2_strength: 0.0, tolerance: 1e-11, max_iter: 5000, ..Default::default() };
        let a = fit_logistic_l2(x.view(), &y, &ProbeConfig { standardize: true, ..base.clone() }).unwrap();
        let b = fit_logistic_l2(x.view(), &y, &ProbeConfig { standardize: false, ..base }).unwrap();
        for (p, q) in a.predict_proba(x.view()).iter().zip(b.predict_proba(x.view())) {
            assert!((p - q).abs() < 1e-6, "{p} vs {q}");
        }
    }

    #[test]
    fn errors() {
        let x = Array2::zeros((3, 1));
        let cfg = ProbeConfig::default();
        assert!(matches!(fit_logistic_l2(x.view(), &[true; 3], &cfg), Err(Error::Degenerate(_))));
        let mut x = Array2::zeros((2, 1));
        x[[0, 0]] = f64::INFINITY;
        assert!(fit_logistic_l2(x.view(), &[true, false], &cfg).is_err());
    }
}
