//! One-vs-rest linear SVM trained by Pegasos stochastic subgradient descent,
//! with k-fold cross-validation and repeated-run accuracy reports.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Regularization constant.
    pub lambda: f64,
    pub epochs: usize,
    /// Standardize features with training-set means and deviations.
    pub standardize: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 50,
            standardize: true,
        }
    }
}

/// Trained classifier; `weights[c]` has one entry per feature plus a bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub classes: usize,
    pub weights: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl LinearSvm {
    fn prepare(&self, x: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = x
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        z.push(1.0);
        z
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let z = self.prepare(x);
        self.weights.iter().map(|w| dot(w, &z)).collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let s = self.scores(x);
        (0..s.len()).fold(0, |best, c| if s[c] > s[best] { c } else { best })
    }

    pub fn accuracy(&self, x: &[Vec<f64>], labels: &[usize]) -> f64 {
        let hits = x.iter().zip(labels).filter(|(r, &y)| self.predict(r) == y).count();
        hits as f64 / labels.len() as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_inputs(x: &[Vec<f64>], labels: &[usize]) -> Result<usize> {
    if x.len() != labels.len() {
        return Err(Error::Shape("one label per feature row".into()));
    }
    if x.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(Error::Shape("ragged feature rows".into()));
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let distinct = {
        let mut seen = vec![false; classes];
        labels.iter().for_each(|&y| seen[y] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::SingleClass);
    }
    Ok(classes)
}

/// Trains one binary Pegasos classifier per class.
pub fn train_linear_svm(
    x: &[Vec<f64>],
    labels: &[usize],
    config: &SvmConfig,
    seed: u64,
) -> Result<LinearSvm> {
    let classes = check_inputs(x, labels)?.max(2);
    if !(config.lambda > 0.0) || config.epochs == 0 {
        return Err(Error::invalid("lambda must be positive and epochs at least 1"));
    }
    let dim = x[0].len();
    let n = x.len() as f64;
    let (mean, scale) = if config.standardize {
        let mean: Vec<f64> = (0..dim).map(|d| x.iter().map(|r| r[d]).sum::<f64>() / n).collect();
        let scale = (0..dim)
            .map(|d| {
                let v = x.iter().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / n;
                if v > 1e-24 { v.sqrt() } else { 1.0 }
            })
            .collect();
        (mean, scale)
    } else {
        (vec![0.0; dim], vec![1.0; dim])
    };
    let mut model = LinearSvm {
        classes,
        weights: Vec::new(),
        mean,
        scale,
    };
    let z: Vec<Vec<f64>> = x.iter().map(|r| model.prepare(r)).collect();
    let radius = 1.0 / config.lambda.sqrt();
    for c in 0..classes {
        let mut rng = RngStream::new(seed, c as u64);
        let mut w = vec![0.0; dim + 1];
        let mut order: Vec<usize> = (0..z.len()).collect();
        let mut t = 0u64;
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (config.lambda * t as f64);
                let y = if labels[i] == c { 1.0 } else { -1.0 };
                let margin = y * dot(&w, &z[i]);
                let shrink = 1.0 - eta * config.lambda;
                w.iter_mut().for_each(|v| *v *= shrink);
                if margin < 1.0 {
                    for (v, zi) in w.iter_mut().zip(&z[i]) {
                        *v += eta * y * zi;
                    }
                }
                let norm = dot(&w, &w).sqrt();
                if norm > radius {
                    w.iter_mut().for_each(|v| *v *= radius / norm);
                }
            }
        }
        model.weights.push(w);
    }
    Ok(model)
}

/// Accuracy of `folds`-fold cross-validation with folds assigned from `seed`.
pub fn cross_validate(
    x: &[Vec<f64>],
    labels: &[usize],
    folds: usize,
    config: &SvmConfig,
    seed: u64,
) -> Result<f64> {
    check_inputs(x, labels)?;
    if folds < 2 || folds > x.len() {
        return Err(Error::invalid(format!("cannot split {} rows into {folds} folds", x.len())));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut RngStream::new(seed, u64::MAX));
    let mut hits = 0usize;
    for fold in 0..folds {
        let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (pos, &i) in order.iter().enumerate() {
            if pos % folds == fold {
                vx.push(x[i].clone());
                vy.push(labels[i]);
            } else {
                tx.push(x[i].clone());
                ty.push(labels[i]);
            }
        }
        let model = match train_linear_svm(&tx, &ty, config, seed.wrapping_add(fold as u64)) {
            Ok(m) => m,
            // A training split with a single class predicts that class.
            Err(Error::SingleClass) => {
                hits += vy.iter().filter(|&&y| y == ty[0]).count();
                continue;
            }
            Err(e) => return Err(e),
        };
        hits += vx.iter().zip(&vy).filter(|(r, &y)| model.predict(r) == y).count();
    }
    Ok(hits as f64 / x.len() as f64)
}

/// Accuracy over repeated runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub runs: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Cross-validation folds, or `None` for a fixed train/test split.
    pub folds: Option<usize>,
    pub classes: usize,
    pub config: SvmConfig,
}

impl AccuracyReport {
    fn from_runs(runs: Vec<f64>, folds: Option<usize>, classes: usize, config: SvmConfig) -> Self {
        let n = runs.len() as f64;
        let mean = runs.iter().sum::<f64>() / n;
        let std = if runs.len() > 1 {
            (runs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            runs,
            mean,
            std,
            folds,
            classes,
            config,
        }
    }
}

/// Cross-validated accuracy repeated `runs` times with different fold assignments.
pub fn cv_report(
    x: &[Vec<f64>],
    labels: &[usize],
    folds: usize,
    runs: usize,
    config: &SvmConfig,
    seed: u64,
) -> Result<AccuracyReport> {
    let classes = check_inputs(x, labels)?;
    let accs = (0..runs.max(1) as u64)
        .map(|r| cross_validate(x, labels, folds, config, seed.wrapping_add(r * 1000)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AccuracyReport::from_runs(accs, Some(folds), classes, *config))
}

/// Held-out accuracy repeated `runs` times with different training orders.
pub fn split_report(
    train: (&[Vec<f64>], &[usize]),
    test: (&[Vec<f64>], &[usize]),
    runs: usize,
    config: &SvmConfig,
    seed: u64,
) -> Result<AccuracyReport> {
    let classes = check_inputs(train.0, train.1)?;
    if test.0.len() != test.1.len() || test.0.is_empty() {
        return Err(Error::Shape("test rows and labels".into()));
    }
    let accs = (0..runs.max(1) as u64)
        .map(|r| Ok(train_linear_svm(train.0, train.1, config, seed.wrapping_add(r))?.accuracy(test.0, test.1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AccuracyReport::from_runs(accs, None, classes, *config))
}
