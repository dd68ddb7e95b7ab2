//! Linear SVM trained by stochastic subgradient descent on the primal.
//!
//! Minimizes
//!
//! ```text
//! lambda/2 * |w|^2 + 1/n * sum_i c_i * max(0, 1 - y_i (w.x_i + b))
//! ```
//!
//! with step size `1 / (lambda * t)` (Pegasos schedule). The bias is not
//! regularized. Example order is reshuffled every epoch from a seeded ChaCha
//! generator, so training is bit-reproducible for a given seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textproc::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: u32,
    pub seed: u64,
    /// Loss weight `c_i` for `+1` examples; `-1` examples always weigh 1.
    pub positive_class_weight: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 1e-4,
            epochs: 20,
            seed: 42,
            positive_class_weight: 1.0,
        }
    }
}

impl SvmConfig {
    fn check(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::training(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(Error::training("epochs must be positive"));
        }
        if !(self.positive_class_weight > 0.0 && self.positive_class_weight.is_finite()) {
            return Err(Error::training("positive_class_weight must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub train_config: SvmConfig,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Full objective after each epoch.
    pub epoch_objectives: Vec<f64>,
    pub n_positive: usize,
    pub n_negative: usize,
}

impl LinearSvmModel {
    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    /// `w.x + b`; ids outside the weight vector are a contract violation.
    pub fn decision_score(&self, x: &SparseVector) -> Result<f64> {
        x.dot_dense(&self.weights)
            .map(|d| d + self.bias)
            .ok_or_else(|| {
                Error::validation(format!(
                    "feature id {} outside weight dimension {}",
                    x.max_id().unwrap_or(0),
                    self.weights.len()
                ))
            })
    }

    /// Terms with the largest absolute weights, for inspection.
    pub fn top_features(&self, k: usize) -> Vec<(u32, f64)> {
        let mut idx: Vec<(u32, f64)> = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, &w)| (i as u32, w))
            .collect();
        idx.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        idx.truncate(k);
        idx
    }
}

/// Regularized hinge objective at `(weights, bias)`.
pub fn objective(
    weights: &[f64],
    bias: f64,
    vectors: &[SparseVector],
    labels: &[i8],
    lambda: f64,
    positive_class_weight: f64,
) -> f64 {
    let reg = 0.5 * lambda * weights.iter().map(|w| w * w).sum::<f64>();
    let loss: f64 = vectors
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let y = f64::from(y);
            let c = if y > 0.0 { positive_class_weight } else { 1.0 };
            let score = x.dot_dense(weights).unwrap_or(f64::NAN) + bias;
            c * (1.0 - y * score).max(0.0)
        })
        .sum();
    reg + loss / vectors.len() as f64
}

/// Iterate of the stochastic solver. Weights are stored as `scale * v` so the
/// per-step shrink costs O(1) instead of O(dimension).
#[derive(Debug, Clone)]
pub struct PegasosState {
    v: Vec<f64>,
    scale: f64,
    bias: f64,
    t: u64,
    lambda: f64,
    /// Projection radii; the optimum lies inside both, so projecting never
    /// moves the solver away from it.
    weight_radius: f64,
    bias_bound: f64,
}

impl PegasosState {
    pub fn new(dimension: usize, lambda: f64) -> Self {
        PegasosState {
            v: vec![0.0; dimension],
            scale: 1.0,
            bias: 0.0,
            t: 0,
            lambda,
            weight_radius: f64::INFINITY,
            bias_bound: f64::INFINITY,
        }
    }

    /// Enables the projection step: `|w| <= weight_radius`, `|b| <= bias_bound`.
    pub fn with_projection(mut self, weight_radius: f64, bias_bound: f64) -> Self {
        self.weight_radius = weight_radius;
        self.bias_bound = bias_bound;
        self
    }

    /// Resumes from explicit weights, bias and number of completed steps.
    pub fn from_parts(weights: Vec<f64>, bias: f64, steps_done: u64, lambda: f64) -> Self {
        PegasosState {
            v: weights,
            scale: 1.0,
            bias,
            t: steps_done,
            lambda,
            weight_radius: f64::INFINITY,
            bias_bound: f64::INFINITY,
        }
    }

    /// Learning rate the next call to [`step`](Self::step) will use.
    pub fn next_learning_rate(&self) -> f64 {
        1.0 / (self.lambda * (self.t + 1) as f64)
    }

    pub fn score(&self, x: &SparseVector) -> f64 {
        let dot: f64 = x.entries().iter().map(|&(i, w)| w * self.v[i as usize]).sum();
        self.scale * dot + self.bias
    }

    /// One subgradient step on `lambda/2 |w|^2 + c * hinge(y, w.x + b)`.
    pub fn step(&mut self, x: &SparseVector, y: f64, c: f64) {
        self.t += 1;
        let eta = 1.0 / (self.lambda * self.t as f64);
        let violated = y * self.score(x) < 1.0;
        let shrink = 1.0 - eta * self.lambda;
        if shrink <= 0.0 {
            self.v.iter_mut().for_each(|w| *w = 0.0);
            self.scale = 1.0;
        } else {
            self.scale *= shrink;
            if self.scale < 1e-9 {
                self.fold_scale();
            }
        }
        if violated {
            let step = eta * c * y;
            for &(i, w) in x.entries() {
                self.v[i as usize] += step * w / self.scale;
            }
            self.bias += step;
            self.project();
        }
    }

    fn project(&mut self) {
        self.bias = self.bias.clamp(-self.bias_bound, self.bias_bound);
        if self.weight_radius.is_finite() {
            let norm = self.scale.abs() * self.v.iter().map(|w| w * w).sum::<f64>().sqrt();
            if norm > self.weight_radius {
                self.scale *= self.weight_radius / norm;
            }
        }
    }

    fn fold_scale(&mut self) {
        let s = self.scale;
        self.v.iter_mut().for_each(|w| *w *= s);
        self.scale = 1.0;
    }

    pub fn weights(&self) -> Vec<f64> {
        self.v.iter().map(|w| w * self.scale).collect()
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }
}

/// Trains a linear SVM over `dimension`-wide sparse inputs with labels in `{+1, -1}`.
pub fn train_svm(
    vectors: &[SparseVector],
    labels: &[i8],
    dimension: usize,
    config: SvmConfig,
) -> Result<(LinearSvmModel, TrainReport)> {
    config.check()?;
    if vectors.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} vectors but {} labels",
            vectors.len(),
            labels.len()
        )));
    }
    if vectors.len() < 2 {
        return Err(Error::training("need at least two training examples"));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
        return Err(Error::validation(format!("label {bad} is not +1 or -1")));
    }
    if vectors.iter().any(SparseVector::has_nan) {
        return Err(Error::validation("non-finite value in training vectors"));
    }
    if let Some(x) = vectors.iter().find(|x| x.max_id().is_some_and(|m| m as usize >= dimension)) {
        return Err(Error::validation(format!(
            "feature id {} outside dimension {dimension}",
            x.max_id().unwrap_or(0)
        )));
    }
    let n_positive = labels.iter().filter(|&&y| y == 1).count();
    let n_negative = labels.len() - n_positive;
    if n_positive == 0 || n_negative == 0 {
        return Err(Error::training(format!(
            "single-class training set ({n_positive} positive, {n_negative} negative)"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    // f(w*, b*) <= f(0, 0) = mean(c) bounds |w*|; |b*| <= R |w*| + 1 since
    // past that every example of one class is violated and none of the other.
    let mean_c = labels
        .iter()
        .map(|&y| if y > 0 { config.positive_class_weight } else { 1.0 })
        .sum::<f64>()
        / labels.len() as f64;
    let radius = (2.0 * mean_c / config.lambda).sqrt();
    let max_norm = vectors.iter().map(SparseVector::norm).fold(0.0, f64::max);
    let mut state = PegasosState::new(dimension, config.lambda).with_projection(radius, max_norm * radius + 1.0);
    let mut report = TrainReport { n_positive, n_negative, ..Default::default() };
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let y = f64::from(labels[i]);
            let c = if y > 0.0 { config.positive_class_weight } else { 1.0 };
            state.step(&vectors[i], y, c);
        }
        let w = state.weights();
        report.epoch_objectives.push(objective(
            &w,
            state.bias(),
            vectors,
            labels,
            config.lambda,
            config.positive_class_weight,
        ));
    }
    let model = LinearSvmModel {
        weights: state.weights(),
        bias: state.bias(),
        train_config: config,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x1(v: f64) -> SparseVector {
        SparseVector::from_pairs(vec![(0, v)])
    }

    #[test]
    fn separable_pair() {
        let xs = vec![x1(-1.0), x1(1.0)];
        let ys = vec![-1, 1];
        let cfg = SvmConfig { lambda: 1e-2, epochs: 50, ..Default::default() };
        let (m, rep) = train_svm(&xs, &ys, 1, cfg).unwrap();
        assert!(m.decision_score(&x1(-1.0)).unwrap() < 0.0);
        assert!(m.decision_score(&x1(1.0)).unwrap() > 0.0);
        assert_eq!(rep.epoch_objectives.len(), 50);
        let (m2, _) = train_svm(&xs, &ys, 1, cfg).unwrap();
        assert_eq!(m.weights[0].to_bits(), m2.weights[0].to_bits());
        assert_eq!(m.bias.to_bits(), m2.bias.to_bits());
    }

    #[test]
    fn single_class_rejected() {
        let err = train_svm(&[x1(1.0), x1(2.0)], &[1, 1], 1, SvmConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Training(_)));
    }

    #[test]
    fn nan_rejected() {
        let err = train_svm(&[x1(f64::NAN), x1(2.0)], &[1, -1], 1, SvmConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn decision_score_cases() {
        let m = LinearSvmModel { weights: vec![2.0, 0.0], bias: 1.0, train_config: SvmConfig::default() };
        assert_eq!(m.decision_score(&SparseVector::zero()).unwrap(), 1.0);
        assert_eq!(m.decision_score(&x1(1.5)).unwrap(), 4.0);
        assert!(m.decision_score(&SparseVector::from_pairs(vec![(2, 1.0)])).is_err());
    }

    #[test]
    fn first_step_resets_to_violator() {
        let mut s = PegasosState::new(2, 0.5);
        s.step(&SparseVector::from_pairs(vec![(1, 1.0)]), 1.0, 1.0);
        // eta_1 = 1/lambda = 2, shrink = 0, w = 2 * x.
        assert_eq!(s.weights(), vec![0.0, 2.0]);
        assert_eq!(s.bias(), 2.0);
    }
}
