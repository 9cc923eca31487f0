//! Linear sigmoid scorers, surrogate losses and the minibatch SGD engine.
//!
//! Every learner in the crate (one-sided, local, gating baselines) is a linear
//! function of a fixed feature map pushed through a sigmoid. Training runs in a
//! standardised coordinate system (per-column mean and scale of the training
//! rows) and the result is folded back into raw-feature weights, so callers
//! only ever see models over the raw mapped features.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, FeatureMap};
use crate::error::{Error, Result};

/// Probability clamp used by the cross-entropy surrogate.
pub const PROB_CLAMP: f64 = 1e-12;

/// `-ln(PROB_CLAMP)`: the largest value the clamped cross-entropy can take.
pub fn logistic_cap() -> f64 {
    -PROB_CLAMP.ln()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Cross-entropy of a probability against a binary label, with the probability
/// clamped to `[1e-12, 1 - 1e-12]`.
pub fn logistic_loss(p: f64, y: bool) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Linear scorer `sigmoid(w . x + b)` with a decision threshold.
///
/// A complemented model reports `1 - score` and the negated decision; the
/// threshold always refers to the underlying (uncomplemented) sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel {
    #[serde(rename = "feature_map_id")]
    pub feature_map: FeatureMap,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub complemented: bool,
}

impl PredictorModel {
    pub fn zeros(k: usize, feature_map: FeatureMap) -> Self {
        Self { feature_map, weights: vec![0.0; k], bias: 0.0, threshold: 0.5, complemented: false }
    }

    /// A model whose decision is `value` everywhere.
    pub fn constant(k: usize, feature_map: FeatureMap, value: bool) -> Self {
        Self {
            feature_map,
            weights: vec![0.0; k],
            bias: 0.0,
            threshold: if value { 0.0 } else { 1.0 },
            complemented: false,
        }
    }

    #[inline]
    pub fn logit(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// Sigmoid of the logit, ignoring the complement flag.
    #[inline]
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    #[inline]
    pub fn score(&self, x: &[f64]) -> f64 {
        let s = self.raw_score(x);
        if self.complemented {
            1.0 - s
        } else {
            s
        }
    }

    #[inline]
    pub fn decide(&self, x: &[f64]) -> bool {
        (self.raw_score(x) > self.threshold) != self.complemented
    }

    /// Pointwise complement `1 - h`.
    pub fn complement(&self) -> Self {
        Self { complemented: !self.complemented, ..self.clone() }
    }

    pub fn with_threshold(&self, threshold: f64) -> Self {
        Self { threshold, ..self.clone() }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Optimiser schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Epochs between learning-rate halvings; `0` keeps the rate fixed.
    pub lr_halving_period: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_penalty: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            lr_halving_period: 25,
            epochs: 120,
            batch_size: 64,
            l2_penalty: 1e-5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation("learning_rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Validation("epochs and batch_size must be >= 1".into()));
        }
        if !(self.l2_penalty >= 0.0) {
            return Err(Error::Validation("l2_penalty must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.lr_halving_period {
            0 => self.learning_rate,
            p => self.learning_rate * 0.5f64.powi((epoch / p) as i32),
        }
    }
}

/// Convex surrogates of the 0-1 loss, expressed on the logit `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surrogate {
    /// Clamped cross-entropy.
    Logistic,
    /// `max(0, 1 -+ z)^2`; grows quadratically and punishes leakage harder.
    SquaredHinge,
}

impl Surrogate {
    pub const ALL: [Surrogate; 2] = [Surrogate::Logistic, Surrogate::SquaredHinge];

    /// Penalty (and its `z`-derivative) for an example that should score high.
    #[inline]
    pub fn positive(self, z: f64) -> (f64, f64) {
        match self {
            Surrogate::Logistic => {
                let v = softplus(-z);
                if v >= logistic_cap() {
                    (logistic_cap(), 0.0)
                } else {
                    (v, -sigmoid(-z))
                }
            }
            Surrogate::SquaredHinge => {
                let m = (1.0 - z).max(0.0);
                (m * m, -2.0 * m)
            }
        }
    }

    /// Penalty (and its `z`-derivative) for an example that should score low.
    #[inline]
    pub fn negative(self, z: f64) -> (f64, f64) {
        let (v, d) = self.positive(-z);
        (v, -d)
    }
}

impl std::str::FromStr for Surrogate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Surrogate::Logistic),
            "squared_hinge" => Ok(Surrogate::SquaredHinge),
            other => Err(Error::Validation(format!("unregistered surrogate `{other}`"))),
        }
    }
}

/// Per-example loss over one or more linear heads sharing the same features.
///
/// `eval` receives the row index, the cloud label and the logits of every head,
/// writes `d loss / d logit` per head into `grad` and returns the loss.
pub trait ExampleLoss: Sync {
    fn heads(&self) -> usize {
        1
    }

    fn eval(&self, row: usize, label: bool, logits: &[f64], grad: &mut [f64]) -> f64;
}

/// Plain cross-entropy against the cloud labels.
#[derive(Debug, Clone, Copy, Default)]
pub struct CrossEntropy;

impl ExampleLoss for CrossEntropy {
    fn eval(&self, _row: usize, label: bool, z: &[f64], grad: &mut [f64]) -> f64 {
        let (v, d) = if label {
            Surrogate::Logistic.positive(z[0])
        } else {
            Surrogate::Logistic.negative(z[0])
        };
        grad[0] = d;
        v
    }
}

/// Per-column affine normalisation used internally by the optimiser.
#[derive(Debug, Clone)]
struct Standardizer {
    mean: Vec<f64>,
    inv_scale: Vec<f64>,
}

impl Standardizer {
    fn fit(d: &Dataset) -> Self {
        let k = d.n_features();
        let n = d.len() as f64;
        let mut mean = vec![0.0; k];
        for row in d.rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; k];
        for row in d.rows() {
            var.iter_mut().zip(row).zip(&mean).for_each(|((s, v), m)| *s += (v - m) * (v - m));
        }
        let inv_scale = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, inv_scale }
    }

    /// Raw-space parameters to standardised space.
    fn to_standard(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let ws: Vec<f64> = w.iter().zip(&self.inv_scale).map(|(w, s)| w / s).collect();
        let bs = b + w.iter().zip(&self.mean).map(|(w, m)| w * m).sum::<f64>();
        (ws, bs)
    }

    fn to_raw(&self, ws: &[f64], bs: f64) -> (Vec<f64>, f64) {
        let w: Vec<f64> = ws.iter().zip(&self.inv_scale).map(|(w, s)| w * s).collect();
        let b = bs - w.iter().zip(&self.mean).map(|(w, m)| w * m).sum::<f64>();
        (w, b)
    }
}

/// Shuffled row order for `epoch`, drawn from an independent ChaCha stream so
/// that any epoch's permutation depends only on `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Weighted empirical objective `sum_i w_i loss_i + l2/2 |w|^2` summed over heads.
///
/// The penalty is evaluated on the standardised weights, matching the optimiser.
pub fn empirical_objective(
    models: &[PredictorModel],
    d: &Dataset,
    loss: &dyn ExampleLoss,
    l2_penalty: f64,
) -> f64 {
    let std = Standardizer::fit(d);
    let mut grad = vec![0.0; models.len()];
    let mut logits = vec![0.0; models.len()];
    let mut total = 0.0;
    for i in 0..d.len() {
        for (z, m) in logits.iter_mut().zip(models) {
            *z = m.logit(d.row(i));
        }
        total += d.weight(i) * loss.eval(i, d.label(i), &logits, &mut grad);
    }
    let penalty: f64 = models
        .iter()
        .map(|m| std.to_standard(&m.weights, m.bias).0.iter().map(|w| w * w).sum::<f64>())
        .sum();
    total + 0.5 * l2_penalty * penalty
}

/// Result of a traced training run.
#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub models: Vec<PredictorModel>,
    /// Full empirical objective after every epoch.
    pub epoch_objective: Vec<f64>,
}

/// Minibatch SGD on a single linear head.
pub fn sgd_train(
    d: &Dataset,
    loss: &dyn ExampleLoss,
    cfg: &TrainConfig,
    warm_start: Option<&PredictorModel>,
) -> Result<PredictorModel> {
    let warm = warm_start.map(std::slice::from_ref);
    Ok(train_heads(d, loss, cfg, warm, false)?.models.remove(0))
}

/// Minibatch SGD on `loss.heads()` linear heads trained jointly.
pub fn sgd_train_heads(
    d: &Dataset,
    loss: &dyn ExampleLoss,
    cfg: &TrainConfig,
    warm_start: Option<&[PredictorModel]>,
) -> Result<Vec<PredictorModel>> {
    Ok(train_heads(d, loss, cfg, warm_start, false)?.models)
}

/// As [`sgd_train_heads`], also recording the objective after every epoch.
pub fn sgd_train_traced(
    d: &Dataset,
    loss: &dyn ExampleLoss,
    cfg: &TrainConfig,
    warm_start: Option<&[PredictorModel]>,
) -> Result<TrainTrace> {
    train_heads(d, loss, cfg, warm_start, true)
}

fn train_heads(
    d: &Dataset,
    loss: &dyn ExampleLoss,
    cfg: &TrainConfig,
    warm_start: Option<&[PredictorModel]>,
    trace: bool,
) -> Result<TrainTrace> {
    cfg.validate()?;
    if d.is_empty() {
        return Err(Error::Validation("cannot train on an empty dataset".into()));
    }
    let heads = loss.heads();
    let k = d.n_features();
    let n = d.len();
    let std = Standardizer::fit(d);

    let mut params: Vec<(Vec<f64>, f64)> = match warm_start {
        Some(ms) => {
            if ms.len() != heads || ms.iter().any(|m| m.weights.len() != k) {
                return Err(Error::Validation("warm start does not match model shape".into()));
            }
            ms.iter().map(|m| std.to_standard(&m.weights, m.bias)).collect()
        }
        None => vec![(vec![0.0; k], 0.0); heads],
    };
    let thresholds: Vec<f64> = match warm_start {
        Some(ms) => ms.iter().map(|m| m.threshold).collect(),
        None => vec![0.5; heads],
    };

    let mut xs = vec![0.0; k];
    let mut logits = vec![0.0; heads];
    let mut dz = vec![0.0; heads];
    let mut grad_w = vec![vec![0.0; k]; heads];
    let mut grad_b = vec![0.0; heads];
    let mut epoch_objective = Vec::new();
    let build = |params: &[(Vec<f64>, f64)]| -> Vec<PredictorModel> {
        params
            .iter()
            .zip(&thresholds)
            .map(|((ws, bs), &t)| {
                let (weights, bias) = std.to_raw(ws, *bs);
                PredictorModel {
                    feature_map: d.feature_map(),
                    weights,
                    bias,
                    threshold: t,
                    complemented: false,
                }
            })
            .collect()
    };

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        let order = epoch_order(n, cfg.seed, epoch);
        for (batch, rows) in order.chunks(cfg.batch_size).enumerate() {
            grad_w.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            grad_b.iter_mut().for_each(|g| *g = 0.0);
            let scale = n as f64 / rows.len() as f64;
            for &i in rows {
                let row = d.row(i);
                for ((x, v), (m, s)) in xs.iter_mut().zip(row).zip(std.mean.iter().zip(&std.inv_scale)) {
                    *x = (v - m) * s;
                }
                for (z, (w, b)) in logits.iter_mut().zip(&params) {
                    *z = w.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() + b;
                }
                loss.eval(i, d.label(i), &logits, &mut dz);
                let wi = d.weight(i) * scale;
                for h in 0..heads {
                    let g = wi * dz[h];
                    if g != 0.0 {
                        grad_w[h].iter_mut().zip(&xs).for_each(|(gw, x)| *gw += g * x);
                        grad_b[h] += g;
                    }
                }
            }
            for h in 0..heads {
                let (w, b) = &mut params[h];
                let finite = grad_b[h].is_finite() && grad_w[h].iter().all(|g| g.is_finite());
                if !finite {
                    return Err(Error::NonFiniteGradient { epoch, batch });
                }
                for (wj, gj) in w.iter_mut().zip(&grad_w[h]) {
                    *wj -= lr * (gj + cfg.l2_penalty * *wj);
                }
                *b -= lr * grad_b[h];
            }
        }
        if trace {
            epoch_objective.push(empirical_objective(&build(&params), d, loss, cfg.l2_penalty));
        }
    }
    Ok(TrainTrace { models: build(&params), epoch_objective })
}

/// Weighted fraction of rows where the model's decision matches the cloud.
pub fn accuracy(m: &PredictorModel, d: &Dataset) -> f64 {
    d.mass_where(|i| m.decide(d.row(i)) == d.label(i))
}
