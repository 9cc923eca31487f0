//! One-sided empirical risk minimisation.
//!
//! An approximation of `g` from below is a local model that (nearly) never
//! says 1 where `g` says 0 while covering as much of `{g = 1}` as possible.
//! The hard constraint is relaxed into a Lagrangian penalty with multiplier
//! `xi`, and a grid of multipliers is scanned. Approximation from above is the
//! complement of an approximation of `1 - g` from below.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::models::{sgd_train, ExampleLoss, PredictorModel, Surrogate, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Below,
    Above,
}

/// Mass on which `decide` violates the side constraint: `h = 1, g = 0` below,
/// `h = 0, g = 1` above.
pub fn leakage(side: Side, decide: impl Fn(&[f64]) -> bool, d: &Dataset) -> f64 {
    match side {
        Side::Below => d.mass_where(|i| !d.label(i) && decide(d.row(i))),
        Side::Above => d.mass_where(|i| d.label(i) && !decide(d.row(i))),
    }
}

/// Mass of the non-constrained error type: `h = 0, g = 1` below, `h = 1, g = 0` above.
pub fn miss(side: Side, decide: impl Fn(&[f64]) -> bool, d: &Dataset) -> f64 {
    match side {
        Side::Below => d.mass_where(|i| d.label(i) && !decide(d.row(i))),
        Side::Above => d.mass_where(|i| !d.label(i) && decide(d.row(i))),
    }
}

/// The relaxed one-sided objective for a single multiplier:
/// `sum_{g=1} w_i l(1 - h) + xi * sum_{g=0} w_i l'(h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneSidedLoss {
    pub xi: f64,
    pub surrogate: Surrogate,
    pub constraint_surrogate: Surrogate,
    /// Extra factor on the positive term (1 / mu(g = 1) under per-class normalisation).
    pub positive_scale: f64,
    /// Extra factor on the constraint term (1 / mu(g = 0) under per-class normalisation).
    pub negative_scale: f64,
}

impl OneSidedLoss {
    pub fn new(xi: f64, surrogate: Surrogate, constraint_surrogate: Surrogate) -> Self {
        Self { xi, surrogate, constraint_surrogate, positive_scale: 1.0, negative_scale: 1.0 }
    }

    /// Normalises each class by its own mass instead of the total sample.
    pub fn per_class(mut self, d: &Dataset) -> Self {
        let pos = d.positive_mass();
        let neg = 1.0 - pos;
        self.positive_scale = if pos > 0.0 { 1.0 / pos } else { 0.0 };
        self.negative_scale = if neg > 0.0 { 1.0 / neg } else { 0.0 };
        self
    }
}

impl ExampleLoss for OneSidedLoss {
    #[inline]
    fn eval(&self, _row: usize, label: bool, z: &[f64], grad: &mut [f64]) -> f64 {
        let (v, d) = if label {
            let (v, d) = self.surrogate.positive(z[0]);
            (self.positive_scale * v, self.positive_scale * d)
        } else {
            let (v, d) = self.constraint_surrogate.negative(z[0]);
            let s = self.xi * self.negative_scale;
            (s * v, s * d)
        };
        grad[0] = d;
        v
    }
}

/// Evaluates the one-sided objective of `model` on `d` (no regularisation).
pub fn one_sided_loss(model: &PredictorModel, d: &Dataset, loss: &OneSidedLoss) -> f64 {
    let mut g = [0.0];
    (0..d.len())
        .map(|i| d.weight(i) * loss.eval(i, d.label(i), &[model.logit(d.row(i))], &mut g))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OneSidedConfig {
    pub xi_grid: Vec<f64>,
    pub surrogate: Surrogate,
    pub constraint_surrogate: Surrogate,
    pub train_cfg: TrainConfig,
    /// Normalise the two terms by class mass rather than by the total sample.
    pub per_class_normalization: bool,
    /// Initialise each multiplier's run from the previous multiplier's model.
    pub warm_start: bool,
}

impl Default for OneSidedConfig {
    fn default() -> Self {
        Self {
            xi_grid: linspace(0.0, 24.0, 21),
            surrogate: Surrogate::Logistic,
            constraint_surrogate: Surrogate::Logistic,
            train_cfg: TrainConfig::default(),
            per_class_normalization: false,
            warm_start: true,
        }
    }
}

impl OneSidedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.xi_grid.is_empty() {
            return Err(Error::Validation("xi grid is empty".into()));
        }
        if self.xi_grid.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Validation("xi grid must be finite and nonnegative".into()));
        }
        if self.xi_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Validation("xi grid must be ascending".into()));
        }
        self.train_cfg.validate()
    }

    fn loss_for(&self, xi: f64, d: &Dataset) -> OneSidedLoss {
        let loss = OneSidedLoss::new(xi, self.surrogate, self.constraint_surrogate);
        if self.per_class_normalization {
            loss.per_class(d)
        } else {
            loss
        }
    }
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

/// A trained one-sided model for one multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneSidedCandidate {
    pub xi: f64,
    pub side: Side,
    pub model: PredictorModel,
    pub train_leakage: f64,
    pub train_miss: f64,
}

impl OneSidedCandidate {
    fn measured(model: PredictorModel, xi: f64, side: Side, d: &Dataset) -> Self {
        let train_leakage = leakage(side, |x| model.decide(x), d);
        let train_miss = miss(side, |x| model.decide(x), d);
        Self { xi, side, model, train_leakage, train_miss }
    }
}

/// Approximations of `g` from below, one per multiplier in the grid.
pub fn train_below(d: &Dataset, cfg: &OneSidedConfig) -> Result<Vec<OneSidedCandidate>> {
    Ok(scan(d, cfg)?
        .into_iter()
        .zip(&cfg.xi_grid)
        .map(|(m, &xi)| OneSidedCandidate::measured(m, xi, Side::Below, d))
        .collect())
}

/// Approximations of `g` from above: complements of below-approximations of `1 - g`.
pub fn train_above(d: &Dataset, cfg: &OneSidedConfig) -> Result<Vec<OneSidedCandidate>> {
    let flipped = d.flipped();
    Ok(scan(&flipped, cfg)?
        .into_iter()
        .zip(&cfg.xi_grid)
        .map(|(m, &xi)| OneSidedCandidate::measured(m.complement(), xi, Side::Above, d))
        .collect())
}

/// Trains one model for a multiplier. At `xi = 0` the objective only rewards
/// covering positives and its infimum is approached by predicting 1
/// everywhere, so the constant-one model is returned directly.
fn train_one(
    d: &Dataset,
    cfg: &OneSidedConfig,
    xi: f64,
    warm: Option<&PredictorModel>,
) -> Result<PredictorModel> {
    if xi == 0.0 {
        return Ok(PredictorModel::constant(d.n_features(), d.feature_map(), true));
    }
    let m = sgd_train(d, &cfg.loss_for(xi, d), &cfg.train_cfg, warm)?;
    Ok(m.with_threshold(0.5))
}

fn scan(d: &Dataset, cfg: &OneSidedConfig) -> Result<Vec<PredictorModel>> {
    cfg.validate()?;
    if cfg.warm_start {
        let mut out: Vec<PredictorModel> = Vec::with_capacity(cfg.xi_grid.len());
        for &xi in &cfg.xi_grid {
            let m = train_one(d, cfg, xi, out.last())?;
            out.push(m);
        }
        Ok(out)
    } else {
        cfg.xi_grid.par_iter().map(|&xi| train_one(d, cfg, xi, None)).collect()
    }
}

pub fn save_candidates(path: impl AsRef<std::path::Path>, c: &[OneSidedCandidate]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(c)?)?;
    Ok(())
}

pub fn load_candidates(path: impl AsRef<std::path::Path>) -> Result<Vec<OneSidedCandidate>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
