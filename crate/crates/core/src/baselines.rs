//! Gating baselines: local thresholding, alternating minimisation and the sum
//! relaxation. Each produces a gate `gamma` (1 = predict locally) and a local
//! predictor `pi`; the cloud answers wherever the gate says 0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bracketing::{gating_to_bracket, Bracket, Hypothesis};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::models::{
    logistic_loss, sgd_train, sgd_train_heads, sigmoid, softplus, CrossEntropy, ExampleLoss,
    PredictorModel, TrainConfig,
};

/// Gate threshold that defers every row: gate values never exceed 1.
pub const ALWAYS_DEFER: f64 = 2.0;
/// Gate threshold that keeps every row local: gate values are never below 0.
pub const ALWAYS_LOCAL: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    /// Local where the gate model's score exceeds the threshold.
    Model(PredictorModel),
    /// Local where the predictor's confidence `max(p, 1 - p)` reaches the threshold.
    Confidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatedClassifier {
    pub gate: Gate,
    pub predictor: PredictorModel,
    pub gate_threshold: f64,
    pub method_name: String,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, f64>,
}

impl GatedClassifier {
    /// The gate's continuous value on `x`.
    pub fn gate_value(&self, x: &[f64]) -> f64 {
        match &self.gate {
            Gate::Model(m) => m.score(x),
            Gate::Confidence => confidence(self.predictor.score(x)),
        }
    }

    /// `true` where the classifier answers locally.
    pub fn local(&self, x: &[f64]) -> bool {
        let v = self.gate_value(x);
        match self.gate {
            Gate::Model(_) => v > self.gate_threshold,
            Gate::Confidence => v >= self.gate_threshold,
        }
    }

    /// `c_{gamma, pi}`: the predictor where the gate is open, the cloud elsewhere.
    pub fn predict(&self, x: &[f64], cloud_label: bool) -> (bool, bool) {
        if self.local(x) {
            (self.predictor.decide(x), false)
        } else {
            (cloud_label, true)
        }
    }

    pub fn usage(&self, d: &Dataset) -> f64 {
        d.mass_where(|i| !self.local(d.row(i)))
    }

    pub fn accuracy_vs_cloud(&self, d: &Dataset) -> f64 {
        d.mass_where(|i| self.predict(d.row(i), d.label(i)).0 == d.label(i))
    }

    /// The gate as a `{0,1}` hypothesis.
    pub fn gate_hypothesis(&self) -> Hypothesis {
        match &self.gate {
            Gate::Model(m) => Hypothesis::Linear(m.with_threshold(self.gate_threshold)),
            Gate::Confidence => Hypothesis::Confident {
                confidence_of: self.predictor.clone(),
                at_least: self.gate_threshold,
            },
        }
    }

    pub fn to_bracket(&self) -> Bracket {
        gating_to_bracket(self.gate_hypothesis(), Hypothesis::Linear(self.predictor.clone()))
    }

    pub fn with_gate_threshold(&self, t: f64) -> Self {
        Self { gate_threshold: t, ..self.clone() }
    }

    pub fn save_json(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[inline]
pub fn confidence(p: f64) -> f64 {
    p.max(1.0 - p)
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let h = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    h(p) + h(1.0 - p)
}

/// Plain cross-entropy training of the local predictor.
pub fn train_local(d: &Dataset, cfg: &TrainConfig) -> Result<PredictorModel> {
    sgd_train(d, &CrossEntropy, cfg, None)
}

/// Outcome of a gate-threshold scan on a validation set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub threshold: f64,
    pub usage: f64,
    pub accuracy: f64,
}

/// Evaluates every candidate threshold on validation rows given as
/// `(gate value, local prediction correct, weight)`; rows are local where the
/// gate value is `> t` (`strict`) or `>= t`.
pub fn threshold_curve(candidates: &[f64], rows: &[(f64, bool, f64)], strict: bool) -> Vec<ScanPoint> {
    let mut sorted: Vec<(f64, bool, f64)> = rows.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut prefix_w = vec![0.0; sorted.len() + 1];
    let mut prefix_wrong = vec![0.0; sorted.len() + 1];
    for (k, &(_, ok, w)) in sorted.iter().enumerate() {
        prefix_w[k + 1] = prefix_w[k] + w;
        prefix_wrong[k + 1] = prefix_wrong[k] + if ok { 0.0 } else { w };
    }
    let total_wrong = prefix_wrong[sorted.len()];
    candidates
        .iter()
        .map(|&t| {
            let deferred = if strict {
                sorted.partition_point(|r| r.0 <= t)
            } else {
                sorted.partition_point(|r| r.0 < t)
            };
            ScanPoint {
                threshold: t,
                usage: prefix_w[deferred],
                accuracy: 1.0 - (total_wrong - prefix_wrong[deferred]),
            }
        })
        .collect()
}

/// Minimum-usage point with accuracy `>= target`; ties to higher accuracy, then lower threshold.
pub fn best_point(curve: &[ScanPoint], target: f64) -> Result<ScanPoint> {
    curve
        .iter()
        .filter(|p| p.accuracy >= target)
        .min_by(|a, b| {
            a.usage
                .total_cmp(&b.usage)
                .then(b.accuracy.total_cmp(&a.accuracy))
                .then(a.threshold.total_cmp(&b.threshold))
        })
        .copied()
        .ok_or_else(|| Error::TargetUnattainable {
            target,
            best_accuracy: curve.iter().map(|p| p.accuracy).fold(0.0, f64::max),
        })
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn validation_rows(gc: &GatedClassifier, v: &Dataset) -> Vec<(f64, bool, f64)> {
    (0..v.len())
        .map(|i| {
            let x = v.row(i);
            (gc.gate_value(x), gc.predictor.decide(x) == v.label(i), v.weight(i))
        })
        .collect()
}

/// Picks the gate threshold among the gate values attained on training rows
/// (plus the always-local and always-defer sentinels) that minimises
/// validation usage subject to the target accuracy.
pub fn gate_threshold_scan(
    gc: &GatedClassifier,
    train: &Dataset,
    v: &Dataset,
    target_accuracy: f64,
) -> Result<(GatedClassifier, ScanPoint)> {
    let mut candidates: Vec<f64> = train.rows().map(|x| gc.gate_value(x)).collect();
    candidates.push(ALWAYS_DEFER);
    if matches!(gc.gate, Gate::Model(_)) {
        candidates.push(ALWAYS_LOCAL);
    }
    let candidates = sorted_unique(candidates);
    let strict = matches!(gc.gate, Gate::Model(_));
    let curve = threshold_curve(&candidates, &validation_rows(gc, v), strict);
    let p = best_point(&curve, target_accuracy)?;
    Ok((gc.with_gate_threshold(p.threshold), p))
}

/// Local thresholding: defer where the predictor's confidence is below `tau`.
/// Candidate `tau` values are the confidences attained on training rows plus
/// an always-defer sentinel.
pub fn local_threshold_scan(
    m: &PredictorModel,
    train: &Dataset,
    v: &Dataset,
    target_accuracy: f64,
) -> Result<GatedClassifier> {
    let gc = GatedClassifier {
        gate: Gate::Confidence,
        predictor: m.clone(),
        gate_threshold: 0.0,
        method_name: "local-thresh".into(),
        hyperparameters: BTreeMap::new(),
    };
    let (mut out, p) = gate_threshold_scan(&gc, train, v, target_accuracy)?;
    out.hyperparameters.insert("tau".into(), p.threshold);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AltMinConfig {
    pub lambda: f64,
    pub max_rounds: usize,
    /// Strength of the KL pull of the auxiliary variables toward the gate.
    pub kl_weight: f64,
    pub train_cfg: TrainConfig,
}

impl Default for AltMinConfig {
    fn default() -> Self {
        Self { lambda: 0.5, max_rounds: 10, kl_weight: 0.5, train_cfg: TrainConfig::default() }
    }
}

impl AltMinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return Err(Error::Validation("max_rounds must be >= 1".into()));
        }
        if !(self.kl_weight > 0.0 && self.kl_weight.is_finite()) || !(self.lambda >= 0.0) {
            return Err(Error::Validation("need kl_weight > 0 and lambda >= 0".into()));
        }
        self.train_cfg.validate()
    }
}

/// Convergence tolerance on the auxiliary variables.
pub const ALT_MIN_TOL: f64 = 1e-4;

/// Cross-entropy with a per-row weight.
struct RowWeighted<'a>(&'a [f64]);

impl ExampleLoss for RowWeighted<'_> {
    fn eval(&self, row: usize, label: bool, z: &[f64], grad: &mut [f64]) -> f64 {
        let v = CrossEntropy.eval(row, label, z, grad);
        grad[0] *= self.0[row];
        v * self.0[row]
    }
}

/// Logistic regression toward soft targets `u`.
struct SoftTargets<'a>(&'a [f64]);

impl ExampleLoss for SoftTargets<'_> {
    fn eval(&self, row: usize, _: bool, z: &[f64], grad: &mut [f64]) -> f64 {
        let u = self.0[row];
        grad[0] = sigmoid(z[0]) - u;
        u * softplus(-z[0]) + (1.0 - u) * softplus(z[0])
    }
}

/// Closed-form minimiser over `u in [0,1]` of
/// `u a + lambda (1 - u) + beta KL(u || gamma)`: `logit u = logit gamma + (lambda - a) / beta`.
pub fn alt_min_u_update(gamma: f64, predictor_loss: f64, lambda: f64, kl_weight: f64) -> f64 {
    let g = gamma.clamp(1e-12, 1.0 - 1e-12);
    sigmoid((g / (1.0 - g)).ln() + (lambda - predictor_loss) / kl_weight)
}

/// Alternating minimisation of predictor, gate and auxiliary gate targets.
///
/// Starts from the cross-entropy local predictor and an uninformative gate;
/// each round updates `u` in closed form, refits `pi` on `u`-weighted
/// cross-entropy and refits `gamma` toward `u`. Stops once `u` moves by less
/// than [`ALT_MIN_TOL`] or after `max_rounds`.
pub fn train_alt_min(d: &Dataset, cfg: &AltMinConfig) -> Result<GatedClassifier> {
    cfg.validate()?;
    let mut pi = train_local(d, &cfg.train_cfg)?;
    let mut gamma = PredictorModel::zeros(d.n_features(), d.feature_map());
    let mut u: Vec<f64> = vec![f64::NAN; d.len()];
    let mut rounds = 0;
    for _ in 0..cfg.max_rounds {
        rounds += 1;
        let next: Vec<f64> = (0..d.len())
            .map(|i| {
                let x = d.row(i);
                let a = logistic_loss(pi.score(x), d.label(i));
                alt_min_u_update(gamma.score(x), a, cfg.lambda, cfg.kl_weight)
            })
            .collect();
        let moved = u.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, |m: f64, v| {
            if v.is_nan() {
                f64::INFINITY
            } else {
                m.max(v)
            }
        });
        u = next;
        pi = sgd_train(d, &RowWeighted(&u), &cfg.train_cfg, Some(&pi))?;
        gamma = sgd_train(d, &SoftTargets(&u), &cfg.train_cfg, Some(&gamma))?;
        if moved < ALT_MIN_TOL {
            break;
        }
    }
    let mut hyperparameters = BTreeMap::new();
    hyperparameters.insert("lambda".into(), cfg.lambda);
    hyperparameters.insert("kl_weight".into(), cfg.kl_weight);
    hyperparameters.insert("rounds".into(), rounds as f64);
    Ok(GatedClassifier {
        gate: Gate::Model(gamma),
        predictor: pi,
        gate_threshold: 0.5,
        method_name: "alt-min".into(),
        hyperparameters,
    })
}

/// Sum-relaxation surrogate on predictor margin `h` and gate margin `r`:
/// `max(0, 1 + (r - y h)/2) + c max(0, 1 - r)`.
#[derive(Debug, Clone, Copy)]
pub struct SumRelaxLoss {
    pub c: f64,
}

impl ExampleLoss for SumRelaxLoss {
    fn heads(&self) -> usize {
        2
    }

    fn eval(&self, _: usize, label: bool, z: &[f64], grad: &mut [f64]) -> f64 {
        let y = if label { 1.0 } else { -1.0 };
        let (h, r) = (z[0], z[1]);
        let mut value = 0.0;
        grad[0] = 0.0;
        grad[1] = 0.0;
        let first = 1.0 + 0.5 * (r - y * h);
        if first > 0.0 {
            value += first;
            grad[0] -= 0.5 * y;
            grad[1] += 0.5;
        }
        let second = 1.0 - r;
        if second > 0.0 {
            value += self.c * second;
            grad[1] -= self.c;
        }
        value
    }
}

/// Joint SGD of predictor and gate margins under [`SumRelaxLoss`]; the gate
/// defers where `r < 0` (score `< 1/2`).
pub fn train_sum_relax(d: &Dataset, c: f64, cfg: &TrainConfig) -> Result<GatedClassifier> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::Validation("sum-relax cost c must be nonnegative".into()));
    }
    let mut heads = sgd_train_heads(d, &SumRelaxLoss { c }, cfg, None)?;
    let gate = heads.pop().expect("two heads");
    let predictor = heads.pop().expect("two heads");
    let mut hyperparameters = BTreeMap::new();
    hyperparameters.insert("c".into(), c);
    Ok(GatedClassifier {
        gate: Gate::Model(gate),
        predictor,
        gate_threshold: 0.5,
        method_name: "sum-relax".into(),
        hyperparameters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bracketing::{usage, BudgetClassifier};
    use crate::datasets::{generate_synthetic, FeatureMap};
    use crate::models::accuracy;
    use proptest::prelude::*;

    fn quick() -> TrainConfig {
        TrainConfig { epochs: 20, ..Default::default() }
    }

    #[test]
    fn separable_local_is_exact() {
        let rows = (0..20).map(|i| vec![i as f64]).collect();
        let labels = (0..20).map(|i| i >= 10).collect();
        let d = Dataset::new(vec!["x".into()], rows, labels, FeatureMap::Identity).unwrap();
        let cfg = TrainConfig { epochs: 200, learning_rate: 0.5, ..Default::default() };
        assert!((accuracy(&train_local(&d, &cfg).unwrap(), &d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn confidence_extremes() {
        let d = generate_synthetic(400, 1).unwrap();
        let m = train_local(&d, &quick()).unwrap();
        let min_conf = d.rows().map(|x| confidence(m.score(x))).fold(1.0, f64::min);
        let gc = local_threshold_scan(&m, &d, &d, 0.01).unwrap();
        assert_eq!(gc.usage(&d), 0.0);
        assert_eq!(gc.gate_threshold, min_conf);
        assert_eq!(gc.accuracy_vs_cloud(&d), accuracy(&m, &d));
        let all = gc.with_gate_threshold(ALWAYS_DEFER);
        assert!((all.usage(&d) - 1.0).abs() < 1e-12);
        assert!((all.accuracy_vs_cloud(&d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alt_min_lambda_extremes() {
        let d = generate_synthetic(300, 2).unwrap();
        let free = train_alt_min(&d, &AltMinConfig { lambda: 0.0, train_cfg: quick(), ..Default::default() })
            .unwrap();
        assert!(free.usage(&d) > 0.95, "{}", free.usage(&d));
        let costly = train_alt_min(&d, &AltMinConfig { lambda: 50.0, train_cfg: quick(), ..Default::default() })
            .unwrap();
        assert_eq!(costly.usage(&d), 0.0);
        assert_eq!(costly.accuracy_vs_cloud(&d), accuracy(&costly.predictor, &d));
    }

    #[test]
    fn alt_min_single_round_matches_manual_steps() {
        let d = generate_synthetic(200, 3).unwrap();
        let cfg = AltMinConfig { lambda: 0.3, max_rounds: 1, train_cfg: quick(), ..Default::default() };
        let got = train_alt_min(&d, &cfg).unwrap();
        let pi0 = train_local(&d, &cfg.train_cfg).unwrap();
        let gamma0 = PredictorModel::zeros(4, FeatureMap::Conic);
        let u: Vec<f64> = (0..d.len())
            .map(|i| {
                let a = logistic_loss(pi0.score(d.row(i)), d.label(i));
                alt_min_u_update(0.5, a, 0.3, cfg.kl_weight)
            })
            .collect();
        let pi1 = sgd_train(&d, &RowWeighted(&u), &cfg.train_cfg, Some(&pi0)).unwrap();
        let gamma1 = sgd_train(&d, &SoftTargets(&u), &cfg.train_cfg, Some(&gamma0)).unwrap();
        assert_eq!(got.predictor, pi1);
        assert_eq!(got.gate, Gate::Model(gamma1));
    }

    #[test]
    fn sum_relax_cost_extremes() {
        let d = generate_synthetic(300, 4).unwrap();
        let free = train_sum_relax(&d, 0.0, &quick()).unwrap();
        assert!((free.usage(&d) - 1.0).abs() < 1e-12);
        let costly = train_sum_relax(&d, 5.0, &quick()).unwrap();
        assert_eq!(costly.usage(&d), 0.0);
    }

    #[test]
    fn sum_relax_gradient_matches_finite_differences() {
        let loss = SumRelaxLoss { c: 0.3 };
        let mut g = [0.0; 2];
        let mut scratch = [0.0; 2];
        for &(h, r, y) in &[(0.3, -0.2, true), (-1.1, 0.4, false), (2.0, 0.1, true)] {
            loss.eval(0, y, &[h, r], &mut g);
            let e = 1e-6;
            let fd_h = (loss.eval(0, y, &[h + e, r], &mut scratch) - loss.eval(0, y, &[h - e, r], &mut scratch)) / (2.0 * e);
            let fd_r = (loss.eval(0, y, &[h, r + e], &mut scratch) - loss.eval(0, y, &[h, r - e], &mut scratch)) / (2.0 * e);
            assert!((g[0] - fd_h).abs() < 1e-6 && (g[1] - fd_r).abs() < 1e-6);
        }
    }

    #[test]
    fn gated_classifier_json_roundtrip() {
        let d = generate_synthetic(100, 5).unwrap();
        let gc = train_sum_relax(&d, 0.2, &TrainConfig { epochs: 2, ..Default::default() }).unwrap();
        let back: GatedClassifier = serde_json::from_str(&serde_json::to_string(&gc).unwrap()).unwrap();
        assert_eq!(back, gc);
    }

    #[test]
    fn gated_classifiers_are_brackets() {
        let d = generate_synthetic(300, 6).unwrap();
        let m = train_local(&d, &quick()).unwrap();
        let gcs = vec![
            local_threshold_scan(&m, &d, &d, 0.95).unwrap(),
            train_sum_relax(&d, 0.25, &quick()).unwrap(),
            train_alt_min(&d, &AltMinConfig { train_cfg: quick(), max_rounds: 2, ..Default::default() })
                .unwrap(),
        ];
        for gc in gcs {
            let b = gc.to_bracket();
            assert_eq!(usage(&b, &d), gc.usage(&d));
            let c = BudgetClassifier::new(b);
            for i in 0..d.len() {
                assert_eq!(c.predict(d.row(i), d.label(i)), gc.predict(d.row(i), d.label(i)));
            }
        }
    }

    proptest! {
        #[test]
        fn entropy_order_is_confidence_order(p in 0.001f64..0.999, q in 0.001f64..0.999) {
            let (hp, hq) = (binary_entropy(p), binary_entropy(q));
            prop_assume!((hp - hq).abs() > 1e-12);
            prop_assert_eq!(hp < hq, confidence(p) > confidence(q));
        }

        #[test]
        fn threshold_curve_is_monotone(rows in prop::collection::vec((0.5f64..1.0, any::<bool>(), 1u32..5), 1..40),
                                       mut taus in prop::collection::vec(0.4f64..1.1, 2..20)) {
            let total: u32 = rows.iter().map(|r| r.2).sum();
            let rows: Vec<(f64, bool, f64)> = rows.iter().map(|&(c, ok, w)| (c, ok, w as f64 / total as f64)).collect();
            taus.sort_by(f64::total_cmp);
            let curve = threshold_curve(&taus, &rows, false);
            for w in curve.windows(2) {
                prop_assert!(w[1].usage >= w[0].usage - 1e-12);
                prop_assert!(w[1].accuracy >= w[0].accuracy - 1e-12);
            }
        }
    }
}
