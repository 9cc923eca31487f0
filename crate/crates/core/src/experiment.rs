//! End-to-end experiments: split, train, select on validation, report on test.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{
    gate_threshold_scan, local_threshold_scan, train_alt_min, train_local, train_sum_relax,
    AltMinConfig, GatedClassifier, ScanPoint,
};
use crate::bracketing::{
    select_certified, select_empirical, select_most_accurate, usage, Bracket, BudgetClassifier,
    SelectionResult,
};
use crate::datasets::{generate_synthetic_raw, split, Dataset, FeatureMap, SplitSpec};
use crate::error::{Error, Result};
use crate::models::{Surrogate, TrainConfig};
use crate::oneside::{leakage, linspace, train_above, train_below, OneSidedConfig, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bracketing,
    LocalThresh,
    AltMin,
    SumRelax,
}

impl Method {
    pub const ALL: [Method; 4] =
        [Method::Bracketing, Method::LocalThresh, Method::AltMin, Method::SumRelax];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bracketing => "bracketing",
            Method::LocalThresh => "local-thresh",
            Method::AltMin => "alt-min",
            Method::SumRelax => "sum-relax",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown method `{s}`")))
    }
}

/// Hyperparameters of the one-sided scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BracketingConfig {
    pub xi_grid: Vec<f64>,
    pub surrogate: Surrogate,
    pub constraint_surrogate: Surrogate,
    pub per_class_normalization: bool,
    pub warm_start: bool,
}

impl Default for BracketingConfig {
    fn default() -> Self {
        let o = OneSidedConfig::default();
        Self {
            xi_grid: o.xi_grid,
            surrogate: o.surrogate,
            constraint_surrogate: o.constraint_surrogate,
            per_class_normalization: o.per_class_normalization,
            warm_start: o.warm_start,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AltMinSweep {
    pub lambdas: Vec<f64>,
    pub max_rounds: usize,
    pub kl_weight: f64,
}

impl Default for AltMinSweep {
    fn default() -> Self {
        let d = AltMinConfig::default();
        Self { lambdas: linspace(0.0, 1.0, 25), max_rounds: d.max_rounds, kl_weight: d.kl_weight }
    }
}

/// Everything an experiment needs besides the data and the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Map applied to raw CSV columns on load.
    pub feature_map: FeatureMap,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub bracketing: BracketingConfig,
    pub alt_min: AltMinSweep,
    pub sum_relax_costs: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            feature_map: FeatureMap::Identity,
            split: SplitSpec { train_fraction: 0.8, validation_fraction: 0.1, seed: 0 },
            train: TrainConfig::default(),
            bracketing: BracketingConfig::default(),
            alt_min: AltMinSweep::default(),
            sum_relax_costs: linspace(0.0, 0.495, 25),
        }
    }
}

/// Rows generated for the synthetic preset: 2.5K training, 2.5K validation, 5K test.
pub const SYNTHETIC_ROWS: usize = 10_000;

impl ExperimentConfig {
    /// Synthetic quartic task: conic features, quarter/quarter/half split and a
    /// squared-hinge constraint surrogate.
    pub fn synthetic() -> Self {
        Self {
            feature_map: FeatureMap::Conic,
            split: SplitSpec { train_fraction: 0.25, validation_fraction: 0.25, seed: 0 },
            bracketing: BracketingConfig {
                constraint_surrogate: Surrogate::SquaredHinge,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    /// MNIST odd/even: raw pixels, 27K-train / 3K-validation style split of a 70K export.
    pub fn mnist() -> Self {
        Self {
            feature_map: FeatureMap::Identity,
            split: SplitSpec { train_fraction: 0.386, validation_fraction: 0.043, seed: 0 },
            ..Default::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "synthetic" => Ok(Self::synthetic()),
            "mnist" => Ok(Self::mnist()),
            "default" => Ok(Self::default()),
            other => Err(Error::Validation(format!("unknown preset `{other}`"))),
        }
    }

    /// Uses `seed` for the split and every training run.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.split.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn one_sided(&self) -> OneSidedConfig {
        OneSidedConfig {
            xi_grid: self.bracketing.xi_grid.clone(),
            surrogate: self.bracketing.surrogate,
            constraint_surrogate: self.bracketing.constraint_surrogate,
            train_cfg: self.train.clone(),
            per_class_normalization: self.bracketing.per_class_normalization,
            warm_start: self.bracketing.warm_start,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.one_sided().validate()?;
        if self.alt_min.lambdas.is_empty() || self.sum_relax_costs.is_empty() {
            return Err(Error::Validation("sweep grids must be nonempty".into()));
        }
        Ok(())
    }
}

/// Synthetic data for the synthetic preset, as raw `(x, y)` columns.
pub fn synthetic_data(seed: u64) -> Result<Dataset> {
    generate_synthetic_raw(SYNTHETIC_ROWS, seed)
}

/// Relative operational lifetime `1 / usage`, or the `"inf"` sentinel at zero usage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rol {
    Finite(f64),
    Infinite(String),
}

impl Rol {
    pub fn from_usage(usage: f64) -> Self {
        if usage > 0.0 {
            Rol::Finite(1.0 / usage)
        } else {
            Rol::Infinite("inf".into())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub method: Method,
    pub target_accuracy: f64,
    /// Whether validation accuracy reached the target; if not, the most accurate option is reported.
    pub attained: bool,
    pub achieved_accuracy: f64,
    pub usage: f64,
    pub rol: Rol,
    pub leakage_below: f64,
    pub leakage_above: f64,
    pub validation_accuracy: f64,
    pub validation_usage: f64,
    /// Selected hyperparameters and thresholds.
    pub selection: BTreeMap<String, f64>,
    pub wall_time_seconds: f64,
    pub config_digest: String,
}

/// The deployable artifact behind a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Artifact {
    Bracketing(SelectionResult),
    Gated(GatedClassifier),
}

impl Artifact {
    pub fn bracket(&self) -> Bracket {
        match self {
            Artifact::Bracketing(s) => s.bracket.clone(),
            Artifact::Gated(g) => g.to_bracket(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: ExperimentReport,
    pub artifact: Artifact,
    /// One report per sweep value for the swept baselines.
    pub sub_reports: Vec<ExperimentReport>,
}

/// The three partitions an experiment works on.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

impl Splits {
    /// Maps raw features with the configured map and splits.
    pub fn prepare(raw: &Dataset, cfg: &ExperimentConfig) -> Result<Self> {
        let mapped = if raw.feature_map() == cfg.feature_map {
            raw.clone()
        } else {
            raw.map_features(cfg.feature_map)?
        };
        let (train, validation, test) = split(&mapped, &cfg.split)?;
        Ok(Self { train, validation, test })
    }
}

/// Hex SHA-256 of the canonical JSON of everything that determines a report.
pub fn config_digest(method: Method, target: f64, cfg: &ExperimentConfig, data: &Dataset, certify: Option<(f64, f64)>) -> String {
    let mut h = Sha256::new();
    let head = serde_json::json!({
        "method": method,
        "target_accuracy": target,
        "config": cfg,
        "certify": certify,
        "rows": data.len(),
        "columns": data.columns(),
    });
    h.update(head.to_string().as_bytes());
    for (i, x) in data.rows().enumerate() {
        for v in x {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update([data.label(i) as u8]);
        h.update(data.weight(i).to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn evaluate(
    method: Method,
    target: f64,
    bracket: &Bracket,
    attained: bool,
    validation: (f64, f64),
    selection: BTreeMap<String, f64>,
    test: &Dataset,
) -> ExperimentReport {
    let c = BudgetClassifier::new(bracket.clone());
    let u = usage(bracket, test);
    ExperimentReport {
        method,
        target_accuracy: target,
        attained,
        achieved_accuracy: c.accuracy_vs_cloud(test),
        usage: u,
        rol: Rol::from_usage(u),
        leakage_below: leakage(Side::Below, |x| bracket.lower.decide(x), test),
        leakage_above: leakage(Side::Above, |x| bracket.upper.decide(x), test),
        validation_accuracy: validation.0,
        validation_usage: validation.1,
        selection,
        wall_time_seconds: 0.0,
        config_digest: String::new(),
    }
}

/// Runs `method` end to end on prepared splits.
///
/// If no option reaches the target on validation, the most accurate one is
/// reported with `attained = false`.
pub fn run_on_splits(
    method: Method,
    s: &Splits,
    target: f64,
    cfg: &ExperimentConfig,
    certify: Option<(f64, f64)>,
) -> Result<Outcome> {
    cfg.validate()?;
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Validation("target accuracy must lie in (0, 1)".into()));
    }
    match method {
        Method::Bracketing => run_bracketing(s, target, cfg, certify),
        Method::LocalThresh => {
            let m = train_local(&s.train, &cfg.train)?;
            let gc = local_threshold_scan(&m, &s.train, &s.validation, target)?;
            let v = (gc.accuracy_vs_cloud(&s.validation), gc.usage(&s.validation));
            let report = evaluate(
                method,
                target,
                &gc.to_bracket(),
                v.0 >= target,
                v,
                gc.hyperparameters.clone(),
                &s.test,
            );
            Ok(Outcome { report, artifact: Artifact::Gated(gc), sub_reports: Vec::new() })
        }
        Method::AltMin => {
            let trained: Vec<GatedClassifier> = cfg
                .alt_min
                .lambdas
                .par_iter()
                .map(|&lambda| {
                    let ac = AltMinConfig {
                        lambda,
                        max_rounds: cfg.alt_min.max_rounds,
                        kl_weight: cfg.alt_min.kl_weight,
                        train_cfg: cfg.train.clone(),
                    };
                    train_alt_min(&s.train, &ac)
                })
                .collect::<Result<_>>()?;
            finish_sweep(method, trained, s, target)
        }
        Method::SumRelax => {
            let trained: Vec<GatedClassifier> = cfg
                .sum_relax_costs
                .par_iter()
                .map(|&c| train_sum_relax(&s.train, c, &cfg.train))
                .collect::<Result<_>>()?;
            finish_sweep(method, trained, s, target)
        }
    }
}

/// Loads nothing itself: maps, splits and runs, then stamps timing and digest.
pub fn run_experiment(
    method: Method,
    raw: &Dataset,
    target: f64,
    cfg: &ExperimentConfig,
    certify: Option<(f64, f64)>,
) -> Result<Outcome> {
    let start = Instant::now();
    let splits = Splits::prepare(raw, cfg)?;
    let mut out = run_on_splits(method, &splits, target, cfg, certify)?;
    let digest = config_digest(method, target, cfg, raw, certify);
    let elapsed = start.elapsed().as_secs_f64();
    out.report.wall_time_seconds = elapsed;
    out.report.config_digest = digest.clone();
    for r in &mut out.sub_reports {
        r.config_digest = digest.clone();
    }
    Ok(out)
}

fn run_bracketing(
    s: &Splits,
    target: f64,
    cfg: &ExperimentConfig,
    certify: Option<(f64, f64)>,
) -> Result<Outcome> {
    let oc = cfg.one_sided();
    let (below, above) = rayon::join(|| train_below(&s.train, &oc), || train_above(&s.train, &oc));
    let (below, above) = (below?, above?);
    let (sel, attained) = match certify {
        Some((zeta, delta)) => {
            let sel = select_certified(&below, &above, &s.validation, zeta, delta)?;
            let ok = sel.validation_accuracy >= target;
            (sel, ok)
        }
        None => match select_empirical(&below, &above, &s.train, &s.validation, target) {
            Ok(sel) => (sel, true),
            Err(Error::TargetUnattainable { .. }) => {
                (select_most_accurate(&below, &above, &s.train, &s.validation, target)?, false)
            }
            Err(e) => return Err(e),
        },
    };
    let mut selection = BTreeMap::new();
    selection.insert("below_xi".into(), sel.below_xi);
    selection.insert("above_xi".into(), sel.above_xi);
    selection.insert("below_threshold".into(), sel.thresholds.0);
    selection.insert("above_threshold".into(), sel.thresholds.1);
    if let Some(c) = &sel.certificate {
        selection.insert("zeta".into(), c.zeta);
        selection.insert("delta".into(), c.delta);
        selection.insert("slack".into(), c.slack);
    }
    let report = evaluate(
        Method::Bracketing,
        target,
        &sel.bracket,
        attained,
        (sel.validation_accuracy, sel.validation_usage),
        selection,
        &s.test,
    );
    Ok(Outcome { report, artifact: Artifact::Bracketing(sel), sub_reports: Vec::new() })
}

/// Threshold-scans every swept gated classifier and keeps the lowest validation usage.
fn finish_sweep(
    method: Method,
    trained: Vec<GatedClassifier>,
    s: &Splits,
    target: f64,
) -> Result<Outcome> {
    let mut scanned: Vec<(GatedClassifier, ScanPoint)> = Vec::with_capacity(trained.len());
    for gc in trained {
        scanned.push(gate_threshold_scan(&gc, &s.train, &s.validation, target)?);
    }
    let report_for = |gc: &GatedClassifier, p: &ScanPoint| {
        let mut sel = gc.hyperparameters.clone();
        sel.insert("gate_threshold".into(), gc.gate_threshold);
        evaluate(method, target, &gc.to_bracket(), p.accuracy >= target, (p.accuracy, p.usage), sel, &s.test)
    };
    let sub_reports: Vec<ExperimentReport> = scanned.iter().map(|(g, p)| report_for(g, p)).collect();
    let best = scanned
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| {
            (a.1.accuracy < target)
                .cmp(&(b.1.accuracy < target))
                .then(a.1.usage.total_cmp(&b.1.usage))
                .then(b.1.accuracy.total_cmp(&a.1.accuracy))
                .then(i.cmp(j))
        })
        .map(|(i, _)| i)
        .expect("nonempty sweep");
    let (gc, _) = scanned.swap_remove(best);
    Ok(Outcome { report: sub_reports[best].clone(), artifact: Artifact::Gated(gc), sub_reports })
}
