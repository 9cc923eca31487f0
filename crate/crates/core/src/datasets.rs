//! Empirical function-measure pairs `(g, mu)`.
//!
//! A [`Dataset`] holds feature rows, the cloud's labels on those rows and an
//! explicit probability weight per row. Uniform weights are the default; exact
//! finite-domain fixtures reuse the same type with non-uniform masses.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the label column expected as the final CSV column.
pub const LABEL_COLUMN: &str = "cloud_label";

const WEIGHT_TOLERANCE: f64 = 1e-9;

/// Fixed transform applied to raw inputs before a linear model sees them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMap {
    /// Raw columns passed through unchanged.
    Identity,
    /// `(x, y) -> (x, y, x^2, y^2)`: linear separators become axis-aligned conics.
    Conic,
}

impl FeatureMap {
    pub fn id(self) -> &'static str {
        match self {
            FeatureMap::Identity => "identity",
            FeatureMap::Conic => "conic",
        }
    }

    /// Number of output columns for `raw` input columns.
    pub fn output_dim(self, raw: usize) -> Result<usize> {
        match self {
            FeatureMap::Identity => Ok(raw),
            FeatureMap::Conic if raw == 2 => Ok(4),
            FeatureMap::Conic => Err(Error::Validation(format!(
                "conic feature map needs exactly 2 raw columns, got {raw}"
            ))),
        }
    }

    pub fn apply(self, raw: &[f64]) -> Vec<f64> {
        match self {
            FeatureMap::Identity => raw.to_vec(),
            FeatureMap::Conic => {
                let (x, y) = (raw[0], raw[1]);
                vec![x, y, x * x, y * y]
            }
        }
    }

    fn column_names(self, raw: &[String]) -> Vec<String> {
        match self {
            FeatureMap::Identity => raw.to_vec(),
            FeatureMap::Conic => vec![
                raw[0].clone(),
                raw[1].clone(),
                format!("{}_sq", raw[0]),
                format!("{}_sq", raw[1]),
            ],
        }
    }
}

impl fmt::Display for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for FeatureMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "none" => Ok(FeatureMap::Identity),
            "conic" => Ok(FeatureMap::Conic),
            other => Err(Error::Validation(format!("unknown feature map `{other}`"))),
        }
    }
}

/// Feature rows, cloud labels and per-row measure weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<String>,
    features: Vec<f64>,
    labels: Vec<bool>,
    weights: Vec<f64>,
    feature_map: FeatureMap,
}

impl Dataset {
    /// Builds a dataset with uniform weights.
    pub fn new(
        columns: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<bool>,
        feature_map: FeatureMap,
    ) -> Result<Self> {
        let n = rows.len();
        let weights = vec![1.0 / n.max(1) as f64; n];
        Self::with_weights(columns, rows, labels, weights, feature_map)
    }

    pub fn with_weights(
        columns: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<bool>,
        weights: Vec<f64>,
        feature_map: FeatureMap,
    ) -> Result<Self> {
        let k = columns.len();
        let mut features = Vec::with_capacity(rows.len() * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Validation(format!(
                    "row {i} has {} columns, expected {k}",
                    row.len()
                )));
            }
            features.extend_from_slice(row);
        }
        Self::from_flat(columns, features, labels, weights, feature_map)
    }

    pub fn from_flat(
        columns: Vec<String>,
        features: Vec<f64>,
        labels: Vec<bool>,
        weights: Vec<f64>,
        feature_map: FeatureMap,
    ) -> Result<Self> {
        let n = labels.len();
        let k = columns.len();
        if n == 0 {
            return Err(Error::Validation("dataset has no rows".into()));
        }
        if features.len() != n * k {
            return Err(Error::Validation(format!(
                "feature buffer has {} values, expected {n} x {k}",
                features.len()
            )));
        }
        if weights.len() != n {
            return Err(Error::Validation(format!(
                "{} weights for {n} rows",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Validation("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::Validation(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { columns, features, labels, weights, feature_map })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn feature_map(&self) -> FeatureMap {
        self.feature_map
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.columns.len();
        &self.features[i * k..(i + 1) * k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |i| self.row(i))
    }

    #[inline]
    pub fn label(&self, i: usize) -> bool {
        self.labels[i]
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted mass of rows satisfying `pred`.
    pub fn mass_where(&self, mut pred: impl FnMut(usize) -> bool) -> f64 {
        (0..self.len()).filter(|&i| pred(i)).map(|i| self.weights[i]).sum()
    }

    /// Empirical `mu(g = 1)`.
    pub fn positive_mass(&self) -> f64 {
        self.mass_where(|i| self.labels[i])
    }

    /// The same rows labelled by `1 - g`.
    pub fn flipped(&self) -> Self {
        Self { labels: self.labels.iter().map(|l| !l).collect(), ..self.clone() }
    }

    /// Rows at `indices` (in that order) with weights renormalised to sum to one.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let k = self.n_features();
        let mut features = Vec::with_capacity(indices.len() * k);
        let mut labels = Vec::with_capacity(indices.len());
        let mut weights = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
            weights.push(self.weights[i]);
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Validation("subset carries zero measure".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::from_flat(self.columns.clone(), features, labels, weights, self.feature_map)
    }

    /// Applies `map` to raw (identity-mapped) features.
    pub fn map_features(&self, map: FeatureMap) -> Result<Self> {
        if map == FeatureMap::Identity {
            return Ok(self.clone());
        }
        if self.feature_map != FeatureMap::Identity {
            return Err(Error::Validation(format!(
                "features already mapped by `{}`",
                self.feature_map
            )));
        }
        let k = map.output_dim(self.n_features())?;
        let mut features = Vec::with_capacity(self.len() * k);
        for row in self.rows() {
            features.extend(map.apply(row));
        }
        Self::from_flat(
            map.column_names(&self.columns),
            features,
            self.labels.clone(),
            self.weights.clone(),
            map,
        )
    }

    /// Writes the dataset as CSV with a trailing `cloud_label` column.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header = self.columns.clone();
        header.push(LABEL_COLUMN.to_string());
        w.write_record(&header).map_err(csv_err)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            record.clear();
            record.extend(self.row(i).iter().map(|v| v.to_string()));
            record.push(if self.labels[i] { "1".into() } else { "0".into() });
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Load { line, message: format!("{other:?}") },
    }
}

/// Train / validation fractions; the remainder is the test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| f > 0.0 && f < 1.0;
        if !ok(self.train_fraction) || !ok(self.validation_fraction) {
            return Err(Error::Validation("split fractions must lie in (0, 1)".into()));
        }
        if self.train_fraction + self.validation_fraction > 1.0 + 1e-12 {
            return Err(Error::Validation("train + validation fractions exceed 1".into()));
        }
        Ok(())
    }
}

/// Deterministic train / validation / test partition.
pub fn split(d: &Dataset, s: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    s.validate()?;
    let n = d.len();
    let count = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
    let n_train = count(s.train_fraction);
    let n_val = count(s.validation_fraction);
    if n_train == 0 {
        return Err(Error::EmptySplit { which: "train", n });
    }
    if n_val == 0 {
        return Err(Error::EmptySplit { which: "validation", n });
    }
    if n_train + n_val >= n {
        return Err(Error::EmptySplit { which: "test", n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(s.seed));
    let (train, rest) = order.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    Ok((d.subset(train)?, d.subset(val)?, d.subset(test)?))
}

/// The quartic defining the synthetic cloud.
pub fn synthetic_expression(x: f64, y: f64) -> f64 {
    let (x2, y2) = (x * x, y * y);
    x + 4.0 * x2 + 3.0 * x2 * x + 3.0 * x2 * x2 + y + y2 + y2 * y + y2 * y2 + 5.0 * x * y2
        + 30.0 * x2 * y
}

/// Synthetic cloud decision; boundary points are labelled 0 (strict inequality).
pub fn synthetic_label(x: f64, y: f64) -> bool {
    synthetic_expression(x, y) < 1000.0
}

/// Half-width of the square `[-10, 10]^2` the synthetic task samples from.
pub const SYNTHETIC_HALF_WIDTH: f64 = 10.0;

/// Raw `(x, y)` samples of the synthetic task, uniform weights.
pub fn generate_synthetic_raw(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Validation("synthetic dataset needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.gen_range(-SYNTHETIC_HALF_WIDTH..=SYNTHETIC_HALF_WIDTH);
        let y = rng.gen_range(-SYNTHETIC_HALF_WIDTH..=SYNTHETIC_HALF_WIDTH);
        features.extend([x, y]);
        labels.push(synthetic_label(x, y));
    }
    Dataset::from_flat(
        vec!["x".into(), "y".into()],
        features,
        labels,
        vec![1.0 / n as f64; n],
        FeatureMap::Identity,
    )
}

/// Synthetic task under the conic feature map `(x, y, x^2, y^2)`.
pub fn generate_synthetic(n: usize, seed: u64) -> Result<Dataset> {
    generate_synthetic_raw(n, seed)?.map_features(FeatureMap::Conic)
}

/// Reads a CSV whose final column is `cloud_label` and applies `map`.
pub fn load_csv(path: impl AsRef<Path>, map: FeatureMap) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(String::from).collect();
    match header.last() {
        Some(last) if last == LABEL_COLUMN => {}
        _ => {
            return Err(Error::Load {
                line: 1,
                message: format!("final column must be `{LABEL_COLUMN}`"),
            })
        }
    }
    let k = header.len() - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != k + 1 {
            return Err(Error::Load {
                line,
                message: format!("expected {} fields, found {}", k + 1, record.len()),
            });
        }
        for field in record.iter().take(k) {
            let v: f64 = field.parse().map_err(|_| Error::Load {
                line,
                message: format!("non-numeric value `{field}`"),
            })?;
            features.push(v);
        }
        let label = match record[k].parse::<f64>() {
            Ok(v) if v == 0.0 => false,
            Ok(v) if v == 1.0 => true,
            _ => return Err(Error::NonBinaryLabel { line }),
        };
        labels.push(label);
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::Load { line: 1, message: "no data rows".into() });
    }
    let raw = Dataset::from_flat(
        header[..k].to_vec(),
        features,
        labels,
        vec![1.0 / n as f64; n],
        FeatureMap::Identity,
    )?;
    raw.map_features(map)
}
