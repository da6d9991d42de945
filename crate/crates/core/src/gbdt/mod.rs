//! Gradient boosting over oblivious trees.
//!
//! Numeric features are used as-is. Categorical features are replaced by
//! ordered target statistics (one column for binary models, one per class
//! for multiclass models) before boosting. Each boosting round fits one
//! symmetric tree per output with Newton leaf values
//! `v = -sum(g) / (sum(h) + l2_leaf_reg)`, and the ensemble margin is
//! `base_score + learning_rate * sum(tree outputs)`.

mod boost;
mod encoding;
mod tree;

pub use boost::{fit, fit_traced, quantile_borders, training_logloss};
pub use encoding::{encode_ordered_ts, CategoricalStats, CategoryStat, OrderedTsEncoder};
pub use tree::{ObliviousTree, Split};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum GbdtError {
    #[error("all training labels belong to one class")]
    DegenerateLabels,
    #[error("non-finite feature value at row {row}, feature {feature}")]
    NonFiniteFeature { row: usize, feature: usize },
    #[error("categorical feature {feature} has non-integer value {value}")]
    BadCategory { feature: usize, value: f64 },
    #[error("expected {expected} features, got {got}")]
    FeatureArityMismatch { expected: usize, got: usize },
    #[error("label {label} is outside 0..{n_classes}")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("{rows} rows and {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("need at least {need} rows for {n_classes} classes, got {got}")]
    TooFewRows { need: usize, got: usize, n_classes: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("model document: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, GbdtError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    BinaryLogistic,
    MulticlassSoftmax,
}

impl Loss {
    /// Binary logistic for two classes, softmax otherwise.
    pub fn for_classes(n_classes: usize) -> Self {
        if n_classes == 2 {
            Loss::BinaryLogistic
        } else {
            Loss::MulticlassSoftmax
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub l2_leaf_reg: f64,
    pub ts_prior_weight: f64,
    pub n_permutations: usize,
    /// Quantile buckets per column; borders = buckets - 1 at most.
    pub border_count: usize,
    pub seed: u64,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            depth: 6,
            learning_rate: 0.1,
            l2_leaf_reg: 3.0,
            ts_prior_weight: 1.0,
            n_permutations: 1,
            border_count: 32,
            seed: 0,
            loss: Loss::BinaryLogistic,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GbdtError::InvalidConfig(m.to_string()));
        if self.n_trees < 1 {
            return bad("n_trees must be at least 1");
        }
        if !(1..=16).contains(&self.depth) {
            return bad("depth must be in 1..=16");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if !(self.l2_leaf_reg >= 0.0) {
            return bad("l2_leaf_reg must be non-negative");
        }
        if !(self.ts_prior_weight > 0.0) {
            return bad("ts_prior_weight must be positive");
        }
        if self.n_permutations < 1 {
            return bad("n_permutations must be at least 1");
        }
        if self.border_count < 2 || self.border_count > 255 {
            return bad("border_count must be in 2..=255");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    /// Integer-valued category ids stored as `f64`.
    Categorical,
}

/// Row-major feature table with named, typed columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, kinds: Vec<FeatureKind>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != kinds.len() {
            return Err(GbdtError::FeatureArityMismatch { expected: names.len(), got: kinds.len() });
        }
        let m = Self { names, kinds, rows };
        for (r, row) in m.rows.iter().enumerate() {
            m.check_row(row).map_err(|e| match e {
                GbdtError::NonFiniteFeature { feature, .. } => GbdtError::NonFiniteFeature { row: r, feature },
                other => other,
            })?;
        }
        Ok(m)
    }

    /// All-numeric matrix with generated names `x0, x1, ...`.
    pub fn numeric(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        Self::new((0..d).map(|j| format!("x{j}")).collect(), vec![FeatureKind::Numeric; d], rows)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            rows: rows.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    fn check_row(&self, row: &[f64]) -> Result<()> {
        check_row(&self.kinds, row)
    }
}

fn check_row(kinds: &[FeatureKind], row: &[f64]) -> Result<()> {
    if row.len() != kinds.len() {
        return Err(GbdtError::FeatureArityMismatch { expected: kinds.len(), got: row.len() });
    }
    for (j, (&v, kind)) in row.iter().zip(kinds).enumerate() {
        if !v.is_finite() {
            return Err(GbdtError::NonFiniteFeature { row: 0, feature: j });
        }
        if *kind == FeatureKind::Categorical && v.fract() != 0.0 {
            return Err(GbdtError::BadCategory { feature: j, value: v });
        }
    }
    Ok(())
}

/// Where an encoded model column comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ColumnSource {
    Raw { feature: usize },
    TargetStat { feature: usize, dim: usize },
}

impl ColumnSource {
    /// Input feature the column is derived from.
    pub fn feature(self) -> usize {
        match self {
            ColumnSource::Raw { feature } | ColumnSource::TargetStat { feature, .. } => feature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub format_version: u32,
    pub config: TrainConfig,
    pub n_classes: usize,
    /// 1 for binary logistic, `n_classes` for softmax.
    pub n_outputs: usize,
    pub base_score: Vec<f64>,
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
    pub columns: Vec<ColumnSource>,
    pub ts_encoder: OrderedTsEncoder,
    pub trees: Vec<ObliviousTree>,
}

impl TreeEnsemble {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn learning_rate(&self) -> f64 {
        self.config.learning_rate
    }

    /// Encodes a raw feature row into model columns.
    pub fn encode_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_row(&self.feature_kinds, x)?;
        let a = self.ts_encoder.prior_weight;
        Ok(self
            .columns
            .iter()
            .map(|c| match *c {
                ColumnSource::Raw { feature } => x[feature],
                ColumnSource::TargetStat { feature, dim } => {
                    let stats = self.ts_encoder.stats_for(feature).expect("encoder covers every categorical column");
                    stats.encode(x[feature] as i64, dim, a)
                }
            })
            .collect())
    }

    /// Margin computed from already-encoded columns.
    pub fn margin_from_columns(&self, columns: &[f64]) -> Vec<f64> {
        let lr = self.learning_rate();
        let mut m = self.base_score.clone();
        for t in &self.trees {
            m[t.output] += lr * t.eval(columns);
        }
        m
    }

    pub fn predict_margin(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.margin_from_columns(&self.encode_row(x)?))
    }

    /// Class probabilities (length `n_classes`).
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(margin_to_proba(&self.predict_margin(x)?, self.n_classes))
    }

    /// Argmax class, ties toward the lower index.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ensemble serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text).map_err(|e| GbdtError::Format(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(GbdtError::Format(format!("unsupported format version {}", model.format_version)));
        }
        Ok(model)
    }
}

/// Logistic for a single binary margin, softmax otherwise.
pub fn margin_to_proba(margin: &[f64], n_classes: usize) -> Vec<f64> {
    if margin.len() == 1 && n_classes == 2 {
        let p = sigmoid(margin[0]);
        return vec![1.0 - p, p];
    }
    softmax(margin)
}

pub fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(m: &[f64]) -> Vec<f64> {
    let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = m.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
