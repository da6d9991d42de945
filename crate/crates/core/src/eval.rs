//! Cross-validation and classification metrics.
//!
//! Folds are dealt round-robin: rows of each class (ascending label) are
//! shuffled and dealt to folds, with the fold offset carried from one class
//! to the next so fold sizes stay balanced overall. Reported metrics are the
//! mean of per-fold metrics.
//!
//! Macro averages run over the classes that occur in a confusion matrix,
//! either as truth or as prediction. A class that appears in neither has no
//! defined precision or recall and is left out rather than scored as 0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{YearDataset, GDSC_FEATURES, RURALITY_COLUMN};
use crate::gbdt::{self, FeatureKind, FeatureMatrix, GbdtError, TrainConfig, TreeEnsemble};
use crate::hcluster::ClusterAssignment;
use crate::rng::SeededRng;
use crate::shap::{self, GlobalImportance, ShapError};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("k_folds must be in 2..={max}, got {k_folds}")]
    KFoldsOutOfRange { k_folds: usize, max: usize },
    #[error("{n} rows cannot fill {k_folds} folds")]
    TooFewRows { n: usize, k_folds: usize },
    #[error("label {label} is outside 0..{k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("{truth} true labels and {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error(transparent)]
    Model(#[from] GbdtError),
    #[error(transparent)]
    Shap(#[from] ShapError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k_folds: usize,
    /// Fold index per row.
    pub assignments: Vec<usize>,
    pub seed: u64,
    pub stratified: bool,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }
}

fn check_fold_count(n: usize, k_folds: usize) -> Result<()> {
    if k_folds < 2 {
        return Err(EvalError::KFoldsOutOfRange { k_folds, max: n.max(2) });
    }
    if n < k_folds {
        return Err(EvalError::TooFewRows { n, k_folds });
    }
    Ok(())
}

pub fn stratified_folds(labels: &[usize], k_folds: usize, seed: u64) -> Result<FoldPlan> {
    check_fold_count(labels.len(), k_folds)?;
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = SeededRng::new(seed);
    let mut assignments = vec![0; labels.len()];
    let mut offset = 0;
    for rows in &mut by_class {
        rng.shuffle(rows);
        for &row in rows.iter() {
            assignments[row] = offset % k_folds;
            offset += 1;
        }
    }
    Ok(FoldPlan { k_folds, assignments, seed, stratified: true })
}

/// Unstratified alternative: all rows shuffled and dealt round-robin.
pub fn random_folds(n: usize, k_folds: usize, seed: u64) -> Result<FoldPlan> {
    check_fold_count(n, k_folds)?;
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let mut assignments = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        assignments[row] = pos % k_folds;
    }
    Ok(FoldPlan { k_folds, assignments, seed, stratified: false })
}

/// `confusion[i][j]` counts rows with truth `i` predicted as `j`.
pub fn confusion_matrix(truth: &[usize], predicted: &[usize], k: usize) -> Result<Vec<Vec<u64>>> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch { truth: truth.len(), predicted: predicted.len() });
    }
    let mut m = vec![vec![0u64; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        if let Some(&label) = [t, p].iter().find(|&&l| l >= k) {
            return Err(EvalError::LabelOutOfRange { label, k });
        }
        m[t][p] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    /// Only the classes that were scored.
    pub per_class: Vec<ClassMetrics>,
    /// Precision or recall denominators that were zero and scored as 0.
    pub zero_denominators: usize,
}

fn ratio(num: u64, den: u64, zeros: &mut usize) -> f64 {
    if den == 0 {
        *zeros += 1;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn macro_metrics(confusion: &[Vec<u64>]) -> Result<MetricsRow> {
    let k = confusion.len();
    let total: u64 = confusion.iter().flatten().sum();
    if k == 0 || total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let trace: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let mut zero_denominators = 0;
    let mut per_class = Vec::new();
    for c in 0..k {
        let support: u64 = confusion[c].iter().sum();
        let predicted: u64 = confusion.iter().map(|r| r[c]).sum();
        if support == 0 && predicted == 0 {
            continue;
        }
        let tp = confusion[c][c];
        let precision = ratio(tp, predicted, &mut zero_denominators);
        let recall = ratio(tp, support, &mut zero_denominators);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        per_class.push(ClassMetrics { class: c, precision, recall, f1, support });
    }
    let m = per_class.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / m;
    let weighted =
        |f: fn(&ClassMetrics) -> f64| per_class.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / total as f64;
    Ok(MetricsRow {
        accuracy: trace as f64 / total as f64,
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        weighted_precision: weighted(|c| c.precision),
        weighted_recall: weighted(|c| c.recall),
        weighted_f1: weighted(|c| c.f1),
        per_class,
        zero_denominators,
    })
}

/// Fold-averaged metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    /// Sum of the per-fold confusion matrices.
    pub confusion: Vec<Vec<u64>>,
    pub per_fold: Vec<MetricsRow>,
    pub zero_denominators: usize,
}

/// Mean that does not depend on the order of `values`.
fn order_free_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

impl MetricsBundle {
    pub fn from_folds(per_fold: Vec<MetricsRow>, confusions: &[Vec<Vec<u64>>]) -> Result<Self> {
        if per_fold.is_empty() {
            return Err(EvalError::EmptyMatrix);
        }
        let k = confusions.first().map_or(0, Vec::len);
        let mut confusion = vec![vec![0u64; k]; k];
        for m in confusions {
            for (row, src) in confusion.iter_mut().zip(m) {
                for (a, b) in row.iter_mut().zip(src) {
                    *a += b;
                }
            }
        }
        let avg = |f: fn(&MetricsRow) -> f64| order_free_mean(per_fold.iter().map(f).collect());
        Ok(Self {
            accuracy: avg(|r| r.accuracy),
            macro_precision: avg(|r| r.macro_precision),
            macro_recall: avg(|r| r.macro_recall),
            macro_f1: avg(|r| r.macro_f1),
            weighted_precision: avg(|r| r.weighted_precision),
            weighted_recall: avg(|r| r.weighted_recall),
            weighted_f1: avg(|r| r.weighted_f1),
            confusion,
            zero_denominators: per_fold.iter().map(|r| r.zero_denominators).sum(),
            per_fold,
        })
    }
}

/// GDSC features of a dataset as a model input; rurality is categorical.
pub fn gdsc_features(dataset: &YearDataset) -> FeatureMatrix {
    let names: Vec<String> = GDSC_FEATURES.iter().map(|s| s.to_string()).collect();
    let kinds = GDSC_FEATURES
        .iter()
        .map(|&f| if f == RURALITY_COLUMN { FeatureKind::Categorical } else { FeatureKind::Numeric })
        .collect();
    FeatureMatrix::new(names, kinds, dataset.gdsc_matrix()).expect("validated dataset rows are finite")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub predictions: Vec<usize>,
    pub model: TreeEnsemble,
    /// SHAP importance on this fold's held-out rows.
    pub importance: GlobalImportance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub plan: FoldPlan,
    pub metrics: MetricsBundle,
    pub folds: Vec<FoldResult>,
    /// Fold-mean SHAP importance.
    pub importance: GlobalImportance,
    pub warnings: Vec<String>,
}

/// Trains one model per fold on the other folds and scores the held-out
/// rows. Fold `f` trains with seed `config.seed ^ f`.
pub fn cross_validate(
    x: &FeatureMatrix,
    labels: &[usize],
    n_classes: usize,
    config: &TrainConfig,
    plan: &FoldPlan,
) -> Result<CrossValidation> {
    if labels.len() != x.n_rows() || plan.assignments.len() != x.n_rows() {
        return Err(EvalError::LengthMismatch { truth: labels.len(), predicted: x.n_rows() });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(EvalError::LabelOutOfRange { label, k: n_classes });
    }
    let folds: Vec<FoldResult> = (0..plan.k_folds)
        .into_par_iter()
        .map(|fold| {
            let train_rows = plan.train_rows(fold);
            let test_rows = plan.test_rows(fold);
            let train_labels: Vec<usize> = train_rows.iter().map(|&i| labels[i]).collect();
            let fold_config = TrainConfig { seed: config.seed ^ fold as u64, ..config.clone() };
            let model = gbdt::fit(&x.subset(&train_rows), &train_labels, n_classes, &fold_config)?;
            let test_x: Vec<Vec<f64>> = test_rows.iter().map(|&i| x.rows[i].clone()).collect();
            let predictions = test_x.iter().map(|r| model.predict_class(r)).collect::<std::result::Result<_, _>>()?;
            let importance = shap::global_importance(&model, &test_x)?;
            Ok(FoldResult { fold, train_rows, test_rows, predictions, model, importance })
        })
        .collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    let mut rows = Vec::with_capacity(folds.len());
    let mut confusions = Vec::with_capacity(folds.len());
    for f in &folds {
        let truth: Vec<usize> = f.test_rows.iter().map(|&i| labels[i]).collect();
        let missing: Vec<usize> = (0..n_classes).filter(|c| labels.contains(c) && !truth.contains(c)).collect();
        if !missing.is_empty() {
            let msg = format!("fold {}: classes {:?} absent from held-out rows", f.fold, missing);
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let m = confusion_matrix(&truth, &f.predictions, n_classes)?;
        let row = macro_metrics(&m)?;
        if row.zero_denominators > 0 {
            warnings.push(format!(
                "fold {}: {} zero precision/recall denominators scored as 0",
                f.fold, row.zero_denominators
            ));
        }
        rows.push(row);
        confusions.push(m);
    }
    let metrics = MetricsBundle::from_folds(rows, &confusions)?;
    let importances: Vec<GlobalImportance> = folds.iter().map(|f| f.importance.clone()).collect();
    let importance = GlobalImportance::average(&importances)?;
    Ok(CrossValidation { plan: plan.clone(), metrics, folds, importance, warnings })
}

/// Cross-validates a GDSC classifier against cluster labels.
pub fn cross_validate_assignment(
    dataset: &YearDataset,
    assignment: &ClusterAssignment,
    config: &TrainConfig,
    k_folds: usize,
    stratified: bool,
    fold_seed: u64,
) -> Result<CrossValidation> {
    let plan = if stratified {
        stratified_folds(&assignment.labels, k_folds, fold_seed)?
    } else {
        random_folds(assignment.labels.len(), k_folds, fold_seed)?
    };
    let config = TrainConfig { loss: gbdt::Loss::for_classes(assignment.k), ..config.clone() };
    cross_validate(&gdsc_features(dataset), &assignment.labels, assignment.k, &config, &plan)
}

/// Adjusted Rand index between two labelings of the same rows. Two trivial
/// partitions that agree score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { truth: a.len(), predicted: b.len() });
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&i, &j) in a.iter().zip(b) {
        table[i][j] += 1;
    }
    let pairs = |c: u64| (c * c.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let rows: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| pairs(table.iter().map(|r| r[j]).sum())).sum();
    let total = pairs(a.len() as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
