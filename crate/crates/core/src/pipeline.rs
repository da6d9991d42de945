//! End-to-end runs.
//!
//! Each configured year is loaded and clustered once; every `(year, k)`
//! cell then cuts the dendrogram, names the clusters, cross-validates a
//! GDSC classifier against the cluster labels, attributes it with SHAP and
//! tests feature differences between the extreme clusters. A failing cell
//! is recorded and the other cells still run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::dataset::{
    join_year, parse_gdsc_table, parse_vaccination_table, standardize, DataError, DistrictId, JoinOutcome,
    StandardizedMatrix, YearDataset, YearKey, VACCINE_COLUMNS,
};
use crate::eval::{cross_validate_assignment, EvalError, MetricsBundle};
use crate::gbdt::{Loss, TrainConfig, TreeEnsemble, MODEL_FORMAT_VERSION};
use crate::hcluster::{
    agglomerate, cluster_mean_table, cut_at_k, label_by_coverage, pairwise_distances, suggest_k, ClusterAssignment,
    ClusterError, ClusterMeanRow, Dendrogram, Linkage,
};
use crate::shap::{self, GlobalImportance, ShapError};
use crate::stats::{
    compare_extreme_clusters, gdsc_box_stats, rurality_cross_tab, BoxStats, CrossTab, StatsError, TestResult,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("year {year}: {source}")]
    Data { year: i32, source: DataError },
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("no geometry for districts {0:?}")]
    GeometryKeyMismatch(Vec<String>),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Shap(#[from] ShapError),
}

impl PipelineError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        PipelineError::Io { path: path.display().to_string(), message: err.to_string() }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Io { .. } => "io",
            PipelineError::Data { .. } => "data",
            PipelineError::Geometry(_) => "geometry",
            PipelineError::GeometryKeyMismatch(_) => "geometry_key_mismatch",
            PipelineError::Cluster(ClusterError::KOutOfRange { .. }) => "k_out_of_range",
            PipelineError::Cluster(_) => "cluster",
            PipelineError::Eval(_) => "eval",
            PipelineError::Stats(_) => "stats",
            PipelineError::Shap(_) => "shap",
        }
    }

    /// Process exit code for a run that stopped on this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// Z-score each vaccine column before computing distances.
    #[default]
    Standardize,
    None,
}

/// Run settings. Read from a flat TOML document; unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// First calendar year of each study year, e.g. 2021 for 2021-22.
    pub years: Vec<i32>,
    pub input_dir: PathBuf,
    /// File name patterns inside `input_dir`; `{year}` is substituted.
    pub vaccination_file: String,
    pub gdsc_file: String,
    pub k_values: Vec<usize>,
    pub linkage: Linkage,
    pub scaling: Scaling,
    /// Range searched for the suggested cluster count.
    pub k_min: usize,
    pub k_max: usize,
    pub n_trees: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub l2_leaf_reg: f64,
    pub ts_prior_weight: f64,
    pub n_permutations: usize,
    pub border_count: usize,
    pub k_folds: usize,
    pub stratified: bool,
    pub seed: u64,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<PathBuf>,
    pub allow_partial: bool,
    /// Worker threads; 0 uses all cores. Results do not depend on it, so it
    /// is left out of the report echo.
    #[serde(skip_serializing)]
    pub threads: usize,
    pub export_models: bool,
    pub export_attributions: bool,
    pub export_fold_metrics: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            years: vec![2021, 2022, 2023],
            input_dir: PathBuf::from("data"),
            vaccination_file: "vaccination_{year}.csv".into(),
            gdsc_file: "gdsc_{year}.csv".into(),
            k_values: vec![2, 3, 6],
            linkage: Linkage::Ward,
            scaling: Scaling::Standardize,
            k_min: 2,
            k_max: 10,
            n_trees: train.n_trees,
            depth: train.depth,
            learning_rate: train.learning_rate,
            l2_leaf_reg: train.l2_leaf_reg,
            ts_prior_weight: train.ts_prior_weight,
            n_permutations: train.n_permutations,
            border_count: train.border_count,
            k_folds: 5,
            stratified: true,
            seed: 0,
            out: PathBuf::from("out"),
            geometry: None,
            allow_partial: false,
            threads: 0,
            export_models: false,
            export_attributions: false,
            export_fold_metrics: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.years.is_empty() {
            return bad("years must not be empty");
        }
        if self.k_values.is_empty() || self.k_values.iter().any(|&k| k < 2) {
            return bad("k_values must be non-empty and every k at least 2");
        }
        if self.k_folds < 2 {
            return bad("k_folds must be at least 2");
        }
        if self.k_min < 2 || self.k_min >= self.k_max {
            return bad("need 2 <= k_min < k_max");
        }
        self.train_config(2).validate().map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Classifier settings for a `k`-class problem.
    pub fn train_config(&self, k: usize) -> TrainConfig {
        TrainConfig {
            n_trees: self.n_trees,
            depth: self.depth,
            learning_rate: self.learning_rate,
            l2_leaf_reg: self.l2_leaf_reg,
            ts_prior_weight: self.ts_prior_weight,
            n_permutations: self.n_permutations,
            border_count: self.border_count,
            seed: self.seed,
            loss: Loss::for_classes(k),
        }
    }

    pub fn input_path(&self, pattern: &str, year: i32) -> PathBuf {
        self.input_dir.join(pattern.replace("{year}", &year.to_string()))
    }
}

/// Reads and joins one year's input files.
pub fn load_year(config: &RunConfig, year: i32) -> Result<JoinOutcome> {
    let key = YearKey(year);
    let open = |pattern: &str| {
        let path = config.input_path(pattern, year);
        std::fs::File::open(&path).map_err(|e| PipelineError::io(&path, e))
    };
    let data_err = |source| PipelineError::Data { year, source };
    let vacc = parse_vaccination_table(open(&config.vaccination_file)?, key).map_err(data_err)?;
    let gdsc = parse_gdsc_table(open(&config.gdsc_file)?, key).map_err(data_err)?;
    join_year(&vacc, &gdsc, config.allow_partial).map_err(data_err)
}

/// One year's data and dendrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct YearRun {
    pub dataset: YearDataset,
    pub dendrogram: Dendrogram,
    pub suggested_k: Option<usize>,
    pub dropped_vaccination: Vec<DistrictId>,
    pub dropped_gdsc: Vec<DistrictId>,
}

pub fn cluster_year(dataset: &YearDataset, linkage: Linkage, scaling: Scaling) -> Result<Dendrogram> {
    let names: Vec<String> = VACCINE_COLUMNS.iter().map(|s| s.to_string()).collect();
    let values = dataset.vaccination_matrix();
    let x = match scaling {
        Scaling::Standardize => {
            standardize(&values, &names).map_err(|source| PipelineError::Data { year: dataset.year.0, source })?
        }
        Scaling::None => StandardizedMatrix::identity(values, names),
    };
    Ok(agglomerate(&pairwise_distances(&x)?, linkage))
}

pub fn prepare_year(
    config: &RunConfig,
    dataset: YearDataset,
    dropped_vaccination: Vec<DistrictId>,
    dropped_gdsc: Vec<DistrictId>,
) -> Result<YearRun> {
    let year = dataset.year.0;
    let dendrogram = cluster_year(&dataset, config.linkage, config.scaling)?;
    let k_max = config.k_max.min(dataset.len().saturating_sub(1));
    let suggested_k = suggest_k(&dendrogram, config.k_min, k_max).ok();
    if suggested_k.is_none() {
        log::warn!("year {year}: too few districts to suggest a cluster count");
    }
    Ok(YearRun { dataset, dendrogram, suggested_k, dropped_vaccination, dropped_gdsc })
}

/// Geometry per district id, from a GeoJSON FeatureCollection whose
/// features carry a `district_id` property.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeometryIndex {
    pub by_id: BTreeMap<String, Value>,
}

impl GeometryIndex {
    pub fn from_geojson(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| PipelineError::Geometry(e.to_string()))?;
        let features = doc
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| PipelineError::Geometry("expected a FeatureCollection".into()))?;
        let mut by_id = BTreeMap::new();
        for (i, f) in features.iter().enumerate() {
            let id = f
                .pointer("/properties/district_id")
                .and_then(Value::as_str)
                .ok_or_else(|| PipelineError::Geometry(format!("feature {i} has no district_id property")))?;
            by_id.insert(id.to_string(), f.get("geometry").cloned().unwrap_or(Value::Null));
        }
        Ok(Self { by_id })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_geojson(&text)
    }
}

/// Map layer for an assignment: a FeatureCollection when geometry is given,
/// otherwise a flat array of the same property objects.
pub fn emit_choropleth(
    assignment: &ClusterAssignment,
    dataset: &YearDataset,
    geometry: Option<&GeometryIndex>,
) -> Result<Value> {
    let props: Vec<Value> = dataset
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| {
            json!({
                "district_id": row.id.as_str(),
                "district_name": row.name,
                "cluster_index": assignment.labels[i],
                "cluster_name": assignment.name_of(i),
                "mean_overall_coverage": row.vaccination.overall(),
            })
        })
        .collect();
    let Some(geo) = geometry else {
        return Ok(Value::Array(props));
    };
    let missing: Vec<String> =
        dataset.rows().iter().map(|r| r.id.to_string()).filter(|id| !geo.by_id.contains_key(id)).collect();
    if !missing.is_empty() {
        return Err(PipelineError::GeometryKeyMismatch(missing));
    }
    let features: Vec<Value> = dataset
        .rows()
        .iter()
        .zip(props)
        .map(|(row, p)| json!({"type": "Feature", "geometry": geo.by_id[row.id.as_str()], "properties": p}))
        .collect();
    Ok(json!({"type": "FeatureCollection", "features": features}))
}

/// Everything computed for one `(year, k)` cell that goes into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub year: i32,
    pub k: usize,
    pub assignment: ClusterAssignment,
    pub cluster_means: Vec<ClusterMeanRow>,
    pub metrics: MetricsBundle,
    pub importance: GlobalImportance,
    pub fold_importances: Vec<GlobalImportance>,
    pub tests: Vec<TestResult>,
    pub box_stats: Vec<BoxStats>,
    pub cross_tab: CrossTab,
    pub warnings: Vec<String>,
}

/// SHAP values of one held-out row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowAttribution {
    pub district_id: DistrictId,
    pub fold: usize,
    pub base: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRun {
    pub report: CellReport,
    pub models: Vec<TreeEnsemble>,
    pub attributions: Vec<RowAttribution>,
    pub choropleth: Value,
}

pub fn run_cell(config: &RunConfig, year: &YearRun, k: usize, geometry: Option<&GeometryIndex>) -> Result<CellRun> {
    let ds = &year.dataset;
    let n = ds.len();
    if k < 2 || k + 1 > n {
        return Err(ClusterError::KOutOfRange { k, min: 2, max: n.saturating_sub(1) }.into());
    }
    let raw = cut_at_k(&year.dendrogram, k)?;
    let assignment = label_by_coverage(&raw, ds, k)?;
    let cluster_means = cluster_mean_table(&assignment, ds);
    let cv = cross_validate_assignment(
        ds,
        &assignment,
        &config.train_config(k),
        config.k_folds,
        config.stratified,
        config.seed,
    )?;
    let tests = compare_extreme_clusters(ds, &assignment)?;
    let box_stats = gdsc_box_stats(ds, &assignment)?;
    let cross_tab = rurality_cross_tab(&assignment, ds);
    let choropleth = emit_choropleth(&assignment, ds, geometry)?;

    let mut attributions = Vec::new();
    if config.export_attributions {
        let x = crate::eval::gdsc_features(ds);
        for fold in &cv.folds {
            for &row in &fold.test_rows {
                let a = shap::tree_shap(&fold.model, &x.rows[row])?;
                attributions.push(RowAttribution {
                    district_id: ds.rows()[row].id.clone(),
                    fold: fold.fold,
                    base: a.base,
                    phi: a.phi,
                });
            }
        }
        attributions.sort_by(|a, b| a.district_id.cmp(&b.district_id));
    }

    let mut warnings = cv.warnings.clone();
    if !assignment.vocabulary_defined {
        warnings.push(format!("k = {k} has no cluster vocabulary; generic names used"));
    }
    let report = CellReport {
        year: ds.year.0,
        k,
        assignment,
        cluster_means,
        metrics: cv.metrics,
        importance: cv.importance,
        fold_importances: cv.folds.iter().map(|f| f.importance.clone()).collect(),
        tests,
        box_stats,
        cross_tab,
        warnings,
    };
    Ok(CellRun { report, models: cv.folds.into_iter().map(|f| f.model).collect(), attributions, choropleth })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub year: i32,
    pub k: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearReport {
    pub year: i32,
    pub label: String,
    pub n_districts: usize,
    pub dropped_vaccination: Vec<DistrictId>,
    pub dropped_gdsc: Vec<DistrictId>,
    pub suggested_k: Option<usize>,
    pub merge_heights: Vec<f64>,
}

/// Fixed method choices, echoed so a report documents itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Methods {
    pub clustering: String,
    pub classifier: String,
    pub class_weighting: String,
    pub attribution: String,
    pub multiclass_importance: String,
    pub metrics: String,
    pub hypothesis_test: String,
    pub extreme_clusters: String,
    pub quartiles: String,
    pub rng: String,
}

impl Default for Methods {
    fn default() -> Self {
        Self {
            clustering: "agglomerative, Lance-Williams update; Ward heights as sqrt(2 * merge cost)".into(),
            classifier: "oblivious-tree gradient boosting, Newton leaves, ordered target statistics for rurality".into(),
            class_weighting: "none".into(),
            attribution: "path-dependent TreeSHAP on each fold's held-out rows, averaged over folds".into(),
            multiclass_importance: "mean over classes of mean |phi|".into(),
            metrics: "macro average over classes present in each fold, then mean over folds".into(),
            hypothesis_test: "two-sided Mann-Whitney U, exact for n <= 20, else normal approximation with tie and continuity correction; Welch t alongside".into(),
            extreme_clusters: "tests compare cluster 0 (lowest coverage) with cluster k-1 (highest)".into(),
            quartiles: "linear interpolation at (n - 1) p".into(),
            rng: "xoshiro256++ seeded through SplitMix64".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub model_format_version: u32,
    pub seed: u64,
    pub config: RunConfig,
    pub methods: Methods,
    pub years: Vec<YearReport>,
    pub cells: Vec<CellReport>,
    pub failures: Vec<CellFailure>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn cell(&self, year: i32, k: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.year == year && c.k == k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: RunReport,
    pub years: Vec<YearRun>,
    /// Successful cells, in (year, k) configuration order.
    pub cells: Vec<CellRun>,
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every year and cell. Errors loading inputs stop the run; errors
/// inside a cell are collected in `report.failures`.
pub fn run_pipeline(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let joined = config.years.iter().map(|&y| load_year(config, y)).collect::<Result<Vec<_>>>()?;
    run_joined(config, joined)
}

/// Runs already-loaded datasets; `config.years` and `input_dir` are ignored.
pub fn run_datasets(config: &RunConfig, datasets: Vec<YearDataset>) -> Result<RunOutput> {
    let joined = datasets
        .into_iter()
        .map(|dataset| JoinOutcome { dataset, dropped_vaccination: Vec::new(), dropped_gdsc: Vec::new() })
        .collect();
    run_joined(config, joined)
}

fn run_joined(config: &RunConfig, joined: Vec<JoinOutcome>) -> Result<RunOutput> {
    config.validate()?;
    let geometry = config.geometry.as_deref().map(GeometryIndex::from_file).transpose()?;
    with_pool(config.threads, || {
        let years = joined
            .into_iter()
            .map(|j| prepare_year(config, j.dataset, j.dropped_vaccination, j.dropped_gdsc))
            .collect::<Result<Vec<_>>>()?;
        let jobs: Vec<(usize, usize)> =
            (0..years.len()).flat_map(|y| config.k_values.iter().map(move |&k| (y, k))).collect();
        let results: Vec<Result<CellRun>> =
            jobs.par_iter().map(|&(y, k)| run_cell(config, &years[y], k, geometry.as_ref())).collect();

        let mut cells = Vec::new();
        let mut failures = Vec::new();
        for (&(y, k), r) in jobs.iter().zip(results) {
            let year = years[y].dataset.year.0;
            match r {
                Ok(c) => cells.push(c),
                Err(e) => {
                    log::error!("year {year} k {k}: {e}");
                    failures.push(CellFailure { year, k, kind: e.kind().into(), message: e.to_string() });
                }
            }
        }
        let mut echo = config.clone();
        echo.years = years.iter().map(|y| y.dataset.year.0).collect();
        let report = RunReport {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            model_format_version: MODEL_FORMAT_VERSION,
            seed: config.seed,
            config: echo,
            methods: Methods::default(),
            years: years
                .iter()
                .map(|y| YearReport {
                    year: y.dataset.year.0,
                    label: y.dataset.year.label(),
                    n_districts: y.dataset.len(),
                    dropped_vaccination: y.dropped_vaccination.clone(),
                    dropped_gdsc: y.dropped_gdsc.clone(),
                    suggested_k: y.suggested_k,
                    merge_heights: y.dendrogram.heights(),
                })
                .collect(),
            cells: cells.iter().map(|c| c.report.clone()).collect(),
            failures,
        };
        Ok(RunOutput { report, years, cells })
    })?
}
