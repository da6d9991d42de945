//! Artifact writers for a pipeline run.
//!
//! Human-facing tables round percentages to one decimal; `run_report.json`
//! keeps full precision.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dataset::{YearDataset, RURALITY_LABELS, VACCINE_COLUMNS};
use crate::hcluster::{ClusterAssignment, ClusterMeanRow};
use crate::pipeline::{CellRun, PipelineError, Result, RunOutput, RunReport};
use crate::shap::GlobalImportance;
use crate::stats::{BoxStats, CrossTab, TestResult};

/// Marker for a cell whose computation failed.
pub const MISSING_CELL: &str = "—";

pub const TABLE3_METRICS: [&str; 4] = ["Accuracy", "Precision", "Recall", "F1 score"];

fn csv_string(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

fn strings<const N: usize>(items: [&str; N]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

/// Classification metrics laid out as year × metric rows and one column
/// per k. Cells with no result print as [`MISSING_CELL`] and a footnote
/// line follows the table.
pub fn emit_table3(report: &RunReport) -> String {
    let ks = &report.config.k_values;
    let mut header = strings(["year", "metric"]);
    header.extend(ks.iter().map(|k| format!("{k} cluster")));
    let mut rows = Vec::new();
    let mut any_missing = false;
    for y in &report.years {
        for (m, name) in TABLE3_METRICS.iter().enumerate() {
            let mut row = vec![y.label.clone(), name.to_string()];
            for &k in ks {
                match report.cell(y.year, k) {
                    Some(c) => {
                        let b = &c.metrics;
                        row.push(pct([b.accuracy, b.macro_precision, b.macro_recall, b.macro_f1][m]));
                    }
                    None => {
                        any_missing = true;
                        row.push(MISSING_CELL.to_string());
                    }
                }
            }
            rows.push(row);
        }
    }
    let mut out = csv_string(&header, &rows);
    if any_missing {
        out.push_str(&format!("# {MISSING_CELL} cell failed; see errors.json\n"));
    }
    out
}

pub fn clusters_csv(assignment: &ClusterAssignment, dataset: &YearDataset) -> String {
    let header = strings(["district_id", "district_name", "cluster_index", "cluster_name"]);
    let rows: Vec<Vec<String>> = dataset
        .rows()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![r.id.to_string(), r.name.clone(), assignment.labels[i].to_string(), assignment.name_of(i).to_string()]
        })
        .collect();
    csv_string(&header, &rows)
}

pub fn cluster_means_csv(table: &[ClusterMeanRow]) -> String {
    let mut header = strings(["cluster_index", "cluster_name", "size"]);
    header.extend(VACCINE_COLUMNS.iter().map(|s| s.to_string()));
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| {
            let mut row = vec![r.cluster_index.to_string(), r.cluster_name.clone(), r.size.to_string()];
            row.extend(r.means.iter().map(|m| format!("{m:.1}")));
            row
        })
        .collect();
    csv_string(&header, &rows)
}

pub fn importance_csv(importance: &GlobalImportance, folds: &[GlobalImportance]) -> String {
    let mut header = strings(["feature_name", "mean_abs_shap", "rank"]);
    header.extend((1..=folds.len()).map(|f| format!("fold_{f}")));
    let rows: Vec<Vec<String>> = importance
        .ranking()
        .into_iter()
        .enumerate()
        .map(|(rank, j)| {
            let mut row =
                vec![importance.feature_names[j].clone(), importance.mean_abs[j].to_string(), (rank + 1).to_string()];
            row.extend(folds.iter().map(|f| f.mean_abs[j].to_string()));
            row
        })
        .collect();
    csv_string(&header, &rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn tests_csv(tests: &[TestResult]) -> String {
    let header = strings([
        "feature_name",
        "u_statistic",
        "z",
        "p_two_sided",
        "exact",
        "n_low",
        "n_high",
        "significant_at_0_05",
        "welch_t",
        "welch_p",
    ]);
    let rows: Vec<Vec<String>> = tests
        .iter()
        .map(|t| {
            vec![
                t.feature_name.clone(),
                t.u_statistic.to_string(),
                t.z.to_string(),
                t.p_two_sided.to_string(),
                t.exact.to_string(),
                t.n_low.to_string(),
                t.n_high.to_string(),
                t.significant_at_0_05.to_string(),
                opt(t.welch_t),
                opt(t.welch_p),
            ]
        })
        .collect();
    csv_string(&header, &rows)
}

pub fn box_stats_csv(stats: &[BoxStats], names: &[String]) -> String {
    let header = strings([
        "feature_name",
        "cluster_index",
        "cluster_name",
        "n",
        "min",
        "q1",
        "median",
        "q3",
        "max",
        "whisker_low",
        "whisker_high",
        "outliers",
    ]);
    let rows: Vec<Vec<String>> = stats
        .iter()
        .map(|b| {
            let outliers: Vec<String> = b.outliers.iter().map(|v| v.to_string()).collect();
            vec![
                b.feature_name.clone(),
                b.cluster.to_string(),
                names[b.cluster].clone(),
                b.n.to_string(),
                b.min.to_string(),
                b.q1.to_string(),
                b.median.to_string(),
                b.q3.to_string(),
                b.max.to_string(),
                b.whisker_low.to_string(),
                b.whisker_high.to_string(),
                outliers.join(";"),
            ]
        })
        .collect();
    csv_string(&header, &rows)
}

pub fn cross_tab_csv(tab: &CrossTab, names: &[String]) -> String {
    let mut header = strings(["rurality", "rurality_label"]);
    header.extend(names.iter().cloned());
    let rows: Vec<Vec<String>> = tab
        .counts
        .iter()
        .enumerate()
        .map(|(i, counts)| {
            let mut row = vec![(i + 1).to_string(), RURALITY_LABELS[i].to_string()];
            row.extend(counts.iter().map(|c| c.to_string()));
            row
        })
        .collect();
    csv_string(&header, &rows)
}

pub fn fold_metrics_csv(cell: &CellRun) -> String {
    let header = strings([
        "fold",
        "accuracy",
        "macro_precision",
        "macro_recall",
        "macro_f1",
        "weighted_precision",
        "weighted_recall",
        "weighted_f1",
    ]);
    let rows: Vec<Vec<String>> = cell
        .report
        .metrics
        .per_fold
        .iter()
        .enumerate()
        .map(|(f, m)| {
            vec![
                (f + 1).to_string(),
                m.accuracy.to_string(),
                m.macro_precision.to_string(),
                m.macro_recall.to_string(),
                m.macro_f1.to_string(),
                m.weighted_precision.to_string(),
                m.weighted_recall.to_string(),
                m.weighted_f1.to_string(),
            ]
        })
        .collect();
    csv_string(&header, &rows)
}

pub fn attributions_csv(cell: &CellRun) -> String {
    let features = &cell.report.importance.feature_names;
    let mut header = strings(["district_id", "fold", "output", "base"]);
    header.extend(features.iter().cloned());
    let mut rows = Vec::new();
    for a in &cell.attributions {
        for (o, phi) in a.phi.iter().enumerate() {
            let mut row =
                vec![a.district_id.to_string(), (a.fold + 1).to_string(), o.to_string(), a.base[o].to_string()];
            row.extend(phi.iter().map(|v| v.to_string()));
            rows.push(row);
        }
    }
    csv_string(&header, &rows)
}

pub fn errors_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(&report.failures).expect("failures serialize")
}

/// A one-line-per-failure summary for the terminal.
pub fn failure_summary(report: &RunReport) -> String {
    let mut s = String::new();
    for f in &report.failures {
        let _ = writeln!(s, "year {} k {}: {} ({})", f.year, f.k, f.message, f.kind);
    }
    s
}

fn write_file(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| PipelineError::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes every artifact of a run into `dir` and returns the paths in
/// write order.
pub fn write_artifacts(output: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let config = &output.report.config;
    let mut written = Vec::new();
    for y in &output.years {
        write_file(dir, &format!("dendrogram_{}.csv", y.dataset.year.0), &y.dendrogram.to_csv(), &mut written)?;
    }
    for cell in &output.cells {
        let r = &cell.report;
        let year = output.years.iter().find(|y| y.dataset.year.0 == r.year).expect("cell year was run");
        let tag = format!("{}_k{}", r.year, r.k);
        let names = &r.assignment.ordered_names;
        write_file(dir, &format!("clusters_{tag}.csv"), &clusters_csv(&r.assignment, &year.dataset), &mut written)?;
        write_file(dir, &format!("cluster_means_{tag}.csv"), &cluster_means_csv(&r.cluster_means), &mut written)?;
        write_file(
            dir,
            &format!("shap_importance_{tag}.csv"),
            &importance_csv(&r.importance, &r.fold_importances),
            &mut written,
        )?;
        write_file(dir, &format!("tests_{tag}.csv"), &tests_csv(&r.tests), &mut written)?;
        write_file(dir, &format!("boxstats_{tag}.csv"), &box_stats_csv(&r.box_stats, names), &mut written)?;
        write_file(dir, &format!("crosstab_{tag}.csv"), &cross_tab_csv(&r.cross_tab, names), &mut written)?;
        let geo = serde_json::to_string_pretty(&cell.choropleth).expect("json value");
        write_file(dir, &format!("choropleth_{tag}.json"), &geo, &mut written)?;
        if config.export_fold_metrics {
            write_file(dir, &format!("fold_metrics_{tag}.csv"), &fold_metrics_csv(cell), &mut written)?;
        }
        if config.export_attributions {
            write_file(dir, &format!("attributions_{tag}.csv"), &attributions_csv(cell), &mut written)?;
        }
        if config.export_models {
            for (f, m) in cell.models.iter().enumerate() {
                write_file(dir, &format!("model_{tag}_fold{}.json", f + 1), &m.to_json(), &mut written)?;
            }
        }
    }
    write_file(dir, "metrics.csv", &emit_table3(&output.report), &mut written)?;
    write_file(dir, "run_report.json", &output.report.to_json(), &mut written)?;
    write_file(dir, "errors.json", &errors_json(&output.report), &mut written)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::YearKey;
    use crate::pipeline::{run_datasets, RunConfig};
    use crate::synth::{generate, SynthSpec};

    fn small_run(k_values: Vec<usize>) -> RunOutput {
        let syn = generate(&SynthSpec::from_table(YearKey(2021), 2, 12, 1).unwrap()).unwrap();
        let config = RunConfig { n_trees: 10, depth: 3, k_values, ..RunConfig::default() };
        run_datasets(&config, vec![syn.dataset]).unwrap()
    }

    #[test]
    fn table3_prints_one_decimal_percent() {
        let mut out = small_run(vec![2]);
        out.report.cells[0].metrics.accuracy = 0.921;
        let t = emit_table3(&out.report);
        let mut lines = t.lines();
        assert_eq!(lines.next().unwrap(), "year,metric,2 cluster");
        assert_eq!(lines.next().unwrap(), "2021-2022,Accuracy,92.1");
        assert!(!t.contains('#'));
    }

    #[test]
    fn failed_cell_prints_dash_and_footnote() {
        let out = small_run(vec![2, 3, 100]);
        let t = emit_table3(&out.report);
        assert!(t.starts_with("year,metric,2 cluster,3 cluster,100 cluster\n"));
        for line in t.lines().skip(1).take(4) {
            assert!(line.ends_with(&format!(",{MISSING_CELL}")), "{line}");
        }
        assert!(t.lines().last().unwrap().starts_with('#'));
    }

    #[test]
    fn artifacts_are_written_per_cell() {
        let out = small_run(vec![2, 3]);
        let dir = tempfile::tempdir().unwrap();
        let files = write_artifacts(&out, dir.path()).unwrap();
        let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
        for n in
            ["dendrogram_2021.csv", "clusters_2021_k3.csv", "shap_importance_2021_k2.csv", "metrics.csv", "errors.json"]
        {
            assert!(names.iter().any(|x| x == n), "{n} missing");
        }
        let means = std::fs::read_to_string(dir.path().join("cluster_means_2021_k2.csv")).unwrap();
        let first = means.lines().nth(1).unwrap();
        assert!(first.split(',').skip(3).all(|v| v.split('.').nth(1).is_some_and(|d| d.len() == 1)));
        assert_eq!(std::fs::read_to_string(dir.path().join("errors.json")).unwrap(), "[]");
    }
}
