//! `vaxclust` command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 some
//! (year, k) cells failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vaxclust::dataset::{write_gdsc_csv, write_vaccination_csv, YearKey};
use vaxclust::eval::{cross_validate_assignment, gdsc_features};
use vaxclust::gbdt::{self, TreeEnsemble};
use vaxclust::hcluster::{cluster_mean_table, cut_at_k, label_by_coverage, ClusterAssignment, ClusterError};
use vaxclust::pipeline::{load_year, prepare_year, run_pipeline, PipelineError, RunConfig, RunReport, YearRun};
use vaxclust::report::{self, write_artifacts};
use vaxclust::shap::{explain_rows, importance_from_attributions};
use vaxclust::stats::{compare_extreme_clusters, gdsc_box_stats, rurality_cross_tab};
use vaxclust::synth::{generate, write_truth_csv, SynthSpec};

#[derive(Parser, Debug)]
#[command(
    name = "vaxclust",
    version,
    about = "Cluster district vaccination coverage and explain it with deprivation features"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Drop districts missing from one of the two input files instead of failing.
    #[arg(long, global = true)]
    allow_partial: bool,
    /// Worker threads, 0 for all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (-v, -vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full pipeline over every configured year and k.
    Run,
    /// Dendrogram, suggested k and cluster tables only.
    Cluster {
        /// Restrict to one year.
        #[arg(long)]
        year: Option<i32>,
    },
    /// Cross-validate and then fit one classifier on all districts.
    Train {
        #[arg(long)]
        year: i32,
        #[arg(long)]
        k: usize,
    },
    /// SHAP values of a saved model over a year's districts.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        year: i32,
    },
    /// Rank tests, box statistics and rurality cross-tab for one cell.
    Stats {
        #[arg(long)]
        year: i32,
        #[arg(long)]
        k: usize,
    },
    /// Write a synthetic dataset with known cluster structure.
    Synth {
        #[arg(long, default_value_t = 2021)]
        year: i32,
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Districts per cluster; defaults to 150 / k.
        #[arg(long)]
        n_per_cluster: Option<usize>,
        /// Draw GDSC features independently of the clusters.
        #[arg(long)]
        no_signal: bool,
    },
    /// Rebuild the metrics table from a saved run report.
    Report {
        /// Defaults to <out>/run_report.json.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Data(String),
    Cells(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e.exit_code() {
            1 => Failure::Config(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(o) = &cli.out {
        config.out = o.clone();
    }
    if let Some(t) = cli.threads {
        config.threads = t;
    }
    config.allow_partial |= cli.allow_partial;
    config.validate()?;
    Ok(config)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(data_err)?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn load_clustered(config: &RunConfig, year: i32) -> Result<YearRun, Failure> {
    let j = load_year(config, year)?;
    Ok(prepare_year(config, j.dataset, j.dropped_vaccination, j.dropped_gdsc)?)
}

fn assign(y: &YearRun, k: usize) -> Result<ClusterAssignment, Failure> {
    let n = y.dataset.len();
    if k < 2 || k + 1 > n {
        return Err(data_err(ClusterError::KOutOfRange { k, min: 2, max: n.saturating_sub(1) }));
    }
    let raw = cut_at_k(&y.dendrogram, k).map_err(data_err)?;
    label_by_coverage(&raw, &y.dataset, k).map_err(data_err)
}

fn cmd_run(config: &RunConfig) -> Result<(), Failure> {
    let output = run_pipeline(config)?;
    for p in write_artifacts(&output, &config.out)? {
        log::info!("wrote {}", p.display());
    }
    print!("{}", report::emit_table3(&output.report));
    if output.report.failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Cells(report::failure_summary(&output.report)))
    }
}

fn cmd_cluster(config: &RunConfig, year: Option<i32>) -> Result<(), Failure> {
    let years = year.map(|y| vec![y]).unwrap_or_else(|| config.years.clone());
    let mut failed = String::new();
    for year in years {
        let y = load_clustered(config, year)?;
        write(&config.out, &format!("dendrogram_{year}.csv"), &y.dendrogram.to_csv())?;
        match y.suggested_k {
            Some(k) => println!("{year}: suggested k = {k}"),
            None => println!("{year}: no suggested k"),
        }
        for &k in &config.k_values {
            match assign(&y, k) {
                Ok(a) => {
                    write(&config.out, &format!("clusters_{year}_k{k}.csv"), &report::clusters_csv(&a, &y.dataset))?;
                    let means = cluster_mean_table(&a, &y.dataset);
                    write(&config.out, &format!("cluster_means_{year}_k{k}.csv"), &report::cluster_means_csv(&means))?;
                }
                Err(Failure::Data(m)) => failed.push_str(&format!("year {year} k {k}: {m}\n")),
                Err(e) => return Err(e),
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Cells(failed))
    }
}

fn cmd_train(config: &RunConfig, year: i32, k: usize) -> Result<(), Failure> {
    let y = load_clustered(config, year)?;
    let a = assign(&y, k)?;
    let train = config.train_config(k);
    let cv = cross_validate_assignment(&y.dataset, &a, &train, config.k_folds, config.stratified, config.seed)
        .map_err(data_err)?;
    let m = &cv.metrics;
    println!(
        "{year} k={k}: accuracy {:.1} precision {:.1} recall {:.1} f1 {:.1}",
        100.0 * m.accuracy,
        100.0 * m.macro_precision,
        100.0 * m.macro_recall,
        100.0 * m.macro_f1
    );
    for w in &cv.warnings {
        log::warn!("{w}");
    }
    let model = gbdt::fit(&gdsc_features(&y.dataset), &a.labels, k, &train).map_err(data_err)?;
    write(&config.out, &format!("model_{year}_k{k}.json"), &model.to_json())
}

fn cmd_explain(config: &RunConfig, model_path: &Path, year: i32) -> Result<(), Failure> {
    let text = std::fs::read_to_string(model_path).map_err(|e| data_err(format!("{}: {e}", model_path.display())))?;
    let model = TreeEnsemble::from_json(&text).map_err(data_err)?;
    let y = load_year(config, year)?;
    let x = gdsc_features(&y.dataset);
    let attributions = explain_rows(&model, &x.rows).map_err(data_err)?;
    let imp = importance_from_attributions(&x.names, &attributions).map_err(data_err)?;
    let stem = model_stem(model_path);
    write(&config.out, &format!("shap_explain_{stem}.csv"), &report::importance_csv(&imp, &[]))?;
    for (name, v) in imp.ranked() {
        println!("{name}\t{v}");
    }
    Ok(())
}

/// `model_2021_k2.json` -> `2021_k2`.
fn model_stem(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    stem.strip_prefix("model_").map(str::to_string).unwrap_or(stem)
}

fn cmd_stats(config: &RunConfig, year: i32, k: usize) -> Result<(), Failure> {
    let y = load_clustered(config, year)?;
    let a = assign(&y, k)?;
    let tag = format!("{year}_k{k}");
    let tests = compare_extreme_clusters(&y.dataset, &a).map_err(data_err)?;
    let boxes = gdsc_box_stats(&y.dataset, &a).map_err(data_err)?;
    let tab = rurality_cross_tab(&a, &y.dataset);
    write(&config.out, &format!("tests_{tag}.csv"), &report::tests_csv(&tests))?;
    write(&config.out, &format!("boxstats_{tag}.csv"), &report::box_stats_csv(&boxes, &a.ordered_names))?;
    write(&config.out, &format!("crosstab_{tag}.csv"), &report::cross_tab_csv(&tab, &a.ordered_names))?;
    for t in &tests {
        println!("{}\tU={}\tp={:.3e}", t.feature_name, t.u_statistic, t.p_two_sided);
    }
    Ok(())
}

fn cmd_synth(
    config: &RunConfig,
    year: i32,
    k: usize,
    n_per_cluster: Option<usize>,
    no_signal: bool,
) -> Result<(), Failure> {
    let n = n_per_cluster.unwrap_or(150 / k.max(1));
    let mut spec =
        SynthSpec::from_table(YearKey(year), k, n, config.seed).map_err(|e| Failure::Config(e.to_string()))?;
    if no_signal {
        spec = spec.without_signal();
    }
    let syn = generate(&spec).map_err(data_err)?;
    let mut buf = Vec::new();
    write_vaccination_csv(&syn.dataset, &mut buf).map_err(data_err)?;
    let name = config.vaccination_file.replace("{year}", &year.to_string());
    write(&config.out, &name, &String::from_utf8_lossy(&buf))?;
    buf.clear();
    write_gdsc_csv(&syn.dataset, &mut buf).map_err(data_err)?;
    let name = config.gdsc_file.replace("{year}", &year.to_string());
    write(&config.out, &name, &String::from_utf8_lossy(&buf))?;
    buf.clear();
    write_truth_csv(&syn, &mut buf).map_err(data_err)?;
    write(&config.out, &format!("truth_{year}.csv"), &String::from_utf8_lossy(&buf))
}

fn cmd_report(config: &RunConfig, path: Option<PathBuf>) -> Result<(), Failure> {
    let path = path.unwrap_or_else(|| config.out.join("run_report.json"));
    let text = std::fs::read_to_string(&path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    let report = RunReport::from_json(&text).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    let table = report::emit_table3(&report);
    write(&config.out, "metrics.csv", &table)?;
    print!("{table}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = load_config(&cli).and_then(|config| match &cli.command {
        Command::Run => cmd_run(&config),
        Command::Cluster { year } => cmd_cluster(&config, *year),
        Command::Train { year, k } => cmd_train(&config, *year, *k),
        Command::Explain { model, year } => cmd_explain(&config, model, *year),
        Command::Stats { year, k } => cmd_stats(&config, *year, *k),
        Command::Synth { year, k, n_per_cluster, no_signal } => {
            cmd_synth(&config, *year, *k, *n_per_cluster, *no_signal)
        }
        Command::Report { report } => cmd_report(&config, report.clone()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("data error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Cells(m)) => {
            eprint!("some cells failed:\n{m}");
            ExitCode::from(3)
        }
    }
}
