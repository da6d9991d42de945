use std::path::Path;
use std::process::{Command, Output};

fn vaxclust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vaxclust")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", dir.to_str().unwrap(), "--n-per-cluster", "20", "--seed", "4"];
    args.extend_from_slice(extra);
    let o = vaxclust(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    let text = format!(
        "years = [2021]\ninput_dir = {:?}\nn_trees = 25\ndepth = 3\nk_values = [2, 3]\n{body}",
        dir.to_str().unwrap()
    );
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn synth_then_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "");
    let o = vaxclust(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in [
        "dendrogram_2021.csv",
        "clusters_2021_k2.csv",
        "cluster_means_2021_k3.csv",
        "shap_importance_2021_k2.csv",
        "tests_2021_k2.csv",
        "boxstats_2021_k2.csv",
        "crosstab_2021_k2.csv",
        "choropleth_2021_k2.json",
        "metrics.csv",
        "run_report.json",
        "errors.json",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("year,metric,2 cluster,3 cluster"));

    let again = vaxclust(&["report", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&again), 0);
    assert_eq!(String::from_utf8_lossy(&again.stdout), stdout);
}

#[test]
fn unknown_config_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n_treez = 3\n");
    assert_eq!(code(&vaxclust(&["run", "--config", &cfg])), 1);
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = vaxclust(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn failed_cell_exits_3_and_keeps_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "");
    std::fs::write(&cfg, std::fs::read_to_string(&cfg).unwrap().replace("k_values = [2, 3]", "k_values = [2, 40]"))
        .unwrap();
    let o = vaxclust(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(out.join("clusters_2021_k2.csv").exists());
    assert!(!out.join("clusters_2021_k40.csv").exists());
    let errors = std::fs::read_to_string(out.join("errors.json")).unwrap();
    assert!(errors.contains("k_out_of_range"));
    assert!(std::fs::read_to_string(out.join("metrics.csv")).unwrap().contains('—'));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let cfg = write_config(dir.path(), "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&vaxclust(&["run", "--config", &cfg, "--threads", "1", "--out", a.to_str().unwrap()])), 0);
    assert_eq!(code(&vaxclust(&["run", "--config", &cfg, "--threads", "4", "--out", b.to_str().unwrap()])), 0);
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in names {
        let (x, y) = (std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap());
        if n == "run_report.json" {
            // The config echo records the thread count and output path.
            let strip = |bytes: &[u8]| {
                let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
                v["config"]["threads"] = 0.into();
                v["config"]["out"] = "".into();
                v
            };
            assert_eq!(strip(&x), strip(&y));
            continue;
        }
        assert!(x == y, "{n:?} differs");
    }
}

#[test]
fn subcommands_cover_each_stage() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--k", "3", "--no-signal"]);
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    assert_eq!(code(&vaxclust(&["cluster", "--config", &cfg, "--out", o])), 0);
    assert!(out.join("clusters_2021_k3.csv").exists());
    assert_eq!(code(&vaxclust(&["stats", "--config", &cfg, "--out", o, "--year", "2021", "--k", "2"])), 0);
    assert!(out.join("tests_2021_k2.csv").exists());
    assert_eq!(code(&vaxclust(&["train", "--config", &cfg, "--out", o, "--year", "2021", "--k", "2"])), 0);
    let model = out.join("model_2021_k2.json");
    assert!(model.exists());
    let e = vaxclust(&["explain", "--config", &cfg, "--out", o, "--model", model.to_str().unwrap(), "--year", "2021"]);
    assert_eq!(code(&e), 0, "{}", String::from_utf8_lossy(&e.stderr));
    assert!(out.join("shap_explain_2021_k2.csv").exists());
    let truth = std::fs::read_to_string(dir.path().join("truth_2021.csv")).unwrap();
    assert_eq!(truth.lines().count(), 61);
}
