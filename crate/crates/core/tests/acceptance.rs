//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero on any failure not listed in `KNOWN_FAILURES`.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use vaxclust::dataset::YearKey;
use vaxclust::eval::{adjusted_rand_index, macro_metrics};
use vaxclust::fixtures::{table2, two_cluster_fixture, TWO_CLUSTER_TABLES};
use vaxclust::gbdt::{fit, FeatureKind, FeatureMatrix, Loss, TrainConfig};
use vaxclust::hcluster::{agglomerate, cluster_mean_table, cut_at_k, euclidean_distances, label_by_coverage, Linkage};
use vaxclust::pipeline::{cluster_year, run_datasets, RunConfig, Scaling};
use vaxclust::report::write_artifacts;
use vaxclust::rng::SeededRng;
use vaxclust::shap::{brute_force_shapley, tree_shap};
use vaxclust::stats::{exact_p, mann_whitney_u, rurality_cross_tab};
use vaxclust::synth::{generate, SynthSpec, SIGNAL_FEATURES};

/// Criteria that fail for reasons outside the implementation. Each is still
/// run and reported.
const KNOWN_FAILURES: &[(u32, &str)] = &[(
    9,
    "the printed 2023-24 low-coverage list contains five districts outside rural-urban category 1 \
     (Nottingham, Peterborough, Luton, Cambridgeshire, Cumbria), not three",
)];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------------------
// 1, 2: SHAP

fn random_model(
    rng: &mut SeededRng,
    d: usize,
    n_classes: usize,
    n_trees: usize,
    depth: usize,
) -> (FeatureMatrix, vaxclust::gbdt::TreeEnsemble) {
    let n = 120;
    let categorical = d >= 2 && rng.below(2) == 1;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut row: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        if categorical {
            row[d - 1] = (1 + rng.below(6)) as f64;
        }
        let score = row[0] + 0.7 * row[(1 % d).min(d - 1)] + 0.5 * rng.normal();
        let label = if i < n_classes {
            i
        } else {
            (((score + 2.0) * n_classes as f64 / 4.0).max(0.0) as usize).min(n_classes - 1)
        };
        rows.push(row);
        labels.push(label);
    }
    let mut kinds = vec![FeatureKind::Numeric; d];
    if categorical {
        kinds[d - 1] = FeatureKind::Categorical;
    }
    let names = (0..d).map(|j| format!("x{j}")).collect();
    let x = FeatureMatrix::new(names, kinds, rows).unwrap();
    let config = TrainConfig {
        n_trees,
        depth,
        seed: rng.next_u64(),
        loss: Loss::for_classes(n_classes),
        ..TrainConfig::default()
    };
    let model = fit(&x, &labels, n_classes, &config).unwrap();
    (x, model)
}

fn fresh_rows(rng: &mut SeededRng, x: &FeatureMatrix, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            x.kinds
                .iter()
                .map(|k| match k {
                    FeatureKind::Numeric => rng.normal(),
                    // Includes category 7, unseen in training.
                    FeatureKind::Categorical => (1 + rng.below(7)) as f64,
                })
                .collect()
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let mut rng = SeededRng::new(1);
    let mut worst: f64 = 0.0;
    for m in 0..200 {
        let n_classes = [2, 3, 6][m % 3];
        let d = 1 + rng.below(9) as usize;
        let n_trees = 1 + rng.below(50) as usize;
        let depth = 1 + rng.below(4) as usize;
        let (x, model) = random_model(&mut rng, d, n_classes, n_trees, depth);
        for row in fresh_rows(&mut rng, &x, 100) {
            let margin = model.predict_margin(&row).unwrap();
            let attr = tree_shap(&model, &row).unwrap();
            for (a, b) in margin.iter().zip(attr.reconstructed_margin()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    outcome(worst < 1e-6, format!("max |sum phi + base - margin| = {worst:.2e} over 200 models x 100 rows"))
}

fn criterion_2() -> Outcome {
    let mut rng = SeededRng::new(2);
    let mut worst: f64 = 0.0;
    for m in 0..50 {
        let n_classes = [2, 3, 6][m % 3];
        let d = 1 + rng.below(10) as usize;
        let n_trees = 1 + rng.below(20) as usize;
        let depth = 1 + rng.below(4) as usize;
        let (x, model) = random_model(&mut rng, d, n_classes, n_trees, depth);
        for row in fresh_rows(&mut rng, &x, 5) {
            let fast = tree_shap(&model, &row).unwrap();
            let slow = brute_force_shapley(&model, &row, 20).unwrap();
            for (fa, sa) in fast.phi.iter().zip(&slow.phi) {
                for (a, b) in fa.iter().zip(sa) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    outcome(worst < 1e-9, format!("max |phi_fast - phi_enumerated| = {worst:.2e} over 50 models"))
}

// ---------------------------------------------------------------------------
// 3: Ward

/// Error sum of squares of a point set.
fn ess(points: &[&Vec<f64>]) -> f64 {
    let d = points[0].len();
    let n = points.len() as f64;
    (0..d)
        .map(|j| {
            let mean = points.iter().map(|p| p[j]).sum::<f64>() / n;
            points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>()
        })
        .sum()
}

fn criterion_3() -> Outcome {
    let mut rng = SeededRng::new(3);
    let mut worst: f64 = 0.0;
    let mut pair_mismatch = 0;
    let mut decreasing = 0;
    for t in 0..400 {
        let n = 2 + rng.below(7) as usize;
        let dim = 1 + rng.below(4) as usize;
        // The second half uses a coarse integer grid, which produces ties.
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| if t < 200 { rng.normal() } else { rng.below(3) as f64 }).collect())
            .collect();
        let dendro = agglomerate(&euclidean_distances(&pts).unwrap(), Linkage::Ward);
        let h = dendro.heights();
        decreasing += h.windows(2).filter(|w| w[1] < w[0]).count();
        if t >= 200 {
            continue;
        }
        // Exhaustive replay: each step must merge the cheapest pair.
        let mut clusters: BTreeMap<usize, Vec<usize>> = (0..n).map(|i| (i, vec![i])).collect();
        for (step, merge) in dendro.merges.iter().enumerate() {
            let ids: Vec<usize> = clusters.keys().copied().collect();
            let mut best = (f64::INFINITY, 0, 0);
            for a in 0..ids.len() {
                for b in a + 1..ids.len() {
                    let (ca, cb) = (&clusters[&ids[a]], &clusters[&ids[b]]);
                    let union: Vec<&Vec<f64>> = ca.iter().chain(cb).map(|&i| &pts[i]).collect();
                    let own = |c: &Vec<usize>| ess(&c.iter().map(|&i| &pts[i]).collect::<Vec<_>>());
                    let cost = ess(&union) - own(ca) - own(cb);
                    if cost < best.0 {
                        best = (cost, ids[a], ids[b]);
                    }
                }
            }
            worst = worst.max(((2.0 * best.0.max(0.0)).sqrt() - merge.height).abs());
            if (best.1, best.2) != (merge.left, merge.right) {
                pair_mismatch += 1;
            }
            let mut members = clusters.remove(&merge.left).unwrap();
            members.extend(clusters.remove(&merge.right).unwrap());
            clusters.insert(n + step, members);
        }
    }
    outcome(
        worst < 1e-9 && pair_mismatch == 0 && decreasing == 0,
        format!("max height error {worst:.2e}, {pair_mismatch} pair mismatches, {decreasing} decreasing steps"),
    )
}

// ---------------------------------------------------------------------------
// 4: Table 2 round trip

fn criterion_4() -> Outcome {
    let mut spec = SynthSpec::from_table(YearKey(2021), 2, 75, 4).unwrap();
    spec.vacc_noise_sd = 0.0;
    let syn = generate(&spec).unwrap();
    let dendro = cluster_year(&syn.dataset, Linkage::Ward, Scaling::Standardize).unwrap();
    let assignment = label_by_coverage(&cut_at_k(&dendro, 2).unwrap(), &syn.dataset, 2).unwrap();
    let table = cluster_mean_table(&assignment, &syn.dataset);
    let expected = table2(YearKey(2021), 2);
    let mut mismatches = Vec::new();
    for (row, want) in table.iter().zip(&expected) {
        if row.cluster_name != want.label {
            mismatches.push(format!("name {} vs {}", row.cluster_name, want.label));
        }
        for (v, (got, text)) in row.means.iter().zip(want.text).enumerate() {
            if *got != want.rates()[v] {
                mismatches.push(format!("{} col {v}: {got} vs {text}", want.label));
            }
        }
    }
    outcome(
        mismatches.is_empty() && table.len() == 2,
        if mismatches.is_empty() {
            format!("L and H rows reproduced exactly (L starts {}, H starts {})", table[0].means[0], table[1].means[0])
        } else {
            mismatches.join("; ")
        },
    )
}

// ---------------------------------------------------------------------------
// 5, 6: synthetic benchmark and negative control

struct SeedResult {
    ari: f64,
    accuracy: f64,
    top4_signal: bool,
    signal_significant: bool,
    top_feature: String,
}

fn run_seed(seed: u64, signal: bool) -> SeedResult {
    let mut spec = SynthSpec::default_two_cluster(seed);
    if !signal {
        spec = spec.without_signal();
    }
    let syn = generate(&spec).unwrap();
    let config = RunConfig { k_values: vec![2], seed, ..RunConfig::default() };
    let out = run_datasets(&config, vec![syn.dataset]).unwrap();
    let cell = &out.report.cells[0];
    let ranked = cell.importance.ranked();
    let mut top4: Vec<&str> = ranked.iter().take(4).map(|r| r.0).collect();
    top4.sort_unstable();
    let mut signal_names = SIGNAL_FEATURES.to_vec();
    signal_names.sort_unstable();
    SeedResult {
        ari: adjusted_rand_index(&cell.assignment.labels, &syn.truth).unwrap(),
        accuracy: cell.metrics.accuracy,
        top4_signal: top4 == signal_names,
        signal_significant: cell
            .tests
            .iter()
            .filter(|t| SIGNAL_FEATURES.contains(&t.feature_name.as_str()))
            .all(|t| t.p_two_sided < 0.05),
        top_feature: ranked[0].0.to_string(),
    }
}

fn criterion_5() -> Outcome {
    let runs: Vec<SeedResult> = (0..10).map(|s| run_seed(s, true)).collect();
    let min_ari = runs.iter().map(|r| r.ari).fold(f64::INFINITY, f64::min);
    let min_acc = runs.iter().map(|r| r.accuracy).fold(f64::INFINITY, f64::min);
    let top4 = runs.iter().filter(|r| r.top4_signal).count();
    let sig = runs.iter().filter(|r| r.signal_significant).count();
    outcome(
        min_ari >= 0.95 && min_acc >= 0.90 && top4 >= 9 && sig >= 9,
        format!("min ARI {min_ari:.3}, min accuracy {min_acc:.3}, signal top-4 in {top4}/10, all signal p < 0.05 in {sig}/10"),
    )
}

fn criterion_6() -> Outcome {
    let runs: Vec<SeedResult> = (0..10).map(|s| run_seed(s, false)).collect();
    let accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
    let in_band = accs.iter().all(|a| (a - 0.5).abs() <= 0.15);
    let mut wins: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &runs {
        *wins.entry(&r.top_feature).or_default() += 1;
    }
    let (leader, most) = wins.iter().max_by_key(|(_, &c)| c).map(|(n, &c)| (*n, c)).unwrap();
    let lo = accs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        in_band && most <= 6,
        format!("accuracy range [{lo:.3}, {hi:.3}], most frequent top feature {leader} in {most}/10"),
    )
}

// ---------------------------------------------------------------------------
// 7: metrics

/// Second implementation working from expanded label vectors.
fn reference_metrics(m: &[Vec<u64>]) -> (f64, f64, f64, f64) {
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for (i, row) in m.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            for _ in 0..c {
                truth.push(i);
                pred.push(j);
            }
        }
    }
    let classes: Vec<usize> = (0..m.len()).filter(|c| truth.contains(c) || pred.contains(c)).collect();
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for &c in &classes {
        let tp = truth.iter().zip(&pred).filter(|(t, p)| **t == c && **p == c).count() as f64;
        let pp = pred.iter().filter(|p| **p == c).count() as f64;
        let ap = truth.iter().filter(|t| **t == c).count() as f64;
        let p = if pp > 0.0 { tp / pp } else { 0.0 };
        let r = if ap > 0.0 { tp / ap } else { 0.0 };
        p_sum += p;
        r_sum += r;
        f_sum += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    let n = classes.len() as f64;
    let acc = truth.iter().zip(&pred).filter(|(t, p)| t == p).count() as f64 / truth.len() as f64;
    (acc, p_sum / n, r_sum / n, f_sum / n)
}

fn criterion_7() -> Outcome {
    let mut rng = SeededRng::new(7);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 1000 {
        let k = 2 + rng.below(5) as usize;
        let m: Vec<Vec<u64>> =
            (0..k).map(|_| (0..k).map(|_| if rng.below(4) == 0 { 0 } else { rng.below(15) }).collect()).collect();
        if m.iter().flatten().sum::<u64>() == 0 {
            continue;
        }
        let got = macro_metrics(&m).unwrap();
        let want = reference_metrics(&m);
        for (a, b) in
            [(got.accuracy, want.0), (got.macro_precision, want.1), (got.macro_recall, want.2), (got.macro_f1, want.3)]
        {
            worst = worst.max((a - b).abs());
        }
        checked += 1;
    }
    let hand = macro_metrics(&[vec![1, 1], vec![0, 2]]).unwrap();
    let hand_ok = (hand.accuracy - 0.75).abs() < 1e-12
        && (hand.macro_precision - 5.0 / 6.0).abs() < 1e-12
        && (hand.macro_recall - 0.75).abs() < 1e-12
        && (hand.macro_f1 - 11.0 / 15.0).abs() < 1e-12;
    outcome(
        worst < 1e-12 && hand_ok,
        format!(
            "max deviation {worst:.2e} over 1000 matrices; hand case acc {:.4} P {:.4} R {:.4} F1 {:.4}",
            hand.accuracy, hand.macro_precision, hand.macro_recall, hand.macro_f1
        ),
    )
}

// ---------------------------------------------------------------------------
// 8: Mann-Whitney exactness

fn criterion_8() -> Outcome {
    let mut compared = 0usize;
    let mut mismatches = 0usize;
    let mut u_sum_bad = 0usize;
    for n in 2..=12usize {
        // Untied data: the values are the ranks 1..=n; `mask` picks sample a.
        for mask in 1u32..(1 << n) - 1 {
            let a: Vec<f64> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| (i + 1) as f64).collect();
            let b: Vec<f64> = (0..n).filter(|i| mask >> i & 1 == 0).map(|i| (i + 1) as f64).collect();
            let (na, nb) = (a.len(), b.len());
            let u_of = |m: u32| -> i64 {
                let rank_sum: i64 = (0..n).filter(|i| m >> i & 1 == 1).map(|i| (i + 1) as i64).sum();
                rank_sum - (na * (na + 1) / 2) as i64
            };
            let centre2 = (na * nb) as i64;
            let obs = (2 * u_of(mask) - centre2).abs();
            let (mut extreme, mut total) = (0u64, 0u64);
            for other in 0u32..(1 << n) {
                if other.count_ones() as usize != na {
                    continue;
                }
                total += 1;
                if (2 * u_of(other) - centre2).abs() >= obs {
                    extreme += 1;
                }
            }
            let oracle = extreme as f64 / total as f64;
            let res = mann_whitney_u("x", &a, &b).unwrap();
            if exact_p(&a, &b) != oracle || res.p_two_sided != oracle {
                mismatches += 1;
            }
            if res.u_statistic + res.u_other != (na * nb) as f64 {
                u_sum_bad += 1;
            }
            compared += 1;
        }
    }
    outcome(
        mismatches == 0 && u_sum_bad == 0,
        format!("{compared} splits with n <= 12: {mismatches} p mismatches, {u_sum_bad} U-sum violations"),
    )
}

// ---------------------------------------------------------------------------
// 9: published two-cluster lists

fn criterion_9() -> Outcome {
    let counts: Vec<u64> = TWO_CLUSTER_TABLES
        .iter()
        .map(|t| {
            let (ds, a) = two_cluster_fixture(t).unwrap();
            rurality_cross_tab(&a, &ds).non_urban_core(0)
        })
        .collect();
    outcome(counts == [2, 2, 3], format!("low-cluster districts with rurality > 1: {counts:?}, expected [2, 2, 3]"))
}

// ---------------------------------------------------------------------------
// 10: determinism

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn criterion_10() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("out");
    let datasets = vec![
        generate(&SynthSpec::default_two_cluster(10)).unwrap().dataset,
        generate(&SynthSpec::from_table(YearKey(2022), 3, 20, 11).unwrap()).unwrap().dataset,
    ];
    let mut trees = Vec::new();
    for threads in [1, 1, 8, 8] {
        let config = RunConfig {
            threads,
            n_trees: 100,
            out: out.clone(),
            export_models: true,
            export_attributions: true,
            export_fold_metrics: true,
            ..RunConfig::default()
        };
        let run = run_datasets(&config, datasets.clone()).unwrap();
        write_artifacts(&run, &out).unwrap();
        trees.push(snapshot(&out));
        std::fs::remove_dir_all(&out).unwrap();
    }
    let same = trees.windows(2).all(|w| w[0] == w[1]);
    outcome(
        same,
        format!("{} files, runs at 1, 1, 8, 8 threads {}", trees[0].len(), if same { "identical" } else { "differ" }),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "SHAP local accuracy", criterion_1),
        (2, "SHAP oracle equivalence", criterion_2),
        (3, "Ward clustering oracle", criterion_3),
        (4, "mean-rate table round trip", criterion_4),
        (5, "synthetic end-to-end benchmark", criterion_5),
        (6, "negative control", criterion_6),
        (7, "metrics oracle", criterion_7),
        (8, "Mann-Whitney exactness", criterion_8),
        (9, "two-cluster list rurality counts", criterion_9),
        (10, "determinism across thread counts", criterion_10),
    ];
    let mut unexpected = 0;
    let mut known = Vec::new();
    for (id, name, run) in criteria {
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        println!("{} [{id}] {name}: {} ({secs:.1} s)", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            match KNOWN_FAILURES.iter().find(|(k, _)| *k == id) {
                Some((_, why)) => known.push(format!("[{id}] {why}")),
                None => unexpected += 1,
            }
        }
    }
    for k in &known {
        println!("known failure {k}");
    }
    if unexpected > 0 {
        println!("{unexpected} unexpected failure(s)");
        std::process::exit(1);
    }
}
