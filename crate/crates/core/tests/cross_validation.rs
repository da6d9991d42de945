use vaxclust::eval::{cross_validate, stratified_folds};
use vaxclust::gbdt::{CategoricalStats, FeatureKind, FeatureMatrix, TrainConfig};
use vaxclust::rng::SeededRng;

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig { n_trees: 60, depth: 4, seed, ..TrainConfig::default() }
}

fn mixed_features(seed: u64, n: usize) -> FeatureMatrix {
    let mut rng = SeededRng::new(seed);
    let rows = (0..n).map(|_| vec![rng.normal(), rng.normal(), rng.uniform(), (1 + rng.below(6)) as f64]).collect();
    let kinds = vec![FeatureKind::Numeric, FeatureKind::Numeric, FeatureKind::Numeric, FeatureKind::Categorical];
    FeatureMatrix::new(vec!["a".into(), "b".into(), "c".into(), "cat".into()], kinds, rows).unwrap()
}

#[test]
fn threshold_label_is_learned_perfectly() {
    let mut x = mixed_features(11, 100);
    // Classes sit on either side of a gap in feature 0; with balanced
    // training folds the median border falls inside the gap.
    let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
    for (row, &y) in x.rows.iter_mut().zip(&labels) {
        row[0] = if y == 1 { 1.0 + row[2] } else { -1.0 - row[2] };
    }
    let plan = stratified_folds(&labels, 5, 1).unwrap();
    let cv = cross_validate(&x, &labels, 2, &small_config(1), &plan).unwrap();
    assert_eq!(cv.metrics.accuracy, 1.0);
    assert_eq!(cv.importance.ranking()[0], 0);
}

#[test]
fn shuffled_labels_score_near_chance() {
    let mut accs = Vec::new();
    for seed in 0..8 {
        let x = mixed_features(100 + seed, 120);
        let mut labels: Vec<usize> = (0..120).map(|i| i % 2).collect();
        SeededRng::new(seed).shuffle(&mut labels);
        let plan = stratified_folds(&labels, 5, seed).unwrap();
        let cv = cross_validate(&x, &labels, 2, &small_config(seed), &plan).unwrap();
        assert!((cv.metrics.accuracy - 0.5).abs() <= 0.15, "seed {seed}: {}", cv.metrics.accuracy);
        accs.push(cv.metrics.accuracy);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 0.5).abs() < 0.1);
}

#[test]
fn encoder_statistics_come_from_training_rows_only() {
    let x = mixed_features(5, 90);
    let labels: Vec<usize> = x.rows.iter().map(|r| usize::from(r[3] > 3.0 || r[1] > 1.0)).collect();
    let plan = stratified_folds(&labels, 5, 9).unwrap();
    let cv = cross_validate(&x, &labels, 2, &small_config(9), &plan).unwrap();
    for fold in &cv.folds {
        let cats: Vec<i64> = fold.train_rows.iter().map(|&i| x.rows[i][3] as i64).collect();
        let targets: Vec<Vec<f64>> = fold.train_rows.iter().map(|&i| vec![labels[i] as f64]).collect();
        let expected = CategoricalStats::fit(3, &cats, &targets);
        assert_eq!(fold.model.ts_encoder.stats_for(3), Some(&expected));
    }
}

#[test]
fn multiclass_folds_report_missing_classes() {
    let x = mixed_features(3, 40);
    // Class 2 has only three members, so two of five folds lack it.
    let labels: Vec<usize> = (0..40).map(|i| if i < 3 { 2 } else { i % 2 }).collect();
    let plan = stratified_folds(&labels, 5, 0).unwrap();
    let config = TrainConfig { loss: vaxclust::gbdt::Loss::MulticlassSoftmax, ..small_config(0) };
    let cv = cross_validate(&x, &labels, 3, &config, &plan).unwrap();
    assert_eq!(cv.warnings.iter().filter(|w| w.contains("absent")).count(), 2);
    assert_eq!(cv.metrics.confusion.iter().flatten().sum::<u64>(), 40);
}
