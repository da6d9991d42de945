use rayon::prelude::*;

use super::encoding::{encode_ordered_ts, CategoricalStats, OrderedTsEncoder};
use super::tree::{ObliviousTree, Split};
use super::{
    sigmoid, ColumnSource, FeatureKind, FeatureMatrix, GbdtError, Loss, Result, TrainConfig, TreeEnsemble,
    MODEL_FORMAT_VERSION,
};
use crate::rng::SeededRng;

/// Candidate split thresholds for one column.
///
/// With at most `buckets` distinct values every midpoint between
/// neighbouring distinct values is a border. Otherwise the sorted column is
/// cut at ranks `q * n / buckets` for `q = 1..buckets`, each border being the
/// midpoint of the two values around the cut. Ranks, not values, pick the
/// cuts, so scaling a column by `c > 0` scales its borders by `c`.
pub fn quantile_borders(values: &[f64], buckets: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    let mut borders: Vec<f64> = if distinct.len() <= buckets {
        distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect()
    } else {
        let n = sorted.len();
        (1..buckets)
            .filter_map(|q| {
                let pos = q * n / buckets;
                (pos > 0 && sorted[pos - 1] < sorted[pos]).then(|| midpoint(sorted[pos - 1], sorted[pos]))
            })
            .collect()
    };
    borders.dedup();
    borders
}

fn midpoint(a: f64, b: f64) -> f64 {
    a + (b - a) / 2.0
}

/// Mean training log loss for flat `n x n_outputs` margins.
pub fn training_logloss(margins: &[f64], labels: &[usize], n_outputs: usize) -> f64 {
    let n = labels.len();
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let m = &margins[i * n_outputs..(i + 1) * n_outputs];
            if n_outputs == 1 {
                // log(1 + e^m) - y m, evaluated stably.
                let softplus = if m[0] > 0.0 { m[0] + (-m[0]).exp().ln_1p() } else { m[0].exp().ln_1p() };
                softplus - y as f64 * m[0]
            } else {
                let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + m.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                lse - m[y]
            }
        })
        .sum();
    total / n as f64
}

pub fn fit(x: &FeatureMatrix, labels: &[usize], n_classes: usize, config: &TrainConfig) -> Result<TreeEnsemble> {
    fit_traced(x, labels, n_classes, config).map(|(model, _)| model)
}

/// Fits and also returns the training log loss after every boosting round.
pub fn fit_traced(
    x: &FeatureMatrix,
    labels: &[usize],
    n_classes: usize,
    config: &TrainConfig,
) -> Result<(TreeEnsemble, Vec<f64>)> {
    config.validate()?;
    let n = x.n_rows();
    if labels.len() != n {
        return Err(GbdtError::LengthMismatch { rows: n, labels: labels.len() });
    }
    if n_classes < 2 {
        return Err(GbdtError::DegenerateLabels);
    }
    if config.loss == Loss::BinaryLogistic && n_classes != 2 {
        return Err(GbdtError::InvalidConfig(format!("binary logistic loss with {n_classes} classes")));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(GbdtError::LabelOutOfRange { label, n_classes });
    }
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(GbdtError::DegenerateLabels);
    }
    if n < 2 * n_classes {
        return Err(GbdtError::TooFewRows { need: 2 * n_classes, got: n, n_classes });
    }

    let n_outputs = match config.loss {
        Loss::BinaryLogistic => 1,
        Loss::MulticlassSoftmax => n_classes,
    };
    let targets: Vec<Vec<f64>> = labels
        .iter()
        .map(|&y| {
            if n_outputs == 1 {
                vec![y as f64]
            } else {
                (0..n_classes).map(|c| f64::from(u8::from(c == y))).collect()
            }
        })
        .collect();

    let mut rng = SeededRng::new(config.seed);
    let permutations: Vec<Vec<usize>> = (0..config.n_permutations)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut p);
            p
        })
        .collect();

    let mut columns = Vec::new();
    let mut train_cols: Vec<Vec<f64>> = Vec::new();
    let mut encoder = OrderedTsEncoder { prior_weight: config.ts_prior_weight, features: Vec::new() };
    for (j, kind) in x.kinds.iter().enumerate() {
        match kind {
            FeatureKind::Numeric => {
                columns.push(ColumnSource::Raw { feature: j });
                train_cols.push(x.rows.iter().map(|r| r[j]).collect());
            }
            FeatureKind::Categorical => {
                let cats: Vec<i64> = x.rows.iter().map(|r| r[j] as i64).collect();
                let stats = CategoricalStats::fit(j, &cats, &targets);
                for dim in 0..stats.priors.len() {
                    let dim_targets: Vec<f64> = targets.iter().map(|t| t[dim]).collect();
                    let mut acc = vec![0.0; n];
                    for perm in &permutations {
                        let enc =
                            encode_ordered_ts(&cats, &dim_targets, perm, config.ts_prior_weight, stats.priors[dim]);
                        acc.iter_mut().zip(enc).for_each(|(a, e)| *a += e);
                    }
                    acc.iter_mut().for_each(|a| *a /= permutations.len() as f64);
                    columns.push(ColumnSource::TargetStat { feature: j, dim });
                    train_cols.push(acc);
                }
                encoder.features.push(stats);
            }
        }
    }

    let borders: Vec<Vec<f64>> = train_cols.iter().map(|c| quantile_borders(c, config.border_count)).collect();
    let bins: Vec<Vec<u8>> = train_cols
        .iter()
        .zip(&borders)
        .map(|(col, b)| col.iter().map(|&v| b.partition_point(|&t| t < v) as u8).collect())
        .collect();

    let base_score: Vec<f64> = if n_outputs == 1 {
        vec![(counts[1] as f64 / counts[0] as f64).ln()]
    } else {
        // Classes absent from this training set get half a pseudo-count.
        counts.iter().map(|&c| ((c as f64).max(0.5) / n as f64).ln()).collect()
    };

    let mut margins: Vec<f64> = (0..n).flat_map(|_| base_score.iter().copied()).collect();
    let mut trees = Vec::with_capacity(config.n_trees * n_outputs);
    let mut losses = Vec::with_capacity(config.n_trees);
    let lr = config.learning_rate;
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    for _round in 0..config.n_trees {
        let probs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let m = &margins[i * n_outputs..(i + 1) * n_outputs];
                if n_outputs == 1 {
                    vec![sigmoid(m[0])]
                } else {
                    super::softmax(m)
                }
            })
            .collect();
        let mut round_trees = Vec::with_capacity(n_outputs);
        for out in 0..n_outputs {
            for i in 0..n {
                let p = probs[i][out];
                grad[i] = p - targets[i][out];
                hess[i] = p * (1.0 - p);
            }
            let (tree, leaf_of_row) = grow_tree(&bins, &borders, &grad, &hess, config, out);
            round_trees.push((tree, leaf_of_row));
        }
        for (tree, leaf_of_row) in round_trees {
            for (i, &leaf) in leaf_of_row.iter().enumerate() {
                margins[i * n_outputs + tree.output] += lr * tree.leaf_values[leaf];
            }
            trees.push(tree);
        }
        losses.push(training_logloss(&margins, labels, n_outputs));
    }

    let model = TreeEnsemble {
        format_version: MODEL_FORMAT_VERSION,
        config: config.clone(),
        n_classes,
        n_outputs,
        base_score,
        feature_names: x.names.clone(),
        feature_kinds: x.kinds.clone(),
        columns,
        ts_encoder: encoder,
        trees,
    };
    Ok((model, losses))
}

fn leaf_score(g: f64, h: f64, l2: f64) -> f64 {
    let denom = h + l2;
    if denom > 0.0 {
        g * g / denom
    } else {
        0.0
    }
}

/// Grows one oblivious tree level by level. At each level every candidate
/// `(column, border)` is scored by its total gain summed over all current
/// leaves; ties keep the lowest column, then the lowest border.
fn grow_tree(
    bins: &[Vec<u8>],
    borders: &[Vec<f64>],
    grad: &[f64],
    hess: &[f64],
    config: &TrainConfig,
    output: usize,
) -> (ObliviousTree, Vec<usize>) {
    let n = grad.len();
    let l2 = config.l2_leaf_reg;
    let mut leaf_of_row = vec![0usize; n];
    let mut splits = Vec::with_capacity(config.depth);

    for level in 0..config.depth {
        let n_leaves = 1usize << level;
        let mut parent_g = vec![0.0; n_leaves];
        let mut parent_h = vec![0.0; n_leaves];
        for i in 0..n {
            parent_g[leaf_of_row[i]] += grad[i];
            parent_h[leaf_of_row[i]] += hess[i];
        }
        let parent_score: Vec<f64> = parent_g.iter().zip(&parent_h).map(|(&g, &h)| leaf_score(g, h, l2)).collect();

        let gains: Vec<Vec<f64>> = bins
            .par_iter()
            .zip(borders.par_iter())
            .map(|(col_bins, col_borders)| {
                let nb = col_borders.len();
                if nb == 0 {
                    return Vec::new();
                }
                let width = nb + 1;
                let mut hg = vec![0.0; n_leaves * width];
                let mut hh = vec![0.0; n_leaves * width];
                for i in 0..n {
                    let slot = leaf_of_row[i] * width + col_bins[i] as usize;
                    hg[slot] += grad[i];
                    hh[slot] += hess[i];
                }
                let mut gains = vec![0.0; nb];
                for leaf in 0..n_leaves {
                    let (mut gl, mut hl) = (0.0, 0.0);
                    for (b, gain) in gains.iter_mut().enumerate() {
                        gl += hg[leaf * width + b];
                        hl += hh[leaf * width + b];
                        let gr = parent_g[leaf] - gl;
                        let hr = parent_h[leaf] - hl;
                        *gain += leaf_score(gl, hl, l2) + leaf_score(gr, hr, l2) - parent_score[leaf];
                    }
                }
                gains
            })
            .collect();

        let mut best: Option<(f64, usize, usize)> = None;
        for (col, col_gains) in gains.iter().enumerate() {
            for (b, &g) in col_gains.iter().enumerate() {
                if best.map_or(true, |(bg, _, _)| g > bg) {
                    best = Some((g, col, b));
                }
            }
        }
        let Some((_, col, b)) = best else { break };
        for i in 0..n {
            if bins[col][i] as usize > b {
                leaf_of_row[i] |= 1 << level;
            }
        }
        splits.push(Split { column: col, threshold: borders[col][b] });
    }

    let n_leaves = 1usize << splits.len();
    let mut g = vec![0.0; n_leaves];
    let mut h = vec![0.0; n_leaves];
    let mut cover = vec![0u64; n_leaves];
    for i in 0..n {
        g[leaf_of_row[i]] += grad[i];
        h[leaf_of_row[i]] += hess[i];
        cover[leaf_of_row[i]] += 1;
    }
    let leaf_values = g
        .iter()
        .zip(&h)
        .map(|(&g, &h)| {
            let denom = h + l2;
            if denom > 0.0 {
                -g / denom
            } else {
                0.0
            }
        })
        .collect();
    (ObliviousTree { output, splits, leaf_values, leaf_cover: cover }, leaf_of_row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn config(n_trees: usize, depth: usize, loss: Loss) -> TrainConfig {
        TrainConfig { n_trees, depth, loss, seed: 17, ..TrainConfig::default() }
    }

    fn separable(n: usize, seed: u64) -> (FeatureMatrix, Vec<usize>) {
        let mut rng = SeededRng::new(seed);
        // Balanced halves put the median quantile border exactly between
        // the classes, so one split separates them.
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let half = if i % 2 == 0 { 0.0 } else { 0.5 };
                vec![half + 0.5 * rng.uniform().max(1e-9), rng.uniform()]
            })
            .collect();
        let labels = rows.iter().map(|r| usize::from(r[0] > 0.5)).collect();
        (FeatureMatrix::numeric(rows).unwrap(), labels)
    }

    #[test]
    fn borders_few_distinct_values() {
        assert_eq!(quantile_borders(&[1.0, 3.0, 3.0, 5.0], 32), [2.0, 4.0]);
        assert!(quantile_borders(&[2.0; 10], 32).is_empty());
    }

    #[test]
    fn borders_are_bounded_and_sorted() {
        let values: Vec<f64> = (0..1000).map(|i| (i as f64).sqrt()).collect();
        let b = quantile_borders(&values, 32);
        assert!(b.len() <= 31 && b.len() >= 30);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn degenerate_labels_rejected() {
        let (x, _) = separable(20, 1);
        let err = fit(&x, &[1; 20], 2, &config(5, 2, Loss::BinaryLogistic)).unwrap_err();
        assert_eq!(err, GbdtError::DegenerateLabels);
    }

    #[test]
    fn input_validation() {
        let (x, y) = separable(20, 1);
        assert!(matches!(
            fit(&x, &y[..5], 2, &config(5, 2, Loss::BinaryLogistic)),
            Err(GbdtError::LengthMismatch { .. })
        ));
        let mut bad = y.clone();
        bad[0] = 4;
        assert!(matches!(
            fit(&x, &bad, 2, &config(5, 2, Loss::BinaryLogistic)),
            Err(GbdtError::LabelOutOfRange { .. })
        ));
        assert!(matches!(fit(&x, &y, 3, &config(5, 2, Loss::BinaryLogistic)), Err(GbdtError::InvalidConfig(_))));
        assert!(matches!(
            FeatureMatrix::numeric(vec![vec![0.0, f64::NAN]]),
            Err(GbdtError::NonFiniteFeature { row: 0, feature: 1 })
        ));
    }

    #[test]
    fn separable_data_is_fit_perfectly() {
        let (x, y) = separable(200, 4);
        let model = fit(&x, &y, 2, &config(50, 6, Loss::BinaryLogistic)).unwrap();
        let correct = x.rows.iter().zip(&y).filter(|(r, &l)| model.predict_class(r).unwrap() == l).count();
        assert_eq!(correct, 200);
    }

    #[test]
    fn base_score_is_log_odds() {
        let (x, y) = separable(200, 4);
        let ones = y.iter().filter(|&&l| l == 1).count() as f64;
        let model = fit(&x, &y, 2, &config(1, 1, Loss::BinaryLogistic)).unwrap();
        assert!((model.base_score[0] - (ones / (200.0 - ones)).ln()).abs() < 1e-12);
        assert!(model.trees.iter().all(|t| t.total_cover() == 200));
    }

    #[test]
    fn training_loss_never_increases() {
        let (x, mut y) = separable(150, 8);
        // Some label noise so the loss does not vanish immediately.
        for i in (0..150).step_by(13) {
            y[i] = 1 - y[i];
        }
        let (_, losses) = fit_traced(&x, &y, 2, &config(100, 4, Loss::BinaryLogistic)).unwrap();
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn multiclass_loss_never_increases() {
        let mut rng = SeededRng::new(2);
        let rows: Vec<Vec<f64>> = (0..120).map(|_| vec![rng.uniform(), rng.uniform(), rng.normal()]).collect();
        let y: Vec<usize> = rows.iter().map(|r| ((r[0] * 3.0) as usize).min(2)).collect();
        let x = FeatureMatrix::numeric(rows).unwrap();
        let (model, losses) = fit_traced(&x, &y, 3, &config(60, 3, Loss::MulticlassSoftmax)).unwrap();
        assert_eq!(model.trees.len(), 180);
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn absent_class_gets_half_count_prior() {
        let mut rng = SeededRng::new(2);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.uniform()]).collect();
        let y: Vec<usize> = rows.iter().map(|r| usize::from(r[0] > 0.5)).collect();
        let x = FeatureMatrix::numeric(rows).unwrap();
        let model = fit(&x, &y, 3, &config(3, 2, Loss::MulticlassSoftmax)).unwrap();
        assert!((model.base_score[2] - (0.5f64 / 30.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn fitting_is_deterministic() {
        let (x, y) = separable(100, 3);
        let a = fit(&x, &y, 2, &config(20, 4, Loss::BinaryLogistic)).unwrap();
        let b = fit(&x, &y, 2, &config(20, 4, Loss::BinaryLogistic)).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn categorical_feature_uses_full_statistics_at_inference() {
        let mut rng = SeededRng::new(5);
        let rows: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.uniform(), (1 + rng.below(6)) as f64]).collect();
        let y: Vec<usize> = rows.iter().map(|r| usize::from(r[1] >= 4.0)).collect();
        let x = FeatureMatrix::new(
            vec!["noise".into(), "cat".into()],
            vec![FeatureKind::Numeric, FeatureKind::Categorical],
            rows.clone(),
        )
        .unwrap();
        let model = fit(&x, &y, 2, &config(30, 2, Loss::BinaryLogistic)).unwrap();
        assert_eq!(model.columns, [ColumnSource::Raw { feature: 0 }, ColumnSource::TargetStat { feature: 1, dim: 0 }]);
        let stats = model.ts_encoder.stats_for(1).unwrap();
        let cats: Vec<i64> = rows.iter().map(|r| r[1] as i64).collect();
        let targets: Vec<Vec<f64>> = y.iter().map(|&l| vec![l as f64]).collect();
        assert_eq!(stats, &CategoricalStats::fit(1, &cats, &targets));
        let correct = rows.iter().zip(&y).filter(|(r, &l)| model.predict_class(r).unwrap() == l).count();
        assert!(correct >= 58, "{correct}");
        // Unseen category still encodes.
        assert!(model.predict_margin(&[0.3, 42.0]).is_ok());
        assert!(matches!(model.predict_margin(&[0.3, 1.5]), Err(GbdtError::BadCategory { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn scaling_a_column_keeps_predictions(seed in any::<u64>(), scale in prop_oneof![Just(4.0), Just(2.5), Just(0.125)]) {
            let mut rng = SeededRng::new(seed);
            let rows: Vec<Vec<f64>> = (0..80).map(|_| vec![rng.normal(), rng.normal()]).collect();
            let y: Vec<usize> = rows.iter().map(|r| usize::from(r[0] + 0.5 * r[1] + 0.3 * rng.normal() > 0.0)).collect();
            prop_assume!(y.contains(&0) && y.contains(&1));
            let scaled: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0] * scale, r[1]]).collect();
            let cfg = config(15, 3, Loss::BinaryLogistic);
            let a = fit(&FeatureMatrix::numeric(rows.clone()).unwrap(), &y, 2, &cfg).unwrap();
            let b = fit(&FeatureMatrix::numeric(scaled.clone()).unwrap(), &y, 2, &cfg).unwrap();
            for (r, s) in rows.iter().zip(&scaled) {
                prop_assert_eq!(a.predict_proba(r).unwrap(), b.predict_proba(s).unwrap());
            }
        }

        #[test]
        fn probabilities_form_a_simplex(seed in any::<u64>(), k in 2usize..5) {
            let mut rng = SeededRng::new(seed);
            let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.normal(), rng.normal()]).collect();
            let y: Vec<usize> = (0..40).map(|i| i % k).collect();
            let cfg = config(10, 3, Loss::for_classes(k));
            let model = fit(&FeatureMatrix::numeric(rows.clone()).unwrap(), &y, k, &cfg).unwrap();
            for r in &rows {
                let p = model.predict_proba(r).unwrap();
                prop_assert_eq!(p.len(), k);
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
