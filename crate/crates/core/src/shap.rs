//! Exact Shapley attribution for oblivious-tree ensembles.
//!
//! [`tree_shap`] is the polynomial-time path-dependent algorithm: features
//! outside a coalition are integrated out by descending both children in
//! proportion to their training cover. [`brute_force_shapley`] evaluates
//! the same value function by enumerating every coalition and exists to
//! check the fast path.
//!
//! Players are the model's input features. A categorical feature that the
//! model encodes into several target-statistic columns is a single player.
//! When a node's cover is zero its children are weighted one half each;
//! such nodes are only reached with zero weight, so the convention never
//! changes a result but keeps the arithmetic finite.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gbdt::{GbdtError, ObliviousTree, TreeEnsemble};

#[derive(Debug, Error, PartialEq)]
pub enum ShapError {
    #[error("tree {0} has no leaf cover statistics")]
    MissingCover(usize),
    #[error("{d} features exceed the enumeration limit of {limit}")]
    TooManyFeatures { d: usize, limit: usize },
    #[error("no rows to aggregate")]
    EmptySample,
    #[error(transparent)]
    Model(#[from] GbdtError),
}

pub type Result<T> = std::result::Result<T, ShapError>;

/// Hard ceiling for subset enumeration.
pub const BRUTE_FORCE_LIMIT: usize = 20;

/// Per-output attribution in margin space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    /// `phi[output][feature]`.
    pub phi: Vec<Vec<f64>>,
    /// Expected margin per output under the training cover distribution.
    pub base: Vec<f64>,
}

impl Attribution {
    /// `base + sum(phi)` per output; equals the model margin.
    pub fn reconstructed_margin(&self) -> Vec<f64> {
        self.phi.iter().zip(&self.base).map(|(p, b)| b + p.iter().sum::<f64>()).collect()
    }
}

fn check_covers(model: &TreeEnsemble) -> Result<()> {
    match model.trees.iter().position(|t| !t.has_cover()) {
        Some(i) => Err(ShapError::MissingCover(i)),
        None => Ok(()),
    }
}

/// Node covers by level: `covers[l][p]` is the cover of the level-`l` node
/// whose first `l` decisions are the low bits of `p`.
fn node_covers(tree: &ObliviousTree) -> Vec<Vec<f64>> {
    let depth = tree.depth();
    let mut covers = vec![Vec::new(); depth + 1];
    covers[depth] = tree.leaf_cover.iter().map(|&c| c as f64).collect();
    for l in (0..depth).rev() {
        covers[l] = (0..1usize << l).map(|p| covers[l + 1][p] + covers[l + 1][p | (1 << l)]).collect();
    }
    covers
}

fn child_fractions(covers: &[Vec<f64>], level: usize, prefix: usize) -> (f64, f64) {
    let parent = covers[level][prefix];
    if parent > 0.0 {
        (covers[level + 1][prefix] / parent, covers[level + 1][prefix | (1 << level)] / parent)
    } else {
        (0.5, 0.5)
    }
}

/// Cover-weighted expectation of a tree where the players in `known`
/// follow `columns` and every other split is integrated out.
fn conditional_expectation(
    tree: &ObliviousTree,
    covers: &[Vec<f64>],
    columns: &[f64],
    player_of: &[usize],
    known: &dyn Fn(usize) -> bool,
    level: usize,
    prefix: usize,
) -> f64 {
    if level == tree.depth() {
        return tree.leaf_values[prefix];
    }
    let split = tree.splits[level];
    let right = prefix | (1 << level);
    if known(player_of[split.column]) {
        let next = if columns[split.column] > split.threshold { right } else { prefix };
        conditional_expectation(tree, covers, columns, player_of, known, level + 1, next)
    } else {
        let (fl, fr) = child_fractions(covers, level, prefix);
        fl * conditional_expectation(tree, covers, columns, player_of, known, level + 1, prefix)
            + fr * conditional_expectation(tree, covers, columns, player_of, known, level + 1, right)
    }
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    player: usize,
    zero_fraction: f64,
    one_fraction: f64,
    weight: f64,
}

const NO_PLAYER: usize = usize::MAX;

fn extend_path(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, player: usize) {
    let depth = path.len();
    path.push(PathElement { player, zero_fraction, one_fraction, weight: if depth == 0 { 1.0 } else { 0.0 } });
    let denom = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one_fraction * path[i].weight * (i + 1) as f64 / denom;
        path[i].weight = zero_fraction * path[i].weight * (depth - i) as f64 / denom;
    }
}

fn unwind_path(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let denom = (depth + 1) as f64;
    let mut next_one_portion = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next_one_portion * denom / ((i + 1) as f64 * one);
            next_one_portion = tmp - path[i].weight * zero * (depth - i) as f64 / denom;
        } else {
            path[i].weight = path[i].weight * denom / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].player = path[i + 1].player;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

/// Total weight of the path with element `index` removed.
fn unwound_path_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let denom = (depth + 1) as f64;
    let mut next_one_portion = path[depth].weight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next_one_portion * denom / ((i + 1) as f64 * one);
            total += tmp;
            next_one_portion = path[i].weight - tmp * zero * (depth - i) as f64 / denom;
        } else if zero != 0.0 {
            total += path[i].weight / zero / ((depth - i) as f64 / denom);
        }
    }
    total
}

struct TreeWalk<'a> {
    tree: &'a ObliviousTree,
    covers: Vec<Vec<f64>>,
    columns: &'a [f64],
    player_of: &'a [usize],
    scale: f64,
}

impl TreeWalk<'_> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &self,
        level: usize,
        prefix: usize,
        parent: &[PathElement],
        zero_fraction: f64,
        one_fraction: f64,
        player: usize,
        phi: &mut [f64],
    ) {
        let mut path = parent.to_vec();
        extend_path(&mut path, zero_fraction, one_fraction, player);

        if level == self.tree.depth() {
            let value = self.scale * self.tree.leaf_values[prefix];
            for i in 1..path.len() {
                let w = unwound_path_sum(&path, i);
                let el = path[i];
                phi[el.player] += w * (el.one_fraction - el.zero_fraction) * value;
            }
            return;
        }

        let split = self.tree.splits[level];
        let split_player = self.player_of[split.column];
        let right = prefix | (1 << level);
        let (hot, cold) = if self.columns[split.column] > split.threshold { (right, prefix) } else { (prefix, right) };
        let (fl, fr) = child_fractions(&self.covers, level, prefix);
        let (hot_fraction, cold_fraction) = if hot == prefix { (fl, fr) } else { (fr, fl) };

        let mut incoming_zero = 1.0;
        let mut incoming_one = 1.0;
        if let Some(k) = path.iter().position(|e| e.player == split_player) {
            incoming_zero = path[k].zero_fraction;
            incoming_one = path[k].one_fraction;
            unwind_path(&mut path, k);
        }

        // A branch with both fractions zero carries no weight for any player.
        let hot_zero = hot_fraction * incoming_zero;
        if hot_zero != 0.0 || incoming_one != 0.0 {
            self.recurse(level + 1, hot, &path, hot_zero, incoming_one, split_player, phi);
        }
        let cold_zero = cold_fraction * incoming_zero;
        if cold_zero != 0.0 {
            self.recurse(level + 1, cold, &path, cold_zero, 0.0, split_player, phi);
        }
    }
}

fn player_map(model: &TreeEnsemble) -> Vec<usize> {
    model.columns.iter().map(|c| c.feature()).collect()
}

/// Exact path-dependent TreeSHAP for one row of raw features.
pub fn tree_shap(model: &TreeEnsemble, x: &[f64]) -> Result<Attribution> {
    check_covers(model)?;
    let columns = model.encode_row(x)?;
    let player_of = player_map(model);
    let d = model.n_features();
    let lr = model.learning_rate();
    let mut phi = vec![vec![0.0; d]; model.n_outputs];
    let mut base = model.base_score.clone();
    for tree in &model.trees {
        let walk = TreeWalk { tree, covers: node_covers(tree), columns: &columns, player_of: &player_of, scale: lr };
        walk.recurse(0, 0, &[], 1.0, 1.0, NO_PLAYER, &mut phi[tree.output]);
        base[tree.output] += lr * conditional_expectation(tree, &walk.covers, &columns, &player_of, &|_| false, 0, 0);
    }
    Ok(Attribution { phi, base })
}

/// Shapley values by explicit enumeration of all `2^d` coalitions.
///
/// `phi_j = sum over S not containing j of |S|! (d - |S| - 1)! / d! *
/// (v(S + j) - v(S))`, with `v` the same cover-based conditional
/// expectation TreeSHAP uses.
pub fn brute_force_shapley(model: &TreeEnsemble, x: &[f64], limit: usize) -> Result<Attribution> {
    let d = model.n_features();
    let limit = limit.min(BRUTE_FORCE_LIMIT);
    if d > limit {
        return Err(ShapError::TooManyFeatures { d, limit });
    }
    check_covers(model)?;
    let columns = model.encode_row(x)?;
    let player_of = player_map(model);
    let lr = model.learning_rate();
    let covers: Vec<Vec<Vec<f64>>> = model.trees.iter().map(node_covers).collect();

    let n_sets = 1usize << d;
    let mut value = vec![model.base_score.clone(); n_sets];
    for (mask, v) in value.iter_mut().enumerate() {
        let known = |p: usize| mask & (1 << p) != 0;
        for (tree, cov) in model.trees.iter().zip(&covers) {
            v[tree.output] += lr * conditional_expectation(tree, cov, &columns, &player_of, &known, 0, 0);
        }
    }

    let mut factorial = vec![1.0f64; d + 1];
    for i in 1..=d {
        factorial[i] = factorial[i - 1] * i as f64;
    }
    let mut phi = vec![vec![0.0; d]; model.n_outputs];
    for j in 0..d {
        for mask in (0..n_sets).filter(|m| m & (1 << j) == 0) {
            let s = mask.count_ones() as usize;
            let w = factorial[s] * factorial[d - s - 1] / factorial[d];
            for out in 0..model.n_outputs {
                phi[out][j] += w * (value[mask | (1 << j)][out] - value[mask][out]);
            }
        }
    }
    Ok(Attribution { phi, base: value[0].clone() })
}

/// Mean absolute attribution per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub feature_names: Vec<String>,
    /// Mean over rows and outputs of `|phi|`.
    pub mean_abs: Vec<f64>,
    /// `per_output[output][feature]`: mean over rows of `|phi|`.
    pub per_output: Vec<Vec<f64>>,
    pub n_rows: usize,
}

impl GlobalImportance {
    /// Feature indices by descending importance; ties keep feature order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.mean_abs.len()).collect();
        idx.sort_by(|&a, &b| self.mean_abs[b].total_cmp(&self.mean_abs[a]).then(a.cmp(&b)));
        idx
    }

    /// `(name, value)` pairs in descending order.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        self.ranking().into_iter().map(|i| (self.feature_names[i].as_str(), self.mean_abs[i])).collect()
    }

    /// Elementwise arithmetic mean (fold aggregation).
    pub fn average(parts: &[GlobalImportance]) -> Result<GlobalImportance> {
        let first = parts.first().ok_or(ShapError::EmptySample)?;
        let k = parts.len() as f64;
        let mut out = GlobalImportance {
            feature_names: first.feature_names.clone(),
            mean_abs: vec![0.0; first.mean_abs.len()],
            per_output: vec![vec![0.0; first.mean_abs.len()]; first.per_output.len()],
            n_rows: 0,
        };
        for p in parts {
            out.n_rows += p.n_rows;
            for (a, b) in out.mean_abs.iter_mut().zip(&p.mean_abs) {
                *a += b / k;
            }
            for (ao, bo) in out.per_output.iter_mut().zip(&p.per_output) {
                for (a, b) in ao.iter_mut().zip(bo) {
                    *a += b / k;
                }
            }
        }
        Ok(out)
    }
}

/// Attributions for many rows; rows are processed in parallel and returned
/// in input order.
pub fn explain_rows(model: &TreeEnsemble, rows: &[Vec<f64>]) -> Result<Vec<Attribution>> {
    rows.par_iter().map(|r| tree_shap(model, r)).collect()
}

pub fn importance_from_attributions(
    feature_names: &[String],
    attributions: &[Attribution],
) -> Result<GlobalImportance> {
    let first = attributions.first().ok_or(ShapError::EmptySample)?;
    let (n_out, d) = (first.phi.len(), feature_names.len());
    let mut per_output = vec![vec![0.0; d]; n_out];
    for a in attributions {
        for (acc, phi) in per_output.iter_mut().zip(&a.phi) {
            for (s, p) in acc.iter_mut().zip(phi) {
                *s += p.abs();
            }
        }
    }
    let n = attributions.len() as f64;
    per_output.iter_mut().flatten().for_each(|v| *v /= n);
    let mean_abs = (0..d).map(|j| per_output.iter().map(|o| o[j]).sum::<f64>() / n_out as f64).collect();
    Ok(GlobalImportance { feature_names: feature_names.to_vec(), mean_abs, per_output, n_rows: attributions.len() })
}

pub fn global_importance(model: &TreeEnsemble, rows: &[Vec<f64>]) -> Result<GlobalImportance> {
    if rows.is_empty() {
        return Err(ShapError::EmptySample);
    }
    importance_from_attributions(&model.feature_names, &explain_rows(model, rows)?)
}
