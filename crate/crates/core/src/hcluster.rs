//! Agglomerative clustering of districts by coverage profile.
//!
//! Distances are Euclidean over (by default z-scored) rates. Agglomeration
//! uses the Lance–Williams recurrence, so any of the supported linkages runs
//! on the condensed distance matrix alone. For Ward linkage the reported
//! merge height is `sqrt(2 * dESS)`, where `dESS = n_a n_b / (n_a + n_b) *
//! |c_a - c_b|^2` is the increase in within-cluster sum of squares; this is
//! the usual convention of four-column linkage tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DistrictId, StandardizedMatrix, YearDataset, VACCINE_COLUMNS};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("non-finite value in row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },
    #[error("need at least {need} observations, got {got}")]
    TooFewObservations { need: usize, got: usize },
    #[error("k = {k} outside the allowed range {min}..={max}")]
    KOutOfRange { k: usize, min: usize, max: usize },
    #[error("expected {expected} leaf weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("labels do not match the dataset ({labels} labels, {rows} rows)")]
    LabelMismatch { labels: usize, rows: usize },
}

pub type Result<T> = std::result::Result<T, ClusterError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Ward,
    Average,
    Complete,
}

/// Condensed upper-triangular distance matrix, row-major over `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn condensed(&self) -> &[f64] {
        &self.d
    }

    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.n * i - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.d[self.index(i, j)]
        }
    }
}

pub fn pairwise_distances(x: &StandardizedMatrix) -> Result<DistanceMatrix> {
    euclidean_distances(&x.values)
}

/// Euclidean distances between the rows of `rows`.
pub fn euclidean_distances(rows: &[Vec<f64>]) -> Result<DistanceMatrix> {
    let n = rows.len();
    if n < 2 {
        return Err(ClusterError::TooFewObservations { need: 2, got: n });
    }
    for (r, row) in rows.iter().enumerate() {
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(ClusterError::NonFiniteInput { row: r, col: c });
        }
    }
    let d: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (i + 1..n).map(move |j| rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        })
        .collect();
    Ok(DistanceMatrix { n, d })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Smaller node id of the pair.
    pub left: usize,
    pub right: usize,
    pub height: f64,
    /// Number of leaves under the new node.
    pub size: usize,
}

/// Merge log: leaves are nodes `0..n`, merge `m` creates node `n + m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub linkage: Linkage,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }

    /// Four-column linkage table (`left,right,height,size`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("left,right,height,size\n");
        for m in &self.merges {
            out.push_str(&format!("{},{},{},{}\n", m.left, m.right, m.height, m.size));
        }
        out
    }
}

/// Agglomerates with unit leaf weights.
pub fn agglomerate(dist: &DistanceMatrix, linkage: Linkage) -> Dendrogram {
    agglomerate_weighted(dist, &vec![1.0; dist.n], linkage).expect("unit weights always match")
}

/// Agglomerates with per-leaf weights (cluster "sizes" in the recurrence).
///
/// Ties in the pair distance resolve to the lexicographically smallest
/// `(left, right)` node-id pair.
pub fn agglomerate_weighted(dist: &DistanceMatrix, weights: &[f64], linkage: Linkage) -> Result<Dendrogram> {
    let n = dist.n;
    if weights.len() != n {
        return Err(ClusterError::WeightCount { expected: n, got: weights.len() });
    }
    // Dense working copy indexed by slot; a merged cluster takes over the
    // slot of its smaller-id child.
    let mut dm = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = dist.get(i, j);
            dm[i * n + j] = v;
            dm[j * n + i] = v;
        }
    }
    let mut weight = weights.to_vec();
    let mut leaves = vec![1usize; n];
    // (node id, slot), kept sorted by node id.
    let mut active: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for step in 0..n.saturating_sub(1) {
        let mut best = (f64::INFINITY, 0usize, 1usize);
        for a in 0..active.len() {
            for b in a + 1..active.len() {
                let v = dm[active[a].1 * n + active[b].1];
                if v < best.0 {
                    best = (v, a, b);
                }
            }
        }
        let (height, a, b) = best;
        let (id_a, sa) = active[a];
        let (id_b, sb) = active[b];
        let (wa, wb) = (weight[sa], weight[sb]);
        for &(_, sk) in &active {
            if sk == sa || sk == sb {
                continue;
            }
            let (dak, dbk) = (dm[sa * n + sk], dm[sb * n + sk]);
            let wk = weight[sk];
            let updated = match linkage {
                Linkage::Ward => {
                    let num = (wa + wk) * dak * dak + (wb + wk) * dbk * dbk - wk * height * height;
                    (num / (wa + wb + wk)).max(0.0).sqrt()
                }
                Linkage::Average => (wa * dak + wb * dbk) / (wa + wb),
                Linkage::Complete => dak.max(dbk),
            };
            dm[sa * n + sk] = updated;
            dm[sk * n + sa] = updated;
        }
        weight[sa] = wa + wb;
        leaves[sa] += leaves[sb];
        merges.push(Merge { left: id_a, right: id_b, height, size: leaves[sa] });
        active.remove(b);
        active.remove(a);
        active.push((n + step, sa));
    }
    Ok(Dendrogram { n_leaves: n, linkage, merges })
}

/// Cuts the dendrogram into `k` clusters by undoing its last `k - 1`
/// merges. Raw labels are numbered by the smallest leaf they contain.
pub fn cut_at_k(dendro: &Dendrogram, k: usize) -> Result<Vec<usize>> {
    let n = dendro.n_leaves;
    if k < 1 || k > n {
        return Err(ClusterError::KOutOfRange { k, min: 1, max: n });
    }
    let mut parent: Vec<usize> = (0..2 * n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (m, merge) in dendro.merges.iter().take(n - k).enumerate() {
        let node = n + m;
        let l = find(&mut parent, merge.left);
        let r = find(&mut parent, merge.right);
        parent[l] = node;
        parent[r] = node;
    }
    let mut root_label = std::collections::HashMap::new();
    let mut labels = Vec::with_capacity(n);
    for leaf in 0..n {
        let root = find(&mut parent, leaf);
        let next = root_label.len();
        labels.push(*root_label.entry(root).or_insert(next));
    }
    Ok(labels)
}

/// Height jump that separates the `k`-cluster cut from the `(k - 1)`-cluster
/// cut: `h[n - k] - h[n - k - 1]` over merge-ordered heights. Zero for
/// `k == 1`.
pub fn merge_gap(dendro: &Dendrogram, k: usize) -> f64 {
    let n = dendro.n_leaves;
    if k <= 1 || k >= n {
        return 0.0;
    }
    dendro.merges[n - k].height - dendro.merges[n - k - 1].height
}

/// Picks the `k` in `k_min..=k_max` with the largest merge-height gap,
/// preferring the smaller `k` on ties.
pub fn suggest_k(dendro: &Dendrogram, k_min: usize, k_max: usize) -> Result<usize> {
    let n = dendro.n_leaves;
    let max = n.saturating_sub(1);
    if k_min < 1 || k_min >= k_max || k_max > max {
        let bad = if k_min < 1 || k_min >= k_max { k_min } else { k_max };
        return Err(ClusterError::KOutOfRange { k: bad, min: 1, max });
    }
    let mut best = (k_min, merge_gap(dendro, k_min));
    for k in k_min + 1..=k_max {
        let gap = merge_gap(dendro, k);
        if gap > best.1 {
            best = (k, gap);
        }
    }
    Ok(best.0)
}

/// Display names for a given `k`, ascending by coverage. `None` when no
/// dedicated vocabulary exists.
pub fn vocabulary(k: usize) -> Option<&'static [&'static str]> {
    match k {
        2 => Some(&["L", "H"]),
        3 => Some(&["L", "M", "H"]),
        6 => Some(&["Ls", "VL", "L", "M", "H", "Hst"]),
        _ => None,
    }
}

/// Final cluster labels, renumbered so that index order is ascending mean
/// coverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    /// Row-aligned with the dataset the assignment was built from.
    pub district_ids: Vec<DistrictId>,
    pub labels: Vec<usize>,
    pub ordered_names: Vec<String>,
    /// Mean of all 14 raw rates over each cluster's districts.
    pub cluster_coverage: Vec<f64>,
    /// False when `k` has no dedicated vocabulary and generic names are used.
    pub vocabulary_defined: bool,
}

impl ClusterAssignment {
    pub fn name_of(&self, row: usize) -> &str {
        &self.ordered_names[self.labels[row]]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

/// Orders raw clusters by the mean of all raw rates and attaches names.
/// Equal means fall back to the smallest district id in each cluster.
pub fn label_by_coverage(raw: &[usize], dataset: &YearDataset, k: usize) -> Result<ClusterAssignment> {
    let rows = dataset.rows();
    if raw.len() != rows.len() {
        return Err(ClusterError::LabelMismatch { labels: raw.len(), rows: rows.len() });
    }
    if raw.iter().any(|&l| l >= k) {
        return Err(ClusterError::KOutOfRange { k, min: 1, max: rows.len() });
    }
    let mut sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    // Rows are id-sorted, so the first row seen is the smallest id.
    let mut first_row = vec![usize::MAX; k];
    for (i, (&l, row)) in raw.iter().zip(rows).enumerate() {
        sum[l] += row.vaccination.overall();
        count[l] += 1;
        first_row[l] = first_row[l].min(i);
    }
    if count.contains(&0) {
        return Err(ClusterError::KOutOfRange { k, min: 1, max: raw.len() });
    }
    let means: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(first_row[a].cmp(&first_row[b])));
    let mut rank = vec![0; k];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    let (ordered_names, vocabulary_defined) = match vocabulary(k) {
        Some(v) => (v.iter().map(|s| s.to_string()).collect(), true),
        None => ((1..=k).map(|i| format!("C{i}")).collect(), false),
    };
    Ok(ClusterAssignment {
        k,
        district_ids: dataset.ids(),
        labels: raw.iter().map(|&l| rank[l]).collect(),
        ordered_names,
        cluster_coverage: order.iter().map(|&c| means[c]).collect(),
        vocabulary_defined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMeanRow {
    pub cluster_index: usize,
    pub cluster_name: String,
    pub size: usize,
    /// Per-vaccine mean, in [`VACCINE_COLUMNS`] order.
    pub means: Vec<f64>,
}

/// Per-cluster, per-vaccine arithmetic means of the raw rates, ordered by
/// cluster index (ascending coverage).
pub fn cluster_mean_table(assignment: &ClusterAssignment, dataset: &YearDataset) -> Vec<ClusterMeanRow> {
    let rows = dataset.rows();
    (0..assignment.k)
        .map(|c| {
            let members: Vec<usize> = (0..rows.len()).filter(|&i| assignment.labels[i] == c).collect();
            let means = (0..VACCINE_COLUMNS.len())
                .map(|v| {
                    // Shifted by the first member: a cluster of identical
                    // values reproduces that value exactly.
                    let pivot = rows[members[0]].vaccination.rates[v];
                    let shift: f64 = members.iter().map(|&i| rows[i].vaccination.rates[v] - pivot).sum();
                    pivot + shift / members.len() as f64
                })
                .collect();
            ClusterMeanRow {
                cluster_index: c,
                cluster_name: assignment.ordered_names[c].clone(),
                size: members.len(),
                means,
            }
        })
        .collect()
}
