//! Ordered target statistics for categorical features.
//!
//! During training, the encoding of the row at permutation position `j`
//! only sees the targets of same-category rows at positions `< j`:
//!
//! ```text
//! enc(j) = (sum of preceding same-category targets + a * p) / (count + a)
//! ```
//!
//! At inference the statistics of the whole training set are used, so an
//! unseen category encodes to the prior `p`.

use serde::{Deserialize, Serialize};

/// Prefix-ordered encoding of one target dimension.
///
/// `permutation[j]` is the row placed at position `j`; the result is indexed
/// by row.
pub fn encode_ordered_ts(categories: &[i64], targets: &[f64], permutation: &[usize], a: f64, p: f64) -> Vec<f64> {
    debug_assert_eq!(categories.len(), targets.len());
    debug_assert_eq!(categories.len(), permutation.len());
    let mut sums: std::collections::HashMap<i64, (f64, f64)> = std::collections::HashMap::new();
    let mut out = vec![0.0; categories.len()];
    for &row in permutation {
        let entry = sums.entry(categories[row]).or_insert((0.0, 0.0));
        out[row] = (entry.0 + a * p) / (entry.1 + a);
        entry.0 += targets[row];
        entry.1 += 1.0;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStat {
    pub category: i64,
    /// Target sums, one per target dimension.
    pub sums: Vec<f64>,
    pub count: u64,
}

/// Frozen full-training statistics for one categorical input feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalStats {
    /// Index of the input feature.
    pub feature: usize,
    /// Mean target per dimension over the training rows.
    pub priors: Vec<f64>,
    /// Sorted by category.
    pub categories: Vec<CategoryStat>,
}

impl CategoricalStats {
    pub fn fit(feature: usize, categories: &[i64], targets: &[Vec<f64>]) -> Self {
        let dims = targets.first().map_or(0, Vec::len);
        let n = categories.len() as f64;
        let mut priors = vec![0.0; dims];
        for t in targets {
            for (p, v) in priors.iter_mut().zip(t) {
                *p += v;
            }
        }
        priors.iter_mut().for_each(|p| *p /= n);
        let mut map: std::collections::BTreeMap<i64, CategoryStat> = std::collections::BTreeMap::new();
        for (&c, t) in categories.iter().zip(targets) {
            let stat = map.entry(c).or_insert_with(|| CategoryStat { category: c, sums: vec![0.0; dims], count: 0 });
            for (s, v) in stat.sums.iter_mut().zip(t) {
                *s += v;
            }
            stat.count += 1;
        }
        Self { feature, priors, categories: map.into_values().collect() }
    }

    /// Inference encoding for target dimension `dim`.
    pub fn encode(&self, category: i64, dim: usize, a: f64) -> f64 {
        let p = self.priors[dim];
        match self.categories.binary_search_by_key(&category, |s| s.category) {
            Ok(i) => {
                let s = &self.categories[i];
                (s.sums[dim] + a * p) / (s.count as f64 + a)
            }
            Err(_) => p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedTsEncoder {
    pub prior_weight: f64,
    pub features: Vec<CategoricalStats>,
}

impl OrderedTsEncoder {
    pub fn stats_for(&self, feature: usize) -> Option<&CategoricalStats> {
        self.features.iter().find(|s| s.feature == feature)
    }
}
