//! Two-sample tests and box-plot summaries of GDSC features by cluster.
//!
//! Mann–Whitney U uses midranks. With `n_a + n_b <= 20` the two-sided p
//! value is exact: the null distribution of U is counted over every way of
//! choosing `n_a` of the pooled ranks. Larger samples use the normal
//! approximation with tie and continuity corrections. Welch's t is reported
//! next to it.
//!
//! Quartiles interpolate linearly between order statistics at position
//! `(n - 1) p` (0-based), so `{1, 2, 3, 4, 5}` has quartiles 2, 3, 4.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::dataset::{YearDataset, GDSC_FEATURES};
use crate::hcluster::ClusterAssignment;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("a sample is empty")]
    EmptySample,
    #[error("cluster {0} has no values")]
    EmptyGroup(usize),
    #[error("{values} values and {labels} labels")]
    LengthMismatch { values: usize, labels: usize },
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// Largest combined sample size tested by exact enumeration.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub feature_name: String,
    /// U of the first (low-coverage) sample.
    pub u_statistic: f64,
    /// U of the second sample; `u_statistic + u_other = n_low * n_high`.
    pub u_other: f64,
    /// Normal-approximation z with continuity correction, signed by
    /// `U - n_low * n_high / 2`.
    pub z: f64,
    pub p_two_sided: f64,
    pub exact: bool,
    pub n_low: usize,
    pub n_high: usize,
    pub significant_at_0_05: bool,
    /// Welch's t (low minus high); absent when a sample has fewer than two
    /// values or both variances are zero.
    pub welch_t: Option<f64>,
    pub welch_p: Option<f64>,
}

/// Midranks (1-based) of `values`.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = r;
        }
        i = j + 1;
    }
    ranks
}

fn tie_term(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        total += t * t * t - t;
        i = j + 1;
    }
    total
}

struct RankSums {
    u_a: f64,
    u_b: f64,
    pooled: Vec<f64>,
    doubled_ranks: Vec<u64>,
}

fn rank_sums(a: &[f64], b: &[f64]) -> RankSums {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let r_a: f64 = ranks[..a.len()].iter().sum();
    let u_a = r_a - na * (na + 1.0) / 2.0;
    RankSums { u_a, u_b: na * nb - u_a, doubled_ranks: ranks.iter().map(|r| (2.0 * r) as u64).collect(), pooled }
}

/// Two-sided p by the normal approximation, and the signed z.
pub fn normal_approx_p(a: &[f64], b: &[f64]) -> (f64, f64) {
    let s = rank_sums(a, b);
    normal_from_sums(&s, a.len(), b.len())
}

fn normal_from_sums(s: &RankSums, na: usize, nb: usize) -> (f64, f64) {
    let (na, nb) = (na as f64, nb as f64);
    let n = na + nb;
    let mean = na * nb / 2.0;
    let tie = if n > 1.0 { tie_term(&s.pooled) / (n * (n - 1.0)) } else { 0.0 };
    let var = na * nb / 12.0 * ((n + 1.0) - tie);
    if var <= 0.0 {
        return (1.0, 0.0);
    }
    let dev = s.u_a - mean;
    let z_abs = ((dev.abs() - 0.5).max(0.0)) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = (2.0 * normal.sf(z_abs)).min(1.0);
    (p, z_abs.copysign(dev))
}

/// Exact two-sided p: the share of rank subsets whose U is at least as far
/// from `n_a n_b / 2` as the observed one. Works on doubled midranks, which
/// are integers, so the comparison is exact.
pub fn exact_p(a: &[f64], b: &[f64]) -> f64 {
    let s = rank_sums(a, b);
    exact_from_sums(&s, a.len())
}

fn exact_from_sums(s: &RankSums, na: usize) -> f64 {
    let total_sum: u64 = s.doubled_ranks.iter().sum();
    // ways[j][t]: subsets of size j with doubled-rank sum t.
    let mut ways = vec![vec![0u64; total_sum as usize + 1]; na + 1];
    ways[0][0] = 1;
    for &r in &s.doubled_ranks {
        for j in (1..=na).rev() {
            for t in (r as usize..=total_sum as usize).rev() {
                ways[j][t] += ways[j - 1][t - r as usize];
            }
        }
    }
    let nb = s.doubled_ranks.len() - na;
    // Doubled U = doubled rank sum - n_a (n_a + 1); doubled mean = n_a n_b.
    let offset = (na * (na + 1)) as i64;
    let mean2 = (na * nb) as i64;
    let obs = (2.0 * s.u_a).round() as i64 - mean2;
    let mut extreme = 0u64;
    let mut count = 0u64;
    for (t, &w) in ways[na].iter().enumerate() {
        if w == 0 {
            continue;
        }
        count += w;
        if (t as i64 - offset - mean2).abs() >= obs.abs() {
            extreme += w;
        }
    }
    (extreme as f64 / count as f64).min(1.0)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch's unequal-variance t test, `(t, two-sided p)`.
pub fn welch_t(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 <= 0.0 {
        return None;
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some((t, (2.0 * dist.sf(t.abs())).min(1.0)))
}

pub fn mann_whitney_u(feature_name: &str, a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let s = rank_sums(a, b);
    let (approx_p, z) = normal_from_sums(&s, a.len(), b.len());
    let exact = a.len() + b.len() <= EXACT_MAX_N;
    let p = if exact { exact_from_sums(&s, a.len()) } else { approx_p };
    let welch = welch_t(a, b);
    Ok(TestResult {
        feature_name: feature_name.to_string(),
        u_statistic: s.u_a,
        u_other: s.u_b,
        z,
        p_two_sided: p,
        exact,
        n_low: a.len(),
        n_high: b.len(),
        significant_at_0_05: p < 0.05,
        welch_t: welch.map(|w| w.0),
        welch_p: welch.map(|w| w.1),
    })
}

/// Tests every GDSC feature between the lowest- and highest-coverage
/// clusters (clusters 0 and k-1).
pub fn compare_extreme_clusters(dataset: &YearDataset, assignment: &ClusterAssignment) -> Result<Vec<TestResult>> {
    let high = assignment.k - 1;
    GDSC_FEATURES
        .iter()
        .map(|&name| {
            let mut low_vals = Vec::new();
            let mut high_vals = Vec::new();
            for (row, &label) in dataset.rows().iter().zip(&assignment.labels) {
                let v = row.gdsc.feature(name).expect("known feature");
                if label == 0 {
                    low_vals.push(v);
                } else if label == high {
                    high_vals.push(v);
                }
            }
            mann_whitney_u(name, &low_vals, &high_vals)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub feature_name: String,
    pub cluster: usize,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Most extreme values inside the 1.5 IQR fences.
    pub whisker_low: f64,
    pub whisker_high: f64,
    /// Values outside the fences, ascending.
    pub outliers: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(feature_name: &str, cluster: usize, values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(StatsError::EmptyGroup(cluster));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = sorted.iter().copied().filter(|v| (lo_fence..=hi_fence).contains(v)).collect();
    Ok(BoxStats {
        feature_name: feature_name.to_string(),
        cluster,
        n: sorted.len(),
        min: sorted[0],
        q1,
        median: quantile_sorted(&sorted, 0.5),
        q3,
        max: sorted[sorted.len() - 1],
        whisker_low: inside[0],
        whisker_high: inside[inside.len() - 1],
        outliers: sorted.iter().copied().filter(|v| !(lo_fence..=hi_fence).contains(v)).collect(),
    })
}

/// One summary per cluster `0..k`.
pub fn box_stats(feature_name: &str, values: &[f64], labels: &[usize], k: usize) -> Result<Vec<BoxStats>> {
    if values.len() != labels.len() {
        return Err(StatsError::LengthMismatch { values: values.len(), labels: labels.len() });
    }
    (0..k)
        .map(|c| {
            let group: Vec<f64> = values.iter().zip(labels).filter(|(_, &l)| l == c).map(|(&v, _)| v).collect();
            summarize(feature_name, c, &group)
        })
        .collect()
}

/// Box stats for every GDSC feature and cluster.
pub fn gdsc_box_stats(dataset: &YearDataset, assignment: &ClusterAssignment) -> Result<Vec<BoxStats>> {
    let mut out = Vec::new();
    for &name in GDSC_FEATURES.iter() {
        let values: Vec<f64> = dataset.rows().iter().map(|r| r.gdsc.feature(name).expect("known feature")).collect();
        out.extend(box_stats(name, &values, &assignment.labels, assignment.k)?);
    }
    Ok(out)
}

/// District counts by rurality category (rows 1..=6) and cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossTab {
    pub k: usize,
    /// `counts[category - 1][cluster]`.
    pub counts: Vec<Vec<u64>>,
}

impl CrossTab {
    /// Districts in `cluster` whose rurality category is above 1.
    pub fn non_urban_core(&self, cluster: usize) -> u64 {
        self.counts[1..].iter().map(|r| r[cluster]).sum()
    }
}

pub fn cross_tab(rurality: &[u8], labels: &[usize], k: usize) -> CrossTab {
    let mut counts = vec![vec![0u64; k]; 6];
    for (&r, &l) in rurality.iter().zip(labels) {
        counts[usize::from(r) - 1][l] += 1;
    }
    CrossTab { k, counts }
}

pub fn rurality_cross_tab(assignment: &ClusterAssignment, dataset: &YearDataset) -> CrossTab {
    let rurality: Vec<u8> = dataset.rows().iter().map(|r| r.gdsc.rurality).collect();
    cross_tab(&rurality, &assignment.labels, assignment.k)
}
