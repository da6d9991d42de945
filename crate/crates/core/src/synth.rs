//! Synthetic districts with known cluster membership.
//!
//! Vaccination rates are the cluster's mean rates plus independent
//! Gaussian noise, clamped to `[0, 100]`. GDSC features start from fixed
//! base means plus noise; the four signal features get a per-cluster shift
//! and the five socioeconomic features do not. With the default shifts the
//! lowest-coverage cluster sits two noise standard deviations above the
//! highest one on `english_proficiency`, `born_outside_uk` and
//! `ethnic_minority`, and two rurality standard deviations lower on the
//! latent rurality score, which is rounded and clamped to `1..=6`.
//! Intermediate clusters are spaced linearly.
//!
//! Draw order, for reproducing fixtures elsewhere: one `SeededRng` from the
//! seed; a Fisher–Yates shuffle of the cluster label list; then per
//! district (in id order) 14 rate normals, 8 numeric GDSC normals and one
//! rurality normal.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    DataError, DistrictId, DistrictRow, GdscProfile, VaccinationProfile, YearDataset, YearKey, GDSC_FEATURES,
    GDSC_NUMERIC_COLUMNS,
};
use crate::fixtures::table2;
use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    SpecInvalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("writing truth labels: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Signal features, by name.
pub const SIGNAL_FEATURES: [&str; 4] = ["rurality", "english_proficiency", "born_outside_uk", "ethnic_minority"];

/// Base means of the numeric GDSC features, in [`GDSC_NUMERIC_COLUMNS`]
/// order.
pub const GDSC_BASE_MEANS: [f64; 8] = [25.0, 20.0, 12.0, 30.0, 25.0, 15.0, 25.0, 20.0];

/// Latent rurality mean of the highest-coverage cluster.
pub const RURALITY_BASE: f64 = 3.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub year: YearKey,
    pub k: usize,
    /// Mean rates per cluster, lowest coverage first.
    pub cluster_means: Vec<[f64; 14]>,
    pub cluster_sizes: Vec<usize>,
    pub vacc_noise_sd: f64,
    pub gdsc_noise_sd: f64,
    pub rurality_noise_sd: f64,
    /// Per cluster, additive shifts for the nine features in
    /// [`GDSC_FEATURES`] order (rurality on the latent scale).
    pub gdsc_shifts: Vec<[f64; 9]>,
    pub seed: u64,
}

impl SynthSpec {
    /// Published means for `year` and `k`, `n_per_cluster` districts each,
    /// default noise and shifts.
    pub fn from_table(year: YearKey, k: usize, n_per_cluster: usize, seed: u64) -> Result<Self> {
        let rows = table2(year, k);
        if rows.is_empty() {
            return Err(SynthError::SpecInvalid(format!("no published means for {} with k={k}", year.label())));
        }
        let gdsc_noise_sd = 4.0;
        let rurality_noise_sd = 1.2;
        Ok(Self {
            year,
            k,
            cluster_means: rows.iter().map(|r| r.rates()).collect(),
            cluster_sizes: vec![n_per_cluster; k],
            vacc_noise_sd: 2.0,
            gdsc_noise_sd,
            rurality_noise_sd,
            gdsc_shifts: default_shifts(k, gdsc_noise_sd, rurality_noise_sd),
            seed,
        })
    }

    /// Two clusters of 75 at the 2021-22 means.
    pub fn default_two_cluster(seed: u64) -> Self {
        Self::from_table(YearKey(2021), 2, 75, seed).expect("published table")
    }

    pub fn without_signal(mut self) -> Self {
        self.gdsc_shifts = vec![[0.0; 9]; self.k];
        self
    }

    pub fn n_districts(&self) -> usize {
        self.cluster_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::SpecInvalid(m));
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if self.cluster_means.len() != self.k || self.cluster_sizes.len() != self.k || self.gdsc_shifts.len() != self.k
        {
            return bad("per-cluster vectors must have k entries".into());
        }
        if self.cluster_sizes.iter().any(|&n| n < 2) {
            return bad("every cluster needs at least 2 districts".into());
        }
        if self.cluster_means.iter().flatten().any(|m| !(0.0..=100.0).contains(m)) {
            return bad("mean rates must lie in [0, 100]".into());
        }
        for (name, sd) in [
            ("vacc_noise_sd", self.vacc_noise_sd),
            ("gdsc_noise_sd", self.gdsc_noise_sd),
            ("rurality_noise_sd", self.rurality_noise_sd),
        ] {
            if !(sd.is_finite() && sd >= 0.0) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if self.gdsc_shifts.iter().flatten().any(|s| !s.is_finite()) {
            return bad("shifts must be finite".into());
        }
        Ok(())
    }
}

/// Linear spacing from two sds (lowest cluster) down to zero (highest).
pub fn default_shifts(k: usize, gdsc_sd: f64, rurality_sd: f64) -> Vec<[f64; 9]> {
    (0..k)
        .map(|c| {
            let w = if k > 1 { (k - 1 - c) as f64 / (k - 1) as f64 } else { 0.0 };
            let mut s = [0.0; 9];
            for (j, name) in GDSC_FEATURES.iter().enumerate() {
                if *name == "rurality" {
                    s[j] = -2.0 * rurality_sd * w;
                } else if SIGNAL_FEATURES.contains(name) {
                    s[j] = 2.0 * gdsc_sd * w;
                }
            }
            s
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub dataset: YearDataset,
    /// True cluster per dataset row (0 = lowest coverage).
    pub truth: Vec<usize>,
}

pub fn generate(spec: &SynthSpec) -> Result<Synthetic> {
    spec.validate()?;
    let n = spec.n_districts();
    let width = n.to_string().len().max(3);
    let mut labels: Vec<usize> = spec.cluster_sizes.iter().enumerate().flat_map(|(c, &m)| vec![c; m]).collect();
    let mut rng = SeededRng::new(spec.seed);
    rng.shuffle(&mut labels);

    let mut rows = Vec::with_capacity(n);
    for (i, &c) in labels.iter().enumerate() {
        let mut rates = spec.cluster_means[c];
        for r in &mut rates {
            *r = (*r + spec.vacc_noise_sd * rng.normal()).clamp(0.0, 100.0);
        }
        let shift = &spec.gdsc_shifts[c];
        let mut numeric = GDSC_BASE_MEANS;
        for (j, v) in numeric.iter_mut().enumerate() {
            let idx = GDSC_FEATURES.iter().position(|f| *f == GDSC_NUMERIC_COLUMNS[j]).expect("shared name");
            *v = (*v + shift[idx] + spec.gdsc_noise_sd * rng.normal()).clamp(0.0, 100.0);
        }
        let latent = RURALITY_BASE + shift[8] + spec.rurality_noise_sd * rng.normal();
        let rurality = latent.round().clamp(1.0, 6.0) as u8;
        let number = format!("{:0width$}", i + 1);
        rows.push(DistrictRow {
            id: DistrictId::new(format!("d{number}")),
            name: format!("District {number}"),
            vaccination: VaccinationProfile { rates },
            gdsc: GdscProfile { numeric, rurality },
        });
    }
    // Ids are zero-padded in generation order, so sorting keeps the order.
    let dataset = YearDataset::from_rows(spec.year, rows)?;
    Ok(Synthetic { dataset, truth: labels })
}

/// `district_id,cluster` rows.
pub fn write_truth_csv<W: Write>(synthetic: &Synthetic, mut out: W) -> Result<()> {
    writeln!(out, "district_id,cluster")?;
    for (row, c) in synthetic.dataset.rows().iter().zip(&synthetic.truth) {
        writeln!(out, "{},{}", row.id, c)?;
    }
    Ok(())
}
