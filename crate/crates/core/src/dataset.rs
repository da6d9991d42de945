//! Ingestion, validation and joining of the per-year input tables.
//!
//! Two comma-delimited tables arrive for every study year: vaccination
//! coverage (14 rates per district) and GDSC predictors (8 percentages or
//! scores plus an ordinal rurality category). Both are keyed by an opaque
//! district id; display names only travel with the vaccination table.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vaccination rate columns, in the canonical report order.
pub const VACCINE_COLUMNS: [&str; 14] = [
    "DTaP_IPV_5y",
    "DTaP_IPV_Hib_5y",
    "DTaP_IPV_Hib_HepB_12m",
    "DTaP_IPV_Hib_HepB_24m",
    "Hib_MenC_24m",
    "Hib_MenC_5y",
    "MenB_12m",
    "MenB_booster_24m",
    "MMR_24m",
    "MMR1_5y",
    "MMR2_5y",
    "PCV_12m",
    "PCV_24m",
    "Rota_12m",
];

/// Numeric GDSC columns. `imd_avg_score` is a non-negative score, the rest
/// are percentages.
pub const GDSC_NUMERIC_COLUMNS: [&str; 8] = [
    "imd_avg_score",
    "imd_prop_deprived",
    "long_term_unemployed",
    "routine_occupations",
    "no_qualifications",
    "english_proficiency",
    "ethnic_minority",
    "born_outside_uk",
];

pub const RURALITY_COLUMN: &str = "rurality";

/// All nine GDSC predictors in model order (numeric first, rurality last).
pub const GDSC_FEATURES: [&str; 9] = [
    "imd_avg_score",
    "imd_prop_deprived",
    "long_term_unemployed",
    "routine_occupations",
    "no_qualifications",
    "english_proficiency",
    "ethnic_minority",
    "born_outside_uk",
    "rurality",
];

pub const ID_COLUMN: &str = "district_id";
pub const NAME_COLUMN: &str = "district_name";

/// Rurality category labels, index 0 = category 1.
pub const RURALITY_LABELS: [&str; 6] = [
    "Urban with Major Conurbation",
    "Urban with Minor Conurbation",
    "Urban with City and Town",
    "Urban with Significant Rural",
    "Largely Rural",
    "Mainly Rural",
];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("column `{0}` is missing from the header")]
    MissingColumn(String),
    #[error("district `{district}`: {column} = {value} is out of range")]
    OutOfRange { district: String, column: String, value: f64 },
    #[error("district `{district}`: rurality {value} is not a category in 1..=6")]
    RuralityOutOfDomain { district: String, value: String },
    #[error("district `{0}` appears more than once")]
    DuplicateDistrict(String),
    #[error("table has no data rows")]
    EmptyTable,
    #[error("district `{district}`: missing value in column {column}")]
    MissingValue { district: String, column: String },
    #[error("district `{district}`: `{text}` in column {column} is not a plain decimal number")]
    BadNumber { district: String, column: String, text: String },
    #[error("empty district id on data row {0}")]
    EmptyId(usize),
    #[error("tables disagree on districts: only in vaccination {left:?}, only in gdsc {right:?}")]
    JoinMismatch { left: Vec<String>, right: Vec<String> },
    #[error("tables belong to different years ({0} vs {1})")]
    YearMismatch(YearKey, YearKey),
    #[error("need at least 2 rows to standardize, got {0}")]
    TooFewRows(usize),
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Opaque district key (an ONS code or any caller-chosen string).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DistrictId(String);

impl DistrictId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DistrictId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Study year, identified by the calendar year in which it starts
/// (2021 is the April 2021 to March 2022 cycle).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearKey(pub i32);

impl YearKey {
    /// "2021-2022" style label.
    pub fn label(self) -> String {
        format!("{}-{}", self.0, self.0 + 1)
    }
}

impl fmt::Display for YearKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaccinationProfile {
    pub rates: [f64; 14],
}

impl VaccinationProfile {
    pub fn rate(&self, column: &str) -> Option<f64> {
        VACCINE_COLUMNS.iter().position(|c| *c == column).map(|i| self.rates[i])
    }

    /// Mean over all 14 rates.
    pub fn overall(&self) -> f64 {
        self.rates.iter().sum::<f64>() / self.rates.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdscProfile {
    /// Values for [`GDSC_NUMERIC_COLUMNS`], same order.
    pub numeric: [f64; 8],
    /// Category in 1..=6, 1 = most urban.
    pub rurality: u8,
}

impl GdscProfile {
    /// Feature value by name; rurality is returned as its category number.
    pub fn feature(&self, name: &str) -> Option<f64> {
        if name == RURALITY_COLUMN {
            return Some(f64::from(self.rurality));
        }
        GDSC_NUMERIC_COLUMNS.iter().position(|c| *c == name).map(|i| self.numeric[i])
    }

    /// All nine features in [`GDSC_FEATURES`] order.
    pub fn feature_vector(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        out[..8].copy_from_slice(&self.numeric);
        out[8] = f64::from(self.rurality);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaccinationRecord {
    pub name: String,
    pub profile: VaccinationProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaccinationTable {
    pub year: YearKey,
    pub records: BTreeMap<DistrictId, VaccinationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdscTable {
    pub year: YearKey,
    pub records: BTreeMap<DistrictId, GdscProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistrictRow {
    pub id: DistrictId,
    pub name: String,
    pub vaccination: VaccinationProfile,
    pub gdsc: GdscProfile,
}

/// Joined, id-sorted rows for one study year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearDataset {
    pub year: YearKey,
    rows: Vec<DistrictRow>,
}

impl YearDataset {
    /// Builds a dataset from rows in any order. Rows are sorted by id.
    pub fn from_rows(year: YearKey, mut rows: Vec<DistrictRow>) -> Result<Self> {
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in rows.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(DataError::DuplicateDistrict(pair[0].id.to_string()));
            }
        }
        for row in &rows {
            validate_vaccination(row.id.as_str(), &row.vaccination)?;
            validate_gdsc(row.id.as_str(), &row.gdsc)?;
        }
        Ok(Self { year, rows })
    }

    pub fn rows(&self) -> &[DistrictRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ids(&self) -> Vec<DistrictId> {
        self.rows.iter().map(|r| r.id.clone()).collect()
    }

    pub fn vaccination_matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.vaccination.rates.to_vec()).collect()
    }

    pub fn gdsc_matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.gdsc.feature_vector().to_vec()).collect()
    }
}

fn validate_vaccination(district: &str, profile: &VaccinationProfile) -> Result<()> {
    for (col, &v) in VACCINE_COLUMNS.iter().zip(profile.rates.iter()) {
        check_percent(district, col, v)?;
    }
    Ok(())
}

fn validate_gdsc(district: &str, profile: &GdscProfile) -> Result<()> {
    for (col, &v) in GDSC_NUMERIC_COLUMNS.iter().zip(profile.numeric.iter()) {
        if *col == "imd_avg_score" {
            if !(v.is_finite() && v >= 0.0) {
                return Err(out_of_range(district, col, v));
            }
        } else {
            check_percent(district, col, v)?;
        }
    }
    if !(1..=6).contains(&profile.rurality) {
        return Err(DataError::RuralityOutOfDomain {
            district: district.to_string(),
            value: profile.rurality.to_string(),
        });
    }
    Ok(())
}

fn out_of_range(district: &str, column: &str, value: f64) -> DataError {
    DataError::OutOfRange { district: district.to_string(), column: column.to_string(), value }
}

fn check_percent(district: &str, column: &str, value: f64) -> Result<()> {
    if (0.0..=100.0).contains(&value) {
        Ok(())
    } else {
        Err(out_of_range(district, column, value))
    }
}

/// Parses plain decimal notation: optional sign, digits, optional fraction.
/// Exponents, `inf`/`nan` and locale separators are rejected.
pub fn parse_decimal(text: &str) -> Option<f64> {
    let t = text.trim();
    let body = t.strip_prefix(['+', '-']).unwrap_or(t);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    let ok = digits(int) && frac.map_or(true, digits) && (!int.is_empty() || frac.is_some_and(|f| !f.is_empty()));
    if ok {
        t.parse().ok()
    } else {
        None
    }
}

struct Header {
    index: HashMap<String, usize>,
}

impl Header {
    fn new(record: &csv::StringRecord) -> Self {
        let index = record.iter().enumerate().map(|(i, h)| (h.trim().to_string(), i)).collect();
        Self { index }
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| DataError::MissingColumn(name.to_string()))
    }
}

fn cell<'r>(record: &'r csv::StringRecord, idx: usize, district: &str, column: &str) -> Result<&'r str> {
    match record.get(idx).map(str::trim) {
        Some(s) if !s.is_empty() => Ok(s),
        _ => Err(DataError::MissingValue { district: district.to_string(), column: column.to_string() }),
    }
}

fn number(record: &csv::StringRecord, idx: usize, district: &str, column: &str) -> Result<f64> {
    let text = cell(record, idx, district, column)?;
    parse_decimal(text).ok_or_else(|| DataError::BadNumber {
        district: district.to_string(),
        column: column.to_string(),
        text: text.to_string(),
    })
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::None).from_reader(input)
}

fn read_id(record: &csv::StringRecord, idx: usize, line: usize) -> Result<DistrictId> {
    match record.get(idx).map(str::trim) {
        Some(s) if !s.is_empty() => Ok(DistrictId::new(s)),
        _ => Err(DataError::EmptyId(line)),
    }
}

/// Reads a vaccination table. Columns are matched by header name, so their
/// order is free; extra columns are ignored.
pub fn parse_vaccination_table<R: Read>(input: R, year: YearKey) -> Result<VaccinationTable> {
    let mut rdr = reader(input);
    let header = Header::new(rdr.headers()?);
    let id_col = header.column(ID_COLUMN)?;
    let name_col = header.column(NAME_COLUMN)?;
    let rate_cols = VACCINE_COLUMNS.iter().map(|c| header.column(c)).collect::<Result<Vec<_>>>()?;

    let mut records = BTreeMap::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let id = read_id(&record, id_col, line + 1)?;
        let name = cell(&record, name_col, id.as_str(), NAME_COLUMN)?.to_string();
        let mut rates = [0.0; 14];
        for (slot, (&col, name)) in rates.iter_mut().zip(rate_cols.iter().zip(VACCINE_COLUMNS)) {
            *slot = number(&record, col, id.as_str(), name)?;
        }
        let profile = VaccinationProfile { rates };
        validate_vaccination(id.as_str(), &profile)?;
        if records.insert(id.clone(), VaccinationRecord { name, profile }).is_some() {
            return Err(DataError::DuplicateDistrict(id.to_string()));
        }
    }
    if records.is_empty() {
        return Err(DataError::EmptyTable);
    }
    Ok(VaccinationTable { year, records })
}

/// Reads a GDSC predictor table.
pub fn parse_gdsc_table<R: Read>(input: R, year: YearKey) -> Result<GdscTable> {
    let mut rdr = reader(input);
    let header = Header::new(rdr.headers()?);
    let id_col = header.column(ID_COLUMN)?;
    let num_cols = GDSC_NUMERIC_COLUMNS.iter().map(|c| header.column(c)).collect::<Result<Vec<_>>>()?;
    let rural_col = header.column(RURALITY_COLUMN)?;

    let mut records = BTreeMap::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let id = read_id(&record, id_col, line + 1)?;
        let mut numeric = [0.0; 8];
        for (slot, (&col, name)) in numeric.iter_mut().zip(num_cols.iter().zip(GDSC_NUMERIC_COLUMNS)) {
            *slot = number(&record, col, id.as_str(), name)?;
        }
        let text = cell(&record, rural_col, id.as_str(), RURALITY_COLUMN)?;
        let rurality = text
            .parse::<u8>()
            .ok()
            .filter(|r| (1..=6).contains(r))
            .ok_or_else(|| DataError::RuralityOutOfDomain { district: id.to_string(), value: text.to_string() })?;
        let profile = GdscProfile { numeric, rurality };
        validate_gdsc(id.as_str(), &profile)?;
        if records.insert(id.clone(), profile).is_some() {
            return Err(DataError::DuplicateDistrict(id.to_string()));
        }
    }
    if records.is_empty() {
        return Err(DataError::EmptyTable);
    }
    Ok(GdscTable { year, records })
}

/// Writes the vaccination columns of `dataset` in the layout
/// [`parse_vaccination_table`] reads.
pub fn write_vaccination_csv<W: Write>(dataset: &YearDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![ID_COLUMN, NAME_COLUMN];
    header.extend(VACCINE_COLUMNS);
    w.write_record(&header)?;
    for row in dataset.rows() {
        let mut rec = vec![row.id.to_string(), row.name.clone()];
        rec.extend(row.vaccination.rates.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes the GDSC columns of `dataset` in the layout [`parse_gdsc_table`]
/// reads.
pub fn write_gdsc_csv<W: Write>(dataset: &YearDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![ID_COLUMN];
    header.extend(GDSC_FEATURES);
    w.write_record(&header)?;
    for row in dataset.rows() {
        let mut rec = vec![row.id.to_string()];
        rec.extend(row.gdsc.numeric.iter().map(|v| v.to_string()));
        rec.push(row.gdsc.rurality.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Result of an inner join. `dropped_*` are only non-empty under
/// `allow_partial`.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinOutcome {
    pub dataset: YearDataset,
    pub dropped_vaccination: Vec<DistrictId>,
    pub dropped_gdsc: Vec<DistrictId>,
}

pub fn join_year(vacc: &VaccinationTable, gdsc: &GdscTable, allow_partial: bool) -> Result<JoinOutcome> {
    if vacc.year != gdsc.year {
        return Err(DataError::YearMismatch(vacc.year, gdsc.year));
    }
    let only_vacc: Vec<DistrictId> = vacc.records.keys().filter(|k| !gdsc.records.contains_key(*k)).cloned().collect();
    let only_gdsc: Vec<DistrictId> = gdsc.records.keys().filter(|k| !vacc.records.contains_key(*k)).cloned().collect();
    if !(only_vacc.is_empty() && only_gdsc.is_empty()) {
        if !allow_partial {
            return Err(DataError::JoinMismatch {
                left: only_vacc.iter().map(ToString::to_string).collect(),
                right: only_gdsc.iter().map(ToString::to_string).collect(),
            });
        }
        log::warn!(
            "year {}: dropping {} vaccination-only and {} gdsc-only districts",
            vacc.year,
            only_vacc.len(),
            only_gdsc.len()
        );
    }
    let rows = vacc
        .records
        .iter()
        .filter_map(|(id, rec)| {
            gdsc.records.get(id).map(|g| DistrictRow {
                id: id.clone(),
                name: rec.name.clone(),
                vaccination: rec.profile.clone(),
                gdsc: g.clone(),
            })
        })
        .collect();
    Ok(JoinOutcome {
        dataset: YearDataset::from_rows(vacc.year, rows)?,
        dropped_vaccination: only_vacc,
        dropped_gdsc: only_gdsc,
    })
}

/// Column-wise z-scored matrix, with the statistics needed to undo it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedMatrix {
    pub values: Vec<Vec<f64>>,
    pub feature_means: Vec<f64>,
    /// Sample standard deviations; 0 marks a constant column.
    pub feature_sds: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl StandardizedMatrix {
    /// Leaves `values` untouched and records identity statistics. Used when
    /// clustering on raw rates.
    pub fn identity(values: Vec<Vec<f64>>, feature_names: Vec<String>) -> Self {
        let d = feature_names.len();
        Self { values, feature_means: vec![0.0; d], feature_sds: vec![1.0; d], feature_names }
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    /// Maps standardized values back to the original scale. Constant
    /// columns come back as their mean.
    pub fn destandardize(&self) -> Vec<Vec<f64>> {
        self.values
            .iter()
            .map(|row| {
                row.iter()
                    .zip(self.feature_means.iter().zip(&self.feature_sds))
                    .map(|(&z, (&m, &s))| z * s + m)
                    .collect()
            })
            .collect()
    }
}

/// Z-scores each column with the sample (n - 1) standard deviation.
pub fn standardize(matrix: &[Vec<f64>], feature_names: &[String]) -> Result<StandardizedMatrix> {
    let n = matrix.len();
    if n < 2 {
        return Err(DataError::TooFewRows(n));
    }
    let d = feature_names.len();
    let mut means = vec![0.0; d];
    let mut sds = vec![0.0; d];
    for j in 0..d {
        let mean = matrix.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = matrix.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        means[j] = mean;
        // A column is constant when every entry equals the first; the mean
        // of such a column can differ from it in the last bit.
        let constant = matrix.iter().all(|r| r[j] == matrix[0][j]);
        sds[j] = if constant { 0.0 } else { var.sqrt() };
    }
    let values = matrix
        .iter()
        .map(|row| (0..d).map(|j| if sds[j] == 0.0 { 0.0 } else { (row[j] - means[j]) / sds[j] }).collect())
        .collect();
    Ok(StandardizedMatrix { values, feature_means: means, feature_sds: sds, feature_names: feature_names.to_vec() })
}
