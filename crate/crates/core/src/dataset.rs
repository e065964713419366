//! Temporal datasets: the simulated drift generator, CSV ingestion with
//! signed feature hashing, and record-level quality control.

use std::collections::{BTreeSet, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Quarter;
use crate::seed::fnv1a64;

/// One labeled observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub timestamp: NaiveDate,
    pub label: u8,
    pub features: Vec<f64>,
}

impl Record {
    pub fn new(timestamp: NaiveDate, label: u8, features: Vec<f64>) -> Self {
        Self {
            timestamp,
            label,
            features,
        }
    }

    fn dedupe_key(&self) -> (NaiveDate, u8, Vec<u64>) {
        (
            self.timestamp,
            self.label,
            self.features.iter().map(|v| v.to_bits()).collect(),
        )
    }
}

/// Records sorted by timestamp, all sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalDataset {
    records: Vec<Record>,
    feature_dim: usize,
    date_range: (NaiveDate, NaiveDate),
}

impl TemporalDataset {
    /// Validates labels and dimensions and sorts records by timestamp (stable).
    ///
    /// Non-finite features and out-of-range dates are tolerated here; they are
    /// what [`clean`] removes.
    pub fn new(mut records: Vec<Record>, feature_dim: usize, date_range: (NaiveDate, NaiveDate)) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::NoUsableRecords);
        }
        if feature_dim == 0 {
            return Err(Error::config("feature_dim", "must be positive"));
        }
        if date_range.0 > date_range.1 {
            return Err(Error::config("date_range", "start after end"));
        }
        for r in &records {
            if r.label > 1 {
                return Err(Error::InvalidInput(format!("label {} not in {{0,1}}", r.label)));
            }
            if r.features.len() != feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: feature_dim,
                    got: r.features.len(),
                });
            }
        }
        records.sort_by_key(|r| r.timestamp);
        Ok(Self {
            records,
            feature_dim,
            date_range,
        })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn date_range(&self) -> (NaiveDate, NaiveDate) {
        self.date_range
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Parameters of the two-Gaussian drift simulation.
///
/// Class 1 is drawn around `mu1`, class 0 around `mu2`; both means and the
/// class-1 prior move linearly from their start to their end value across
/// the quarters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub years: u32,
    pub quarters_per_year: u32,
    pub samples_per_quarter: usize,
    pub mu1_start: f64,
    pub mu1_end: f64,
    pub mu2_start: f64,
    pub mu2_end: f64,
    pub sigma: f64,
    pub prior_start: f64,
    pub prior_end: f64,
    pub seed: u64,
    pub start_year: i32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            years: 4,
            quarters_per_year: 4,
            samples_per_quarter: 2000,
            mu1_start: -2.0,
            mu1_end: 2.0,
            mu2_start: 2.0,
            mu2_end: -2.0,
            sigma: 1.0,
            prior_start: 0.4,
            prior_end: 0.6,
            seed: 42,
            start_year: 2020,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.years < 1 {
            return Err(Error::config("years", "must be at least 1"));
        }
        if self.quarters_per_year != 4 {
            return Err(Error::config("quarters_per_year", "must be 4"));
        }
        if self.samples_per_quarter == 0 {
            return Err(Error::config("samples_per_quarter", "must be positive"));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::config("sigma", format!("must be > 0, got {}", self.sigma)));
        }
        for (name, p) in [("prior_start", self.prior_start), ("prior_end", self.prior_end)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::config(name, format!("must lie in (0,1), got {p}")));
            }
        }
        for (name, m) in [
            ("mu1_start", self.mu1_start),
            ("mu1_end", self.mu1_end),
            ("mu2_start", self.mu2_start),
            ("mu2_end", self.mu2_end),
        ] {
            if !m.is_finite() {
                return Err(Error::config(name, "must be finite"));
            }
        }
        Ok(())
    }

    pub fn quarters(&self) -> usize {
        (self.years * self.quarters_per_year) as usize
    }

    /// Position of quarter `q` on the unit interval.
    pub fn tau(&self, q: usize) -> f64 {
        let n = self.quarters();
        if n <= 1 {
            0.0
        } else {
            q as f64 / (n - 1) as f64
        }
    }

    /// Class means `(class 1, class 0)` at `tau`.
    pub fn means_at(&self, tau: f64) -> (f64, f64) {
        (
            self.mu1_start + tau * (self.mu1_end - self.mu1_start),
            self.mu2_start + tau * (self.mu2_end - self.mu2_start),
        )
    }

    pub fn prior_at(&self, tau: f64) -> f64 {
        self.prior_start + tau * (self.prior_end - self.prior_start)
    }
}

/// Generate the one-feature simulated dataset.
pub fn generate_simulated(config: &SimConfig) -> Result<TemporalDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let first = Quarter::new(config.start_year, 1);
    let n = config.samples_per_quarter;
    let mut records = Vec::with_capacity(config.quarters() * n);
    let mut quarter = first;
    for q in 0..config.quarters() {
        let tau = config.tau(q);
        let (mu1, mu0) = config.means_at(tau);
        let prior = config.prior_at(tau);
        let start = quarter.first_day();
        let days = quarter.num_days() as usize;
        for i in 0..n {
            let label = u8::from(rng.random::<f64>() < prior);
            let z: f64 = rng.sample(StandardNormal);
            let mean = if label == 1 { mu1 } else { mu0 };
            let offset = (i * days / n) as i64;
            records.push(Record::new(
                start + Duration::days(offset),
                label,
                vec![mean + config.sigma * z],
            ));
        }
        quarter = quarter.next();
    }
    let last = quarter.prev().last_day();
    TemporalDataset::new(records, 1, (first.first_day(), last))
}

fn default_date_format() -> String {
    "%Y-%m-%d".to_string()
}

fn default_hash_dim() -> usize {
    100
}

fn default_min_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date")
}

fn default_max_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2025, 12, 31).expect("valid date")
}

/// Column mapping for external CSV data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSchema {
    pub date_column: String,
    #[serde(default = "default_date_format")]
    pub date_format: String,
    pub label_column: String,
    pub positive_label_values: BTreeSet<String>,
    pub categorical_columns: Vec<String>,
    #[serde(default = "default_hash_dim")]
    pub hash_dim: usize,
    /// Plausible date window; rows outside it are dropped.
    #[serde(default = "default_min_date")]
    pub min_date: NaiveDate,
    #[serde(default = "default_max_date")]
    pub max_date: NaiveDate,
}

impl IngestSchema {
    pub fn validate(&self) -> Result<()> {
        if self.hash_dim == 0 {
            return Err(Error::config("hash_dim", "must be at least 1"));
        }
        if self.min_date > self.max_date {
            return Err(Error::config("min_date", "after max_date"));
        }
        let mut seen = HashSet::new();
        let all = [&self.date_column, &self.label_column]
            .into_iter()
            .chain(self.categorical_columns.iter());
        for col in all {
            if col.trim().is_empty() {
                return Err(Error::config("columns", "column names must be non-empty"));
            }
            if !seen.insert(col.as_str()) {
                return Err(Error::config("columns", format!("duplicate column '{col}'")));
            }
        }
        Ok(())
    }
}

/// Rows discarded while reading a CSV file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestDrops {
    pub missing_label: usize,
    pub bad_date: usize,
    pub out_of_range_date: usize,
}

impl IngestDrops {
    pub fn total(&self) -> usize {
        self.missing_label + self.bad_date + self.out_of_range_date
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: TemporalDataset,
    pub dropped: IngestDrops,
}

impl Ingested {
    pub fn dropped_count(&self) -> usize {
        self.dropped.total()
    }
}

fn is_missing(value: &str) -> bool {
    let v = value.trim();
    v.is_empty() || v.eq_ignore_ascii_case("nan") || v.eq_ignore_ascii_case("na")
}

/// Read a CSV file into a hashed-feature dataset.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &IngestSchema) -> Result<Ingested> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, schema)
}

/// [`ingest_csv`] over any reader.
pub fn ingest_reader<R: Read>(reader: R, schema: &IngestSchema) -> Result<Ingested> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    };
    let date_idx = col(&schema.date_column)?;
    let label_idx = col(&schema.label_column)?;
    let cat_idx: Vec<(usize, &str)> = schema
        .categorical_columns
        .iter()
        .map(|c| col(c).map(|i| (i, c.as_str())))
        .collect::<Result<_>>()?;

    let mut drops = IngestDrops::default();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let label_raw = row.get(label_idx).unwrap_or("");
        if is_missing(label_raw) {
            drops.missing_label += 1;
            continue;
        }
        let Ok(date) = NaiveDate::parse_from_str(row.get(date_idx).unwrap_or("").trim(), &schema.date_format) else {
            drops.bad_date += 1;
            continue;
        };
        if date < schema.min_date || date > schema.max_date {
            drops.out_of_range_date += 1;
            continue;
        }
        let label = u8::from(schema.positive_label_values.contains(label_raw.trim()));
        let features = hash_features(
            cat_idx.iter().map(|&(i, name)| (name, row.get(i).unwrap_or(""))),
            schema.hash_dim,
        );
        records.push(Record::new(date, label, features));
    }
    if records.is_empty() {
        return Err(Error::NoUsableRecords);
    }
    let dataset = TemporalDataset::new(records, schema.hash_dim, (schema.min_date, schema.max_date))?;
    Ok(Ingested {
        dataset,
        dropped: drops,
    })
}

/// Signed feature hashing of `column=value` pairs into `dim` coordinates.
///
/// Each pair is hashed with FNV-1a 64; the index is `h mod dim` and the top
/// bit selects the sign. Empty or NA values contribute nothing.
pub fn hash_features<I, K, V>(values: I, dim: usize) -> Vec<f64>
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    let mut out = vec![0.0; dim];
    if dim == 0 {
        return out;
    }
    for (column, value) in values {
        let value = value.as_ref();
        if is_missing(value) {
            continue;
        }
        let key = format!("{}={}", column.as_ref(), value);
        let h = fnv1a64(key.as_bytes());
        let index = (h % dim as u64) as usize;
        out[index] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
    out
}

/// Counts of records removed by [`clean`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanStats {
    pub duplicate_count: usize,
    /// Records carrying NaN or infinite feature values.
    pub incomplete_count: usize,
    pub out_of_range_count: usize,
}

impl CleanStats {
    pub fn total(&self) -> usize {
        self.duplicate_count + self.incomplete_count + self.out_of_range_count
    }
}

/// Drop exact duplicates (first kept), incomplete records and records outside
/// the dataset's date range. Survivors keep their order.
pub fn clean(dataset: &TemporalDataset) -> Result<(TemporalDataset, CleanStats)> {
    let (lo, hi) = dataset.date_range;
    let mut stats = CleanStats::default();
    let mut seen = HashSet::new();
    let mut kept = Vec::with_capacity(dataset.len());
    for r in &dataset.records {
        if r.features.iter().any(|v| !v.is_finite()) {
            stats.incomplete_count += 1;
        } else if r.timestamp < lo || r.timestamp > hi {
            stats.out_of_range_count += 1;
        } else if !seen.insert(r.dedupe_key()) {
            stats.duplicate_count += 1;
        } else {
            kept.push(r.clone());
        }
    }
    if kept.is_empty() {
        return Err(Error::NoUsableRecords);
    }
    let cleaned = TemporalDataset::new(kept, dataset.feature_dim, dataset.date_range)?;
    Ok((cleaned, stats))
}

fn feature_headers(dim: usize) -> Vec<String> {
    if dim == 1 {
        vec!["x".to_string()]
    } else {
        (0..dim).map(|i| format!("x{i}")).collect()
    }
}

/// Write `timestamp,label,x` (or `x0..x{D-1}`) rows.
pub fn write_dataset_csv<W: Write>(dataset: &TemporalDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_string(), "label".to_string()];
    header.extend(feature_headers(dataset.feature_dim));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for r in &dataset.records {
        row.clear();
        row.push(r.timestamp.format("%Y-%m-%d").to_string());
        row.push(r.label.to_string());
        row.extend(r.features.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<dataset csv>", e))?;
    Ok(())
}

/// Read a file written by [`write_dataset_csv`]. The date range spans the
/// calendar quarters covered by the records.
pub fn read_dataset_csv<R: Read>(reader: R) -> Result<TemporalDataset> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "timestamp" || &headers[1] != "label" {
        return Err(Error::Schema(
            "dataset header must start with timestamp,label and have a feature column".into(),
        ));
    }
    let dim = headers.len() - 2;
    let mut records = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::Parse(format!("dataset row {}: bad {what}", line + 1));
        let ts = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d").map_err(|_| bad("timestamp"))?;
        let label: u8 = row[1].parse().map_err(|_| bad("label"))?;
        let features = (2..row.len())
            .map(|i| row[i].parse::<f64>().map_err(|_| bad("feature")))
            .collect::<Result<Vec<_>>>()?;
        records.push(Record::new(ts, label, features));
    }
    let first = records
        .iter()
        .map(|r| r.timestamp)
        .min()
        .ok_or(Error::NoUsableRecords)?;
    let last = records
        .iter()
        .map(|r| r.timestamp)
        .max()
        .ok_or(Error::NoUsableRecords)?;
    let range = (Quarter::of(first).first_day(), Quarter::of(last).last_day());
    TemporalDataset::new(records, dim, range)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn reference_fnv(s: &str) -> u64 {
        let mut h: u64 = 14695981039346656037;
        for b in s.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(1099511628211);
        }
        h
    }

    #[test]
    fn midpoint_means_coincide() {
        let cfg = SimConfig::default();
        assert_eq!(cfg.quarters(), 16);
        let (m1, m0) = cfg.means_at(0.5);
        assert_eq!(m1, 0.0);
        assert_eq!(m0, 0.0);
    }

    #[test]
    fn separation_is_maximal_at_the_ends() {
        let cfg = SimConfig::default();
        let sep = |tau: f64| {
            let (a, b) = cfg.means_at(tau);
            (a - b).abs() / cfg.sigma
        };
        for i in 1..100 {
            let tau = i as f64 / 100.0;
            assert!(sep(tau) <= sep(0.0) && sep(tau) <= sep(1.0));
        }
        assert_eq!(sep(0.5), 0.0);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SimConfig {
            samples_per_quarter: 50,
            ..SimConfig::default()
        };
        let a = generate_simulated(&cfg).unwrap();
        let b = generate_simulated(&cfg).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        write_dataset_csv(&a, &mut ba).unwrap();
        write_dataset_csv(&b, &mut bb).unwrap();
        assert_eq!(ba, bb);
        assert_eq!(a.len(), 16 * 50);
    }

    #[test]
    fn empirical_prior_tracks_programmed_prior() {
        let cfg = SimConfig {
            samples_per_quarter: 1000,
            prior_start: 0.4,
            prior_end: 0.6,
            ..SimConfig::default()
        };
        let data = generate_simulated(&cfg).unwrap();
        let n = cfg.samples_per_quarter;
        for q in 0..cfg.quarters() {
            let chunk = &data.records()[q * n..(q + 1) * n];
            let p_hat = chunk.iter().filter(|r| r.label == 1).count() as f64 / n as f64;
            let p = cfg.prior_at(cfg.tau(q));
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((p_hat - p).abs() < 4.0 * se, "quarter {q}: {p_hat} vs {p}");
        }
    }

    #[test]
    fn timestamps_stay_inside_their_quarter() {
        let cfg = SimConfig {
            samples_per_quarter: 97,
            ..SimConfig::default()
        };
        let data = generate_simulated(&cfg).unwrap();
        let mut q = Quarter::new(2020, 1);
        for chunk in data.records().chunks(97) {
            assert!(chunk.iter().all(|r| Quarter::of(r.timestamp) == q));
            q = q.next();
        }
    }

    #[test]
    fn invalid_sigma_is_rejected_by_name() {
        let cfg = SimConfig {
            sigma: 0.0,
            ..SimConfig::default()
        };
        match generate_simulated(&cfg) {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "sigma"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hashing_empty_map_is_zero() {
        let v = hash_features(Vec::<(&str, &str)>::new(), 10);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn hashing_matches_reference_fnv() {
        let v = hash_features([("sex", "F")], 100);
        let h = reference_fnv("sex=F");
        let idx = (h % 100) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        // frozen from an independent FNV-1a run
        assert_eq!(idx, 12);
        assert_eq!(sign, 1.0);
        for (i, &x) in v.iter().enumerate() {
            assert_eq!(x, if i == idx { sign } else { 0.0 });
        }
        assert_eq!(v, hash_features([("sex", "F")], 100));
    }

    #[test]
    fn hashing_skips_missing_values() {
        let v = hash_features([("a", ""), ("b", "NaN"), ("c", "x")], 16);
        assert_eq!(v.iter().filter(|x| **x != 0.0).count(), 1);
    }

    fn small_schema() -> IngestSchema {
        IngestSchema {
            date_column: "date".into(),
            date_format: default_date_format(),
            label_column: "result".into(),
            positive_label_values: ["1".to_string()].into_iter().collect(),
            categorical_columns: vec!["sex".into(), "region".into()],
            hash_dim: 8,
            min_date: default_min_date(),
            max_date: default_max_date(),
        }
    }

    #[test]
    fn ingest_drops_missing_labels() {
        let csv = "date,result,sex,region\n2020-01-02,1,F,N\n2020-01-03,,M,S\n2020-02-01,0,M,\n";
        let out = ingest_reader(csv.as_bytes(), &small_schema()).unwrap();
        assert_eq!(out.dataset.len(), 2);
        assert_eq!(out.dropped_count(), 1);
        assert_eq!(out.dropped.missing_label, 1);
        assert_eq!(out.dataset.records()[0].label, 1);
        assert_eq!(out.dataset.records()[1].label, 0);
    }

    #[test]
    fn ingest_drops_implausible_dates() {
        let csv = "date,result,sex,region\n1900-01-02,1,F,N\n2020-13-40,1,F,N\n2021-05-05,1,F,N\n";
        let out = ingest_reader(csv.as_bytes(), &small_schema()).unwrap();
        assert_eq!(out.dataset.len(), 1);
        assert_eq!(out.dropped.out_of_range_date, 1);
        assert_eq!(out.dropped.bad_date, 1);
    }

    #[test]
    fn ingest_requires_schema_columns() {
        let csv = "date,result,sex\n2020-01-02,1,F\n";
        assert!(matches!(
            ingest_reader(csv.as_bytes(), &small_schema()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn ingest_then_clean_dedupes_identical_rows() {
        let csv = "date,result,sex,region\n2020-01-02,1,F,N\n2020-01-02,1,F,N\n";
        let out = ingest_reader(csv.as_bytes(), &small_schema()).unwrap();
        assert_eq!(out.dataset.len(), 2);
        let (cleaned, stats) = clean(&out.dataset).unwrap();
        assert_eq!(cleaned.len(), 1);
        assert_eq!(stats.duplicate_count, 1);
    }

    fn toy(records: Vec<Record>) -> TemporalDataset {
        TemporalDataset::new(records, 1, (d(2020, 1, 1), d(2020, 12, 31))).unwrap()
    }

    #[test]
    fn clean_on_clean_data_is_identity() {
        let data = toy(vec![
            Record::new(d(2020, 1, 1), 0, vec![1.0]),
            Record::new(d(2020, 2, 1), 1, vec![2.0]),
        ]);
        let (c, stats) = clean(&data).unwrap();
        assert_eq!(c, data);
        assert_eq!(stats, CleanStats::default());
    }

    #[test]
    fn clean_removes_duplicates_keeping_first() {
        let data = toy(vec![
            Record::new(d(2020, 1, 1), 0, vec![1.0]),
            Record::new(d(2020, 1, 1), 0, vec![1.0]),
            Record::new(d(2020, 2, 1), 1, vec![2.0]),
            Record::new(d(2020, 3, 1), 1, vec![3.0]),
            Record::new(d(2020, 4, 1), 0, vec![4.0]),
        ]);
        let (c, stats) = clean(&data).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(stats.duplicate_count, 1);
        let (cc, stats2) = clean(&c).unwrap();
        assert_eq!(cc, c);
        assert_eq!(stats2.total(), 0);
    }

    #[test]
    fn clean_drops_incomplete_and_out_of_range() {
        let data = toy(vec![
            Record::new(d(2020, 1, 1), 0, vec![f64::NAN]),
            Record::new(d(2021, 1, 1), 0, vec![1.0]),
            Record::new(d(2020, 6, 1), 1, vec![2.0]),
        ]);
        let (c, stats) = clean(&data).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(stats.incomplete_count, 1);
        assert_eq!(stats.out_of_range_count, 1);
    }

    #[test]
    fn clean_of_nothing_usable_errors() {
        let data = toy(vec![Record::new(d(2020, 1, 1), 0, vec![f64::NAN])]);
        assert!(matches!(clean(&data), Err(Error::NoUsableRecords)));
    }

    #[test]
    fn dataset_csv_round_trip() {
        let cfg = SimConfig {
            samples_per_quarter: 20,
            ..SimConfig::default()
        };
        let data = generate_simulated(&cfg).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&data, &mut buf).unwrap();
        let back = read_dataset_csv(buf.as_slice()).unwrap();
        assert_eq!(back, data);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn hashed_vector_is_sparse_and_integral(
                pairs in proptest::collection::vec(("[a-z]{1,6}", "[A-Za-z0-9]{1,6}"), 0..12),
                dim in 1usize..64,
            ) {
                let v = hash_features(pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())), dim);
                let k = pairs.len() as f64;
                prop_assert!(v.iter().filter(|x| **x != 0.0).count() <= pairs.len());
                for x in v {
                    prop_assert_eq!(x.fract(), 0.0);
                    prop_assert!(x.abs() <= k);
                }
            }
        }
    }
}
