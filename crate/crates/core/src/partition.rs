//! Quarterly batching, stratified train/validation/test splits and
//! stratified bootstrap replicas.
//!
//! Split and replica memberships are stored as indices into the owning
//! batch's `records`, so a [`SplitBatch`] is always read together with its
//! [`TemporalBatch`].

use std::fmt;
use std::io::Write;

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Record, TemporalDataset};
use crate::error::{Error, Result};
use crate::glm::Samples;

/// Minimum records for a batch to be split.
pub const MIN_BATCH_SIZE: usize = 10;

/// A calendar quarter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Quarter {
    pub year: i32,
    /// 1..=4
    pub quarter: u8,
}

impl Quarter {
    pub fn new(year: i32, quarter: u8) -> Self {
        assert!((1..=4).contains(&quarter), "quarter must be 1..=4");
        Self { year, quarter }
    }

    pub fn of(date: NaiveDate) -> Self {
        Self::new(date.year(), ((date.month0() / 3) + 1) as u8)
    }

    pub fn next(self) -> Self {
        if self.quarter == 4 {
            Self::new(self.year + 1, 1)
        } else {
            Self::new(self.year, self.quarter + 1)
        }
    }

    pub fn prev(self) -> Self {
        if self.quarter == 1 {
            Self::new(self.year - 1, 4)
        } else {
            Self::new(self.year, self.quarter - 1)
        }
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, u32::from(self.quarter - 1) * 3 + 1, 1)
            .expect("quarter start is a valid date")
    }

    pub fn last_day(self) -> NaiveDate {
        self.next().first_day().pred_opt().expect("date has a predecessor")
    }

    pub fn num_days(self) -> i64 {
        (self.next().first_day() - self.first_day()).num_days()
    }

    pub fn label(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-Q{}", self.year, self.quarter)
    }
}

/// One quarterly "temporal experience".
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalBatch {
    pub index: usize,
    pub quarter: Quarter,
    pub records: Vec<Record>,
    /// Position of each record in the source dataset.
    pub record_ids: Vec<usize>,
}

impl TemporalBatch {
    pub fn period_label(&self) -> String {
        self.quarter.label()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = u8> + '_ {
        self.records.iter().map(|r| r.label)
    }
}

/// Assign every record to its calendar quarter. Quarters inside the range
/// that hold no records are kept as empty batches.
pub fn batch_by_quarter(dataset: &TemporalDataset) -> Vec<TemporalBatch> {
    let records = dataset.records();
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let last = records.last().expect("non-empty");
    let mut batches = Vec::new();
    let mut quarter = Quarter::of(first.timestamp);
    let end = Quarter::of(last.timestamp);
    loop {
        batches.push(TemporalBatch {
            index: batches.len(),
            quarter,
            records: Vec::new(),
            record_ids: Vec::new(),
        });
        if quarter == end {
            break;
        }
        quarter = quarter.next();
    }
    let start = Quarter::of(first.timestamp);
    for (id, r) in records.iter().enumerate() {
        let q = Quarter::of(r.timestamp);
        let offset = (q.year - start.year) * 4 + i32::from(q.quarter) - i32::from(start.quarter);
        let b = &mut batches[offset as usize];
        b.records.push(r.clone());
        b.record_ids.push(id);
    }
    batches
}

/// A bootstrap resample of the pure-train set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replica {
    pub replica_id: usize,
    /// Batch record indices, drawn with replacement within each class.
    pub indices: Vec<usize>,
}

/// Stratified partition of one batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitBatch {
    pub batch_index: usize,
    pub test: Vec<usize>,
    pub validation: Vec<usize>,
    pub pure_train: Vec<usize>,
    pub replicas: Vec<Replica>,
}

impl SplitBatch {
    pub fn test_samples(&self, batch: &TemporalBatch) -> Samples {
        samples_at(batch, &self.test)
    }

    pub fn validation_samples(&self, batch: &TemporalBatch) -> Samples {
        samples_at(batch, &self.validation)
    }

    pub fn replica_samples(&self, batch: &TemporalBatch, replica_id: usize) -> Result<Samples> {
        let replica = self.replicas.get(replica_id).ok_or(Error::MissingReplica {
            replica: replica_id,
            batch: self.batch_index,
        })?;
        Ok(samples_at(batch, &replica.indices))
    }
}

fn samples_at(batch: &TemporalBatch, indices: &[usize]) -> Samples {
    let dim = batch.records.first().map_or(0, |r| r.features.len());
    Samples::from_records(indices.iter().map(|&i| &batch.records[i]), dim)
}

/// A batch together with its split, or the reason it could not be split.
#[derive(Debug, Clone)]
pub struct PartitionedBatch {
    pub batch: TemporalBatch,
    pub split: Option<SplitBatch>,
    pub skip_reason: Option<String>,
}

impl PartitionedBatch {
    pub fn index(&self) -> usize {
        self.batch.index
    }
}

/// Split every batch with its own seed; unsplittable batches are flagged, not
/// dropped.
pub fn partition_all(
    batches: Vec<TemporalBatch>,
    seed_for: impl Fn(usize) -> u64,
    b_replicas: usize,
) -> Vec<PartitionedBatch> {
    batches
        .into_iter()
        .map(|batch| match split_batch(&batch, seed_for(batch.index), b_replicas) {
            Ok(split) => PartitionedBatch {
                batch,
                split: Some(split),
                skip_reason: None,
            },
            Err(e) => PartitionedBatch {
                batch,
                split: None,
                skip_reason: Some(e.to_string()),
            },
        })
        .collect()
}

/// `round(n * num / den)`, halves rounded up.
fn round_share(n: usize, num: usize, den: usize) -> usize {
    (2 * n * num + den) / (2 * den)
}

/// Hamilton (largest-remainder) apportionment of `total` over `counts`.
/// Equal remainders favour the lower class index.
pub fn largest_remainder(total: usize, counts: &[usize]) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return vec![0; counts.len()];
    }
    let mut shares: Vec<usize> = counts.iter().map(|&c| total * c / n).collect();
    let assigned: usize = shares.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = total * counts[a] % n;
        let rb = total * counts[b] % n;
        rb.cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total - assigned) {
        shares[i] += 1;
    }
    shares
}

/// Stratified 80/20 test split, a 70/30 pure-train/validation split of the
/// remainder, and `b_replicas` stratified bootstraps of the pure-train set.
pub fn split_batch(batch: &TemporalBatch, seed: u64, b_replicas: usize) -> Result<SplitBatch> {
    let n = batch.len();
    if n < MIN_BATCH_SIZE {
        return Err(Error::BatchTooSmall {
            batch: batch.index,
            len: n,
            min: MIN_BATCH_SIZE,
        });
    }
    let mut strata: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, label) in batch.labels().enumerate() {
        strata[usize::from(label)].push(i);
    }
    if strata.iter().any(Vec::is_empty) {
        return Err(Error::CannotStratify {
            batch: batch.index,
            reason: "single-class batch".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in &mut strata {
        s.shuffle(&mut rng);
    }
    let counts = [strata[0].len(), strata[1].len()];
    let test_counts = largest_remainder(round_share(n, 1, 5), &counts);
    let remaining = [counts[0] - test_counts[0], counts[1] - test_counts[1]];
    let val_counts = largest_remainder(round_share(n - test_counts.iter().sum::<usize>(), 3, 10), &remaining);

    let mut test = Vec::new();
    let mut validation = Vec::new();
    let mut pure_train = Vec::new();
    for c in 0..2 {
        let s = &strata[c];
        test.extend_from_slice(&s[..test_counts[c]]);
        validation.extend_from_slice(&s[test_counts[c]..test_counts[c] + val_counts[c]]);
        pure_train.extend_from_slice(&s[test_counts[c] + val_counts[c]..]);
    }
    test.sort_unstable();
    validation.sort_unstable();
    pure_train.sort_unstable();

    let labels: Vec<u8> = pure_train.iter().map(|&i| batch.records[i].label).collect();
    let replicas =
        bootstrap_replicas(&pure_train, &labels, b_replicas, rng.random()).map_err(|e| Error::CannotStratify {
            batch: batch.index,
            reason: e.to_string(),
        })?;
    Ok(SplitBatch {
        batch_index: batch.index,
        test,
        validation,
        pure_train,
        replicas,
    })
}

/// Stratified bootstrap: each replica resamples every class stratum with
/// replacement, keeping per-class counts. Replica `r` uses ChaCha stream `r`
/// of `seed`, so parallel and sequential generation agree.
pub fn bootstrap_replicas(pure_train: &[usize], labels: &[u8], b: usize, seed: u64) -> Result<Vec<Replica>> {
    if pure_train.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: pure_train.len(),
            got: labels.len(),
        });
    }
    let mut strata: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (&idx, &label) in pure_train.iter().zip(labels) {
        strata[usize::from(label.min(1))].push(idx);
    }
    if let Some(c) = strata.iter().position(Vec::is_empty) {
        return Err(Error::InvalidInput(format!("empty class-{c} stratum")));
    }
    Ok((0..b)
        .into_par_iter()
        .map(|replica_id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(replica_id as u64);
            let mut indices = Vec::with_capacity(pure_train.len());
            for s in &strata {
                indices.extend((0..s.len()).map(|_| s[rng.random_range(0..s.len())]));
            }
            Replica { replica_id, indices }
        })
        .collect())
}

/// Audit export: `record_id,batch,role,replica_id`. Replica rows repeat a
/// record once per draw.
pub fn write_split_manifest<W: Write>(writer: W, batches: &[PartitionedBatch]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["record_id", "batch", "role", "replica_id"])?;
    for pb in batches {
        let Some(split) = &pb.split else { continue };
        let ids = &pb.batch.record_ids;
        let batch = pb.batch.index.to_string();
        for (role, idx) in [
            ("test", &split.test),
            ("validation", &split.validation),
            ("pure_train", &split.pure_train),
        ] {
            for &i in idx {
                w.write_record([ids[i].to_string().as_str(), &batch, role, ""])?;
            }
        }
        for rep in &split.replicas {
            let rid = rep.replica_id.to_string();
            for &i in &rep.indices {
                w.write_record([ids[i].to_string().as_str(), &batch, "replica", &rid])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<split manifest>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_simulated, SimConfig};
    use std::collections::HashSet;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn batch_with(labels: &[u8]) -> TemporalBatch {
        let records: Vec<Record> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| Record::new(d(2020, 1, 1), l, vec![i as f64]))
            .collect();
        TemporalBatch {
            index: 0,
            quarter: Quarter::new(2020, 1),
            record_ids: (0..records.len()).collect(),
            records,
        }
    }

    fn class_counts(batch: &TemporalBatch, idx: &[usize]) -> [usize; 2] {
        let mut c = [0, 0];
        for &i in idx {
            c[usize::from(batch.records[i].label)] += 1;
        }
        c
    }

    #[test]
    fn quarter_boundaries() {
        assert_eq!(Quarter::of(d(2020, 3, 31)).label(), "2020-Q1");
        assert_eq!(Quarter::of(d(2020, 4, 1)).label(), "2020-Q2");
        assert_eq!(Quarter::of(d(2020, 12, 31)).label(), "2020-Q4");
        assert_eq!(Quarter::new(2020, 4).next(), Quarter::new(2021, 1));
        assert_eq!(Quarter::new(2020, 1).num_days(), 91);
    }

    #[test]
    fn single_quarter_dataset_gives_one_batch() {
        let ds = TemporalDataset::new(
            vec![
                Record::new(d(2020, 1, 5), 0, vec![0.0]),
                Record::new(d(2020, 3, 31), 1, vec![1.0]),
            ],
            1,
            (d(2020, 1, 1), d(2020, 12, 31)),
        )
        .unwrap();
        let b = batch_by_quarter(&ds);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].len(), 2);
    }

    #[test]
    fn gaps_are_kept_as_empty_batches() {
        let ds = TemporalDataset::new(
            vec![
                Record::new(d(2020, 1, 5), 0, vec![0.0]),
                Record::new(d(2020, 10, 1), 1, vec![1.0]),
            ],
            1,
            (d(2020, 1, 1), d(2020, 12, 31)),
        )
        .unwrap();
        let b = batch_by_quarter(&ds);
        assert_eq!(b.len(), 4);
        assert!(b[1].is_empty() && b[2].is_empty());
        assert_eq!(b[3].period_label(), "2020-Q4");
    }

    #[test]
    fn four_simulated_years_give_sixteen_batches() {
        let ds = generate_simulated(&SimConfig {
            samples_per_quarter: 20,
            ..SimConfig::default()
        })
        .unwrap();
        let b = batch_by_quarter(&ds);
        assert_eq!(b.len(), 16);
        assert!(b.iter().all(|x| x.len() == 20));
        assert_eq!(b[15].period_label(), "2023-Q4");
    }

    #[test]
    fn balanced_hundred_split_sizes() {
        let labels: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        let batch = batch_with(&labels);
        let s = split_batch(&batch, 1, 100).unwrap();
        assert_eq!(class_counts(&batch, &s.test), [10, 10]);
        assert_eq!(class_counts(&batch, &s.validation), [12, 12]);
        assert_eq!(class_counts(&batch, &s.pure_train), [28, 28]);
        assert_eq!(s.replicas.len(), 100);
        assert!(s.replicas.iter().all(|r| r.indices.len() == 56));
    }

    #[test]
    fn largest_remainder_rounding() {
        // 33 of 3:7 => quotas 9.9 / 23.1
        assert_eq!(largest_remainder(33, &[30, 70]), vec![10, 23]);
        assert_eq!(largest_remainder(3, &[1, 1]), vec![2, 1]);
        assert_eq!(largest_remainder(0, &[5, 5]), vec![0, 0]);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let labels: Vec<u8> = (0..137).map(|i| u8::from(i % 3 == 0)).collect();
        let batch = batch_with(&labels);
        let a = split_batch(&batch, 9, 10).unwrap();
        assert_eq!(a, split_batch(&batch, 9, 10).unwrap());
        assert_ne!(a.test, split_batch(&batch, 10, 10).unwrap().test);
        let test: HashSet<_> = a.test.iter().collect();
        assert!(a.validation.iter().all(|i| !test.contains(i)));
        assert!(a.pure_train.iter().all(|i| !test.contains(i)));
        for r in &a.replicas {
            assert!(r.indices.iter().all(|i| !test.contains(i)));
            assert_eq!(class_counts(&batch, &r.indices), class_counts(&batch, &a.pure_train));
        }
        assert_eq!(a.test.len() + a.validation.len() + a.pure_train.len(), 137);
    }

    #[test]
    fn single_class_batch_cannot_stratify() {
        let batch = batch_with(&[1; 20]);
        assert!(matches!(split_batch(&batch, 0, 1), Err(Error::CannotStratify { .. })));
    }

    #[test]
    fn tiny_batch_is_rejected() {
        let batch = batch_with(&[0, 1, 0, 1]);
        assert!(matches!(split_batch(&batch, 0, 1), Err(Error::BatchTooSmall { .. })));
    }

    #[test]
    fn bootstrap_keeps_class_counts() {
        let idx: Vec<usize> = (0..100).collect();
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i >= 30)).collect();
        let reps = bootstrap_replicas(&idx, &labels, 1, 5).unwrap();
        assert_eq!(reps.len(), 1);
        let ones = reps[0].indices.iter().filter(|&&i| i >= 30).count();
        assert_eq!((100 - ones, ones), (30, 70));
    }

    #[test]
    fn bootstrap_zero_replicas_is_empty() {
        let idx: Vec<usize> = (0..4).collect();
        assert!(bootstrap_replicas(&idx, &[0, 1, 0, 1], 0, 1).unwrap().is_empty());
    }

    #[test]
    fn bootstrap_empty_stratum_errors() {
        let idx: Vec<usize> = (0..4).collect();
        assert!(bootstrap_replicas(&idx, &[1, 1, 1, 1], 3, 1).is_err());
    }

    #[test]
    fn bootstrap_distinct_fraction_near_one_minus_inv_e() {
        // Monte-Carlo oracle: a with-replacement draw of n from n covers
        // 1 - (1 - 1/n)^n ~ 1 - 1/e of the items.
        let n = 200;
        let idx: Vec<usize> = (0..n).collect();
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 0)).collect();
        let reps = bootstrap_replicas(&idx, &labels, 500, 77).unwrap();
        let mean: f64 = reps
            .iter()
            .map(|r| r.indices.iter().collect::<HashSet<_>>().len() as f64 / n as f64)
            .sum::<f64>()
            / reps.len() as f64;
        let expected = 1.0 - (-1.0f64).exp();
        assert!((mean - expected).abs() < 0.02, "{mean}");
    }

    #[test]
    fn parallel_bootstrap_matches_sequential() {
        let idx: Vec<usize> = (0..60).collect();
        let labels: Vec<u8> = (0..60).map(|i| u8::from(i % 4 == 0)).collect();
        let all = bootstrap_replicas(&idx, &labels, 8, 3).unwrap();
        for r in 0..8 {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            rng.set_stream(r as u64);
            let strata: Vec<Vec<usize>> = (0..2)
                .map(|c| idx.iter().copied().filter(|&i| usize::from(labels[i]) == c).collect())
                .collect();
            let mut expect = Vec::new();
            for s in &strata {
                expect.extend((0..s.len()).map(|_| s[rng.random_range(0..s.len())]));
            }
            assert_eq!(all[r].indices, expect);
        }
    }

    #[test]
    fn split_manifest_lists_every_role() {
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let batch = batch_with(&labels);
        let pb = partition_all(vec![batch], |_| 4, 2);
        let mut buf = Vec::new();
        write_split_manifest(&mut buf, &pb).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "record_id,batch,role,replica_id");
        let split = pb[0].split.as_ref().unwrap();
        assert_eq!(lines.len(), 1 + 20 + 2 * split.pure_train.len());
    }
}
