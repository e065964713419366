//! Unsupervised temporal-variability characterization.
//!
//! Each batch is summarised by a histogram on bin edges shared by all
//! batches. Batches are compared with the Jensen-Shannon distance (base-2,
//! so values lie in `[0, 1]`), and the distance matrix is embedded in two or
//! three dimensions by classical (Torgerson) MDS to give an information
//! geometric temporal plot.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::TemporalBatch;

/// Additive smoothing applied to each bin probability before renormalising.
pub const SMOOTHING: f64 = 1e-6;
pub const DEFAULT_BINS: usize = 50;

/// Share of positive labels per batch; `None` for empty batches.
pub fn prevalence_series(batches: &[TemporalBatch]) -> Vec<Option<f64>> {
    batches
        .iter()
        .map(|b| {
            if b.is_empty() {
                None
            } else {
                Some(b.labels().filter(|&l| l == 1).count() as f64 / b.len() as f64)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPdf {
    pub batch_index: usize,
    pub bin_edges: Vec<f64>,
    pub masses: Vec<f64>,
    /// Set when a batch (or class half) had no data and a uniform
    /// distribution was substituted.
    pub uniform_fallback: bool,
}

/// `bins` equal-width bins spanning the pooled range.
pub fn shared_edges<'a>(pooled: impl IntoIterator<Item = &'a f64>, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 {
        return Err(Error::config("bins", "must be at least 1"));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut any = false;
    for &v in pooled {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
            any = true;
        }
    }
    if !any {
        return Err(Error::InvalidInput("no values to bin".into()));
    }
    if hi <= lo {
        return Err(Error::DegenerateHistogram);
    }
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
    edges.push(hi);
    Ok(edges)
}

/// Smoothed bin probabilities; `None` when there are no values in range.
fn histogram(values: &[f64], edges: &[f64]) -> Option<Vec<f64>> {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    let mut counts = vec![0usize; bins];
    let mut n = 0usize;
    for &v in values {
        if !(v >= lo && v <= hi) {
            continue;
        }
        let pos = ((v - lo) / (hi - lo) * bins as f64) as usize;
        counts[pos.min(bins - 1)] += 1;
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let norm = 1.0 + bins as f64 * SMOOTHING;
    Some(
        counts
            .iter()
            .map(|&c| (c as f64 / n as f64 + SMOOTHING) / norm)
            .collect(),
    )
}

fn uniform(bins: usize) -> Vec<f64> {
    vec![1.0 / bins as f64; bins]
}

/// Per-batch histograms on edges shared across all batches.
pub fn estimate_pdf(values_per_batch: &[Vec<f64>], bins: usize) -> Result<Vec<BatchPdf>> {
    let edges = shared_edges(values_per_batch.iter().flatten(), bins)?;
    Ok(values_per_batch
        .iter()
        .enumerate()
        .map(|(i, values)| {
            let h = histogram(values, &edges);
            BatchPdf {
                batch_index: i,
                bin_edges: edges.clone(),
                uniform_fallback: h.is_none(),
                masses: h.unwrap_or_else(|| uniform(bins)),
            }
        })
        .collect())
}

/// `p(x|y=0)` and `p(x|y=1)` on `edges`, concatenated and scaled to sum to
/// one. A class absent from the batch contributes a uniform half.
pub fn conditional_pdf_concat(values: &[f64], labels: &[u8], edges: &[f64], batch_index: usize) -> BatchPdf {
    let bins = edges.len() - 1;
    let mut masses = Vec::with_capacity(2 * bins);
    let mut fallback = false;
    for class in 0..=1u8 {
        let subset: Vec<f64> = values
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == class)
            .map(|(&v, _)| v)
            .collect();
        let half = histogram(&subset, edges).unwrap_or_else(|| {
            fallback = true;
            uniform(bins)
        });
        masses.extend(half.into_iter().map(|m| m / 2.0));
    }
    BatchPdf {
        batch_index,
        bin_edges: edges.to_vec(),
        masses,
        uniform_fallback: fallback,
    }
}

/// Concatenated class-conditional histograms for each `(values, labels)` batch.
pub fn estimate_conditional_pdfs(batches: &[(Vec<f64>, Vec<u8>)], bins: usize) -> Result<Vec<BatchPdf>> {
    let edges = shared_edges(batches.iter().flat_map(|b| b.0.iter()), bins)?;
    Ok(batches
        .iter()
        .enumerate()
        .map(|(i, (v, l))| conditional_pdf_concat(v, l, &edges, i))
        .collect())
}

/// Square root of the base-2 Jensen-Shannon divergence.
pub fn js_distance(p: &BatchPdf, q: &BatchPdf) -> Result<f64> {
    if p.masses.len() != q.masses.len() || p.bin_edges != q.bin_edges {
        return Err(Error::InvalidInput("histograms have different supports".into()));
    }
    let mut jsd = 0.0;
    for (&a, &b) in p.masses.iter().zip(&q.masses) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            jsd += 0.5 * a * (a / m).log2();
        }
        if b > 0.0 {
            jsd += 0.5 * b * (b / m).log2();
        }
    }
    Ok(jsd.max(0.0).sqrt().min(1.0))
}

/// Symmetric, zero-diagonal matrix of pairwise distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(size: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != size * size {
            return Err(Error::DimensionMismatch {
                expected: size * size,
                got: entries.len(),
            });
        }
        let m = Self { size, entries };
        for i in 0..size {
            if m.get(i, i) != 0.0 {
                return Err(Error::InvalidInput("distance diagonal must be zero".into()));
            }
            for j in 0..size {
                let d = m.get(i, j);
                if !(d >= 0.0 && d.is_finite()) || d != m.get(j, i) {
                    return Err(Error::InvalidInput(format!("bad distance at ({i},{j})")));
                }
            }
        }
        Ok(m)
    }

    pub fn from_pdfs(pdfs: &[BatchPdf]) -> Result<Self> {
        let n = pdfs.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i < j {
                            js_distance(&pdfs[i], &pdfs[j])
                        } else {
                            Ok(0.0)
                        }
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                entries[i * n + j] = rows[i][j];
                entries[j * n + i] = rows[i][j];
            }
        }
        Self::new(n, entries)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgtProjection {
    /// One point per batch, `dims` coordinates each.
    pub coordinates: Vec<Vec<f64>>,
    /// Retained eigenvalues of the double-centred matrix, descending.
    pub eigenvalues: Vec<f64>,
}

impl IgtProjection {
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.coordinates[i]
            .iter()
            .zip(&self.coordinates[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Classical MDS: eigendecompose `-1/2 J D^2 J` and scale the leading
/// eigenvectors by the square roots of their (non-negative) eigenvalues.
/// Each axis is oriented so its first non-negligible coordinate is positive.
pub fn igt_project(d: &DistanceMatrix, dims: usize) -> Result<IgtProjection> {
    if !(1..=3).contains(&dims) {
        return Err(Error::config("dims", "must be 1, 2 or 3"));
    }
    let n = d.size();
    if n < dims + 1 {
        return Err(Error::InvalidInput(format!(
            "{n} points cannot be embedded in {dims} dimensions"
        )));
    }
    let sq = DMatrix::from_fn(n, n, |i, j| d.get(i, j) * d.get(i, j));
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut coordinates = vec![vec![0.0; dims]; n];
    let mut eigenvalues = Vec::with_capacity(dims);
    for (axis, &k) in order.iter().take(dims).enumerate() {
        let mut lambda = eig.eigenvalues[k];
        if lambda <= 1e-10 * scale {
            lambda = 0.0;
        }
        eigenvalues.push(lambda);
        let root = lambda.sqrt();
        let v = eig.eigenvectors.column(k);
        let flip = v.iter().find(|x| (*x * root).abs() > 1e-12).is_some_and(|&x| x < 0.0);
        for i in 0..n {
            let c = v[i] * root;
            coordinates[i][axis] = if flip { -c } else { c };
        }
    }
    Ok(IgtProjection {
        coordinates,
        eigenvalues,
    })
}

/// `batch_index,period_label,dim1,dim2[,dim3]`.
pub fn write_igt_csv<W: Write>(writer: W, projection: &IgtProjection, batches: &[(usize, String)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let dims = projection.coordinates.first().map_or(0, Vec::len);
    let mut header = vec!["batch_index".to_string(), "period_label".to_string()];
    header.extend((1..=dims).map(|k| format!("dim{k}")));
    w.write_record(&header)?;
    for ((index, label), coords) in batches.iter().zip(&projection.coordinates) {
        let mut row = vec![index.to_string(), label.clone()];
        row.extend(coords.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<igt csv>", e))?;
    Ok(())
}

/// Full matrix with a leading `batch_index` column.
pub fn write_distances_csv<W: Write>(writer: W, matrix: &DistanceMatrix, batch_ids: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["batch_index".to_string()];
    header.extend(batch_ids.iter().map(usize::to_string));
    w.write_record(&header)?;
    for (i, id) in batch_ids.iter().enumerate() {
        let mut row = vec![id.to_string()];
        row.extend((0..matrix.size()).map(|j| matrix.get(i, j).to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<distances csv>", e))?;
    Ok(())
}

/// `batch,period_label,p_positive`; empty batches leave the value blank.
pub fn write_prevalence_csv<W: Write>(writer: W, batches: &[TemporalBatch]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["batch", "period_label", "p_positive"])?;
    for (b, p) in batches.iter().zip(prevalence_series(batches)) {
        w.write_record([
            b.index.to_string(),
            b.period_label(),
            p.map_or(String::new(), |v| v.to_string()),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<prevalence csv>", e))?;
    Ok(())
}
