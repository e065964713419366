//! Logistic regression trained by warm-started minibatch gradient descent
//! over consecutive batches, plus seeded random-search tuning.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Record;
use crate::error::{Error, Result};
use crate::eval::roc_auc;
use crate::partition::PartitionedBatch;

const LOG_CLAMP: f64 = 1e-12;

/// Dense design matrix (row-major) with 0/1 targets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Samples {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Samples {
    pub fn new(dim: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != dim * y.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * y.len(),
                got: x.len(),
            });
        }
        Ok(Self { dim, x, y })
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a Record>, dim: usize) -> Self {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for r in records {
            debug_assert_eq!(r.features.len(), dim);
            x.extend_from_slice(&r.features);
            y.push(f64::from(r.label));
        }
        Self { dim, x, y }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn labels(&self) -> Vec<u8> {
        self.y.iter().map(|&v| u8::from(v > 0.5)).collect()
    }

    pub fn has_both_classes(&self) -> bool {
        self.y.iter().any(|&v| v > 0.5) && self.y.iter().any(|&v| v <= 0.5)
    }
}

/// Logistic weights and intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ModelParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Number of scalar parameters (weights plus bias).
    pub fn len(&self) -> usize {
        self.weights.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Parameter `i`; index `dim()` is the bias.
    pub fn get(&self, i: usize) -> f64 {
        if i == self.weights.len() {
            self.bias
        } else {
            self.weights[i]
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.push(self.bias);
        v
    }

    pub fn from_vec(mut v: Vec<f64>) -> Result<Self> {
        let bias = v
            .pop()
            .ok_or_else(|| Error::InvalidInput("empty parameter vector".into()))?;
        Ok(Self { weights: v, bias })
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub epochs_per_batch: usize,
    pub minibatch_size: usize,
    pub l2: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs_per_batch: 10,
            minibatch_size: 32,
            l2: 1e-4,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be > 0"));
        }
        self.check_trainable()
    }

    // learning_rate = 0 is allowed when training directly (a no-op step).
    fn check_trainable(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config("learning_rate", "must be finite and non-negative"));
        }
        if self.epochs_per_batch == 0 {
            return Err(Error::config("epochs_per_batch", "must be at least 1"));
        }
        if self.minibatch_size == 0 {
            return Err(Error::config("minibatch_size", "must be at least 1"));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::config("l2", "must be finite and non-negative"));
        }
        Ok(())
    }

    fn diverged(&self) -> Error {
        Error::Diverged {
            learning_rate: self.learning_rate,
            l2: self.l2,
            epochs: self.epochs_per_batch,
            minibatch: self.minibatch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ModelParams,
    pub batches_seen: usize,
    pub rng_seed: u64,
}

impl TrainState {
    pub fn new(dim: usize, rng_seed: u64) -> Self {
        Self {
            params: ModelParams::zeros(dim),
            batches_seen: 0,
            rng_seed,
        }
    }
}

/// Logistic link, evaluated without overflow for any finite input.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)`.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn check_dim(params: &ModelParams, samples: &Samples) -> Result<()> {
    if params.dim() != samples.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            got: samples.dim(),
        });
    }
    Ok(())
}

/// Mean loss and gradient over `rows`. Gradient layout: weights, then bias.
fn loss_grad_rows(params: &ModelParams, samples: &Samples, rows: &[usize], l2: f64, grad: &mut [f64]) -> f64 {
    let d = params.dim();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for &i in rows {
        let x = samples.row(i);
        let y = samples.y[i];
        let z = params.logit(x);
        let p = sigmoid(z);
        // log p and log(1-p) without cancellation, clamped in log space
        let (lo, hi) = (LOG_CLAMP.ln(), (-LOG_CLAMP).ln_1p());
        let log_p = (-softplus(-z)).clamp(lo, hi);
        let log_q = (-softplus(z)).clamp(lo, hi);
        loss -= y * log_p + (1.0 - y) * log_q;
        let r = p - y;
        for (g, v) in grad[..d].iter_mut().zip(x) {
            *g += r * v;
        }
        grad[d] += r;
    }
    let m = rows.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= m);
    let mut penalty = 0.0;
    for (g, w) in grad[..d].iter_mut().zip(&params.weights) {
        *g += l2 * w;
        penalty += w * w;
    }
    loss / m + 0.5 * l2 * penalty
}

/// Mean negative log-likelihood plus `l2/2 * |w|^2`, and its gradient
/// (length `D + 1`, bias last).
pub fn loss_and_gradient(params: &ModelParams, samples: &Samples, l2: f64) -> Result<(f64, Vec<f64>)> {
    check_dim(params, samples)?;
    let rows: Vec<usize> = (0..samples.len()).collect();
    let mut grad = vec![0.0; params.len()];
    let loss = loss_grad_rows(params, samples, &rows, l2, &mut grad);
    Ok((loss, grad))
}

pub fn predict_proba(params: &ModelParams, samples: &Samples) -> Result<Vec<f64>> {
    check_dim(params, samples)?;
    Ok((0..samples.len())
        .map(|i| sigmoid(params.logit(samples.row(i))))
        .collect())
}

/// Run `epochs_per_batch` shuffled minibatch passes starting from the incoming
/// parameters. The shuffle stream is `(rng_seed, batches_seen)`.
pub fn train_epochs(state: &TrainState, samples: &Samples, hyper: &HyperParams) -> Result<TrainState> {
    hyper.check_trainable()?;
    check_dim(&state.params, samples)?;
    if samples.is_empty() {
        return Err(Error::InvalidInput("no training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(state.rng_seed);
    rng.set_stream(state.batches_seen as u64);
    let mut params = state.params.clone();
    let d = params.dim();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut grad = vec![0.0; d + 1];
    for _ in 0..hyper.epochs_per_batch {
        order.shuffle(&mut rng);
        for chunk in order.chunks(hyper.minibatch_size) {
            loss_grad_rows(&params, samples, chunk, hyper.l2, &mut grad);
            for (w, g) in params.weights.iter_mut().zip(&grad[..d]) {
                *w -= hyper.learning_rate * g;
            }
            params.bias -= hyper.learning_rate * grad[d];
            if !params.is_finite() {
                return Err(hyper.diverged());
            }
        }
    }
    Ok(TrainState {
        params,
        batches_seen: state.batches_seen + 1,
        rng_seed: state.rng_seed,
    })
}

/// Warm-started training over consecutive batches with one hyperparameter
/// set per batch. Batches without a split carry the previous parameters
/// forward.
pub fn train_incremental_schedule(
    batches: &[PartitionedBatch],
    replica_id: usize,
    schedule: &[HyperParams],
    dim: usize,
    seed: u64,
) -> Result<Vec<ModelParams>> {
    if schedule.len() < batches.len() {
        return Err(Error::DimensionMismatch {
            expected: batches.len(),
            got: schedule.len(),
        });
    }
    let mut state = TrainState::new(dim, seed);
    let mut snapshots = Vec::with_capacity(batches.len());
    for (pb, hyper) in batches.iter().zip(schedule) {
        state = match &pb.split {
            Some(split) => {
                let samples = split.replica_samples(&pb.batch, replica_id)?;
                train_epochs(&state, &samples, hyper)?
            }
            None => TrainState {
                batches_seen: state.batches_seen + 1,
                ..state
            },
        };
        snapshots.push(state.params.clone());
    }
    Ok(snapshots)
}

/// Parameter snapshot after each batch for one bootstrap replica.
pub fn train_incremental(
    batches: &[PartitionedBatch],
    replica_id: usize,
    hyper: &HyperParams,
    dim: usize,
    seed: u64,
) -> Result<Vec<ModelParams>> {
    train_incremental_schedule(batches, replica_id, &vec![*hyper; batches.len()], dim, seed)
}

/// [`train_incremental_schedule`] for replicas `0..n_replicas` in parallel.
/// Result order is replica order regardless of scheduling.
pub fn train_replicas(
    batches: &[PartitionedBatch],
    n_replicas: usize,
    schedule: &[HyperParams],
    dim: usize,
    seed_for: impl Fn(usize) -> u64 + Sync,
) -> Result<Vec<Vec<ModelParams>>> {
    (0..n_replicas)
        .into_par_iter()
        .map(|r| train_incremental_schedule(batches, r, schedule, dim, seed_for(r)))
        .collect()
}

/// Ranges for random search. Rates are sampled log-uniformly, integers
/// uniformly (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub learning_rate: (f64, f64),
    pub l2: (f64, f64),
    pub epochs: (usize, usize),
    pub minibatch: (usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            learning_rate: (0.05, 0.5),
            l2: (1e-6, 1e-3),
            epochs: (5, 30),
            minibatch: (16, 128),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.learning_rate;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::config("search.learning_rate", "need 0 < lo <= hi"));
        }
        let (lo, hi) = self.l2;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) || (lo == 0.0 && hi > 0.0) {
            return Err(Error::config("search.l2", "need 0 < lo <= hi, or lo = hi = 0"));
        }
        if self.epochs.0 == 0 || self.epochs.1 < self.epochs.0 {
            return Err(Error::config("search.epochs", "need 1 <= lo <= hi"));
        }
        if self.minibatch.0 == 0 || self.minibatch.1 < self.minibatch.0 {
            return Err(Error::config("search.minibatch", "need 1 <= lo <= hi"));
        }
        Ok(())
    }

    fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
        if lo == hi {
            lo
        } else {
            (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> HyperParams {
        HyperParams {
            learning_rate: Self::log_uniform(rng, self.learning_rate),
            l2: Self::log_uniform(rng, self.l2),
            epochs_per_batch: rng.random_range(self.epochs.0..=self.epochs.1),
            minibatch_size: rng.random_range(self.minibatch.0..=self.minibatch.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub hyper: HyperParams,
    pub validation_auc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub best: HyperParams,
    pub best_trial: usize,
    pub trials: Vec<Trial>,
}

/// Random search scored by replica-0 validation ROC-AUC on batch `k`, after
/// training through `k` with the trial's hyperparameters.
///
/// `prefix`, when given, fixes the hyperparameters of batches before `k`
/// (per-horizon re-tuning); otherwise each trial trains every batch with its
/// own values. Ties go to the lower trial index.
pub fn tune_hyperparameters(
    batches: &[PartitionedBatch],
    k: usize,
    space: &SearchSpace,
    budget: usize,
    dim: usize,
    seed: u64,
    prefix: Option<&[HyperParams]>,
) -> Result<TuneOutcome> {
    space.validate()?;
    if budget == 0 {
        return Err(Error::config("tune_budget", "must be at least 1"));
    }
    let target = batches
        .get(k)
        .ok_or_else(|| Error::InvalidInput(format!("tuning batch {k} out of range")))?;
    let split = target.split.as_ref().ok_or_else(|| {
        Error::InvalidInput(format!(
            "tuning batch {k} has no split: {}",
            target.skip_reason.as_deref().unwrap_or("unknown")
        ))
    })?;
    let validation = split.validation_samples(&target.batch);
    let val_labels = validation.labels();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(budget);
    for index in 0..budget {
        let hyper = space.sample(&mut rng);
        let schedule: Vec<HyperParams> = match prefix {
            Some(p) => p[..k].iter().copied().chain(std::iter::once(hyper)).collect(),
            None => vec![hyper; k + 1],
        };
        let scored = train_incremental_schedule(&batches[..=k], 0, &schedule, dim, seed)
            .and_then(|snaps| predict_proba(&snaps[k], &validation))
            .and_then(|p| roc_auc(&p, &val_labels));
        trials.push(match scored {
            Ok(auc) => Trial {
                index,
                hyper,
                validation_auc: Some(auc),
                error: None,
            },
            Err(e) => Trial {
                index,
                hyper,
                validation_auc: None,
                error: Some(e.to_string()),
            },
        });
    }
    let mut best: Option<(usize, f64)> = None;
    for t in &trials {
        if let Some(auc) = t.validation_auc {
            if best.is_none_or(|(_, b)| auc > b) {
                best = Some((t.index, auc));
            }
        }
    }
    match best {
        Some((i, _)) => Ok(TuneOutcome {
            best: trials[i].hyper,
            best_trial: i,
            trials,
        }),
        None => Err(Error::AllTrialsFailed(
            trials
                .iter()
                .map(|t| format!("trial {}: {}", t.index, t.error.as_deref().unwrap_or("?")))
                .collect(),
        )),
    }
}

/// `replica_id,batch_index,param_index,value` rows.
pub fn write_snapshots_csv<W: Write>(writer: W, snapshots: &[Vec<ModelParams>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["replica_id", "batch_index", "param_index", "value"])?;
    for (r, series) in snapshots.iter().enumerate() {
        for (b, params) in series.iter().enumerate() {
            for (p, v) in params.to_vec().into_iter().enumerate() {
                w.write_record([r.to_string(), b.to_string(), p.to_string(), v.to_string()])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<snapshot csv>", e))?;
    Ok(())
}

/// Inverse of [`write_snapshots_csv`]; rows may come in any order but the
/// table must be complete.
pub fn read_snapshots_csv<R: Read>(reader: R) -> Result<Vec<Vec<ModelParams>>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut cells: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = || Error::Parse(format!("snapshot row {}", line + 1));
        if row.len() != 4 {
            return Err(bad());
        }
        cells.push((
            row[0].parse().map_err(|_| bad())?,
            row[1].parse().map_err(|_| bad())?,
            row[2].parse().map_err(|_| bad())?,
            row[3].parse().map_err(|_| bad())?,
        ));
    }
    let n_rep = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let n_batch = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    let n_param = cells.iter().map(|c| c.2 + 1).max().unwrap_or(0);
    if n_param < 1 || cells.len() != n_rep * n_batch * n_param {
        return Err(Error::Parse("snapshot table is incomplete".into()));
    }
    let mut grid = vec![vec![vec![f64::NAN; n_param]; n_batch]; n_rep];
    for (r, b, p, v) in cells {
        grid[r][b][p] = v;
    }
    grid.into_iter()
        .map(|series| series.into_iter().map(ModelParams::from_vec).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_simulated, SimConfig};
    use crate::partition::{batch_by_quarter, partition_all};

    fn one_d(xs: &[f64], ys: &[f64]) -> Samples {
        Samples::new(1, xs.to_vec(), ys.to_vec()).unwrap()
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> (ModelParams, Samples, f64) {
        let d = rng.random_range(1..5);
        let n = rng.random_range(1..20);
        let params = ModelParams {
            weights: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bias: rng.random_range(-1.0..1.0),
        };
        let x = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = (0..n).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
        (params, Samples::new(d, x, y).unwrap(), rng.random_range(0.0..0.5))
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(50.0) - 1.0).abs() < 1e-15);
        let tiny = sigmoid(-50.0);
        assert!(tiny > 0.0 && tiny < 2e-22);
        assert!(sigmoid(-700.0).is_finite() && sigmoid(700.0) == 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let z: f64 = rng.random_range(-30.0..30.0);
            assert!((sigmoid(z) + sigmoid(-z) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_point_loss_and_gradient() {
        let (loss, g) = loss_and_gradient(&ModelParams::zeros(1), &one_d(&[1.0], &[1.0]), 0.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((g[0] + 0.5).abs() < 1e-15);
        assert!((g[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (params, samples, l2) = random_instance(&mut rng);
            let (_, g) = loss_and_gradient(&params, &samples, l2).unwrap();
            let base = params.to_vec();
            for j in 0..base.len() {
                let h = 1e-5;
                let mut up = base.clone();
                let mut dn = base.clone();
                up[j] += h;
                dn[j] -= h;
                let fu = loss_and_gradient(&ModelParams::from_vec(up).unwrap(), &samples, l2)
                    .unwrap()
                    .0;
                let fd = loss_and_gradient(&ModelParams::from_vec(dn).unwrap(), &samples, l2)
                    .unwrap()
                    .0;
                let fdiff = (fu - fd) / (2.0 * h);
                let rel = (fdiff - g[j]).abs() / g[j].abs().max(fdiff.abs()).max(1e-8);
                assert!(rel < 1e-6, "param {j}: {fdiff} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn near_perfect_fit_has_near_zero_loss() {
        let s = one_d(&[-1.0, 1.0], &[0.0, 1.0]);
        let p = ModelParams {
            weights: vec![40.0],
            bias: 0.0,
        };
        // bounded below by the probability clamp
        assert!(loss_and_gradient(&p, &s, 0.0).unwrap().0 < 1e-11);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let s = Samples::new(2, vec![0.0; 4], vec![0.0, 1.0]).unwrap();
        assert!(loss_and_gradient(&ModelParams::zeros(1), &s, 0.0).is_err());
        assert!(predict_proba(&ModelParams::zeros(1), &s).is_err());
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let s = one_d(&[-1.0, 1.0, 0.5], &[0.0, 1.0, 1.0]);
        let state = TrainState {
            params: ModelParams {
                weights: vec![0.3],
                bias: -0.2,
            },
            batches_seen: 0,
            rng_seed: 4,
        };
        let hyper = HyperParams {
            learning_rate: 0.0,
            ..HyperParams::default()
        };
        assert_eq!(train_epochs(&state, &s, &hyper).unwrap().params, state.params);
    }

    fn separable(n: usize) -> Samples {
        let xs: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64 + 0.01).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f64::from(u8::from(x > 0.0))).collect();
        one_d(&xs, &ys)
    }

    #[test]
    fn separable_data_reaches_full_accuracy() {
        let s = separable(50);
        let hyper = HyperParams {
            learning_rate: 0.5,
            epochs_per_batch: 200,
            minibatch_size: 10,
            l2: 0.0,
        };
        let out = train_epochs(&TrainState::new(1, 0), &s, &hyper).unwrap();
        let p = predict_proba(&out.params, &s).unwrap();
        let correct = p
            .iter()
            .zip(s.targets())
            .filter(|(p, y)| (**p >= 0.5) == (**y > 0.5))
            .count();
        assert_eq!(correct, 50);
    }

    #[test]
    fn small_steps_decrease_loss() {
        let s = separable(40);
        let hyper = HyperParams {
            learning_rate: 0.01,
            epochs_per_batch: 3,
            minibatch_size: 40,
            l2: 0.01,
        };
        let start = TrainState::new(1, 0);
        let before = loss_and_gradient(&start.params, &s, 0.01).unwrap().0;
        let after = train_epochs(&start, &s, &hyper).unwrap();
        assert!(loss_and_gradient(&after.params, &s, 0.01).unwrap().0 <= before);
    }

    #[test]
    fn divergence_names_the_hyperparameters() {
        let s = one_d(&[1e300, -1e300], &[1.0, 0.0]);
        let hyper = HyperParams {
            learning_rate: 1e300,
            epochs_per_batch: 1,
            minibatch_size: 1,
            l2: 1.0,
        };
        let err = train_epochs(&TrainState::new(1, 0), &s, &hyper).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
        let msg = err.to_string();
        assert!(msg.contains("learning_rate=") && msg.contains("minibatch=1"), "{msg}");
    }

    fn sim_batches(n: usize, replicas: usize) -> Vec<PartitionedBatch> {
        let ds = generate_simulated(&SimConfig {
            samples_per_quarter: n,
            ..SimConfig::default()
        })
        .unwrap();
        partition_all(batch_by_quarter(&ds), |i| 100 + i as u64, replicas)
    }

    #[test]
    fn incremental_base_case_and_warm_start() {
        let batches = sim_batches(100, 2);
        let hyper = HyperParams::default();
        let one = train_incremental(&batches[..1], 1, &hyper, 1, 5).unwrap();
        let s0 = batches[0]
            .split
            .as_ref()
            .unwrap()
            .replica_samples(&batches[0].batch, 1)
            .unwrap();
        let direct = train_epochs(&TrainState::new(1, 5), &s0, &hyper).unwrap();
        assert_eq!(one[0], direct.params);

        let three = train_incremental(&batches[..3], 1, &hyper, 1, 5).unwrap();
        let prior = TrainState {
            params: three[1].clone(),
            batches_seen: 2,
            rng_seed: 5,
        };
        let s2 = batches[2]
            .split
            .as_ref()
            .unwrap()
            .replica_samples(&batches[2].batch, 1)
            .unwrap();
        assert_eq!(three[2], train_epochs(&prior, &s2, &hyper).unwrap().params);
    }

    #[test]
    fn repeating_a_batch_does_not_raise_loss() {
        let batches = sim_batches(200, 1);
        let twice = vec![batches[0].clone(), batches[0].clone()];
        let hyper = HyperParams {
            learning_rate: 0.05,
            ..HyperParams::default()
        };
        let snaps = train_incremental(&twice, 0, &hyper, 1, 3).unwrap();
        let full = Samples::from_records(&twice[0].batch.records, 1);
        let l0 = loss_and_gradient(&snaps[0], &full, 0.0).unwrap().0;
        let l1 = loss_and_gradient(&snaps[1], &full, 0.0).unwrap().0;
        assert!(l1 <= l0 + 1e-9, "{l1} > {l0}");
    }

    #[test]
    fn sixteen_batches_sixteen_finite_snapshots() {
        let batches = sim_batches(100, 1);
        let snaps = train_incremental(&batches, 0, &HyperParams::default(), 1, 9).unwrap();
        assert_eq!(snaps.len(), 16);
        assert!(snaps.iter().all(ModelParams::is_finite));
        assert_eq!(
            snaps,
            train_incremental(&batches, 0, &HyperParams::default(), 1, 9).unwrap()
        );
    }

    #[test]
    fn missing_replica_is_an_error() {
        let batches = sim_batches(50, 1);
        assert!(matches!(
            train_incremental(&batches, 3, &HyperParams::default(), 1, 0),
            Err(Error::MissingReplica { .. })
        ));
    }

    #[test]
    fn bias_shift_moves_every_logit() {
        let p = ModelParams {
            weights: vec![0.7, -1.1],
            bias: 0.25,
        };
        let mut q = p.clone();
        q.bias += 3.0;
        for x in [[0.0, 1.0], [2.0, -3.0], [1.5, 0.5]] {
            assert!((q.logit(&x) - p.logit(&x) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn predictions_agree_with_loss_internals() {
        let s = one_d(&[-0.4, 0.9], &[0.0, 1.0]);
        assert_eq!(predict_proba(&ModelParams::zeros(1), &s).unwrap(), vec![0.5, 0.5]);
        let p = ModelParams {
            weights: vec![1.3],
            bias: -0.1,
        };
        let probs = predict_proba(&p, &s).unwrap();
        // gradient of the bias is mean(p - y)
        let (_, g) = loss_and_gradient(&p, &s, 0.0).unwrap();
        let mean_r = ((probs[0] - 0.0) + (probs[1] - 1.0)) / 2.0;
        assert!((g[1] - mean_r).abs() < 1e-15);
    }

    #[test]
    fn tuning_budget_one_returns_the_sample() {
        let batches = sim_batches(100, 1);
        let space = SearchSpace::default();
        let out = tune_hyperparameters(&batches, 0, &space, 1, 1, 8, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        assert_eq!(out.best, space.sample(&mut rng));
        assert_eq!(out.trials.len(), 1);
    }

    #[test]
    fn tuning_is_deterministic_and_finds_separating_model() {
        let batches = sim_batches(400, 1);
        let space = SearchSpace::default();
        let a = tune_hyperparameters(&batches, 0, &space, 20, 1, 2, None).unwrap();
        let b = tune_hyperparameters(&batches, 0, &space, 20, 1, 2, None).unwrap();
        assert_eq!(a, b);
        let auc = a.trials[a.best_trial].validation_auc.unwrap();
        assert!(auc >= 0.95, "{auc}");
    }

    #[test]
    fn snapshot_csv_round_trip() {
        let snaps = vec![
            vec![
                ModelParams {
                    weights: vec![0.1, -2.5],
                    bias: 0.3
                };
                3
            ],
            vec![
                ModelParams {
                    weights: vec![1.0 / 3.0, 7.0],
                    bias: -1e-17
                };
                3
            ],
        ];
        let mut buf = Vec::new();
        write_snapshots_csv(&mut buf, &snaps).unwrap();
        assert_eq!(read_snapshots_csv(buf.as_slice()).unwrap(), snaps);
    }
}
