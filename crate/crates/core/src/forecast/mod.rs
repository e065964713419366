//! Parameter trajectories as functional data.
//!
//! Every scalar model parameter, followed across batches, becomes a
//! [`ParameterTrajectory`]. A clamped B-spline is fitted to it by least
//! squares, its degree and knot count are chosen by forward-chaining
//! cross-validation, and the terminal polynomial piece is continued to
//! forecast the parameter `horizon` batches ahead. Forecasts that leave a
//! ten-fold envelope of the observed history fall back to persistence.

mod spline;

pub use spline::{bspline_basis, clamped_knots, fit_points, SplineFit, SplineSpec, RIDGE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::ModelParams;

/// Denominator floor for percentage errors.
pub const MAPE_FLOOR: f64 = 1e-8;
/// Forecasts beyond this multiple of the largest observed magnitude are rejected.
pub const BLOWUP_FACTOR: f64 = 10.0;
/// CV errors within this margin (in percent) of the best count as ties.
pub const CV_TIE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterTrajectory {
    pub replica_id: usize,
    /// `0..D-1` are weights, `D` is the bias.
    pub param_index: usize,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ParameterTrajectory {
    pub fn new(replica_id: usize, param_index: usize, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: values.len(),
            });
        }
        if times.len() < 2 {
            return Err(Error::InvalidInput("trajectory needs at least two points".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("trajectory times must increase strictly".into()));
        }
        if values.iter().chain(&times).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("trajectory values must be finite".into()));
        }
        Ok(Self {
            replica_id,
            param_index,
            times,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    pub fn last_value(&self) -> f64 {
        *self.values.last().expect("non-empty")
    }

    fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// One trajectory per (replica, parameter), replica-major, with times
/// `0..k` taken from the snapshot positions.
pub fn build_trajectories(snapshots: &[Vec<ModelParams>]) -> Result<Vec<ParameterTrajectory>> {
    let Some(first) = snapshots.first() else {
        return Ok(Vec::new());
    };
    let len = first.len();
    let n_params = first.first().map_or(0, ModelParams::len);
    let mut out = Vec::with_capacity(snapshots.len() * n_params);
    for (r, series) in snapshots.iter().enumerate() {
        if series.len() != len {
            return Err(Error::InvalidInput(format!(
                "ragged snapshots: replica {r} has {} batches, expected {len}",
                series.len()
            )));
        }
        if series.iter().any(|p| p.len() != n_params) {
            return Err(Error::InvalidInput(format!("replica {r} changes parameter count")));
        }
        let times: Vec<f64> = (0..len).map(|t| t as f64).collect();
        for p in 0..n_params {
            let values = series.iter().map(|s| s.get(p)).collect();
            out.push(ParameterTrajectory::new(r, p, times.clone(), values)?);
        }
    }
    Ok(out)
}

/// Element-wise mean of trajectories sharing times and parameter layout.
/// The result carries `replica_id = usize::MAX`.
pub fn mean_trajectories(per_replica: &[Vec<ParameterTrajectory>]) -> Result<Vec<ParameterTrajectory>> {
    let first = per_replica
        .first()
        .ok_or_else(|| Error::InvalidInput("no trajectories to average".into()))?;
    let n = per_replica.len() as f64;
    first
        .iter()
        .enumerate()
        .map(|(p, base)| {
            let mut values = vec![0.0; base.len()];
            for set in per_replica {
                let tr = set
                    .get(p)
                    .filter(|t| t.times == base.times)
                    .ok_or_else(|| Error::InvalidInput("trajectory sets do not align".into()))?;
                for (acc, v) in values.iter_mut().zip(&tr.values) {
                    *acc += v / n;
                }
            }
            ParameterTrajectory::new(usize::MAX, base.param_index, base.times.clone(), values)
        })
        .collect()
}

pub fn fit_spline(traj: &ParameterTrajectory, spec: &SplineSpec) -> Result<SplineFit> {
    fit_points(&traj.times, &traj.values, spec)
}

/// The forecaster chosen for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection {
    Spline(SplineSpec),
    /// Repeat the last observed value.
    Persistence,
}

impl Selection {
    /// `(degree, interior knots)`; persistence reports `(0, 0)`.
    pub fn degree_and_knots(&self) -> (usize, usize) {
        match self {
            Selection::Spline(s) => (s.degree, s.interior_knots),
            Selection::Persistence => (0, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSelection {
    pub selection: Selection,
    /// True when no candidate had a usable cut.
    pub fallback: bool,
    /// Mean absolute percentage error of each feasible candidate.
    pub errors: Vec<(SplineSpec, f64)>,
}

fn ape(actual: f64, forecast: f64) -> f64 {
    (actual - forecast).abs() / actual.abs().max(MAPE_FLOOR) * 100.0
}

/// Forward-chaining CV error of `spec`: fit on points `[0, k)` and predict
/// point `k`, for every `k` from `n_basis + 1` to `len - 1`.
pub fn forward_cv_error(traj: &ParameterTrajectory, spec: &SplineSpec) -> Option<f64> {
    let start = spec.n_basis() + 1;
    if start >= traj.len() {
        return None;
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for k in start..traj.len() {
        let fit = fit_points(&traj.times[..k], &traj.values[..k], spec).ok()?;
        let pred = fit.eval(traj.times[k]);
        if !pred.is_finite() {
            return None;
        }
        total += ape(traj.values[k], pred);
        count += 1;
    }
    Some(total / count as f64)
}

/// Pick the candidate with the lowest forward-CV error. Near-ties (within
/// [`CV_TIE_TOLERANCE`]) prefer fewer basis functions, then lower degree.
pub fn select_degree_cv(traj: &ParameterTrajectory, candidates: &[SplineSpec]) -> CvSelection {
    let mut ordered: Vec<SplineSpec> = candidates.to_vec();
    ordered.sort_by_key(|s| (s.n_basis(), s.degree, s.interior_knots));
    ordered.dedup();
    let errors: Vec<(SplineSpec, f64)> = ordered
        .iter()
        .filter_map(|s| forward_cv_error(traj, s).map(|e| (*s, e)))
        .collect();
    let Some(best) = errors.iter().map(|e| e.1).min_by(f64::total_cmp) else {
        return CvSelection {
            selection: Selection::Persistence,
            fallback: true,
            errors,
        };
    };
    let chosen = errors
        .iter()
        .find(|(_, e)| *e <= best + CV_TIE_TOLERANCE)
        .map(|(s, _)| *s)
        .expect("the minimum is within tolerance of itself");
    CvSelection {
        selection: Selection::Spline(chosen),
        fallback: false,
        errors,
    }
}

/// Forecast one trajectory `horizon` time units past its last point with a
/// fixed selection. Returns the value and whether the persistence fallback
/// was taken.
pub fn forecast_trajectory(traj: &ParameterTrajectory, selection: Selection, horizon: f64) -> (f64, bool) {
    let last = traj.last_value();
    let Selection::Spline(spec) = selection else {
        return (last, true);
    };
    let Ok(fit) = fit_spline(traj, &spec) else {
        return (last, true);
    };
    let value = fit.eval(traj.last_time() + horizon);
    if !value.is_finite() || value.abs() > BLOWUP_FACTOR * traj.max_abs() {
        (last, true)
    } else {
        (value, false)
    }
}

/// Forecast parameter vector for one replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub replica_id: usize,
    pub target_time: usize,
    pub params: ModelParams,
    pub selections: Vec<Selection>,
    pub fallback_flags: Vec<bool>,
    /// Per-parameter absolute percentage error once the target is observed.
    pub per_param_mape: Option<Vec<f64>>,
}

impl ForecastResult {
    /// Record the realised parameters and fill in per-parameter errors.
    pub fn realize(&mut self, actual: &ModelParams) -> Result<()> {
        if actual.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: actual.len(),
            });
        }
        self.per_param_mape = Some(
            (0..actual.len())
                .map(|p| ape(actual.get(p), self.params.get(p)))
                .collect(),
        );
        Ok(())
    }
}

/// Forecast every parameter of one replica `horizon` batches past the end of
/// its history. `trajectories` must be sorted by parameter index with the
/// bias last and share their time grid.
pub fn forecast_params(
    trajectories: &[ParameterTrajectory],
    horizon: usize,
    candidates: &[SplineSpec],
) -> Result<ForecastResult> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::InvalidInput("no trajectories to forecast".into()))?;
    if horizon == 0 {
        return Err(Error::InvalidInput("forecast horizon must be at least 1".into()));
    }
    if trajectories.iter().enumerate().any(|(i, t)| t.param_index != i) {
        return Err(Error::InvalidInput(
            "trajectories must be ordered by parameter index".into(),
        ));
    }
    if trajectories.iter().any(|t| t.times != first.times) {
        return Err(Error::InvalidInput("trajectories must share their time grid".into()));
    }
    let mut values = Vec::with_capacity(trajectories.len());
    let mut selections = Vec::with_capacity(trajectories.len());
    let mut flags = Vec::with_capacity(trajectories.len());
    for traj in trajectories {
        let cv = select_degree_cv(traj, candidates);
        let (v, fell_back) = forecast_trajectory(traj, cv.selection, horizon as f64);
        values.push(v);
        selections.push(cv.selection);
        flags.push(cv.fallback || fell_back);
    }
    Ok(ForecastResult {
        replica_id: first.replica_id,
        target_time: first.last_time() as usize + horizon,
        params: ModelParams::from_vec(values)?,
        selections,
        fallback_flags: flags,
        per_param_mape: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapeReport {
    /// Percent.
    pub mape: f64,
    pub mae: f64,
    /// Some actual value fell below the denominator floor.
    pub near_zero_denominator: bool,
}

/// Mean absolute percentage error with the denominator floored at
/// [`MAPE_FLOOR`], reported with the plain mean absolute error.
pub fn mape(actual: &[f64], forecast: &[f64]) -> Result<MapeReport> {
    if actual.len() != forecast.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            got: forecast.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::InvalidInput("mape of empty vectors".into()));
    }
    let n = actual.len() as f64;
    let mut total = 0.0;
    let mut abs = 0.0;
    for (&a, &f) in actual.iter().zip(forecast) {
        total += ape(a, f);
        abs += (a - f).abs();
    }
    Ok(MapeReport {
        mape: total / n,
        mae: abs / n,
        near_zero_denominator: actual.iter().any(|a| a.abs() < MAPE_FLOOR),
    })
}
