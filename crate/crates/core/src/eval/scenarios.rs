//! Baseline / pro-adaptive / upper-bound comparison.
//!
//! For a test batch `t` and delay `delta`:
//! - baseline uses the snapshot after batch `t - delta`;
//! - pro-adaptive forecasts the parameters from the history ending at
//!   `t - delta`, `delta` batches ahead;
//! - upper bound uses the snapshot after batch `t`.
//!
//! All three are scored on batch `t`'s held-out test set, per replica, and
//! aggregated into means with percentile intervals.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{aggregate_ci, recall_and_macro_f1, roc_auc};
use crate::error::{Error, Result};
use crate::forecast::{build_trajectories, forecast_params, mape, mean_trajectories, ForecastResult, SplineSpec};
use crate::glm::{predict_proba, ModelParams, Samples};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Baseline,
    ProAdaptive,
    UpperBound,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Baseline, Scenario::ProAdaptive, Scenario::UpperBound];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Baseline => "baseline",
            Scenario::ProAdaptive => "pro_adaptive",
            Scenario::UpperBound => "upper_bound",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    RocAuc,
    Recall,
    MacroF1,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::RocAuc, MetricKind::Recall, MetricKind::MacroF1];

    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::RocAuc => "roc_auc",
            MetricKind::Recall => "recall",
            MetricKind::MacroF1 => "macro_f1",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scores of one replica in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub scenario: Scenario,
    pub delta: usize,
    pub test_batch: usize,
    pub replica_id: usize,
    pub roc_auc: f64,
    pub recall_pos: f64,
    pub macro_f1: f64,
}

impl MetricRecord {
    pub fn value(&self, metric: MetricKind) -> f64 {
        match metric {
            MetricKind::RocAuc => self.roc_auc,
            MetricKind::Recall => self.recall_pos,
            MetricKind::MacroF1 => self.macro_f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: Scenario,
    pub delta: usize,
    pub test_batch: usize,
    pub metric: MetricKind,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub scenario: Scenario,
    pub delta: usize,
    pub test_batch: usize,
    pub reason: String,
}

/// Forecast accuracy of one parameter across replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamMapeRow {
    pub delta: usize,
    pub target_batch: usize,
    pub param_index: usize,
    pub mape: f64,
    pub mae: f64,
    pub near_zero_denominator: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
    pub skipped: Vec<SkippedCell>,
    pub param_mape: Vec<ParamMapeRow>,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
}

impl EvaluationReport {
    pub fn row(&self, scenario: Scenario, delta: usize, test_batch: usize, metric: MetricKind) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.delta == delta && r.test_batch == test_batch && r.metric == metric)
    }

    pub fn is_skipped(&self, scenario: Scenario, delta: usize, test_batch: usize) -> bool {
        self.skipped
            .iter()
            .any(|s| s.scenario == scenario && s.delta == delta && s.test_batch == test_batch)
    }

    /// Keep only the given delays.
    pub fn restrict_deltas(&mut self, deltas: &[usize]) {
        self.rows.retain(|r| deltas.contains(&r.delta));
        self.skipped.retain(|r| deltas.contains(&r.delta));
        self.param_mape.retain(|r| deltas.contains(&r.delta));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMode {
    /// Each bootstrap replica is forecast from its own history.
    #[default]
    PerReplica,
    /// The replica-mean trajectory is forecast once and shared.
    MeanTrajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSettings {
    pub candidates: Vec<SplineSpec>,
    pub mode: ForecastMode,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        Self {
            candidates: SplineSpec::default_candidates(),
            mode: ForecastMode::PerReplica,
        }
    }
}

/// Forecasts for every replica at one `(delta, target)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastCell {
    pub delta: usize,
    pub target_batch: usize,
    pub results: Vec<ForecastResult>,
}

fn history_end(t: usize, delta: usize) -> Option<usize> {
    t.checked_sub(delta)
}

/// Pro-adaptive forecasts for each `delta >= 1` and target `t` whose history
/// `0..=t-delta` has at least two batches. Targets inside the snapshot range
/// are realised against the snapshot at `t`.
pub fn forecast_cells(
    snapshots: &[Vec<ModelParams>],
    deltas: &[usize],
    t_range: Range<usize>,
    settings: &ForecastSettings,
) -> Result<Vec<ForecastCell>> {
    let n_batches = snapshots.first().map_or(0, Vec::len);
    let mut cells = Vec::new();
    for &delta in deltas {
        if delta == 0 {
            continue;
        }
        for t in t_range.clone() {
            let Some(end) = history_end(t, delta) else { continue };
            if end < 1 || end >= n_batches {
                continue;
            }
            let history: Vec<Vec<ModelParams>> = snapshots.iter().map(|s| s[..=end].to_vec()).collect();
            let trajectories = build_trajectories(&history)?;
            let n_params = history[0][0].len();
            let per_replica: Vec<Vec<_>> = trajectories.chunks(n_params).map(<[_]>::to_vec).collect();
            let mut results: Vec<ForecastResult> = match settings.mode {
                ForecastMode::PerReplica => per_replica
                    .par_iter()
                    .map(|tr| forecast_params(tr, delta, &settings.candidates))
                    .collect::<Result<_>>()?,
                ForecastMode::MeanTrajectory => {
                    let shared = forecast_params(&mean_trajectories(&per_replica)?, delta, &settings.candidates)?;
                    (0..snapshots.len())
                        .map(|r| ForecastResult {
                            replica_id: r,
                            ..shared.clone()
                        })
                        .collect()
                }
            };
            if t < n_batches {
                for (r, res) in results.iter_mut().enumerate() {
                    res.realize(&snapshots[r][t])?;
                }
            }
            cells.push(ForecastCell {
                delta,
                target_batch: t,
                results,
            });
        }
    }
    Ok(cells)
}

pub struct ScenarioInputs<'a> {
    /// Held-out test set per batch; `None` where the batch could not be split.
    pub test_sets: &'a [Option<Samples>],
    /// `snapshots[replica][batch]`.
    pub snapshots: &'a [Vec<ModelParams>],
    pub forecast: ForecastSettings,
    pub threshold: f64,
    pub ci_level: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub report: EvaluationReport,
    pub records: Vec<MetricRecord>,
    pub forecasts: Vec<ForecastCell>,
}

fn score(params: &ModelParams, test: &Samples, labels: &[u8], threshold: f64) -> Result<(f64, f64, f64)> {
    let probs = predict_proba(params, test)?;
    let auc = roc_auc(&probs, labels)?;
    let (recall, f1) = recall_and_macro_f1(&probs, labels, threshold)?;
    Ok((auc, recall, f1))
}

/// Score all three scenarios for every `(delta, t)` pair. Infeasible cells
/// are listed in `report.skipped` with a reason.
pub fn run_scenarios(inputs: &ScenarioInputs<'_>, deltas: &[usize], t_range: Range<usize>) -> Result<ScenarioOutput> {
    let n_replicas = inputs.snapshots.len();
    let n_batches = inputs.snapshots.first().map_or(0, Vec::len);
    if n_replicas == 0 || n_batches == 0 {
        return Err(Error::InvalidInput("no trained snapshots".into()));
    }
    if inputs.test_sets.len() < n_batches {
        return Err(Error::DimensionMismatch {
            expected: n_batches,
            got: inputs.test_sets.len(),
        });
    }
    let t_range = t_range.start..t_range.end.min(n_batches);
    let forecasts = forecast_cells(inputs.snapshots, deltas, t_range.clone(), &inputs.forecast)?;
    let forecast_at = |delta: usize, t: usize| forecasts.iter().find(|c| c.delta == delta && c.target_batch == t);

    let mut report = EvaluationReport::default();
    let mut records = Vec::new();
    for &delta in deltas {
        for t in t_range.clone() {
            let skip_all = |reason: String, report: &mut EvaluationReport| {
                for scenario in Scenario::ALL {
                    report.skipped.push(SkippedCell {
                        scenario,
                        delta,
                        test_batch: t,
                        reason: reason.clone(),
                    });
                }
            };
            let end = history_end(t, delta);
            let Some(test) = &inputs.test_sets[t] else {
                skip_all("batch has no test set".into(), &mut report);
                continue;
            };
            if !test.has_both_classes() {
                skip_all("test set lacks a class".into(), &mut report);
                continue;
            }
            let labels = test.labels();
            for scenario in Scenario::ALL {
                let params: Vec<ModelParams> = match scenario {
                    Scenario::UpperBound => inputs.snapshots.iter().map(|s| s[t].clone()).collect(),
                    Scenario::Baseline => {
                        let Some(end) = end else {
                            report.skipped.push(SkippedCell {
                                scenario,
                                delta,
                                test_batch: t,
                                reason: "t - delta precedes the first batch".into(),
                            });
                            continue;
                        };
                        inputs.snapshots.iter().map(|s| s[end].clone()).collect()
                    }
                    Scenario::ProAdaptive => {
                        let reason = if delta == 0 {
                            Some("pro-adaptive forecasting needs delta >= 1")
                        } else if end.is_none() {
                            Some("t - delta precedes the first batch")
                        } else if end < Some(1) {
                            Some("history shorter than two batches")
                        } else {
                            None
                        };
                        if let Some(reason) = reason {
                            report.skipped.push(SkippedCell {
                                scenario,
                                delta,
                                test_batch: t,
                                reason: reason.into(),
                            });
                            continue;
                        }
                        let cell = forecast_at(delta, t).expect("forecast computed for feasible cell");
                        cell.results.iter().map(|r| r.params.clone()).collect()
                    }
                };
                let scores: Vec<(f64, f64, f64)> = params
                    .par_iter()
                    .map(|p| score(p, test, &labels, inputs.threshold))
                    .collect::<Result<_>>()?;
                let cell_records: Vec<MetricRecord> = scores
                    .into_iter()
                    .enumerate()
                    .map(|(replica_id, (auc, recall, f1))| MetricRecord {
                        scenario,
                        delta,
                        test_batch: t,
                        replica_id,
                        roc_auc: auc,
                        recall_pos: recall,
                        macro_f1: f1,
                    })
                    .collect();
                if cell_records.len() < 2 {
                    report.skipped.push(SkippedCell {
                        scenario,
                        delta,
                        test_batch: t,
                        reason: "fewer than 2 replicas".into(),
                    });
                } else {
                    for metric in MetricKind::ALL {
                        let values: Vec<f64> = cell_records.iter().map(|r| r.value(metric)).collect();
                        let ci = aggregate_ci(&values, inputs.ci_level)?;
                        report.rows.push(ReportRow {
                            scenario,
                            delta,
                            test_batch: t,
                            metric,
                            mean: ci.mean,
                            ci_low: ci.lo,
                            ci_high: ci.hi,
                        });
                    }
                }
                records.extend(cell_records);
            }
        }
    }
    for cell in &forecasts {
        if cell.target_batch >= n_batches {
            continue;
        }
        let n_params = cell.results[0].params.len();
        for p in 0..n_params {
            let actual: Vec<f64> = (0..n_replicas)
                .map(|r| inputs.snapshots[r][cell.target_batch].get(p))
                .collect();
            let predicted: Vec<f64> = cell.results.iter().map(|r| r.params.get(p)).collect();
            let m = mape(&actual, &predicted)?;
            report.param_mape.push(ParamMapeRow {
                delta: cell.delta,
                target_batch: cell.target_batch,
                param_index: p,
                mape: m.mape,
                mae: m.mae,
                near_zero_denominator: m.near_zero_denominator,
            });
        }
    }
    Ok(ScenarioOutput {
        report,
        records,
        forecasts,
    })
}

/// `scenario,delta,test_batch,metric,mean,ci_low,ci_high`.
pub fn write_metrics_csv<W: Write>(writer: W, report: &EvaluationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scenario", "delta", "test_batch", "metric", "mean", "ci_low", "ci_high"])?;
    for r in &report.rows {
        w.write_record([
            r.scenario.as_str().to_string(),
            r.delta.to_string(),
            r.test_batch.to_string(),
            r.metric.as_str().to_string(),
            r.mean.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<metrics csv>", e))?;
    Ok(())
}

/// `replica_id,param_index,target_batch,delta,forecast,fallback_flag,cv_degree,cv_knots,mape_when_realized`.
/// Persistence selections report degree and knots 0; unrealised targets leave
/// the last column empty.
pub fn write_forecast_csv<W: Write>(writer: W, cells: &[ForecastCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "replica_id",
        "param_index",
        "target_batch",
        "delta",
        "forecast",
        "fallback_flag",
        "cv_degree",
        "cv_knots",
        "mape_when_realized",
    ])?;
    for cell in cells {
        for res in &cell.results {
            for p in 0..res.params.len() {
                let (degree, knots) = res.selections[p].degree_and_knots();
                let realized = res.per_param_mape.as_ref().map_or(String::new(), |m| m[p].to_string());
                w.write_record([
                    res.replica_id.to_string(),
                    p.to_string(),
                    cell.target_batch.to_string(),
                    cell.delta.to_string(),
                    res.params.get(p).to_string(),
                    u8::from(res.fallback_flags[p]).to_string(),
                    degree.to_string(),
                    knots.to_string(),
                    realized,
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<forecast csv>", e))?;
    Ok(())
}
