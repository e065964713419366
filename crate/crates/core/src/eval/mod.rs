//! Classification metrics, bootstrap aggregation and the scenario harness.

mod metrics;
mod scenarios;

pub use metrics::{aggregate_ci, classification_scores, percentile_sorted, recall_and_macro_f1, roc_auc, Interval};
pub use scenarios::{
    forecast_cells, run_scenarios, write_forecast_csv, write_metrics_csv, EvaluationReport, ForecastCell, ForecastMode,
    ForecastSettings, MetricKind, MetricRecord, ParamMapeRow, ReportRow, Scenario, ScenarioInputs, ScenarioOutput,
    SkippedCell,
};
