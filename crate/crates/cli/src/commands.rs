use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use proadapt_core::dataset::{read_dataset_csv, write_dataset_csv, IngestDrops};
use proadapt_core::eval::{
    forecast_cells, write_forecast_csv, write_metrics_csv, ForecastCell, MetricKind, Scenario, ScenarioOutput,
};
use proadapt_core::glm::{read_snapshots_csv, write_snapshots_csv};
use proadapt_core::partition::{batch_by_quarter, write_split_manifest};
use proadapt_core::shiftchar::{write_distances_csv, write_igt_csv, write_prevalence_csv};
use proadapt_core::{EvaluationReport, ModelParams, TemporalDataset};

use crate::config::{DataSource, PipelineConfig};
use crate::error::{CliError, Result, StageExt};
use crate::manifest::RunManifest;
use crate::pipeline::{self, Characterization, HyperSchedule, Prepared};

pub const DATASET: &str = "dataset.csv";
pub const INGEST_STATS: &str = "ingest_stats.json";
pub const CLEAN_STATS: &str = "clean_stats.json";
pub const HYPERPARAMS: &str = "hyperparams.json";
pub const TRAJECTORY: &str = "params_trajectory.csv";
pub const SPLITS: &str = "splits.csv";
pub const FORECAST: &str = "forecast.csv";
pub const METRICS: &str = "metrics.csv";
pub const REPORT: &str = "report.json";
pub const IGT: &str = "igt_projection.csv";
pub const IGT_MARGINAL: &str = "igt_projection_marginal.csv";
pub const DISTANCES: &str = "distances.csv";
pub const PREVALENCE: &str = "prevalence.csv";

fn out_dir(config: &PipelineConfig) -> Result<&Path> {
    let dir = config.out_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir)
}

fn write_file(
    dir: &Path,
    name: &str,
    manifest: &mut RunManifest,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| CliError::io(&path, e))?;
    manifest.record(dir, name)
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, manifest: &mut RunManifest, value: &T) -> Result<()> {
    write_file(dir, name, manifest, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::io(dir.join(name), e.into()))?;
        writeln!(w).map_err(|e| CliError::io(dir.join(name), e))
    })
}

fn open(dir: &Path, name: &str) -> Result<BufReader<File>> {
    let path = dir.join(name);
    File::open(&path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(&path, e))
}

/// Manifest of `dir` after checking each `(file, producing command)` pair.
fn require(dir: &Path, config: &PipelineConfig, needs: &[(&str, &'static str)]) -> Result<RunManifest> {
    let first = needs.first().map_or("simulate", |n| n.1);
    let existing = RunManifest::load(dir)?.ok_or_else(|| CliError::MissingIntermediate {
        file: crate::manifest::MANIFEST_FILE.to_string(),
        command: first,
    })?;
    for (file, producer) in needs {
        existing.verify(dir, file, producer)?;
    }
    RunManifest::open(dir, config)
}

fn load_dataset(dir: &Path) -> Result<TemporalDataset> {
    Ok(read_dataset_csv(open(dir, DATASET)?)?)
}

fn load_snapshots(dir: &Path) -> Result<Vec<Vec<ModelParams>>> {
    Ok(read_snapshots_csv(open(dir, TRAJECTORY)?)?)
}

/// In-range and future forecasts, ordered by delay then target.
fn merge_forecasts(mut a: Vec<ForecastCell>, b: Vec<ForecastCell>) -> Vec<ForecastCell> {
    a.extend(b);
    a.sort_by_key(|c| (c.delta, c.target_batch));
    a
}

fn save_dataset(
    dir: &Path,
    manifest: &mut RunManifest,
    dataset: &TemporalDataset,
    drops: Option<IngestDrops>,
) -> Result<()> {
    write_file(dir, DATASET, manifest, |w| Ok(write_dataset_csv(dataset, w)?))?;
    if let Some(d) = drops {
        write_json(dir, INGEST_STATS, manifest, &d)?;
    }
    Ok(())
}

fn save_training(
    dir: &Path,
    manifest: &mut RunManifest,
    config: &PipelineConfig,
    prepared: &Prepared,
    hyper: &HyperSchedule,
    snapshots: &[Vec<ModelParams>],
) -> Result<()> {
    write_json(dir, CLEAN_STATS, manifest, &prepared.clean_stats)?;
    write_json(dir, HYPERPARAMS, manifest, hyper)?;
    write_file(dir, TRAJECTORY, manifest, |w| Ok(write_snapshots_csv(w, snapshots)?))?;
    if config.export_splits {
        write_file(dir, SPLITS, manifest, |w| {
            Ok(write_split_manifest(w, &prepared.batches)?)
        })?;
    }
    Ok(())
}

fn save_evaluation(dir: &Path, manifest: &mut RunManifest, report: &EvaluationReport) -> Result<()> {
    write_file(dir, METRICS, manifest, |w| Ok(write_metrics_csv(w, report)?))?;
    write_json(dir, REPORT, manifest, report)
}

fn save_characterization(
    dir: &Path,
    manifest: &mut RunManifest,
    batches: &[proadapt_core::TemporalBatch],
    ch: &Characterization,
) -> Result<()> {
    let ids: Vec<usize> = ch.labels.iter().map(|l| l.0).collect();
    write_file(dir, IGT, manifest, |w| {
        Ok(write_igt_csv(w, &ch.conditional.igt, &ch.labels)?)
    })?;
    write_file(dir, IGT_MARGINAL, manifest, |w| {
        Ok(write_igt_csv(w, &ch.marginal.igt, &ch.labels)?)
    })?;
    write_file(dir, DISTANCES, manifest, |w| {
        Ok(write_distances_csv(w, &ch.conditional.distances, &ids)?)
    })?;
    write_file(dir, PREVALENCE, manifest, |w| Ok(write_prevalence_csv(w, batches)?))
}

/// Write the simulated dataset.
pub fn cmd_simulate(config: &PipelineConfig) -> Result<TemporalDataset> {
    config.sim.validate()?;
    let dir = out_dir(config)?;
    let dataset = proadapt_core::dataset::generate_simulated(&config.sim).stage("simulate")?;
    let mut manifest = RunManifest::open(dir, config)?;
    save_dataset(dir, &mut manifest, &dataset, None)?;
    manifest.save(dir)?;
    Ok(dataset)
}

/// Read the configured CSV source into `dataset.csv`.
pub fn cmd_ingest(config: &PipelineConfig) -> Result<(TemporalDataset, IngestDrops)> {
    if !matches!(config.source, DataSource::Csv { .. }) {
        return Err(CliError::config("source", "ingest needs a csv source"));
    }
    let dir = out_dir(config)?;
    let (dataset, drops) = pipeline::load_source(config)?;
    let drops = drops.unwrap_or_default();
    let mut manifest = RunManifest::open(dir, config)?;
    save_dataset(dir, &mut manifest, &dataset, Some(drops))?;
    manifest.save(dir)?;
    Ok((dataset, drops))
}

pub struct TrainOutput {
    pub prepared: Prepared,
    pub hyper: HyperSchedule,
    pub snapshots: Vec<Vec<ModelParams>>,
}

fn dataset_producer(config: &PipelineConfig) -> &'static str {
    match config.source {
        DataSource::Simulate => "simulate",
        DataSource::Csv { .. } => "ingest",
    }
}

/// Clean, partition, tune and train from `dataset.csv`.
pub fn cmd_train(config: &PipelineConfig) -> Result<TrainOutput> {
    let dir = out_dir(config)?;
    let mut manifest = require(dir, config, &[(DATASET, dataset_producer(config))])?;
    let dataset = load_dataset(dir)?;
    let out = train_stages(config, &dataset)?;
    save_training(dir, &mut manifest, config, &out.prepared, &out.hyper, &out.snapshots)?;
    manifest.save(dir)?;
    Ok(out)
}

fn train_stages(config: &PipelineConfig, dataset: &TemporalDataset) -> Result<TrainOutput> {
    let prepared = pipeline::prepare(config, dataset)?;
    let hyper = pipeline::tune(config, &prepared)?;
    let snapshots = pipeline::train(config, &prepared, &hyper)?;
    Ok(TrainOutput {
        prepared,
        hyper,
        snapshots,
    })
}

/// Forecast every parameter from `params_trajectory.csv`.
pub fn cmd_forecast(config: &PipelineConfig) -> Result<Vec<ForecastCell>> {
    let dir = out_dir(config)?;
    let mut manifest = require(dir, config, &[(TRAJECTORY, "train")])?;
    let snapshots = load_snapshots(dir)?;
    let n = snapshots.first().map_or(0, Vec::len);
    let settings = pipeline::forecast_settings(config);
    let in_range = forecast_cells(&snapshots, &config.deltas, 0..n, &settings).stage("forecast")?;
    let cells = merge_forecasts(
        in_range,
        pipeline::future_forecasts(config, &snapshots, &config.deltas)?,
    );
    write_file(dir, FORECAST, &mut manifest, |w| Ok(write_forecast_csv(w, &cells)?))?;
    manifest.save(dir)?;
    Ok(cells)
}

/// Score the three scenarios from persisted data and snapshots.
pub fn cmd_evaluate(config: &PipelineConfig) -> Result<EvaluationReport> {
    let dir = out_dir(config)?;
    let mut manifest = require(
        dir,
        config,
        &[(DATASET, dataset_producer(config)), (TRAJECTORY, "train")],
    )?;
    let dataset = load_dataset(dir)?;
    let snapshots = load_snapshots(dir)?;
    let prepared = pipeline::prepare(config, &dataset)?;
    let out = pipeline::evaluate(config, &prepared.test_sets(), &snapshots, &config.deltas)?;
    save_evaluation(dir, &mut manifest, &out.report)?;
    manifest.save(dir)?;
    Ok(out.report)
}

/// Prevalence, distances and projections from `dataset.csv`.
pub fn cmd_characterize(config: &PipelineConfig) -> Result<Characterization> {
    let dir = out_dir(config)?;
    let mut manifest = require(dir, config, &[(DATASET, dataset_producer(config))])?;
    let dataset = load_dataset(dir)?;
    let (cleaned, _) = proadapt_core::dataset::clean(&dataset).stage("clean")?;
    let batches = batch_by_quarter(&cleaned);
    let ch = pipeline::characterize(config, &batches)?;
    save_characterization(dir, &mut manifest, &batches, &ch)?;
    manifest.save(dir)?;
    Ok(ch)
}

pub struct RunOutput {
    pub dataset: TemporalDataset,
    pub train: TrainOutput,
    pub scenarios: ScenarioOutput,
    pub forecasts: Vec<ForecastCell>,
    pub characterization: Characterization,
}

/// The whole pipeline, writing every artifact.
pub fn cmd_run(config: &PipelineConfig) -> Result<RunOutput> {
    config.validate()?;
    let dir = out_dir(config)?;
    let mut manifest = RunManifest::open(dir, config)?;
    manifest.files.clear();
    let (dataset, drops) = pipeline::load_source(config)?;
    save_dataset(dir, &mut manifest, &dataset, drops)?;

    let train = train_stages(config, &dataset)?;
    save_training(
        dir,
        &mut manifest,
        config,
        &train.prepared,
        &train.hyper,
        &train.snapshots,
    )?;

    let scenarios = pipeline::evaluate(config, &train.prepared.test_sets(), &train.snapshots, &config.deltas)?;
    let future = pipeline::future_forecasts(config, &train.snapshots, &config.deltas)?;
    let forecasts = merge_forecasts(scenarios.forecasts.clone(), future);
    write_file(dir, FORECAST, &mut manifest, |w| Ok(write_forecast_csv(w, &forecasts)?))?;
    save_evaluation(dir, &mut manifest, &scenarios.report)?;

    let batches: Vec<_> = train.prepared.batches.iter().map(|b| b.batch.clone()).collect();
    let characterization = pipeline::characterize(config, &batches)?;
    save_characterization(dir, &mut manifest, &batches, &characterization)?;
    manifest.seeds.extend(pipeline::seeds(config, batches.len()));
    manifest.save(dir)?;
    Ok(RunOutput {
        dataset,
        train,
        scenarios,
        forecasts,
        characterization,
    })
}

/// Plain-text summary of `report.json`: mean ROC-AUC with its interval per
/// scenario, delay and test batch.
pub fn cmd_report(config: &PipelineConfig) -> Result<String> {
    let dir = out_dir(config)?;
    require(dir, config, &[(REPORT, "evaluate")])?;
    let report: EvaluationReport = serde_json::from_reader(open(dir, REPORT)?)
        .map_err(|e| CliError::Core(proadapt_core::Error::Parse(format!("{REPORT}: {e}"))))?;
    Ok(render_report(&report))
}

pub fn render_report(report: &EvaluationReport) -> String {
    let mut deltas: Vec<usize> = report.rows.iter().map(|r| r.delta).collect();
    deltas.sort_unstable();
    deltas.dedup();
    let mut out = String::new();
    for delta in deltas {
        let mut batches: Vec<usize> = report
            .rows
            .iter()
            .filter(|r| r.delta == delta)
            .map(|r| r.test_batch)
            .collect();
        batches.sort_unstable();
        batches.dedup();
        let _ = writeln!(out, "delta = {delta}  (roc_auc mean [ci_low, ci_high])");
        let _ = write!(out, "{:>6}", "batch");
        for s in Scenario::ALL {
            let _ = write!(out, "  {:>26}", s.as_str());
        }
        let _ = writeln!(out);
        for t in batches {
            let _ = write!(out, "{t:>6}");
            for s in Scenario::ALL {
                let cell = match report.row(s, delta, t, MetricKind::RocAuc) {
                    Some(r) => format!("{:.3} [{:.3}, {:.3}]", r.mean, r.ci_low, r.ci_high),
                    None => "skipped".to_string(),
                };
                let _ = write!(out, "  {cell:>26}");
            }
            let _ = writeln!(out);
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out, "{} skipped cells", report.skipped.len());
    out
}
