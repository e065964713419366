//! Stage functions shared by the commands. Each stage tags its errors with
//! its name.

use proadapt_core::dataset::{self, IngestDrops};
use proadapt_core::eval::{run_scenarios, ForecastCell, ForecastSettings, ScenarioInputs, ScenarioOutput};
use proadapt_core::glm::{train_replicas, tune_hyperparameters, TuneOutcome};
use proadapt_core::partition::{batch_by_quarter, partition_all};
use proadapt_core::shiftchar::{estimate_conditional_pdfs, estimate_pdf, igt_project};
use proadapt_core::{
    BatchPdf, CleanStats, DistanceMatrix, HyperParams, IgtProjection, ModelParams, PartitionedBatch, Samples,
    TemporalBatch, TemporalDataset,
};
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, PipelineConfig};
use crate::error::{CliError, Result, StageExt};

/// Generate or ingest the configured data source.
pub fn load_source(config: &PipelineConfig) -> Result<(TemporalDataset, Option<IngestDrops>)> {
    match &config.source {
        DataSource::Simulate => dataset::generate_simulated(&config.sim)
            .map(|d| (d, None))
            .stage("simulate"),
        DataSource::Csv { path, schema } => dataset::ingest_csv(path, schema)
            .map(|i| (i.dataset, Some(i.dropped)))
            .stage("ingest"),
    }
}

pub struct Prepared {
    pub dataset: TemporalDataset,
    pub clean_stats: CleanStats,
    pub batches: Vec<PartitionedBatch>,
}

impl Prepared {
    pub fn dim(&self) -> usize {
        self.dataset.feature_dim()
    }

    /// Held-out test set per batch; `None` where the batch was not split.
    pub fn test_sets(&self) -> Vec<Option<Samples>> {
        self.batches
            .iter()
            .map(|pb| pb.split.as_ref().map(|s| s.test_samples(&pb.batch)))
            .collect()
    }
}

/// Clean, batch by quarter and split every batch.
pub fn prepare(config: &PipelineConfig, raw: &TemporalDataset) -> Result<Prepared> {
    let (dataset, clean_stats) = dataset::clean(raw).stage("clean")?;
    let batches = batch_by_quarter(&dataset);
    let batches = partition_all(batches, |i| config.split_seed_for(i), config.replicas);
    if batches.iter().all(|b| b.split.is_none()) {
        let reasons: Vec<&str> = batches.iter().filter_map(|b| b.skip_reason.as_deref()).collect();
        return Err(proadapt_core::Error::InvalidInput(format!(
            "no batch could be split ({})",
            reasons.join("; ")
        )))
        .stage("partition");
    }
    Ok(Prepared {
        dataset,
        clean_stats,
        batches,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub batch: usize,
    pub outcome: TuneOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSchedule {
    /// Hyperparameters used for each batch.
    pub schedule: Vec<HyperParams>,
    pub tuning: Vec<TuningRecord>,
}

pub fn tune(config: &PipelineConfig, prepared: &Prepared) -> Result<HyperSchedule> {
    let batches = &prepared.batches;
    let run = |k: usize, prefix: Option<&[HyperParams]>| {
        tune_hyperparameters(
            batches,
            k,
            &config.search,
            config.tune_budget,
            prepared.dim(),
            config.tune_seed_for(k),
            prefix,
        )
        .stage("tune")
    };
    if config.tune_per_horizon {
        let mut schedule: Vec<HyperParams> = Vec::with_capacity(batches.len());
        let mut tuning = Vec::new();
        for (k, pb) in batches.iter().enumerate() {
            if pb.split.is_none() {
                schedule.push(schedule.last().copied().unwrap_or_default());
                continue;
            }
            let outcome = run(k, Some(&schedule))?;
            schedule.push(outcome.best);
            tuning.push(TuningRecord { batch: k, outcome });
        }
        return Ok(HyperSchedule { schedule, tuning });
    }
    let k = (config.tune_batch..batches.len())
        .find(|&k| batches[k].split.is_some())
        .ok_or_else(|| CliError::config("tune_batch", "no splittable batch at or after it"))?;
    let outcome = run(k, None)?;
    Ok(HyperSchedule {
        schedule: vec![outcome.best; batches.len()],
        tuning: vec![TuningRecord { batch: k, outcome }],
    })
}

/// `snapshots[replica][batch]` for every bootstrap replica.
pub fn train(config: &PipelineConfig, prepared: &Prepared, hyper: &HyperSchedule) -> Result<Vec<Vec<ModelParams>>> {
    train_replicas(
        &prepared.batches,
        config.replicas,
        &hyper.schedule,
        prepared.dim(),
        |r| config.train_seed_for(r),
    )
    .stage("train")
}

pub fn forecast_settings(config: &PipelineConfig) -> ForecastSettings {
    ForecastSettings {
        candidates: config.candidates.clone(),
        mode: config.forecast_mode,
    }
}

/// Forecasts for targets past the last trained batch.
pub fn future_forecasts(
    config: &PipelineConfig,
    snapshots: &[Vec<ModelParams>],
    deltas: &[usize],
) -> Result<Vec<ForecastCell>> {
    let n = snapshots.first().map_or(0, Vec::len);
    let horizon = deltas.iter().copied().max().unwrap_or(0);
    proadapt_core::eval::forecast_cells(snapshots, deltas, n..n + horizon, &forecast_settings(config)).stage("forecast")
}

pub fn evaluate(
    config: &PipelineConfig,
    test_sets: &[Option<Samples>],
    snapshots: &[Vec<ModelParams>],
    deltas: &[usize],
) -> Result<ScenarioOutput> {
    let n = snapshots.first().map_or(0, Vec::len);
    let inputs = ScenarioInputs {
        test_sets,
        snapshots,
        forecast: forecast_settings(config),
        threshold: config.threshold,
        ci_level: config.ci_level,
    };
    let mut out = run_scenarios(&inputs, deltas, 0..n).stage("evaluate")?;
    out.report.config = serde_json::to_value(config).expect("config serializes");
    out.report.seeds = seeds(config, n);
    Ok(out)
}

/// Every labelled seed the pipeline uses for `n_batches` batches.
pub fn seeds(config: &PipelineConfig, n_batches: usize) -> std::collections::BTreeMap<String, u64> {
    let mut m = std::collections::BTreeMap::new();
    m.insert("master".to_string(), config.master_seed);
    if matches!(config.source, DataSource::Simulate) {
        m.insert("simulate".to_string(), config.sim.seed);
    }
    for b in 0..n_batches {
        m.insert(format!("split/{b}"), config.split_seed_for(b));
        m.insert(format!("tune/{b}"), config.tune_seed_for(b));
    }
    for r in 0..config.replicas {
        m.insert(format!("train/{r}"), config.train_seed_for(r));
    }
    m
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub pdfs: Vec<BatchPdf>,
    pub distances: DistanceMatrix,
    pub igt: IgtProjection,
}

#[derive(Debug, Clone)]
pub struct Characterization {
    /// `(batch_index, period_label)` per row of the projections.
    pub labels: Vec<(usize, String)>,
    /// Built from the concatenated class-conditional histograms.
    pub conditional: Projection,
    /// Built from the marginal histograms of the feature.
    pub marginal: Projection,
}

pub fn characterize(config: &PipelineConfig, batches: &[TemporalBatch]) -> Result<Characterization> {
    let f = config.characterize_feature;
    let dim = batches
        .iter()
        .flat_map(|b| b.records.first())
        .map(|r| r.features.len())
        .next()
        .unwrap_or(0);
    if f >= dim {
        return Err(CliError::config(
            "characterize_feature",
            format!("index {f} out of range for {dim} features"),
        ));
    }
    let per_batch: Vec<(Vec<f64>, Vec<u8>)> = batches
        .iter()
        .map(|b| {
            (
                b.records.iter().map(|r| r.features[f]).collect(),
                b.records.iter().map(|r| r.label).collect(),
            )
        })
        .collect();
    let project = |pdfs: Vec<BatchPdf>| -> Result<Projection> {
        let distances = DistanceMatrix::from_pdfs(&pdfs)?;
        let igt = igt_project(&distances, config.igt_dims)?;
        Ok(Projection { pdfs, distances, igt })
    };
    let conditional = estimate_conditional_pdfs(&per_batch, config.bins)
        .map_err(CliError::from)
        .and_then(project)
        .stage("characterize")?;
    let values: Vec<Vec<f64>> = per_batch.into_iter().map(|(v, _)| v).collect();
    let marginal = estimate_pdf(&values, config.bins)
        .map_err(CliError::from)
        .and_then(project)
        .stage("characterize")?;
    Ok(Characterization {
        labels: batches.iter().map(|b| (b.index, b.period_label())).collect(),
        conditional,
        marginal,
    })
}
