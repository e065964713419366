//! Command-line front end: configuration, artifact persistence and the
//! end-to-end pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{DataSource, PipelineConfig};
pub use error::{CliError, Result};
pub use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "proadapt",
    version,
    about = "Forecast logistic-regression parameters across temporal batches"
)]
pub struct Cli {
    /// TOML or JSON pipeline configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; also seeds the simulator.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Forecast delays, e.g. `--delta 2,4`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub delta: Option<Vec<usize>>,
    /// Bootstrap replicas per batch.
    #[arg(long, global = true)]
    pub replicas: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write the simulated dataset.
    Simulate,
    /// Read the configured CSV source.
    Ingest,
    /// Run every stage.
    Run,
    /// Clean, split, tune and train.
    Train,
    /// Forecast parameters from the trained trajectories.
    Forecast,
    /// Score the three scenarios.
    Evaluate,
    /// Prevalence, distances and projections.
    Characterize,
    /// Summarise report.json.
    Report,
}

impl Cli {
    /// The configuration with command-line overrides applied.
    pub fn resolve_config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.master_seed = s;
            cfg.sim.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(d) = &self.delta {
            cfg.deltas = d.clone();
        }
        if let Some(r) = self.replicas {
            cfg.replicas = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Execute one command, returning the text to print.
pub fn execute(command: Command, cfg: &PipelineConfig) -> Result<String> {
    let dir = cfg.out_dir.display();
    Ok(match command {
        Command::Simulate => {
            let ds = commands::cmd_simulate(cfg)?;
            format!("wrote {} records to {dir}/{}", ds.len(), commands::DATASET)
        }
        Command::Ingest => {
            let (ds, drops) = commands::cmd_ingest(cfg)?;
            format!("ingested {} records ({} dropped) into {dir}", ds.len(), drops.total())
        }
        Command::Run => {
            let out = commands::cmd_run(cfg)?;
            format!(
                "{} batches, {} replicas, {} report rows, {} skipped cells; artifacts in {dir}",
                out.train.prepared.batches.len(),
                cfg.replicas,
                out.scenarios.report.rows.len(),
                out.scenarios.report.skipped.len()
            )
        }
        Command::Train => {
            let out = commands::cmd_train(cfg)?;
            format!(
                "trained {} replicas over {} batches",
                out.snapshots.len(),
                out.prepared.batches.len()
            )
        }
        Command::Forecast => {
            let cells = commands::cmd_forecast(cfg)?;
            format!("wrote {} forecast cells to {dir}/{}", cells.len(), commands::FORECAST)
        }
        Command::Evaluate => {
            let report = commands::cmd_evaluate(cfg)?;
            format!(
                "{} report rows, {} skipped cells",
                report.rows.len(),
                report.skipped.len()
            )
        }
        Command::Characterize => {
            let ch = commands::cmd_characterize(cfg)?;
            format!("projected {} batches into {dir}/{}", ch.labels.len(), commands::IGT)
        }
        Command::Report => commands::cmd_report(cfg)?,
    })
}
