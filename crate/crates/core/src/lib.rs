//! Pro-adaptive modelling over temporal data batches.
//!
//! The crate trains logistic-regression models incrementally over quarterly
//! batches, treats every model parameter's history as a functional datum fitted
//! with clamped B-spline bases, and extrapolates the parameters a few batches
//! ahead so a model can be adapted to dataset shift before new labels arrive.
//!
//! Modules follow the pipeline order:
//!
//! - [`dataset`]: simulated drift generator, CSV ingestion, feature hashing, cleaning
//! - [`partition`]: quarterly batching, stratified splits, bootstrap replicas
//! - [`glm`]: logistic model, incremental training, random-search tuning
//! - [`forecast`]: spline bases, least-squares fits, forward CV, extrapolation
//! - [`eval`]: classification metrics, percentile CIs, the three-scenario harness
//! - [`shiftchar`]: prevalence, histograms, Jensen-Shannon distances, classical MDS

pub mod dataset;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod glm;
pub mod partition;
pub mod seed;
pub mod shiftchar;

pub use dataset::{CleanStats, IngestSchema, Record, SimConfig, TemporalDataset};
pub use error::{Error, Result};
pub use eval::{EvaluationReport, MetricKind, Scenario};
pub use forecast::{ForecastResult, ParameterTrajectory, SplineFit, SplineSpec};
pub use glm::{HyperParams, ModelParams, Samples, SearchSpace, TrainState};
pub use partition::{PartitionedBatch, Quarter, Replica, SplitBatch, TemporalBatch};
pub use shiftchar::{BatchPdf, DistanceMatrix, IgtProjection};
