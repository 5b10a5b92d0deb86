//! Dataset generation, evaluation metrics, and pipeline orchestration.

pub mod dataset;
pub mod metrics;
pub mod pipeline;

pub use dataset::{gen_dataset, gen_scene, DatasetSample, FamilyConfig, GenConfig, ManifestRow};
pub use metrics::{angular_error_stats, depth_rmse_m, flow_rmse, NormalMetrics};
pub use pipeline::{run_pipeline, PipelineParams, PipelineReport, ResultRow, RESULTS_HEADER};
