//! Evaluation, reporting and the manifest-driven experiment pipeline.

pub mod eval;
pub mod manifest;
pub mod pipeline;
pub mod report;

pub use eval::{EvalResult, InferenceMode, Variant};
pub use manifest::ExperimentManifest;
pub use pipeline::{run_pipeline, Artifacts, PipelineError};
pub use report::{emit_report, Report};
