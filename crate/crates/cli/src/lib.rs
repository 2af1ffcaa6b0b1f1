//! Stage runner behind the `enercurate` binary: layered configuration, run
//! manifests with content digests, and named multi-stage plans.

pub mod agents;
pub mod config;
pub mod error;
pub mod manifest;
pub mod plan;
pub mod stages;

pub use config::{load_config, Config};
pub use error::CliError;
pub use manifest::{Counts, FileDigest, RunLog, RunManifest};
pub use plan::{run_pipeline, PipelineError, Plan};
pub use stages::{run_stage, Stage, StageIo};
