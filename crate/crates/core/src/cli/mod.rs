//! Config ingestion, experiment orchestration and artifact emission behind the
//! `reclab` binary.

pub mod config;
pub mod run;

pub use config::{validate_config, ExperimentConfig, ExperimentKind, Resolved};
pub use run::{
    run_experiment, run_experiment_with, verify_manifest, Artifact, RunManifest, MANIFEST_FILE,
    SUMMARY_FILE, WORKERS_ENV,
};
