//! Training, checkpoints, the end-to-end pipeline and reproduction studies.

pub mod config;
pub mod model;
pub mod optim;
pub mod reproduce;
pub mod run;
pub mod train;

pub use config::{BackboneKind, GateSetting, OptimizerKind, RunConfig};
pub use model::{
    generate_reports, load_reports, parse_reports, postprocess, report_sentences, reports_to_string, Checkpoint,
    GeneratedReport, Model, CHECKPOINT_FORMAT,
};
pub use optim::Optimizer;
pub use reproduce::{reproduce, Study, StudyRow, StudyTable, DEFAULT_SEEDS};
pub use run::{
    load_corpora, pair_reports, radrqi_config, resolve_graph, run_pipeline, score_reports, Corpora, Manifest,
    PipelineResult, RunDirectory,
};
pub use train::{train, CachedConditioning, Trained, TrainingHistory};

#[cfg(test)]
mod tests;
