//! The `iggy` command-line pipeline: build language models, extract
//! features, train, rank, evaluate, aggregate crowd labels and report.

pub mod cli;
pub mod commands;
pub mod config;
pub mod context;
pub mod manifest;
pub mod plot;

pub use cli::{exit_code, run};
pub use commands::{
    cmd_aggregate, cmd_build_lm, cmd_evaluate, cmd_extract, cmd_rank, cmd_report, cmd_train,
    AggregateArgs, EvalMode, ModelKind,
};
pub use config::{Override, PipelineConfig};
pub use manifest::{RunManifest, MANIFEST_NAME};
