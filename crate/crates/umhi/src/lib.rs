//! File formats, configuration and the command-line pipeline around
//! [`umhi_core`].
//!
//! The binary exposes the workflow as subcommands sharing one artifact
//! directory: `ingest`, `analyze`, `embed`, `pretrain`, `train`, `predict`,
//! `evaluate` (cross-validation, trains its own components per run), `synth`
//! (generated dataset, already ingested) and `report`.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;

pub use error::{CliError, Result};
