//! Pipeline commands behind the `ecg-guard` binary.
//!
//! Each command is a deterministic function of the experiment config and
//! its input files; results land under the output directory with the
//! fixed names in [`files`].

pub mod app;
pub mod commands;
pub mod config;
pub mod ingest;
mod render;

use thiserror::Error;

pub use commands::*;
pub use config::ExperimentConfig;

/// Fixed output file names.
pub mod files {
    pub const DATASET: &str = "dataset.ecgg";
    pub const MANIFEST: &str = "dataset.manifest";
    pub const SYNTH_SUMMARY: &str = "synth.json";
    pub const INGEST_SUMMARY: &str = "ingest.json";
    pub const EMBEDDER: &str = "embedder.ckpt";
    pub const TRAIN_EMBED_REPORT: &str = "train_embed.json";
    pub const SIAMESE_EMBEDDER: &str = "siamese_embedder.ckpt";
    pub const DISCRIMINATOR: &str = "discriminator.ckpt";
    pub const TRAIN_DISC_REPORT: &str = "train_disc.json";
    pub const GALLERY_PROBE: &str = "gallery_probe.json";
    pub const SIMULATION: &str = "simulation.json";
    pub const REPORT_TEXT: &str = "report.txt";
    pub const REPORT_SUMMARY: &str = "summary.json";
    pub const BENCH: &str = "bench.json";
    pub const DATABASE: &str = "vectors.ecgv";
    pub const DB_IMPORT_SUMMARY: &str = "db_import.json";
    pub const DB_DUMP: &str = "vectors.tsv";
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config file, flag or parameter combination.
    #[error("config error: {0}")]
    Config(String),
    /// Missing, unreadable or unsuitable input data.
    #[error("data error: {0}")]
    Data(String),
    /// Failure while running an otherwise valid command.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Runtime(_) => 4,
        }
    }
}

impl From<ecg_guard::evalharness::EvalError> for CliError {
    fn from(e: ecg_guard::evalharness::EvalError) -> Self {
        use ecg_guard::evalharness::EvalError as E;
        match e {
            E::InvalidConfig(m) => Self::Config(m),
            E::InsufficientData(_) | E::Degenerate(_) | E::Store(_) => Self::Data(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<ecg_guard::embedder::EmbedError> for CliError {
    fn from(e: ecg_guard::embedder::EmbedError) -> Self {
        use ecg_guard::embedder::EmbedError as E;
        match e {
            E::InvalidConfig(m) => Self::Config(m),
            E::EmptySource | E::Preprocess(_) => Self::Data(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<ecg_guard::discriminator::DiscError> for CliError {
    fn from(e: ecg_guard::discriminator::DiscError) -> Self {
        use ecg_guard::discriminator::DiscError as E;
        match e {
            E::InvalidConfig(m) => Self::Config(m),
            E::EmptySource | E::DimMismatch { .. } => Self::Data(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<ecg_guard::identity::IdentityError> for CliError {
    fn from(e: ecg_guard::identity::IdentityError) -> Self {
        use ecg_guard::identity::IdentityError as E;
        match e {
            E::Disc(_) => Self::Runtime(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<ecg_guard::synthgen::SynthError> for CliError {
    fn from(e: ecg_guard::synthgen::SynthError) -> Self {
        match e {
            ecg_guard::synthgen::SynthError::InvalidConfig(m) => Self::Config(m),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<ecg_guard::ecgstore::StoreError> for CliError {
    fn from(e: ecg_guard::ecgstore::StoreError) -> Self {
        Self::Data(e.to_string())
    }
}
