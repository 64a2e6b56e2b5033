//! End-to-end commands: extraction, selection, ridge training, prediction,
//! leave-one-person-out evaluation and synthetic benchmark generation.
//!
//! Every command is deterministic given its inputs, configuration and seed.

mod commands;
pub mod config;

pub use commands::{
    cmd_evaluate, cmd_extract, cmd_predict, cmd_select, cmd_synth, cmd_train, evaluate,
    extract_features, fit_model, predict_rows, select_bins, ExtractSummary, FittedModel,
    SynthOptions, SynthSummary, TRUTH_HEADER,
};
pub use config::RunConfig;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::gloh::gfv::FeatureFileError;
use crate::gloh::GlohError;
use crate::imageio::ImageError;
use crate::metrics::MetricsError;
use crate::mtl::selfile::SelectionFileError;
use crate::mtl::MtlError;
use crate::ridge::RidgeError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{}: {source}", path.display())]
    Image { path: PathBuf, source: ImageError },
    #[error("{}: {source}", path.display())]
    Gloh { path: PathBuf, source: GlohError },
    #[error("{0}")]
    Features(#[from] FeatureFileError),
    #[error("{0}")]
    Dataset(#[from] DatasetError),
    #[error("{0}")]
    Mtl(#[from] MtlError),
    #[error("{0}")]
    Ridge(#[from] RidgeError),
    #[error("{0}")]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Selection(#[from] SelectionFileError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("feature file has {features} rows but the manifest has {manifest}")]
    RowCountMismatch { features: usize, manifest: usize },
    #[error("{0} is empty")]
    Empty(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl From<GlohError> for PipelineError {
    fn from(e: GlohError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl PipelineError {
    /// Short machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Image { source, .. } => match source {
                ImageError::MissingFile(_) => "MissingFile",
                ImageError::MalformedHeader(_) => "MalformedHeader",
                ImageError::TruncatedPixelData { .. } => "TruncatedPixelData",
                ImageError::UnsupportedMaxval(_) => "UnsupportedMaxval",
                ImageError::InvalidPixel { .. } => "InvalidPixel",
                ImageError::DimensionMismatch { .. } => "DimensionMismatch",
                ImageError::InvalidImage(_) => "InvalidImage",
                ImageError::Io(_) => "Io",
            },
            PipelineError::Gloh { source, .. } => match source {
                GlohError::ImageTooSmall { .. } => "ImageTooSmall",
                GlohError::PatchOutOfBounds { .. } => "PatchOutOfBounds",
                GlohError::NegativeEntry(_) => "NegativeEntry",
                GlohError::InvalidParams(_) => "InvalidParams",
            },
            PipelineError::Features(e) => match e {
                FeatureFileError::BadMagic => "BadMagic",
                FeatureFileError::Truncated { .. } => "Truncated",
                FeatureFileError::TooLarge { .. } => "TooLarge",
                FeatureFileError::Io(_) => "Io",
            },
            PipelineError::Dataset(e) => match e {
                DatasetError::MalformedRow { .. } => "MalformedRow",
                DatasetError::DuplicatePath { .. } => "DuplicatePath",
                DatasetError::InvalidSample(_) => "InvalidSample",
                DatasetError::SinglePerson => "SinglePerson",
                DatasetError::EmptyTask(_) => "EmptyTask",
                DatasetError::RowCountMismatch { .. } => "RowCountMismatch",
                DatasetError::RowOutOfRange { .. } => "RowOutOfRange",
                DatasetError::InvalidSpec(_) => "InvalidSpec",
                DatasetError::Task(_) => "InvalidTask",
                DatasetError::Io(_) => "Io",
            },
            PipelineError::Mtl(e) => match e {
                MtlError::ShapeMismatch(_) => "ShapeMismatch",
                MtlError::NegativeLambda(_) => "NegativeLambda",
                MtlError::NonFiniteEncountered { .. } => "NonFiniteEncountered",
                MtlError::BudgetOutOfRange { .. } => "BudgetOutOfRange",
                MtlError::InvalidTask(_) => "InvalidTask",
                MtlError::InvalidOptions(_) => "InvalidOptions",
            },
            PipelineError::Ridge(e) => match e {
                RidgeError::SingularSystem { .. } => "SingularSystem",
                RidgeError::ShapeMismatch(_) => "ShapeMismatch",
                RidgeError::GridEmpty => "GridEmpty",
                RidgeError::TooFewSamples { .. } => "TooFewSamples",
                RidgeError::InvalidAlpha(_) => "InvalidAlpha",
                RidgeError::UnknownTask(_) => "UnknownTask",
                RidgeError::FeatureTooShort { .. } => "FeatureTooShort",
                RidgeError::Parse { .. } => "MalformedModel",
                RidgeError::Io(_) => "Io",
            },
            PipelineError::Metrics(e) => match e {
                MetricsError::LengthMismatch { .. } => "LengthMismatch",
                MetricsError::Empty | MetricsError::EmptyFold(_) => "Empty",
            },
            PipelineError::Selection(e) => match e {
                SelectionFileError::Parse { .. } => "MalformedSelection",
                SelectionFileError::Io(_) => "Io",
            },
            PipelineError::Config(_) => "Config",
            PipelineError::RowCountMismatch { .. } => "RowCountMismatch",
            PipelineError::Empty(_) => "Empty",
            PipelineError::Io(_) => "Io",
        }
    }
}
