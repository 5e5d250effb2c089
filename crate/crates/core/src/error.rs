use std::fmt;

use serde::{Deserialize, Serialize};

/// Pipeline stage a registration failure is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Loading,
    Detection,
    Matching,
    Estimation,
    Warping,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Loading => "loading",
            Stage::Detection => "detection",
            Stage::Matching => "matching",
            Stage::Estimation => "estimation",
            Stage::Warping => "warping",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point maps to infinity (|w| <= 1e-12)")]
    DegeneratePoint,
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("homography is not invertible")]
    DegenerateHomography,
    #[error("no keypoints passed the confidence threshold")]
    EmptyDetection,
    #[error("mutual nearest-neighbour matching produced no matches")]
    NoMatches,
    #[error("robust estimation failed: {0}")]
    EstimationFailed(String),
    #[error("invalid resize policy: {0}")]
    InvalidPolicy(String),
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("error list is empty")]
    EmptyErrorList,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Decode {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Stage this error belongs to when raised from a registration run.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::EmptyDetection => Some(Stage::Detection),
            Error::NoMatches => Some(Stage::Matching),
            Error::EstimationFailed(_)
            | Error::DegenerateConfiguration(_)
            | Error::DegeneratePoint => Some(Stage::Estimation),
            Error::DegenerateHomography => Some(Stage::Warping),
            Error::Io { .. } | Error::Decode { .. } => Some(Stage::Loading),
            _ => None,
        }
    }

    pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
