//! Multi-modal artwork image registration: keypoint detection, robust
//! homography estimation, warping and control-point evaluation.

pub mod bundle;
pub mod detect;
pub mod error;
pub mod estimate;
pub mod eval;
pub mod geometry;
pub mod matching;
pub mod pipeline;
pub mod raster;
pub mod synth;

pub use error::{Error, Result, Stage};
pub use estimate::{EstimationReport, EstimatorConfig, Method};
pub use geometry::{Correspondence, Homography, Point2};
pub use pipeline::{register, RegistrationConfig, RegistrationOutput, ResizePolicy};
pub use raster::ImageBuffer;
