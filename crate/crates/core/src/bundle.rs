//! Result bundle: PNG assets plus `result.json` and `timings.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{RegistrationConfig, RegistrationOutput, StageTimings};
use crate::raster::ImageBuffer;

pub const REFERENCE_PNG: &str = "reference.png";
pub const WARPED_PNG: &str = "warped.png";
pub const OVERLAY_PNG: &str = "overlay_redcyan.png";
pub const MATCHES_PNG: &str = "matches.png";
pub const RESULT_JSON: &str = "result.json";
pub const TIMINGS_JSON: &str = "timings.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub method: String,
    pub iterations: usize,
    pub inliers: usize,
    pub score: f64,
    pub matches: usize,
    pub keypoints_ref: usize,
    pub keypoints_mov: usize,
}

/// Contents of `result.json`. Everything here is a deterministic function of
/// the inputs and the config; wall-clock timings live in `timings.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultManifest {
    pub files: Vec<String>,
    /// Moving-original → reference-original, row-major.
    pub h_original: [f64; 9],
    /// Moving-working → reference-working, row-major.
    pub h_working: [f64; 9],
    pub working_scale_ref: f64,
    pub working_scale_mov: f64,
    pub reference_size: [usize; 2],
    pub out_of_bounds_fill: String,
    pub report: ReportSummary,
    pub config: RegistrationConfig,
}

impl ResultManifest {
    pub fn new(out: &RegistrationOutput, reference: &ImageBuffer, cfg: &RegistrationConfig) -> Self {
        let mut files = vec![
            REFERENCE_PNG.to_string(),
            WARPED_PNG.to_string(),
            OVERLAY_PNG.to_string(),
        ];
        if out.matches_visualization.is_some() {
            files.push(MATCHES_PNG.into());
        }
        files.push(RESULT_JSON.into());
        files.push(TIMINGS_JSON.into());
        Self {
            files,
            h_original: out.h_original.to_row_major(),
            h_working: out.h_working.to_row_major(),
            working_scale_ref: out.working_scale_ref,
            working_scale_mov: out.working_scale_mov,
            reference_size: [reference.width(), reference.height()],
            out_of_bounds_fill: "black".into(),
            report: ReportSummary {
                method: out.report.method.clone(),
                iterations: out.report.iterations_run,
                inliers: out.report.inlier_count(),
                score: out.report.score,
                matches: out.matches.len(),
                keypoints_ref: out.detections_ref.keypoints.len(),
                keypoints_mov: out.detections_mov.keypoints.len(),
            },
            config: cfg.clone(),
        }
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Bundle contents as `(file name, bytes)` in the order of
/// [`ResultManifest::files`].
pub fn bundle_files(
    reference: &ImageBuffer,
    out: &RegistrationOutput,
    cfg: &RegistrationConfig,
) -> (ResultManifest, Vec<(String, Vec<u8>)>) {
    let manifest = ResultManifest::new(out, reference, cfg);
    let mut files = vec![
        (REFERENCE_PNG.to_string(), reference.encode_png()),
        (WARPED_PNG.to_string(), out.warped_moving.encode_png()),
        (OVERLAY_PNG.to_string(), out.overlay_redcyan.encode_png()),
    ];
    if let Some(vis) = &out.matches_visualization {
        files.push((MATCHES_PNG.to_string(), vis.encode_png()));
    }
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    files.push((RESULT_JSON.to_string(), json));
    let timings: &StageTimings = &out.timings;
    let json = serde_json::to_vec_pretty(timings).expect("timings serialize");
    files.push((TIMINGS_JSON.to_string(), json));
    (manifest, files)
}

/// Writes the bundle into `dir` (created if missing) and returns the manifest.
pub fn write_bundle(
    dir: &Path,
    reference: &ImageBuffer,
    out: &RegistrationOutput,
    cfg: &RegistrationConfig,
) -> Result<ResultManifest> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let (manifest, files) = bundle_files(reference, out, cfg);
    for (name, bytes) in files {
        write(&dir.join(name), &bytes)?;
    }
    Ok(manifest)
}
