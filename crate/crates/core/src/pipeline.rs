//! End-to-end registration: resize, detect, match, estimate, warp, overlay.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use image::imageops::FilterType;
use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{backend_by_name, detect_image_with, DetectParams, DetectionResult, Keypoint, NMS_RADIUS};
use crate::error::{Error, Result};
use crate::estimate::{estimate, EstimationReport, EstimatorConfig};
use crate::geometry::{Homography, Point2};
use crate::matching::{match_mutual_nn, Match};
use crate::raster::ImageBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResizePolicy {
    /// Resize the moving image to the reference width.
    #[default]
    SameWidth,
    /// Resize both images to the given height.
    CustomHeight(i64),
    None,
}

impl fmt::Display for ResizePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResizePolicy::SameWidth => f.write_str("same-width"),
            ResizePolicy::CustomHeight(h) => write!(f, "height:{h}"),
            ResizePolicy::None => f.write_str("none"),
        }
    }
}

impl FromStr for ResizePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same-width" => Ok(ResizePolicy::SameWidth),
            "none" => Ok(ResizePolicy::None),
            _ => s
                .strip_prefix("height:")
                .and_then(|h| h.trim().parse::<i64>().ok())
                .map(ResizePolicy::CustomHeight)
                .ok_or_else(|| Error::InvalidPolicy(format!("`{s}` (expected same-width, height:<h> or none)"))),
        }
    }
}

impl Serialize for ResizePolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ResizePolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationConfig {
    pub patch_size: usize,
    pub n_max: usize,
    pub tau_kp: f64,
    pub resize_policy: ResizePolicy,
    pub estimator: EstimatorConfig,
    pub backend: String,
    pub visualize_matches: bool,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            patch_size: 1024,
            n_max: 8000,
            tau_kp: 0.0,
            resize_policy: ResizePolicy::SameWidth,
            estimator: EstimatorConfig::default(),
            backend: "junction".into(),
            visualize_matches: false,
        }
    }
}

impl RegistrationConfig {
    /// Checks every field invariant; the error names the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 64 {
            return Err(Error::invalid("patch_size", "must be >= 64"));
        }
        if self.n_max < 4 {
            return Err(Error::invalid("n_max", "must be >= 4"));
        }
        if !(0.0..1.0).contains(&self.tau_kp) {
            return Err(Error::invalid("tau_kp", "must lie in [0, 1)"));
        }
        if let ResizePolicy::CustomHeight(h) = self.resize_policy {
            if h <= 0 {
                return Err(Error::invalid("resize_policy", "height must be > 0"));
            }
        }
        if backend_by_name(&self.backend).is_none() {
            return Err(Error::invalid("backend", format!("unknown backend `{}`", self.backend)));
        }
        self.estimator.validate()
    }

    pub fn detect_params(&self) -> DetectParams {
        DetectParams {
            patch_size: self.patch_size,
            n_max: self.n_max,
            tau_kp: self.tau_kp as f32,
            nms_radius: NMS_RADIUS,
        }
    }
}

/// Pixel-centre aligned resize transform: `x' = sx·(x + ½) − ½`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleTransform {
    pub sx: f64,
    pub sy: f64,
}

impl ScaleTransform {
    pub const IDENTITY: ScaleTransform = ScaleTransform { sx: 1.0, sy: 1.0 };

    fn between(from: (usize, usize), to: (usize, usize)) -> Self {
        Self {
            sx: to.0 as f64 / from.0 as f64,
            sy: to.1 as f64 / from.1 as f64,
        }
    }

    /// Original → working coordinates.
    pub fn homography(&self) -> Homography {
        let m = Matrix3::new(
            self.sx,
            0.0,
            0.5 * (self.sx - 1.0),
            0.0,
            self.sy,
            0.5 * (self.sy - 1.0),
            0.0,
            0.0,
            1.0,
        );
        Homography::from_matrix(m).expect("positive scales")
    }
}

#[derive(Debug, Clone)]
pub struct Resized {
    pub reference: ImageBuffer,
    pub moving: ImageBuffer,
    pub s_ref: ScaleTransform,
    pub s_mov: ScaleTransform,
}

fn resize(img: &ImageBuffer, w: usize, h: usize) -> ImageBuffer {
    if (w, h) == (img.width(), img.height()) {
        return img.clone();
    }
    let out = image::imageops::resize(&img.to_dynamic(), w as u32, h as u32, FilterType::Triangle);
    let dynimg = image::DynamicImage::ImageRgba8(out);
    let rgb = ImageBuffer::from_dynamic(dynimg).expect("resized image");
    if img.channels() == 1 {
        rgb.to_gray()
    } else {
        rgb
    }
}

fn scaled_len(len: usize, s: f64) -> usize {
    ((len as f64 * s).round() as usize).max(1)
}

/// Brings both images to the working resolution.
pub fn apply_resize_policy(reference: &ImageBuffer, moving: &ImageBuffer, policy: ResizePolicy) -> Result<Resized> {
    match policy {
        ResizePolicy::None => Ok(Resized {
            reference: reference.clone(),
            moving: moving.clone(),
            s_ref: ScaleTransform::IDENTITY,
            s_mov: ScaleTransform::IDENTITY,
        }),
        ResizePolicy::SameWidth => {
            let w = reference.width();
            let s = w as f64 / moving.width() as f64;
            let h = scaled_len(moving.height(), s);
            Ok(Resized {
                reference: reference.clone(),
                moving: resize(moving, w, h),
                s_ref: ScaleTransform::IDENTITY,
                s_mov: ScaleTransform::between((moving.width(), moving.height()), (w, h)),
            })
        }
        ResizePolicy::CustomHeight(h) => {
            if h <= 0 {
                return Err(Error::InvalidPolicy(format!("height {h} must be > 0")));
            }
            let h = h as usize;
            let fit = |img: &ImageBuffer| {
                let s = h as f64 / img.height() as f64;
                let w = scaled_len(img.width(), s);
                (resize(img, w, h), ScaleTransform::between((img.width(), img.height()), (w, h)))
            };
            let (r, s_ref) = fit(reference);
            let (m, s_mov) = fit(moving);
            Ok(Resized {
                reference: r,
                moving: m,
                s_ref,
                s_mov,
            })
        }
    }
}

#[inline]
fn bilinear(img: &ImageBuffer, x: f64, y: f64, c: usize) -> f64 {
    let (w, h) = (img.width(), img.height());
    let x0 = (x.floor() as usize).min(w - 1);
    let y0 = (y.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = img.sample(x0, y0, c) as f64 * (1.0 - fx) + img.sample(x1, y0, c) as f64 * fx;
    let bot = img.sample(x0, y1, c) as f64 * (1.0 - fx) + img.sample(x1, y1, c) as f64 * fx;
    top * (1.0 - fy) + bot * fy
}

/// Inverse-mapping warp: output pixel `p` samples `mov` at `h⁻¹(p)` with
/// bilinear interpolation; samples outside `mov` are black.
pub fn warp_image(mov: &ImageBuffer, h: &Homography, out_w: usize, out_h: usize) -> Result<ImageBuffer> {
    let inv = h.inverse()?;
    let c = mov.channels();
    let (mw, mh) = (mov.width() as f64, mov.height() as f64);
    let mut data = vec![0u8; out_w * out_h * c];
    data.par_chunks_mut(out_w * c).enumerate().for_each(|(y, row)| {
        for x in 0..out_w {
            let Some(q) = inv.transfer(Point2::new(x as f64, y as f64)) else {
                continue;
            };
            if !(q.x >= 0.0 && q.y >= 0.0 && q.x <= mw - 1.0 && q.y <= mh - 1.0) {
                continue;
            }
            for ch in 0..c {
                row[x * c + ch] = bilinear(mov, q.x, q.y, ch).round().clamp(0.0, 255.0) as u8;
            }
        }
    });
    ImageBuffer::new(out_w, out_h, c, data)
}

fn check_dims(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    Ok(())
}

/// False-colour overlay: reference luma in red, warped luma in green and blue.
pub fn overlay_redcyan(reference: &ImageBuffer, warped: &ImageBuffer) -> Result<ImageBuffer> {
    check_dims(reference, warped)?;
    let r = reference.to_gray();
    let m = warped.to_gray();
    let data = r
        .data()
        .iter()
        .zip(m.data())
        .flat_map(|(&a, &b)| [a, b, b])
        .collect();
    ImageBuffer::new(reference.width(), reference.height(), 3, data)
}

/// `(1 − alpha)·reference + alpha·warped`, rounded per channel. Mixed grey and
/// colour inputs are blended in RGB.
pub fn overlay_blend(reference: &ImageBuffer, warped: &ImageBuffer, alpha: f64) -> Result<ImageBuffer> {
    check_dims(reference, warped)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let (r, m) = if reference.channels() == warped.channels() {
        (reference.clone(), warped.clone())
    } else {
        (reference.to_rgb(), warped.to_rgb())
    };
    let data = r
        .data()
        .iter()
        .zip(m.data())
        .map(|(&a, &b)| ((1.0 - alpha) * a as f64 + alpha * b as f64).round() as u8)
        .collect();
    ImageBuffer::new(r.width(), r.height(), r.channels(), data)
}

const BLUE: [u8; 3] = [0, 0, 255];
const YELLOW: [u8; 3] = [255, 255, 0];

fn put(canvas: &mut ImageBuffer, x: i64, y: i64, color: [u8; 3]) {
    if x < 0 || y < 0 || x >= canvas.width() as i64 || y >= canvas.height() as i64 {
        return;
    }
    let w = canvas.width();
    let i = (y as usize * w + x as usize) * 3;
    canvas.data_mut()[i..i + 3].copy_from_slice(&color);
}

fn draw_line(canvas: &mut ImageBuffer, from: (i64, i64), to: (i64, i64), color: [u8; 3]) {
    let (mut x, mut y) = from;
    let dx = (to.0 - x).abs();
    let dy = -(to.1 - y).abs();
    let sx = if x < to.0 { 1 } else { -1 };
    let sy = if y < to.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(canvas, x, y, color);
        if (x, y) == to {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn draw_circle(canvas: &mut ImageBuffer, c: (i64, i64), r: i64, color: [u8; 3]) {
    let (mut x, mut y, mut err) = (r, 0i64, 1 - r);
    while x >= y {
        for (dx, dy) in [(x, y), (y, x), (-y, x), (-x, y), (-x, -y), (-y, -x), (y, -x), (x, -y)] {
            put(canvas, c.0 + dx, c.1 + dy, color);
        }
        y += 1;
        if err < 0 {
            err += 2 * y + 1;
        } else {
            x -= 1;
            err += 2 * (y - x) + 1;
        }
    }
}

fn pixel(p: Point2) -> (i64, i64) {
    (p.x.round() as i64, p.y.round() as i64)
}

/// Side-by-side canvas with keypoints as blue circles (radius 3) and inlier
/// matches as yellow lines.
pub fn render_matches(
    reference: &ImageBuffer,
    moving: &ImageBuffer,
    kps_ref: &[Keypoint],
    kps_mov: &[Keypoint],
    matches: &[Match],
    inlier_mask: &[bool],
) -> ImageBuffer {
    let wr = reference.width();
    let w = wr + moving.width();
    let h = reference.height().max(moving.height());
    let mut canvas = ImageBuffer::filled(w, h, 3, 0).expect("non-empty canvas");
    for (img, x0) in [(reference.to_rgb(), 0usize), (moving.to_rgb(), wr)] {
        for y in 0..img.height() {
            let src = &img.data()[y * img.width() * 3..(y + 1) * img.width() * 3];
            let start = (y * w + x0) * 3;
            canvas.data_mut()[start..start + src.len()].copy_from_slice(src);
        }
    }
    let offset = wr as i64;
    for (m, inlier) in matches.iter().zip(inlier_mask) {
        if !inlier {
            continue;
        }
        let a = pixel(kps_ref[m.idx_ref].pos);
        let b = pixel(kps_mov[m.idx_mov].pos);
        draw_line(&mut canvas, a, (b.0 + offset, b.1), YELLOW);
    }
    for k in kps_ref {
        draw_circle(&mut canvas, pixel(k.pos), 3, BLUE);
    }
    for k in kps_mov {
        let p = pixel(k.pos);
        draw_circle(&mut canvas, (p.0 + offset, p.1), 3, BLUE);
    }
    canvas
}

/// Wall-clock duration of each stage in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub resize_ms: f64,
    pub detection_ms: f64,
    pub matching_ms: f64,
    pub estimation_ms: f64,
    pub warping_ms: f64,
    pub overlay_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone)]
pub struct RegistrationOutput {
    /// Moving-original → reference-original.
    pub h_original: Homography,
    /// Moving-working → reference-working.
    pub h_working: Homography,
    pub warped_moving: ImageBuffer,
    pub overlay_redcyan: ImageBuffer,
    pub report: EstimationReport,
    pub matches_visualization: Option<ImageBuffer>,
    pub working_scale_ref: f64,
    pub working_scale_mov: f64,
    pub s_ref: ScaleTransform,
    pub s_mov: ScaleTransform,
    pub detections_ref: DetectionResult,
    pub detections_mov: DetectionResult,
    pub matches: Vec<Match>,
    pub timings: StageTimings,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Registers `moving` onto `reference`.
pub fn register(reference: &ImageBuffer, moving: &ImageBuffer, cfg: &RegistrationConfig) -> Result<RegistrationOutput> {
    cfg.validate()?;
    let backend = backend_by_name(&cfg.backend).expect("validated backend");
    let start = Instant::now();
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let work = apply_resize_policy(reference, moving, cfg.resize_policy)?;
    timings.resize_ms = ms(t);

    let t = Instant::now();
    let params = cfg.detect_params();
    let (det_ref, det_mov) = rayon::join(
        || detect_image_with(backend.as_ref(), &work.reference, &params),
        || detect_image_with(backend.as_ref(), &work.moving, &params),
    );
    let (det_ref, det_mov) = (det_ref?, det_mov?);
    timings.detection_ms = ms(t);

    let t = Instant::now();
    let matches = match_mutual_nn(&det_ref, &det_mov)?;
    timings.matching_ms = ms(t);

    let t = Instant::now();
    let pts_ref: Vec<Point2> = det_ref.keypoints.iter().map(|k| k.pos).collect();
    let pts_mov: Vec<Point2> = det_mov.keypoints.iter().map(|k| k.pos).collect();
    let report = estimate(&matches, &pts_ref, &pts_mov, &cfg.estimator).map_err(|e| match e {
        Error::EstimationFailed(_) => e,
        other => Error::EstimationFailed(other.to_string()),
    })?;
    let h_working = report.h;
    let h_original = work
        .s_ref
        .homography()
        .inverse()?
        .compose(&h_working)?
        .compose(&work.s_mov.homography())?;
    timings.estimation_ms = ms(t);

    let t = Instant::now();
    let warped_moving = warp_image(moving, &h_original, reference.width(), reference.height())?;
    timings.warping_ms = ms(t);

    let t = Instant::now();
    let overlay = overlay_redcyan(reference, &warped_moving)?;
    let matches_visualization = cfg.visualize_matches.then(|| {
        render_matches(
            &work.reference,
            &work.moving,
            &det_ref.keypoints,
            &det_mov.keypoints,
            &matches,
            &report.inlier_mask,
        )
    });
    timings.overlay_ms = ms(t);
    timings.total_ms = ms(start);

    Ok(RegistrationOutput {
        h_original,
        h_working,
        warped_moving,
        overlay_redcyan: overlay,
        report,
        matches_visualization,
        working_scale_ref: work.s_ref.sx,
        working_scale_mov: work.s_mov.sx,
        s_ref: work.s_ref,
        s_mov: work.s_mov,
        detections_ref: det_ref,
        detections_mov: det_mov,
        matches,
        timings,
    })
}
