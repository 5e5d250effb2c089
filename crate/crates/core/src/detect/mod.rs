//! Patch-based keypoint detection and description.
//!
//! A [`Backend`] turns one patch into a quarter-resolution keypoint heatmap and
//! a quarter-resolution descriptor field. Grid node `(i, j)` of both outputs
//! corresponds to full-resolution pixel `(4i, 4j)` of the patch. The heatmap
//! is upsampled bicubically, keypoints are extracted by non-maximum
//! suppression and descriptors are sampled bilinearly at the keypoint
//! positions. Keypoints of all patches are merged by a global suppression pass
//! and reduced to the strongest `n_max`.

pub mod junction;
mod skeleton;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::raster::{ImageBuffer, ScalarMap};

pub use junction::{crack_strength, junction_descriptor, junction_heatmap, JunctionBackend};
pub use skeleton::{junction_mask, zhang_suen_thin};

/// Descriptor dimension.
pub const DESCRIPTOR_DIM: usize = 128;
/// Resolution ratio between the image and the backend outputs.
pub const HEAD_STRIDE: usize = 4;
/// Non-maximum suppression radius in full-resolution pixels.
pub const NMS_RADIUS: usize = 4;

/// Scored keypoint in full-resolution image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub pos: Point2,
    pub score: f32,
}

/// Unit-norm feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor(Vec<f32>);

impl Descriptor {
    /// Normalizes `v` to unit length. A zero vector becomes the uniform unit
    /// vector so that every descriptor stays on the unit sphere.
    pub fn normalized(mut v: Vec<f32>) -> Self {
        let norm = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        if norm > 1e-12 && norm.is_finite() {
            let inv = 1.0 / norm;
            v.iter_mut().for_each(|x| *x = (*x as f64 * inv) as f32);
        } else {
            let u = 1.0 / (v.len().max(1) as f32).sqrt();
            v.iter_mut().for_each(|x| *x = u);
        }
        Descriptor(v)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt()
    }

    /// Euclidean distance.
    #[inline]
    pub fn distance(&self, other: &Descriptor) -> f32 {
        l2(&self.0, &other.0)
    }
}

#[inline]
/// Squared Euclidean distance, accumulated in eight lanes.
pub fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    acc.iter().sum::<f32>() + tail
}

pub fn l2(a: &[f32], b: &[f32]) -> f32 {
    squared_l2(a, b).sqrt()
}

/// Keypoints sorted by descending score with index-aligned descriptors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionResult {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

impl DetectionResult {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

/// Descriptor values on the quarter-resolution grid.
pub trait DescriptorField: Send + Sync {
    fn grid_width(&self) -> usize;
    fn grid_height(&self) -> usize;
    /// Raw (not necessarily normalized) descriptor at grid node `(gx, gy)`.
    fn node(&self, gx: usize, gy: usize) -> Vec<f32>;
}

/// Dense descriptor grid, the layout a learned description head produces.
#[derive(Debug, Clone)]
pub struct DescriptorGrid {
    width: usize,
    height: usize,
    dim: usize,
    data: Vec<f32>,
}

impl DescriptorGrid {
    pub fn new(width: usize, height: usize, dim: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height * dim, "grid size mismatch");
        Self {
            width,
            height,
            dim,
            data,
        }
    }
}

impl DescriptorField for DescriptorGrid {
    fn grid_width(&self) -> usize {
        self.width
    }

    fn grid_height(&self) -> usize {
        self.height
    }

    fn node(&self, gx: usize, gy: usize) -> Vec<f32> {
        let i = (gy * self.width + gx) * self.dim;
        self.data[i..i + self.dim].to_vec()
    }
}

/// Output of a backend for a single patch.
pub struct PatchPrediction {
    /// Quarter-resolution keypoint confidence in `[0, 1]`.
    pub heatmap: ScalarMap,
    pub descriptors: Box<dyn DescriptorField>,
}

/// Keypoint detector/descriptor backend.
pub trait Backend: Send + Sync {
    fn name(&self) -> &'static str;

    /// Predicts quarter-resolution outputs for a patch whose dimensions are
    /// multiples of [`HEAD_STRIDE`].
    fn predict(&self, patch: &ImageBuffer) -> PatchPrediction;
}

/// Names accepted in the `backend` config field.
pub const BACKEND_NAMES: &[&str] = &["junction"];

pub fn backend_by_name(name: &str) -> Option<Box<dyn Backend>> {
    match name {
        "junction" => Some(Box::new(JunctionBackend)),
        _ => None,
    }
}

/// Patch origins covering an image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub width: usize,
    pub height: usize,
    pub origins: Vec<(usize, usize)>,
}

impl PatchGrid {
    /// Extent of the patch starting at `origin`, clamped to the image.
    pub fn extent(&self, origin: (usize, usize)) -> (usize, usize) {
        (
            self.patch_size.min(self.width - origin.0),
            self.patch_size.min(self.height - origin.1),
        )
    }
}

fn axis_origins(extent: usize, patch: usize) -> Vec<usize> {
    if extent <= patch {
        return vec![0];
    }
    let mut v: Vec<usize> = (0..extent.div_ceil(patch)).map(|i| i * patch).collect();
    if let Some(last) = v.last_mut() {
        *last = (*last).min(extent - patch);
    }
    v
}

/// Tiles an image with `patch_size` squares; the last row and column are
/// shifted inwards so they overlap their neighbours instead of running off
/// the image.
pub fn plan_patches(width: usize, height: usize, patch_size: usize) -> PatchGrid {
    assert!(width >= 1 && height >= 1 && patch_size >= 1);
    let xs = axis_origins(width, patch_size);
    let ys = axis_origins(height, patch_size);
    let origins = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    PatchGrid {
        patch_size,
        width,
        height,
        origins,
    }
}

/// Pads `img` by edge replication so both dimensions are multiples of `m`.
pub fn pad_to_multiple(img: &ImageBuffer, m: usize) -> ImageBuffer {
    let w = img.width().div_ceil(m) * m;
    let h = img.height().div_ceil(m) * m;
    if w == img.width() && h == img.height() {
        return img.clone();
    }
    let c = img.channels();
    let mut data = Vec::with_capacity(w * h * c);
    for y in 0..h {
        let sy = y.min(img.height() - 1);
        for x in 0..w {
            let sx = x.min(img.width() - 1);
            for ch in 0..c {
                data.push(img.sample(sx, sy, ch));
            }
        }
    }
    ImageBuffer::new(w, h, c, data).expect("padded dimensions are consistent")
}

/// Runs `backend` on a patch, padding it to a multiple of [`HEAD_STRIDE`].
pub fn detect_patch(backend: &dyn Backend, patch: &ImageBuffer) -> PatchPrediction {
    let padded = pad_to_multiple(patch, HEAD_STRIDE);
    backend.predict(&padded)
}

/// Catmull-Rom cubic convolution kernel (a = −0.5).
#[inline]
fn cubic_kernel(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Per-output-index taps `(first source index, 4 weights)` along one axis.
fn cubic_taps(n_in: usize, factor: usize) -> Vec<([usize; 4], [f64; 4])> {
    (0..n_in * factor)
        .map(|o| {
            let s = o as f64 / factor as f64;
            let base = s.floor() as isize;
            let t = s - base as f64;
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                let off = k as isize - 1;
                idx[k] = (base + off).clamp(0, n_in as isize - 1) as usize;
                w[k] = cubic_kernel(t - off as f64);
            }
            (idx, w)
        })
        .collect()
}

/// Bicubic upsampling by an integer factor. Output pixel `(X, Y)` samples the
/// input at `(X / factor, Y / factor)`; borders are edge-replicated and the
/// result is clamped to `[0, 1]`.
pub fn upsample_heatmap(h: &ScalarMap, factor: usize) -> ScalarMap {
    assert!(factor >= 1, "factor must be >= 1");
    if factor == 1 {
        return h.clone();
    }
    let (w, hh) = (h.width(), h.height());
    let tx = cubic_taps(w, factor);
    let ty = cubic_taps(hh, factor);
    let ow = w * factor;
    let oh = hh * factor;

    // horizontal pass
    let mut tmp = vec![0.0f64; ow * hh];
    for y in 0..hh {
        let row = &h.values()[y * w..(y + 1) * w];
        for (x, (idx, wt)) in tx.iter().enumerate() {
            tmp[y * ow + x] = (0..4).map(|k| wt[k] * row[idx[k]] as f64).sum();
        }
    }
    let mut out = vec![0.0f32; ow * oh];
    for (y, (idx, wt)) in ty.iter().enumerate() {
        let dst = &mut out[y * ow..(y + 1) * ow];
        for (x, d) in dst.iter_mut().enumerate() {
            let v: f64 = (0..4).map(|k| wt[k] * tmp[idx[k] * ow + x]).sum();
            *d = v.clamp(0.0, 1.0) as f32;
        }
    }
    ScalarMap::from_vec(ow, oh, out)
}

/// Keeps every positive pixel that dominates its `(2r+1)²` window. Equal
/// values are ordered by `(y, x)`, the earlier pixel winning. Keypoints are
/// returned by descending score, ties in `(y, x)` order.
pub fn nms(h: &ScalarMap, radius: usize) -> Vec<Keypoint> {
    assert!(radius >= 1, "radius must be >= 1");
    let (w, hh) = (h.width(), h.height());
    let r = radius as isize;
    let vals = h.values();
    let mut out = Vec::new();
    for y in 0..hh {
        for x in 0..w {
            let v = vals[y * w + x];
            if v <= 0.0 {
                continue;
            }
            let y0 = (y as isize - r).max(0) as usize;
            let y1 = (y + radius).min(hh - 1);
            let x0 = (x as isize - r).max(0) as usize;
            let x1 = (x + radius).min(w - 1);
            let dominated = (y0..=y1).any(|qy| {
                let row = &vals[qy * w..(qy + 1) * w];
                (x0..=x1).any(|qx| {
                    let q = row[qx];
                    q > v || (q == v && (qy, qx) < (y, x))
                })
            });
            if !dominated {
                out.push(Keypoint {
                    pos: Point2::new(x as f64, y as f64),
                    score: v,
                });
            }
        }
    }
    sort_keypoints(&mut out);
    out
}

fn keypoint_order(a: &Keypoint, b: &Keypoint) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.pos.y.total_cmp(&b.pos.y))
        .then(a.pos.x.total_cmp(&b.pos.x))
}

fn sort_keypoints(kps: &mut [Keypoint]) {
    kps.sort_by(keypoint_order);
}

/// Bilinear interpolation of the four grid nodes around `pos / 4`,
/// renormalized to unit length.
pub fn sample_descriptor(field: &dyn DescriptorField, pos: Point2) -> Descriptor {
    let gw = field.grid_width();
    let gh = field.grid_height();
    let gx = (pos.x / HEAD_STRIDE as f64).clamp(0.0, (gw - 1) as f64);
    let gy = (pos.y / HEAD_STRIDE as f64).clamp(0.0, (gh - 1) as f64);
    let x0 = gx.floor() as usize;
    let y0 = gy.floor() as usize;
    let fx = gx - x0 as f64;
    let fy = gy - y0 as f64;
    let x1 = (x0 + 1).min(gw - 1);
    let y1 = (y0 + 1).min(gh - 1);
    let taps = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y0, fx * (1.0 - fy)),
        (x1, y1, fx * fy),
    ];
    let mut acc: Option<Vec<f64>> = None;
    for (nx, ny, wt) in taps {
        if wt == 0.0 {
            continue;
        }
        let node = field.node(nx, ny);
        let acc = acc.get_or_insert_with(|| vec![0.0; node.len()]);
        for (a, v) in acc.iter_mut().zip(&node) {
            *a += wt * *v as f64;
        }
    }
    let acc = acc.unwrap_or_default();
    Descriptor::normalized(acc.into_iter().map(|v| v as f32).collect())
}

/// Detection parameters taken from the registration config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    pub patch_size: usize,
    pub n_max: usize,
    pub tau_kp: f32,
    pub nms_radius: usize,
}

fn detect_in_patch(
    backend: &dyn Backend,
    img: &ImageBuffer,
    grid: &PatchGrid,
    origin: (usize, usize),
    params: &DetectParams,
) -> Vec<(Keypoint, Descriptor)> {
    let (pw, ph) = grid.extent(origin);
    let patch = img.crop(origin.0, origin.1, pw, ph);
    let pred = detect_patch(backend, &patch);
    let heat = upsample_heatmap(&pred.heatmap, HEAD_STRIDE);
    nms(&heat, params.nms_radius)
        .into_iter()
        .filter(|k| k.score > params.tau_kp)
        .filter(|k| (k.pos.x as usize) < pw && (k.pos.y as usize) < ph)
        .map(|k| {
            let d = sample_descriptor(pred.descriptors.as_ref(), k.pos);
            let pos = Point2::new(k.pos.x + origin.0 as f64, k.pos.y + origin.1 as f64);
            (Keypoint { pos, score: k.score }, d)
        })
        .collect()
}

/// Greedy suppression over a score-sorted point list: a point survives when no
/// stronger survivor lies within Chebyshev distance `radius`.
fn suppress_sorted(items: Vec<(Keypoint, Descriptor)>, radius: usize, limit: usize) -> Vec<(Keypoint, Descriptor)> {
    use std::collections::HashMap;
    let cell = (radius.max(1)) as f64;
    let r = radius as f64;
    let mut buckets: HashMap<(i64, i64), Vec<Point2>> = HashMap::new();
    let mut kept = Vec::new();
    for (kp, d) in items {
        if kept.len() >= limit {
            break;
        }
        let cx = (kp.pos.x / cell).floor() as i64;
        let cy = (kp.pos.y / cell).floor() as i64;
        let blocked = (cy - 1..=cy + 1).any(|by| {
            (cx - 1..=cx + 1).any(|bx| {
                buckets.get(&(bx, by)).is_some_and(|pts| {
                    pts.iter()
                        .any(|p| (p.x - kp.pos.x).abs() <= r && (p.y - kp.pos.y).abs() <= r)
                })
            })
        });
        if !blocked {
            buckets.entry((cx, cy)).or_default().push(kp.pos);
            kept.push((kp, d));
        }
    }
    kept
}

/// Detects keypoints over the whole image: patches are processed in parallel,
/// merged in patch order, de-duplicated by a global suppression pass, filtered
/// by `tau_kp` and truncated to `n_max`.
pub fn detect_image_with(
    backend: &dyn Backend,
    img: &ImageBuffer,
    params: &DetectParams,
) -> Result<DetectionResult> {
    let grid = plan_patches(img.width(), img.height(), params.patch_size);
    let per_patch: Vec<Vec<(Keypoint, Descriptor)>> = grid
        .origins
        .par_iter()
        .map(|&o| detect_in_patch(backend, img, &grid, o, params))
        .collect();

    let mut merged: Vec<(Keypoint, Descriptor)> = per_patch.into_iter().flatten().collect();
    merged.sort_by(|a, b| keypoint_order(&a.0, &b.0));
    let kept = suppress_sorted(merged, params.nms_radius, params.n_max);
    if kept.is_empty() {
        return Err(Error::EmptyDetection);
    }
    let (keypoints, descriptors) = kept.into_iter().unzip();
    Ok(DetectionResult {
        keypoints,
        descriptors,
    })
}

/// Detection with the backend and parameters named in `cfg`.
pub fn detect_image(img: &ImageBuffer, cfg: &crate::pipeline::RegistrationConfig) -> Result<DetectionResult> {
    let backend = backend_by_name(&cfg.backend)
        .ok_or_else(|| Error::invalid("backend", format!("unknown backend `{}`", cfg.backend)))?;
    detect_image_with(backend.as_ref(), img, &cfg.detect_params())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plan_patches_examples() {
        assert_eq!(plan_patches(2048, 1024, 1024).origins, vec![(0, 0), (1024, 0)]);
        let g = plan_patches(1500, 1000, 1024);
        assert_eq!(g.origins, vec![(0, 0), (476, 0)]);
        assert_eq!(g.extent((476, 0)), (1024, 1000));
        assert_eq!(plan_patches(1024, 1024, 1024).origins, vec![(0, 0)]);
        let g = plan_patches(300, 200, 1024);
        assert_eq!(g.origins, vec![(0, 0)]);
        assert_eq!(g.extent((0, 0)), (300, 200));
    }

    proptest! {
        #[test]
        fn plan_patches_covers_every_pixel(w in 1usize..400, h in 1usize..400, p in 1usize..150) {
            let g = plan_patches(w, h, p);
            let mut covered = vec![false; w * h];
            for &o in &g.origins {
                let (ew, eh) = g.extent(o);
                prop_assert!(o.0 + ew <= w && o.1 + eh <= h);
                if w >= p { prop_assert_eq!(ew, p); }
                if h >= p { prop_assert_eq!(eh, p); }
                for y in o.1..o.1 + eh {
                    for x in o.0..o.0 + ew {
                        covered[y * w + x] = true;
                    }
                }
            }
            prop_assert!(covered.iter().all(|c| *c));
        }
    }

    #[test]
    fn cubic_kernel_interpolates() {
        assert_eq!(cubic_kernel(0.0), 1.0);
        assert_eq!(cubic_kernel(1.0), 0.0);
        assert_eq!(cubic_kernel(2.0), 0.0);
        // partition of unity at an arbitrary phase
        let t = 0.3;
        let s: f64 = (-1..=2).map(|k| cubic_kernel(t - k as f64)).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn upsample_examples() {
        let m = ScalarMap::from_fn(3, 2, |x, y| 0.1 * (x + 2 * y) as f32);
        assert_eq!(upsample_heatmap(&m, 1), m);

        let c = ScalarMap::from_vec(2, 2, vec![0.7; 4]);
        let u = upsample_heatmap(&c, 4);
        assert_eq!((u.width(), u.height()), (8, 8));
        assert!(u.values().iter().all(|v| (v - 0.7).abs() < 1e-6));

        let mut d = ScalarMap::zeros(5, 5);
        d.set(2, 2, 1.0);
        let u = upsample_heatmap(&d, 4);
        let (imax, _) = u
            .values()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert_eq!((imax % 20, imax / 20), (8, 8));
        assert_eq!(u.get(8, 8), 1.0);
        assert!(u.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn nms_examples() {
        let mut h = ScalarMap::zeros(20, 20);
        h.set(5, 5, 0.5);
        let k = nms(&h, 4);
        assert_eq!(k.len(), 1);
        assert_eq!(k[0].pos, Point2::new(5.0, 5.0));
        assert_eq!(k[0].score, 0.5);

        let mut h = ScalarMap::zeros(30, 30);
        h.set(10, 10, 0.9);
        h.set(13, 10, 0.8);
        let k = nms(&h, 4);
        assert_eq!(k.len(), 1);
        assert_eq!(k[0].score, 0.9);

        let mut h = ScalarMap::zeros(30, 30);
        h.set(10, 10, 0.9);
        h.set(19, 10, 0.8);
        assert_eq!(nms(&h, 4).len(), 2);
    }

    #[test]
    fn nms_ties_keep_first_in_raster_order() {
        let mut h = ScalarMap::zeros(20, 20);
        h.set(6, 5, 0.5);
        h.set(5, 6, 0.5);
        let k = nms(&h, 4);
        assert_eq!(k.len(), 1);
        assert_eq!(k[0].pos, Point2::new(6.0, 5.0));
    }

    fn node_field(nodes: Vec<Vec<f32>>, gw: usize, gh: usize) -> DescriptorGrid {
        let dim = nodes[0].len();
        DescriptorGrid::new(gw, gh, dim, nodes.concat())
    }

    #[test]
    fn sample_descriptor_examples() {
        let u = vec![1.0, 0.0, 0.0];
        let v = vec![0.0, 1.0, 0.0];
        let w = vec![0.0, 0.0, 1.0];
        let z = vec![0.6, 0.8, 0.0];
        // grid 2x2: (0,0)=u (1,0)=v (0,1)=w (1,1)=z
        let field = node_field(vec![u.clone(), v.clone(), w.clone(), z.clone()], 2, 2);

        let d = sample_descriptor(&field, Point2::new(4.0, 0.0));
        assert_eq!(d.as_slice(), v.as_slice());

        let d = sample_descriptor(&field, Point2::new(2.0, 0.0));
        let s = std::f32::consts::FRAC_1_SQRT_2;
        assert!((d.as_slice()[0] - s).abs() < 1e-6 && (d.as_slice()[1] - s).abs() < 1e-6);

        // fractional offset (0.25, 0.75) in grid units
        let d = sample_descriptor(&field, Point2::new(1.0, 3.0));
        let wts = [0.1875f64, 0.5625, 0.0625, 0.1875];
        let nodes = [&u, &w, &v, &z];
        let mut e = [0.0f64; 3];
        for (wt, n) in wts.iter().zip(nodes) {
            for k in 0..3 {
                e[k] += wt * n[k] as f64;
            }
        }
        let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (got, want) in d.as_slice().iter().zip(e) {
            assert!((*got as f64 - want / norm).abs() < 1e-6);
        }
        assert!((d.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn descriptor_normalization_handles_zero() {
        let d = Descriptor::normalized(vec![0.0; 4]);
        assert!((d.norm() - 1.0).abs() < 1e-6);
        let d = Descriptor::normalized(vec![3.0, 4.0]);
        assert_eq!(d.as_slice(), &[0.6, 0.8]);
    }

    #[test]
    fn pad_replicates_edges() {
        let img = ImageBuffer::from_gray_fn(3, 2, |x, y| (10 * y + x) as u8).unwrap();
        let p = pad_to_multiple(&img, 4);
        assert_eq!((p.width(), p.height()), (4, 4));
        assert_eq!(p.sample(3, 3, 0), 12);
        assert_eq!(p.sample(3, 0, 0), 2);
    }

    #[test]
    fn global_suppression_respects_radius_and_limit() {
        let mk = |x: f64, y: f64, s: f32| {
            (
                Keypoint {
                    pos: Point2::new(x, y),
                    score: s,
                },
                Descriptor::normalized(vec![1.0]),
            )
        };
        let items = vec![mk(0.0, 0.0, 0.9), mk(3.0, 4.0, 0.8), mk(5.0, 0.0, 0.7), mk(50.0, 50.0, 0.6)];
        let kept = suppress_sorted(items.clone(), 4, 10);
        let pos: Vec<_> = kept.iter().map(|k| k.0.pos).collect();
        assert_eq!(pos, vec![Point2::new(0.0, 0.0), Point2::new(5.0, 0.0), Point2::new(50.0, 50.0)]);
        assert_eq!(suppress_sorted(items, 4, 2).len(), 2);
    }
}
