//! Classical crack-junction backend.
//!
//! Thin dark and thin bright ridges are enhanced by morphological black-hat
//! and top-hat filtering; the ridge map is binarized, thinned, and the branch
//! points of the skeleton become keypoints. Descriptors are gradient
//! orientation histograms of the ridge map, so they describe the crack
//! geometry rather than the raw intensities of a particular modality.

use std::f32::consts::TAU;

use super::skeleton::{junction_mask, zhang_suen_thin};
use super::{Backend, Descriptor, DescriptorField, PatchPrediction, DESCRIPTOR_DIM, HEAD_STRIDE};
use crate::geometry::Point2;
use crate::raster::{ImageBuffer, ScalarMap};

/// Row half-widths of a radius-3 disk, rows −3..=3.
const DISK_HALF_WIDTHS: [usize; 7] = [0, 2, 2, 3, 2, 2, 0];
const STRENGTH_PERCENTILE: f64 = 0.995;
/// Smallest ridge contrast (grey levels) used as normalizer, so flat noisy
/// patches are not stretched to full range.
const MIN_CONTRAST: f32 = 8.0;
const THRESHOLD_WINDOW: usize = 31;
const THRESHOLD_OFFSET: f32 = 0.05;
/// Width of the junction splat on the head grid, in full-resolution pixels.
const HEAT_SIGMA: f32 = 3.0;

const DESC_WINDOW: isize = 32;
const DESC_CELLS: usize = 4;
const DESC_BINS: usize = 8;
const DESC_SIGMA: f32 = 8.0;
const DESC_CLAMP: f32 = 0.2;

/// Grey-level morphology with a radius-3 disk; `dilate` selects max or min.
fn disk_filter(src: &[f32], w: usize, h: usize, dilate: bool) -> Vec<f32> {
    let pick = |a: f32, b: f32| if dilate { a.max(b) } else { a.min(b) };
    let mut rows: [Vec<f32>; 4] = Default::default();
    for hw in [0usize, 2, 3] {
        let mut m = vec![0.0f32; w * h];
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for x in 0..w {
                let lo = x.saturating_sub(hw);
                let hi = (x + hw).min(w - 1);
                m[y * w + x] = row[lo..=hi].iter().copied().reduce(pick).unwrap();
            }
        }
        rows[hw] = m;
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for (k, &hw) in DISK_HALF_WIDTHS.iter().enumerate() {
            let sy = (y as isize + k as isize - 3).clamp(0, h as isize - 1) as usize;
            let src_row = &rows[hw][sy * w..(sy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            if k == 0 {
                dst.copy_from_slice(src_row);
            } else {
                for (d, s) in dst.iter_mut().zip(src_row) {
                    *d = pick(*d, *s);
                }
            }
        }
    }
    out
}

fn percentile(values: &[f32], q: f64) -> f32 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    let (_, nth, _) = v.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    *nth
}

/// Ridge ("crack") strength in `[0, 1]`: the pointwise maximum of the black-hat
/// (thin dark structures) and top-hat (thin bright structures) responses of
/// the Rec.601 luma, scaled by its 99.5th percentile.
pub fn crack_strength(patch: &ImageBuffer) -> ScalarMap {
    let (w, h) = (patch.width(), patch.height());
    let luma: Vec<f32> = (0..w * h)
        .map(|i| patch.luma_at(i % w, i / w) as f32)
        .collect();

    let closed = disk_filter(&disk_filter(&luma, w, h, true), w, h, false);
    let opened = disk_filter(&disk_filter(&luma, w, h, false), w, h, true);
    let raw: Vec<f32> = (0..w * h)
        .map(|i| {
            let black_hat = closed[i] - luma[i];
            let top_hat = luma[i] - opened[i];
            black_hat.max(top_hat).max(0.0)
        })
        .collect();

    let scale = percentile(&raw, STRENGTH_PERCENTILE).max(MIN_CONTRAST);
    ScalarMap::from_vec(w, h, raw.into_iter().map(|v| (v / scale).min(1.0)).collect())
}

fn local_mean(map: &ScalarMap, window: usize) -> Vec<f32> {
    let (w, h) = (map.width(), map.height());
    let mut integral = vec![0.0f64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row_sum = 0.0;
        for x in 0..w {
            row_sum += map.get(x, y) as f64;
            integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row_sum;
        }
    }
    let r = window / 2;
    (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let x0 = x.saturating_sub(r);
            let y0 = y.saturating_sub(r);
            let x1 = (x + r + 1).min(w);
            let y1 = (y + r + 1).min(h);
            let s = integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1]
                - integral[y1 * (w + 1) + x0]
                + integral[y0 * (w + 1) + x0];
            (s / ((x1 - x0) * (y1 - y0)) as f64) as f32
        })
        .collect()
}

/// Full-resolution junction map: skeleton branch points of the adaptively
/// binarized ridge map, valued by the local ridge strength.
pub fn junction_points(strength: &ScalarMap) -> ScalarMap {
    let (w, h) = (strength.width(), strength.height());
    let mean = local_mean(strength, THRESHOLD_WINDOW);
    let binary: Vec<bool> = strength
        .values()
        .iter()
        .zip(&mean)
        .map(|(s, m)| *s > m + THRESHOLD_OFFSET)
        .collect();
    let skel = zhang_suen_thin(&binary, w, h);
    let junctions = junction_mask(&skel, w, h);
    ScalarMap::from_vec(
        w,
        h,
        junctions
            .iter()
            .zip(strength.values())
            .map(|(j, s)| if *j { *s } else { 0.0 })
            .collect(),
    )
}

/// Quarter-resolution junction heatmap: every junction pixel is splatted
/// onto the head grid as a Gaussian of width [`HEAT_SIGMA`] scaled by its
/// strength, overlapping splats combined by maximum. Unlike plain pooling
/// this keeps sub-node position information that the bicubic upsampling can
/// recover.
pub fn junction_heatmap(strength: &ScalarMap) -> ScalarMap {
    let points = junction_points(strength);
    let (w, h) = (points.width(), points.height());
    let gw = w.div_ceil(HEAD_STRIDE);
    let gh = h.div_ceil(HEAD_STRIDE);
    let mut out = ScalarMap::zeros(gw, gh);
    let reach = (3.0 * HEAT_SIGMA / HEAD_STRIDE as f32).ceil() as isize;
    let inv_two_sigma2 = 1.0 / (2.0 * HEAT_SIGMA * HEAT_SIGMA);
    for y in 0..h {
        for x in 0..w {
            let s = points.get(x, y);
            if s <= 0.0 {
                continue;
            }
            let (ci, cj) = ((x / HEAD_STRIDE) as isize, (y / HEAD_STRIDE) as isize);
            for gy in (cj - reach).max(0)..=(cj + reach + 1).min(gh as isize - 1) {
                for gx in (ci - reach).max(0)..=(ci + reach + 1).min(gw as isize - 1) {
                    let dx = (gx as usize * HEAD_STRIDE) as f32 - x as f32;
                    let dy = (gy as usize * HEAD_STRIDE) as f32 - y as f32;
                    let v = s * (-(dx * dx + dy * dy) * inv_two_sigma2).exp();
                    let (gx, gy) = (gx as usize, gy as usize);
                    if v > out.get(gx, gy) {
                        out.set(gx, gy, v);
                    }
                }
            }
        }
    }
    out
}

/// Central-difference gradients of the ridge map.
struct Gradients {
    w: usize,
    h: usize,
    gx: Vec<f32>,
    gy: Vec<f32>,
}

impl Gradients {
    fn new(s: &ScalarMap) -> Self {
        let (w, h) = (s.width(), s.height());
        let mut gx = vec![0.0; w * h];
        let mut gy = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let (xi, yi) = (x as isize, y as isize);
                gx[y * w + x] = 0.5 * (s.get_clamped(xi + 1, yi) - s.get_clamped(xi - 1, yi));
                gy[y * w + x] = 0.5 * (s.get_clamped(xi, yi + 1) - s.get_clamped(xi, yi - 1));
            }
        }
        Self { w, h, gx, gy }
    }

    /// 4x4x8 orientation histogram around `(cx, cy)`, clamped and normalized.
    fn histogram(&self, cx: isize, cy: isize) -> Vec<f32> {
        let mut hist = vec![0.0f32; DESCRIPTOR_DIM];
        let half = DESC_WINDOW / 2;
        let cell = (DESC_WINDOW as usize / DESC_CELLS) as f32;
        let inv_two_sigma2 = 1.0 / (2.0 * DESC_SIGMA * DESC_SIGMA);
        for ky in -half..half {
            let py = cy + ky;
            if py < 0 || py >= self.h as isize {
                continue;
            }
            let v = (ky + half) as f32 / cell - 0.5;
            let vy0 = v.floor();
            let fv = v - vy0;
            for kx in -half..half {
                let px = cx + kx;
                if px < 0 || px >= self.w as isize {
                    continue;
                }
                let i = py as usize * self.w + px as usize;
                let (gx, gy) = (self.gx[i], self.gy[i]);
                let mag = gx.hypot(gy);
                if mag <= 0.0 {
                    continue;
                }
                let weight = mag * (-((kx * kx + ky * ky) as f32) * inv_two_sigma2).exp();
                let theta = gy.atan2(gx).rem_euclid(TAU);
                let o = theta / TAU * DESC_BINS as f32;
                let o0 = o.floor();
                let fo = o - o0;
                let o0 = o0 as usize % DESC_BINS;
                let o1 = (o0 + 1) % DESC_BINS;

                let u = (kx + half) as f32 / cell - 0.5;
                let ux0 = u.floor();
                let fu = u - ux0;
                for (cyi, wy) in [(vy0 as isize, 1.0 - fv), (vy0 as isize + 1, fv)] {
                    if cyi < 0 || cyi >= DESC_CELLS as isize || wy == 0.0 {
                        continue;
                    }
                    for (cxi, wx) in [(ux0 as isize, 1.0 - fu), (ux0 as isize + 1, fu)] {
                        if cxi < 0 || cxi >= DESC_CELLS as isize || wx == 0.0 {
                            continue;
                        }
                        let base = (cyi as usize * DESC_CELLS + cxi as usize) * DESC_BINS;
                        let wsp = weight * wy * wx;
                        hist[base + o0] += wsp * (1.0 - fo);
                        hist[base + o1] += wsp * fo;
                    }
                }
            }
        }
        let d = Descriptor::normalized(hist);
        let clamped: Vec<f32> = d.as_slice().iter().map(|v| v.min(DESC_CLAMP)).collect();
        Descriptor::normalized(clamped).0
    }
}

/// Gradient-orientation descriptor of the ridge map at `pos` (full resolution).
pub fn junction_descriptor(strength: &ScalarMap, pos: Point2) -> Descriptor {
    let g = Gradients::new(strength);
    Descriptor(g.histogram(pos.x.round() as isize, pos.y.round() as isize))
}

/// Descriptor field evaluated on demand at grid nodes.
struct JunctionField {
    gradients: Gradients,
    grid_w: usize,
    grid_h: usize,
}

impl DescriptorField for JunctionField {
    fn grid_width(&self) -> usize {
        self.grid_w
    }

    fn grid_height(&self) -> usize {
        self.grid_h
    }

    fn node(&self, gx: usize, gy: usize) -> Vec<f32> {
        self.gradients
            .histogram((gx * HEAD_STRIDE) as isize, (gy * HEAD_STRIDE) as isize)
    }
}

/// Default backend: crack junctions on the black-hat/top-hat ridge map.
#[derive(Debug, Clone, Copy, Default)]
pub struct JunctionBackend;

impl Backend for JunctionBackend {
    fn name(&self) -> &'static str {
        "junction"
    }

    fn predict(&self, patch: &ImageBuffer) -> PatchPrediction {
        let strength = crack_strength(patch);
        let heatmap = junction_heatmap(&strength);
        let field = JunctionField {
            grid_w: heatmap.width(),
            grid_h: heatmap.height(),
            gradients: Gradients::new(&strength),
        };
        PatchPrediction {
            heatmap,
            descriptors: Box::new(field),
        }
    }
}
