//! Synthetic craquelure fixtures with known geometry.
//!
//! Crack networks are rendered as the edges of a jittered-grid Voronoi
//! diagram, whose vertices are three-way junctions like the branching points
//! of real craquelure. Scenes are evaluated analytically, so a moving image can
//! be rendered through a known homography without resampling blur.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::{ControlPoint, ControlPointAnnotation, DatasetManifest, ManifestEntry};
use crate::geometry::{Correspondence, Homography, Point2};
use crate::raster::ImageBuffer;

fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.distance(&Point2::new(a.x + t * dx, a.y + t * dy))
}

fn draw_star(data: &mut [u8], w: usize, h: usize, center: Point2, angles_deg: &[f64], arm: f64, fg: u8) {
    let ends: Vec<Point2> = angles_deg
        .iter()
        .map(|a| {
            let r = a.to_radians();
            Point2::new(center.x + arm * r.cos(), center.y + arm * r.sin())
        })
        .collect();
    let reach = arm.ceil() as isize + 1;
    let (cx, cy) = (center.x.round() as isize, center.y.round() as isize);
    for y in (cy - reach).max(0)..(cy + reach + 1).min(h as isize) {
        for x in (cx - reach).max(0)..(cx + reach + 1).min(w as isize) {
            let p = Point2::new(x as f64, y as f64);
            if ends.iter().any(|e| segment_distance(p, center, *e) <= 0.5) {
                data[y as usize * w + x as usize] = fg;
            }
        }
    }
}

/// Square grey image with three 1-px lines of length `arm` meeting at `center`.
pub fn y_crack(size: usize, center: (f64, f64), angles_deg: [f64; 3], arm: f64, bg: u8, fg: u8) -> ImageBuffer {
    let mut data = vec![bg; size * size];
    draw_star(&mut data, size, size, Point2::new(center.0, center.1), &angles_deg, arm, fg);
    ImageBuffer::new(size, size, 1, data).expect("valid fixture")
}

/// `n` separated Y-shaped cracks on a `width`×`height` canvas. Returns the
/// image and the true junction positions.
pub fn y_junction_field(n: usize, width: usize, height: usize, seed: u64) -> (ImageBuffer, Vec<Point2>) {
    const SPACING: usize = 64;
    let cols = width / SPACING;
    let rows = height / SPACING;
    assert!(cols * rows >= n, "canvas too small for {n} junctions");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![200u8; width * height];
    let mut centers = Vec::with_capacity(n);
    for k in 0..n {
        let (cx, cy) = (k % cols, k / cols);
        let center = Point2::new(
            (cx * SPACING + SPACING / 2) as f64 + rng.gen_range(-4.0..4.0f64).round(),
            (cy * SPACING + SPACING / 2) as f64 + rng.gen_range(-4.0..4.0f64).round(),
        );
        let base: f64 = rng.gen_range(0.0..360.0);
        let angles: Vec<f64> = (0..3)
            .map(|i| base + 120.0 * i as f64 + rng.gen_range(-15.0..15.0))
            .collect();
        let fg = rng.gen_range(30..80u8);
        draw_star(&mut data, width, height, center, &angles, 20.0, fg);
        centers.push(center);
    }
    (ImageBuffer::new(width, height, 1, data).expect("valid fixture"), centers)
}

/// A procedural craquelure pattern in reference-image coordinates.
#[derive(Debug, Clone)]
pub struct CraquelureScene {
    cell: f64,
    origin: Point2,
    cols: usize,
    rows: usize,
    seeds: Vec<Point2>,
    tones: Vec<f32>,
    base: f32,
    crack_depth: f32,
    crack_sigma: f64,
}

impl CraquelureScene {
    /// Scene covering `width`×`height` (plus a margin) with cells of roughly
    /// `cell` pixels.
    pub fn new(width: usize, height: usize, cell: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let margin = 4.0 * cell;
        let origin = Point2::new(-margin, -margin);
        let cols = ((width as f64 + 2.0 * margin) / cell).ceil() as usize;
        let rows = ((height as f64 + 2.0 * margin) / cell).ceil() as usize;
        let mut seeds = Vec::with_capacity(cols * rows);
        let mut tones = Vec::with_capacity(cols * rows);
        for r in 0..rows {
            for c in 0..cols {
                seeds.push(Point2::new(
                    origin.x + (c as f64 + rng.gen_range(0.1..0.9)) * cell,
                    origin.y + (r as f64 + rng.gen_range(0.1..0.9)) * cell,
                ));
                tones.push(rng.gen_range(-18.0..18.0));
            }
        }
        Self {
            cell,
            origin,
            cols,
            rows,
            seeds,
            tones,
            base: 165.0,
            crack_depth: 95.0,
            crack_sigma: 0.75,
        }
    }

    /// Grey value of the scene at reference coordinates `q`.
    pub fn value(&self, q: Point2) -> f32 {
        let gc = ((q.x - self.origin.x) / self.cell).floor() as isize;
        let gr = ((q.y - self.origin.y) / self.cell).floor() as isize;
        let (mut d1, mut d2) = (f64::MAX, f64::MAX);
        let (mut i1, mut i2) = (0usize, 0usize);
        for r in gr - 2..=gr + 2 {
            if r < 0 || r >= self.rows as isize {
                continue;
            }
            for c in gc - 2..=gc + 2 {
                if c < 0 || c >= self.cols as isize {
                    continue;
                }
                let i = r as usize * self.cols + c as usize;
                let s = self.seeds[i];
                let d = (s.x - q.x).powi(2) + (s.y - q.y).powi(2);
                if d < d1 {
                    d2 = d1;
                    i2 = i1;
                    d1 = d;
                    i1 = i;
                } else if d < d2 {
                    d2 = d;
                    i2 = i;
                }
            }
        }
        let shading = 12.0 * ((q.x * 0.011).sin() * (q.y * 0.007).cos()) as f32;
        let mut v = self.base + self.tones[i1] + shading;
        if d2 < f64::MAX {
            let sep = self.seeds[i1].distance(&self.seeds[i2]);
            let dist = (d2 - d1) / (2.0 * sep);
            let pair = (i1.min(i2) * 7919 + i1.max(i2) * 104_729) % 97;
            let depth = self.crack_depth * (0.7 + 0.3 * pair as f32 / 96.0);
            let profile = (-(dist * dist) / (2.0 * self.crack_sigma * self.crack_sigma)).exp() as f32;
            v -= depth * profile;
        }
        v
    }

    /// Renders the scene; pixel `p` of the output shows the scene at
    /// `to_scene(p)` (identity when `None`).
    pub fn render(&self, width: usize, height: usize, to_scene: Option<&Homography>) -> ImageBuffer {
        ImageBuffer::from_gray_fn(width, height, |x, y| {
            let p = Point2::new(x as f64, y as f64);
            let q = match to_scene {
                Some(h) => h.transfer(p).unwrap_or(Point2::new(-1e9, -1e9)),
                None => p,
            };
            self.value(q).round().clamp(0.0, 255.0) as u8
        })
        .expect("valid render")
    }
}

/// Adds zero-mean Gaussian noise.
pub fn add_noise(img: &ImageBuffer, sigma: f64, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = (*v as f64 + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// `255 · (v / 255)^gamma`.
pub fn gamma(img: &ImageBuffer, g: f64) -> ImageBuffer {
    let lut: Vec<u8> = (0..256)
        .map(|v| (255.0 * (v as f64 / 255.0).powf(g)).round() as u8)
        .collect();
    let mut out = img.clone();
    out.data_mut().iter_mut().for_each(|v| *v = lut[*v as usize]);
    out
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> ImageBuffer {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let ks: f64 = k.iter().sum();
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut tmp = vec![0.0f64; w * h * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut s = 0.0;
                for (j, kv) in k.iter().enumerate() {
                    let sx = (x as isize + j as isize - r).clamp(0, w as isize - 1) as usize;
                    s += kv * img.sample(sx, y, ch) as f64;
                }
                tmp[(y * w + x) * c + ch] = s / ks;
            }
        }
    }
    let mut out = img.clone();
    let data = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut s = 0.0;
                for (j, kv) in k.iter().enumerate() {
                    let sy = (y as isize + j as isize - r).clamp(0, h as isize - 1) as usize;
                    s += kv * tmp[(sy * w + x) * c + ch];
                }
                data[(y * w + x) * c + ch] = (s / ks).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

/// Intensity transforms simulating a second imaging modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    /// Same appearance with additive noise (σ = 3 grey levels).
    IdentityNoise,
    /// Negative image.
    Inversion,
    /// Gamma 1.8 followed by a Gaussian blur with σ = 1.
    GammaBlur,
}

impl Modality {
    pub fn apply(&self, img: &ImageBuffer, seed: u64) -> ImageBuffer {
        match self {
            Modality::IdentityNoise => add_noise(img, 3.0, seed),
            Modality::Inversion => img.inverted(),
            Modality::GammaBlur => gaussian_blur(&gamma(img, 1.8), 1.0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Modality::IdentityNoise => "identity-noise",
            Modality::Inversion => "inversion",
            Modality::GammaBlur => "gamma-blur",
        }
    }
}

/// Random near-fronto-parallel homography about the image centre: rotation
/// within ±3°, scale within ±6 %, shift within ±15 px, perspective terms
/// within ±5e-5.
pub fn mild_homography(rng: &mut impl Rng, width: usize, height: usize) -> Homography {
    let theta: f64 = rng.gen_range(-3.0f64..3.0).to_radians();
    let s: f64 = rng.gen_range(0.94..1.06);
    let tx: f64 = rng.gen_range(-15.0..15.0);
    let ty: f64 = rng.gen_range(-15.0..15.0);
    let p1: f64 = rng.gen_range(-5e-5..5e-5);
    let p2: f64 = rng.gen_range(-5e-5..5e-5);
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let a = Homography::from_row_major([
        s * theta.cos(),
        -s * theta.sin(),
        tx,
        s * theta.sin(),
        s * theta.cos(),
        ty,
        p1,
        p2,
        1.0,
    ])
    .expect("well-conditioned");
    Homography::translation(cx, cy)
        .compose(&a)
        .and_then(|m| m.compose(&Homography::translation(-cx, -cy)))
        .expect("well-conditioned")
}

/// A registration test case with ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub reference: ImageBuffer,
    pub moving: ImageBuffer,
    /// Ground-truth moving → reference homography.
    pub h_gt: Homography,
    /// Control points (reference ↔ moving) consistent with `h_gt`.
    pub control_points: Vec<Correspondence>,
}

/// Renders a craquelure pair of `width`×`height` images related by a random
/// mild homography, with `modality` applied to the moving image.
pub fn synthetic_pair(width: usize, height: usize, modality: Modality, seed: u64) -> SyntheticPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let scene = CraquelureScene::new(width, height, 26.0, seed);
    let h_gt = mild_homography(&mut rng, width, height);
    let reference = scene.render(width, height, None);
    let moving = modality.apply(&scene.render(width, height, Some(&h_gt)), seed.wrapping_add(1));
    let control_points = control_points(&h_gt, width, height, 10, &mut rng);
    SyntheticPair {
        reference,
        moving,
        h_gt,
        control_points,
    }
}

/// `n` reference points in the central 80 % of the frame whose moving
/// counterparts (through `h_gt⁻¹`) also fall inside the frame.
pub fn control_points(h_gt: &Homography, width: usize, height: usize, n: usize, rng: &mut impl Rng) -> Vec<Correspondence> {
    let inv = h_gt.inverse().expect("invertible ground truth");
    let (w, h) = (width as f64, height as f64);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = Point2::new(rng.gen_range(0.1 * w..0.9 * w), rng.gen_range(0.1 * h..0.9 * h));
        let Some(b) = inv.transfer(a) else { continue };
        if b.x >= 0.0 && b.y >= 0.0 && b.x <= w - 1.0 && b.y <= h - 1.0 {
            out.push(Correspondence::new(a, b));
        }
    }
    out
}

/// Writes `pairs_per_modality` synthetic pairs for each modality into `dir`
/// (PNG images, annotation JSON) together with a `manifest.json`, and returns
/// the manifest path. Pair ids are `<modality>-<k>`; the domain tag is the
/// modality name.
pub fn write_dataset(
    dir: &Path,
    modalities: &[Modality],
    pairs_per_modality: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut entries = Vec::new();
    for m in modalities {
        for k in 0..pairs_per_modality {
            let pair_id = format!("{}-{k:02}", m.name());
            let p = synthetic_pair(width, height, *m, seed.wrapping_add(k as u64));
            let reference = PathBuf::from(format!("{pair_id}_ref.png"));
            let moving = PathBuf::from(format!("{pair_id}_mov.png"));
            let annotations = PathBuf::from(format!("{pair_id}.json"));
            p.reference.save_png(dir.join(&reference))?;
            p.moving.save_png(dir.join(&moving))?;
            let ann = ControlPointAnnotation {
                pair_id: pair_id.clone(),
                points: p
                    .control_points
                    .iter()
                    .map(|c| ControlPoint {
                        reference: [c.a.x, c.a.y],
                        moving: [c.b.x, c.b.y],
                    })
                    .collect(),
            };
            write_json(&dir.join(&annotations), &ann)?;
            entries.push(ManifestEntry {
                pair_id,
                reference,
                moving,
                annotations,
                domain: m.name().to_string(),
            });
        }
    }
    let path = dir.join("manifest.json");
    write_json(&path, &DatasetManifest { entries })?;
    Ok(path)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_vec_pretty(value).expect("serializable fixture");
    fs::write(path, json).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_renders_dark_cracks_on_a_lighter_ground() {
        let scene = CraquelureScene::new(128, 128, 26.0, 3);
        let img = scene.render(128, 128, None);
        let min = *img.data().iter().min().unwrap();
        let max = *img.data().iter().max().unwrap();
        assert!(min < 110 && max > 150, "{min} {max}");
    }

    #[test]
    fn moving_render_follows_ground_truth() {
        let scene = CraquelureScene::new(64, 64, 20.0, 5);
        let h = Homography::translation(3.0, -2.0);
        let mov = scene.render(64, 64, Some(&h));
        let refi = scene.render(64, 64, None);
        assert_eq!(mov.sample(10, 20, 0), refi.sample(13, 18, 0));
    }

    #[test]
    fn control_points_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = mild_homography(&mut rng, 400, 300);
        for c in control_points(&h, 400, 300, 15, &mut rng) {
            assert!(h.apply(c.b).unwrap().distance(&c.a) < 1e-9);
        }
    }

    #[test]
    fn modality_transforms() {
        let img = ImageBuffer::from_gray_fn(8, 8, |x, _| (x * 30) as u8).unwrap();
        assert_eq!(Modality::Inversion.apply(&img, 0).sample(1, 0, 0), 225);
        let g = gamma(&img, 1.8);
        assert_eq!(g.sample(0, 0, 0), 0);
        assert!(g.sample(4, 0, 0) < 120);
        let flat = ImageBuffer::filled(9, 9, 1, 77).unwrap();
        assert_eq!(gaussian_blur(&flat, 1.0), flat);
    }
}
