//! Projective geometry primitives.
//!
//! Homographies map *moving* image coordinates onto *reference* image
//! coordinates. A [`Correspondence`] stores the reference point in `a` and the
//! moving point in `b`, so a perfect model satisfies `apply(h, c.b) == c.a`.

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const W_EPS: f64 = 1e-12;
const DET_EPS: f64 = 1e-12;
const M22_EPS: f64 = 1e-9;
const RANK_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// A reference/moving point pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    /// Point in the reference image.
    pub a: Point2,
    /// Point in the moving image.
    pub b: Point2,
}

impl Correspondence {
    pub const fn new(a: Point2, b: Point2) -> Self {
        Self { a, b }
    }
}

/// A normalized, invertible 3x3 projective transform.
///
/// Normalization: `m[2][2] = 1` when `|m[2][2]| > 1e-9`, otherwise the matrix
/// is scaled to unit Frobenius norm. Serialized as a row-major array of nine
/// numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0),
        }
    }

    /// Axis-aligned scaling about the origin.
    pub fn scaling(sx: f64, sy: f64) -> Result<Self> {
        Self::from_matrix(Matrix3::new(sx, 0.0, 0.0, 0.0, sy, 0.0, 0.0, 0.0, 1.0))
    }

    /// Normalizes `m` and checks invertibility.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateHomography);
        }
        let m = normalize(m).ok_or(Error::DegenerateHomography)?;
        if m.determinant().abs() <= DET_EPS {
            return Err(Error::DegenerateHomography);
        }
        Ok(Self { m })
    }

    pub fn from_row_major(v: [f64; 9]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_row_slice(&v))
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self.m.try_inverse().ok_or(Error::DegenerateHomography)?;
        Self::from_matrix(inv)
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Homography) -> Result<Self> {
        Self::from_matrix(self.m * other.m)
    }

    /// Projective transfer of `p`.
    pub fn apply(&self, p: Point2) -> Result<Point2> {
        self.transfer(p).ok_or(Error::DegeneratePoint)
    }

    /// Like [`apply`](Self::apply) but returns `None` for points mapped to infinity.
    #[inline]
    pub fn transfer(&self, p: Point2) -> Option<Point2> {
        let m = &self.m;
        let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
        if w.abs() <= W_EPS {
            return None;
        }
        Some(Point2 {
            x: (m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)]) / w,
            y: (m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)]) / w,
        })
    }
}

impl TryFrom<[f64; 9]> for Homography {
    type Error = Error;

    fn try_from(v: [f64; 9]) -> Result<Self> {
        Self::from_row_major(v)
    }
}

impl From<Homography> for [f64; 9] {
    fn from(h: Homography) -> Self {
        h.to_row_major()
    }
}

fn normalize(m: Matrix3<f64>) -> Option<Matrix3<f64>> {
    let m22 = m[(2, 2)];
    if m22.abs() > M22_EPS {
        return Some(m / m22);
    }
    let norm = m.norm();
    if norm <= 0.0 || !norm.is_finite() {
        return None;
    }
    // Fix the sign so the representation stays unique.
    let pivot = m.iter().copied().find(|v| v.abs() > 0.0).unwrap_or(1.0);
    Some(m / (norm * pivot.signum()))
}

/// Forward transfer error `‖apply(h, c.b) − c.a‖₂` in reference pixels.
pub fn reprojection_error(h: &Homography, c: &Correspondence) -> Result<f64> {
    let p = h.apply(c.b)?;
    Ok(p.distance(&c.a))
}

/// Hartley normalization: translate the centroid to the origin and scale the
/// mean distance to √2.
#[derive(Debug, Clone, Copy)]
struct Conditioner {
    cx: f64,
    cy: f64,
    s: f64,
}

impl Conditioner {
    fn fit<'a>(pts: impl Iterator<Item = &'a Point2> + Clone) -> Option<Self> {
        let n = pts.clone().count() as f64;
        if n == 0.0 {
            return None;
        }
        let (sx, sy) = pts.clone().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        let (cx, cy) = (sx / n, sy / n);
        let mean_dist = pts.map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
        if mean_dist <= f64::EPSILON * (1.0 + cx.abs() + cy.abs()) {
            return None;
        }
        Some(Self {
            cx,
            cy,
            s: std::f64::consts::SQRT_2 / mean_dist,
        })
    }

    fn apply(&self, p: &Point2) -> (f64, f64) {
        ((p.x - self.cx) * self.s, (p.y - self.cy) * self.s)
    }

    fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.s,
            0.0,
            -self.s * self.cx,
            0.0,
            self.s,
            -self.s * self.cy,
            0.0,
            0.0,
            1.0,
        )
    }

    fn inverse_matrix(&self) -> Matrix3<f64> {
        let inv = 1.0 / self.s;
        Matrix3::new(inv, 0.0, self.cx, 0.0, inv, self.cy, 0.0, 0.0, 1.0)
    }
}

fn twice_area(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
    ((q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)).abs()
}

/// True when any three of the four (conditioned) points are collinear.
fn has_collinear_triple(p: &[(f64, f64); 4]) -> bool {
    const AREA_EPS: f64 = 1e-8;
    [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
        .iter()
        .any(|&(i, j, k)| twice_area(p[i], p[j], p[k]) < AREA_EPS)
}

/// Checks a 4-point sample for the collinearity degeneracy in either image.
pub fn is_degenerate_sample(c: &[Correspondence; 4]) -> bool {
    let refs = c.iter().map(|c| &c.a);
    let movs = c.iter().map(|c| &c.b);
    let (Some(ta), Some(tb)) = (Conditioner::fit(refs), Conditioner::fit(movs)) else {
        return true;
    };
    let pa = [0, 1, 2, 3].map(|i| ta.apply(&c[i].a));
    let pb = [0, 1, 2, 3].map(|i| tb.apply(&c[i].b));
    has_collinear_triple(&pa) || has_collinear_triple(&pb)
}

/// Normalized DLT estimate of the homography mapping `b` onto `a`.
pub fn estimate_dlt(c: &[Correspondence]) -> Result<Homography> {
    solve_dlt(c, None)
}

/// Weighted normalized DLT; each correspondence's pair of equations is scaled
/// by its weight. Correspondences with non-positive weight are ignored.
pub fn estimate_dlt_weighted(c: &[Correspondence], weights: &[f64]) -> Result<Homography> {
    assert_eq!(c.len(), weights.len(), "one weight per correspondence");
    solve_dlt(c, Some(weights))
}

fn solve_dlt(c: &[Correspondence], weights: Option<&[f64]>) -> Result<Homography> {
    let used: Vec<(&Correspondence, f64)> = match weights {
        Some(w) => c
            .iter()
            .zip(w.iter().copied())
            .filter(|(_, w)| *w > 0.0)
            .collect(),
        None => c.iter().map(|c| (c, 1.0)).collect(),
    };
    if used.len() < 4 {
        return Err(Error::DegenerateConfiguration("fewer than 4 correspondences"));
    }
    if used.iter().any(|(c, _)| !c.a.is_finite() || !c.b.is_finite()) {
        return Err(Error::DegenerateConfiguration("non-finite coordinates"));
    }

    let ta = Conditioner::fit(used.iter().map(|(c, _)| &c.a))
        .ok_or(Error::DegenerateConfiguration("coincident reference points"))?;
    let tb = Conditioner::fit(used.iter().map(|(c, _)| &c.b))
        .ok_or(Error::DegenerateConfiguration("coincident moving points"))?;

    if used.len() == 4 {
        let pa = [0, 1, 2, 3].map(|i| ta.apply(&used[i].0.a));
        let pb = [0, 1, 2, 3].map(|i| tb.apply(&used[i].0.b));
        if has_collinear_triple(&pa) || has_collinear_triple(&pb) {
            return Err(Error::DegenerateConfiguration("collinear minimal sample"));
        }
    }

    // Pad to at least 9 rows so the SVD exposes the full right null space.
    let rows = (2 * used.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (c, w)) in used.iter().enumerate() {
        let (x, y) = tb.apply(&c.b);
        let (u, v) = ta.apply(&c.a);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for j in 0..9 {
            a[(2 * k, j)] = w * r0[j];
            a[(2 * k + 1, j)] = w * r1[j];
        }
    }

    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or(Error::DegenerateConfiguration("SVD did not converge"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s_max = svd.singular_values[order[0]];
    let s_second_smallest = svd.singular_values[order[7]];
    if s_max <= 0.0 || s_second_smallest / s_max < RANK_EPS {
        return Err(Error::DegenerateConfiguration("rank-deficient design matrix"));
    }
    let h = v_t.row(order[8]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let m = ta.inverse_matrix() * hn * tb.matrix();
    Homography::from_matrix(m)
        .map_err(|_| Error::DegenerateConfiguration("estimated matrix is singular"))
}
