//! Robust homography estimation: RANSAC, locally optimized RANSAC and a
//! simplified threshold-free MAGSAC-style scorer.
//!
//! All variants share the same sampling loop: minimal 4-point samples drawn
//! without replacement from a seeded ChaCha8 generator, degenerate samples
//! skipped, adaptive termination `N = log(1 − p) / log(1 − w⁴)` capped at
//! `max_iters`, and a final refit on the consensus set.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    estimate_dlt, estimate_dlt_weighted, is_degenerate_sample, Correspondence, Homography, Point2,
};
use crate::matching::Match;

const LO_ROUNDS: usize = 10;
const MAGSAC_REFITS: usize = 3;
/// `τ_max = MAGSAC_SCALE · τ_reproj`.
const MAGSAC_SCALE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Ransac,
    LoRansac,
    MagsacSimplified,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ransac, Method::LoRansac, Method::MagsacSimplified];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ransac => "ransac",
            Method::LoRansac => "lo-ransac",
            Method::MagsacSimplified => "magsac-simplified",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid("estimator.method", format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub method: Method,
    /// Inlier threshold on the forward transfer error, in pixels.
    pub tau_reproj: f64,
    pub max_iters: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            method: Method::Ransac,
            tau_reproj: 5.0,
            max_iters: 10_000,
            confidence: 0.995,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_reproj > 0.0 && self.tau_reproj.is_finite()) {
            return Err(Error::invalid("estimator.tau_reproj", "must be > 0"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::invalid("estimator.confidence", "must lie in (0, 1)"));
        }
        if self.max_iters < 1 {
            return Err(Error::invalid("estimator.max_iters", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub h: Homography,
    pub inlier_mask: Vec<bool>,
    pub iterations_run: usize,
    pub method: String,
    pub score: f64,
}

impl EstimationReport {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|v| **v).count()
    }
}

/// Correspondences for `matches` (reference point in `a`, moving in `b`).
pub fn correspondences(matches: &[Match], pts_ref: &[Point2], pts_mov: &[Point2]) -> Vec<Correspondence> {
    matches
        .iter()
        .map(|m| Correspondence::new(pts_ref[m.idx_ref], pts_mov[m.idx_mov]))
        .collect()
}

#[inline]
fn transfer_error(h: &Homography, c: &Correspondence) -> f64 {
    h.transfer(c.b).map_or(f64::INFINITY, |p| p.distance(&c.a))
}

/// Inlier mask, inlier count and summed inlier error at threshold `tau`.
fn consensus(h: &Homography, corrs: &[Correspondence], tau: f64) -> (Vec<bool>, usize, f64) {
    let mut mask = Vec::with_capacity(corrs.len());
    let (mut count, mut err) = (0usize, 0.0f64);
    for c in corrs {
        let e = transfer_error(h, c);
        let inl = e < tau;
        if inl {
            count += 1;
            err += e;
        }
        mask.push(inl);
    }
    (mask, count, err)
}

/// Truncated-quadratic contribution of one residual: `max(0, 1 − e²/τ_max²)`.
pub fn truncated_quadratic(e: f64, tau_max: f64) -> f64 {
    (1.0 - (e * e) / (tau_max * tau_max)).max(0.0)
}

/// Threshold-free model score: `Σ max(0, 1 − e²/τ_max²)`.
pub fn magsac_score(h: &Homography, corrs: &[Correspondence], tau_max: f64) -> f64 {
    corrs
        .iter()
        .map(|c| truncated_quadratic(transfer_error(h, c), tau_max))
        .sum()
}

fn required_iterations(inliers: usize, n: usize, confidence: f64) -> f64 {
    let w = inliers as f64 / n as f64;
    let denom = (1.0 - w.powi(4)).ln();
    if w >= 1.0 {
        0.0
    } else if denom >= 0.0 || !denom.is_finite() {
        f64::INFINITY
    } else {
        ((1.0 - confidence).ln() / denom).ceil()
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    h: Homography,
    mask: Vec<bool>,
    inliers: usize,
    /// Mean inlier error (RANSAC family) or negated score (MAGSAC); lower is better.
    tiebreak: f64,
    score: f64,
}

fn subset(corrs: &[Correspondence], mask: &[bool]) -> Vec<Correspondence> {
    corrs
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(c, _)| *c)
        .collect()
}

fn ransac_candidate(h: Homography, corrs: &[Correspondence], tau: f64) -> Candidate {
    let (mask, inliers, err) = consensus(&h, corrs, tau);
    let mean = if inliers > 0 { err / inliers as f64 } else { f64::INFINITY };
    Candidate {
        h,
        mask,
        inliers,
        tiebreak: mean,
        score: inliers as f64,
    }
}

/// Iterated refit on the current inlier set until the set is stable. Returns
/// the start model when no round improves its inlier count.
fn local_optimize(start: &Candidate, corrs: &[Correspondence], tau: f64) -> Candidate {
    let mut best = start.clone();
    let mut current = start.clone();
    for _ in 0..LO_ROUNDS {
        let Ok(h) = estimate_dlt(&subset(corrs, &current.mask)) else {
            break;
        };
        let next = ransac_candidate(h, corrs, tau);
        let stable = next.mask == current.mask;
        if better(&next, &best, false) {
            best = next.clone();
        }
        current = next;
        if stable {
            break;
        }
    }
    best
}

fn better(a: &Candidate, b: &Candidate, by_score: bool) -> bool {
    if by_score {
        a.score > b.score
    } else {
        a.inliers > b.inliers || (a.inliers == b.inliers && a.tiebreak < b.tiebreak)
    }
}

fn sample_loop(
    corrs: &[Correspondence],
    cfg: &EstimatorConfig,
    method: Method,
) -> Result<(Candidate, usize)> {
    cfg.validate()?;
    let n = corrs.len();
    if n < 4 {
        return Err(Error::EstimationFailed(format!(
            "{n} correspondences, at least 4 required"
        )));
    }
    let tau = cfg.tau_reproj;
    let tau_max = MAGSAC_SCALE * tau;
    let by_score = method == Method::MagsacSimplified;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<Candidate> = None;
    // Best locally optimized model; sampling and termination follow `best`.
    let mut best_lo: Option<Candidate> = None;
    let mut needed = f64::INFINITY;
    let mut iters = 0usize;

    while iters < cfg.max_iters && (iters as f64) < needed {
        iters += 1;
        let idx = index::sample(&mut rng, n, 4);
        let sample = [corrs[idx.index(0)], corrs[idx.index(1)], corrs[idx.index(2)], corrs[idx.index(3)]];
        if is_degenerate_sample(&sample) {
            continue;
        }
        let Ok(h) = estimate_dlt(&sample) else {
            continue;
        };
        let mut cand = ransac_candidate(h, corrs, tau);
        if by_score {
            cand.score = magsac_score(&cand.h, corrs, tau_max);
            cand.tiebreak = -cand.score;
        }
        if best.as_ref().is_some_and(|b| !better(&cand, b, by_score)) {
            continue;
        }
        needed = required_iterations(cand.inliers, n, cfg.confidence);
        if method == Method::LoRansac {
            let lo = local_optimize(&cand, corrs, tau);
            if best_lo.as_ref().is_none_or(|b| better(&lo, b, false)) {
                best_lo = Some(lo);
            }
        }
        best = Some(cand);
    }

    match best_lo.or(best) {
        Some(b) if b.inliers >= 4 => Ok((b, iters)),
        _ => Err(Error::EstimationFailed(format!(
            "no model with at least 4 inliers after {iters} iterations"
        ))),
    }
}

fn finish(h: Homography, corrs: &[Correspondence], cfg: &EstimatorConfig, iters: usize, method: Method) -> Result<EstimationReport> {
    let (mask, inliers, _) = consensus(&h, corrs, cfg.tau_reproj);
    if inliers < 4 {
        return Err(Error::EstimationFailed(format!(
            "refined model keeps only {inliers} inliers"
        )));
    }
    let score = match method {
        Method::MagsacSimplified => magsac_score(&h, corrs, MAGSAC_SCALE * cfg.tau_reproj),
        _ => inliers as f64,
    };
    Ok(EstimationReport {
        h,
        inlier_mask: mask,
        iterations_run: iters,
        method: method.to_string(),
        score,
    })
}

fn refit_on_inliers(best: &Candidate, corrs: &[Correspondence]) -> Result<Homography> {
    estimate_dlt(&subset(corrs, &best.mask))
        .map_err(|e| Error::EstimationFailed(format!("refit on consensus set failed: {e}")))
}

/// Plain RANSAC on correspondences.
pub fn ransac(corrs: &[Correspondence], cfg: &EstimatorConfig) -> Result<EstimationReport> {
    let (best, iters) = sample_loop(corrs, cfg, Method::Ransac)?;
    let h = refit_on_inliers(&best, corrs)?;
    finish(h, corrs, cfg, iters, Method::Ransac)
}

/// RANSAC with iterative local optimization of every new best model.
pub fn lo_ransac(corrs: &[Correspondence], cfg: &EstimatorConfig) -> Result<EstimationReport> {
    let (best, iters) = sample_loop(corrs, cfg, Method::LoRansac)?;
    // A refit that loses consensus is not taken.
    let refit = refit_on_inliers(&best, corrs)?;
    let h = if consensus(&refit, corrs, cfg.tau_reproj).1 >= best.inliers { refit } else { best.h };
    finish(h, corrs, cfg, iters, Method::LoRansac)
}

/// Sampling with the truncated-quadratic score and an iteratively
/// reweighted final fit.
pub fn magsac_simplified(corrs: &[Correspondence], cfg: &EstimatorConfig) -> Result<EstimationReport> {
    let (best, iters) = sample_loop(corrs, cfg, Method::MagsacSimplified)?;
    let tau_max = MAGSAC_SCALE * cfg.tau_reproj;
    let mut h = best.h;
    for _ in 0..MAGSAC_REFITS {
        let weights: Vec<f64> = corrs
            .iter()
            .map(|c| truncated_quadratic(transfer_error(&h, c), tau_max))
            .collect();
        match estimate_dlt_weighted(corrs, &weights) {
            Ok(next) => h = next,
            Err(_) => break,
        }
    }
    finish(h, corrs, cfg, iters, Method::MagsacSimplified)
}

/// Runs the estimator selected by `cfg.method`.
pub fn estimate_correspondences(corrs: &[Correspondence], cfg: &EstimatorConfig) -> Result<EstimationReport> {
    match cfg.method {
        Method::Ransac => ransac(corrs, cfg),
        Method::LoRansac => lo_ransac(corrs, cfg),
        Method::MagsacSimplified => magsac_simplified(corrs, cfg),
    }
}

pub fn estimate_ransac(matches: &[Match], pts_ref: &[Point2], pts_mov: &[Point2], cfg: &EstimatorConfig) -> Result<EstimationReport> {
    ransac(&correspondences(matches, pts_ref, pts_mov), cfg)
}

pub fn estimate_lo_ransac(matches: &[Match], pts_ref: &[Point2], pts_mov: &[Point2], cfg: &EstimatorConfig) -> Result<EstimationReport> {
    lo_ransac(&correspondences(matches, pts_ref, pts_mov), cfg)
}

pub fn estimate_magsac_simplified(matches: &[Match], pts_ref: &[Point2], pts_mov: &[Point2], cfg: &EstimatorConfig) -> Result<EstimationReport> {
    magsac_simplified(&correspondences(matches, pts_ref, pts_mov), cfg)
}

pub fn estimate(matches: &[Match], pts_ref: &[Point2], pts_mov: &[Point2], cfg: &EstimatorConfig) -> Result<EstimationReport> {
    estimate_correspondences(&correspondences(matches, pts_ref, pts_mov), cfg)
}
