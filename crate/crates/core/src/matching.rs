//! Mutual nearest-neighbour descriptor matching.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{squared_l2, Descriptor, DetectionResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub idx_ref: usize,
    pub idx_mov: usize,
    /// L2 distance between the two descriptors.
    pub dist: f64,
}

/// Best `(squared distance, index)` seen so far; the smaller index wins ties.
#[derive(Clone, Copy)]
struct Best(f32, usize);

impl Best {
    const NONE: Best = Best(f32::INFINITY, usize::MAX);

    #[inline]
    fn offer(&mut self, d: f32, k: usize) {
        if d < self.0 || (d == self.0 && k < self.1) {
            *self = Best(d, k);
        }
    }
}

/// Pairs `(i, j)` where `b[j]` is the nearest neighbour of `a[i]` and vice
/// versa, sorted by ascending distance (ties by `idx_ref`). Both directions
/// are resolved in a single pass over the distance matrix.
pub fn match_descriptors(a: &[Descriptor], b: &[Descriptor]) -> Vec<Match> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let (mut forward, backward) = a
        .par_iter()
        .enumerate()
        .fold(
            || (Vec::new(), vec![Best::NONE; b.len()]),
            |(mut rows, mut cols), (i, da)| {
                let mut best = Best::NONE;
                for (j, db) in b.iter().enumerate() {
                    let d = squared_l2(da.as_slice(), db.as_slice());
                    best.offer(d, j);
                    cols[j].offer(d, i);
                }
                rows.push((i, best));
                (rows, cols)
            },
        )
        .reduce(
            || (Vec::new(), vec![Best::NONE; b.len()]),
            |(mut rows, mut cols), (r, c)| {
                rows.extend(r);
                for (x, y) in cols.iter_mut().zip(c) {
                    x.offer(y.0, y.1);
                }
                (rows, cols)
            },
        );
    forward.sort_by_key(|(i, _)| *i);
    let mut out: Vec<Match> = forward
        .into_iter()
        .filter(|(i, best)| best.1 < b.len() && backward[best.1].1 == *i)
        .map(|(i, best)| Match {
            idx_ref: i,
            idx_mov: best.1,
            dist: best.0.sqrt() as f64,
        })
        .collect();
    out.sort_by(|x, y| x.dist.total_cmp(&y.dist).then(x.idx_ref.cmp(&y.idx_ref)));
    out
}

/// Mutual nearest-neighbour matching of two detections.
pub fn match_mutual_nn(a: &DetectionResult, b: &DetectionResult) -> Result<Vec<Match>> {
    let m = match_descriptors(&a.descriptors, &b.descriptors);
    if m.is_empty() {
        return Err(Error::NoMatches);
    }
    Ok(m)
}
