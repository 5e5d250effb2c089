//! Control-point evaluation: ME/MAE per pair and success rates over datasets.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::geometry::{reprojection_error, Correspondence, Homography, Point2};
use crate::pipeline::{register, RegistrationConfig};
use crate::raster::ImageBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub reference: [f64; 2],
    pub moving: [f64; 2],
}

impl ControlPoint {
    pub fn correspondence(&self) -> Correspondence {
        Correspondence::new(self.reference.into(), self.moving.into())
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

/// Manually placed point pairs in original image coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPointAnnotation {
    pub pair_id: String,
    pub points: Vec<ControlPoint>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

impl ControlPointAnnotation {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let ann: Self = serde_json::from_str(text).map_err(|source| Error::Json {
            path: origin.to_string(),
            source,
        })?;
        if ann.points.is_empty() {
            return Err(Error::InvalidAnnotation(format!("{origin}: no control points")));
        }
        if ann.points.iter().any(|p| p.reference.iter().chain(&p.moving).any(|v| !v.is_finite())) {
            return Err(Error::InvalidAnnotation(format!("{origin}: non-finite coordinate")));
        }
        Ok(ann)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&read(path)?, &path.display().to_string())
    }

    /// Every reference point inside `reference` and every moving point inside
    /// `moving` (inclusive of the far edge).
    pub fn check_bounds(&self, reference: (usize, usize), moving: (usize, usize)) -> Result<()> {
        let inside = |p: [f64; 2], (w, h): (usize, usize)| {
            (0.0..=w as f64).contains(&p[0]) && (0.0..=h as f64).contains(&p[1])
        };
        for (i, p) in self.points.iter().enumerate() {
            if !inside(p.reference, reference) || !inside(p.moving, moving) {
                return Err(Error::InvalidAnnotation(format!(
                    "{}: point {i} lies outside the image",
                    self.pair_id
                )));
            }
        }
        Ok(())
    }

    pub fn correspondences(&self) -> Vec<Correspondence> {
        self.points.iter().map(ControlPoint::correspondence).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pair_id: String,
    pub reference: PathBuf,
    pub moving: PathBuf,
    pub annotations: PathBuf,
    pub domain: String,
}

/// Dataset listing; relative paths are resolved against the manifest's
/// directory when loaded from disk.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut manifest: Self = serde_json::from_str(&read(path)?).map_err(|source| Error::Json {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut manifest.entries {
            for p in [&mut e.reference, &mut e.moving, &mut e.annotations] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        manifest.validate()?;
        Ok(manifest)
    }

    /// Unique pair ids and existing files.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.pair_id.as_str()) {
                return Err(Error::InvalidManifest(format!("duplicate pair_id `{}`", e.pair_id)));
            }
            for p in [&e.reference, &e.moving, &e.annotations] {
                if !p.is_file() {
                    return Err(Error::InvalidManifest(format!(
                        "{}: file not found: {}",
                        e.pair_id,
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-point transfer errors of `h` on the annotation, in reference pixels.
pub fn pair_errors(h: &Homography, ann: &ControlPointAnnotation) -> Result<Vec<f64>> {
    ann.points
        .iter()
        .map(|p| reprojection_error(h, &p.correspondence()))
        .collect()
}

/// Mean Euclidean error.
pub fn me(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptyErrorList);
    }
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Maximum Euclidean error.
pub fn mae(errors: &[f64]) -> Result<f64> {
    errors
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(Error::EmptyErrorList)
}

/// Percentage of pairs with metric `<= eps`; failed pairs carry `+inf`.
pub fn success_rate(per_pair: &[f64], eps: f64) -> Result<f64> {
    if per_pair.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = per_pair.iter().filter(|m| **m <= eps).count();
    Ok(100.0 * k as f64 / per_pair.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "ME")]
    Me,
    #[serde(rename = "MAE")]
    Mae,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Me => "ME",
            Metric::Mae => "MAE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRateRow {
    pub method: String,
    pub domain: String,
    pub metric: Metric,
    pub threshold: f64,
    pub success_rate: f64,
    /// Pairs at or below the threshold, out of `n`.
    pub k: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SuccessRateTable {
    pub rows: Vec<SuccessRateRow>,
}

type GroupKey = (String, String, Metric);

impl SuccessRateTable {
    fn groups(&self) -> BTreeMap<GroupKey, Vec<&SuccessRateRow>> {
        let mut g: BTreeMap<GroupKey, Vec<&SuccessRateRow>> = BTreeMap::new();
        for r in &self.rows {
            g.entry((r.method.clone(), r.domain.clone(), r.metric)).or_default().push(r);
        }
        g
    }

    /// One line per (method, domain) with a column per metric and threshold.
    pub fn to_text(&self) -> String {
        let mut columns: Vec<(Metric, f64)> = Vec::new();
        for r in &self.rows {
            if !columns.iter().any(|c| c.0 == r.metric && c.1 == r.threshold) {
                columns.push((r.metric, r.threshold));
            }
        }
        columns.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut lines: BTreeMap<(String, String), Vec<Option<f64>>> = BTreeMap::new();
        for r in &self.rows {
            let cells = lines
                .entry((r.method.clone(), r.domain.clone()))
                .or_insert_with(|| vec![None; columns.len()]);
            let i = columns
                .iter()
                .position(|c| c.0 == r.metric && c.1 == r.threshold)
                .expect("column exists");
            cells[i] = Some(r.success_rate);
        }
        let mut out = format!("{:<20} {:<12}", "method", "domain");
        for (m, t) in &columns {
            let _ = write!(out, " {:>9}", format!("{m}<={t}"));
        }
        out.push('\n');
        for ((method, domain), cells) in lines {
            let _ = write!(out, "{method:<20} {domain:<12}");
            for c in cells {
                match c {
                    Some(v) => {
                        let _ = write!(out, " {v:>9.1}");
                    }
                    None => out.push_str("         -"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,domain,metric,threshold,success_rate,k,n\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.4},{},{}",
                r.method, r.domain, r.metric, r.threshold, r.success_rate, r.k, r.n
            );
        }
        out
    }

    /// One `threshold,success_rate` series per (method, domain, metric), keyed
    /// by a file name such as `ransac_VIS-IRR_ME.csv`.
    pub fn curve_csvs(&self) -> Vec<(String, String)> {
        self.groups()
            .into_iter()
            .map(|((method, domain, metric), rows)| {
                let mut body = String::from("threshold,success_rate\n");
                for r in rows {
                    let _ = writeln!(body, "{},{:.4}", r.threshold, r.success_rate);
                }
                let safe = |s: &str| s.replace(|c: char| !c.is_ascii_alphanumeric() && c != '-', "_");
                (format!("{}_{}_{}.csv", safe(&method), safe(&domain), metric), body)
            })
            .collect()
    }
}

/// Outcome of one dataset entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub pair_id: String,
    pub domain: String,
    /// `+inf` when registration failed.
    pub me: f64,
    pub mae: f64,
    pub failure: Option<PairFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub stage: Option<Stage>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEvaluation {
    pub pairs: Vec<PairResult>,
    pub table: SuccessRateTable,
}

fn evaluate_entry(e: &ManifestEntry, cfg: &RegistrationConfig) -> Result<PairResult> {
    let ann = ControlPointAnnotation::load(&e.annotations)?;
    let reference = ImageBuffer::open(&e.reference)?;
    let moving = ImageBuffer::open(&e.moving)?;
    ann.check_bounds(
        (reference.width(), reference.height()),
        (moving.width(), moving.height()),
    )?;
    let scored = register(&reference, &moving, cfg).and_then(|out| {
        let errs = pair_errors(&out.h_original, &ann)?;
        Ok((me(&errs)?, mae(&errs)?))
    });
    Ok(match scored {
        Ok((me, mae)) => PairResult {
            pair_id: e.pair_id.clone(),
            domain: e.domain.clone(),
            me,
            mae,
            failure: None,
        },
        Err(err) => PairResult {
            pair_id: e.pair_id.clone(),
            domain: e.domain.clone(),
            me: f64::INFINITY,
            mae: f64::INFINITY,
            failure: Some(PairFailure {
                stage: err.stage(),
                message: err.to_string(),
            }),
        },
    })
}

/// Success-rate rows for already scored pairs, grouped by domain.
pub fn success_table(
    method: &str,
    pairs: &[PairResult],
    thresholds_me: &[f64],
    thresholds_mae: &[f64],
) -> Result<SuccessRateTable> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut domains: Vec<&str> = pairs.iter().map(|p| p.domain.as_str()).collect();
    domains.sort();
    domains.dedup();
    let mut rows = Vec::new();
    for domain in domains {
        let group: Vec<&PairResult> = pairs.iter().filter(|p| p.domain == domain).collect();
        for (metric, thresholds) in [(Metric::Me, thresholds_me), (Metric::Mae, thresholds_mae)] {
            let values: Vec<f64> = group
                .iter()
                .map(|p| if metric == Metric::Me { p.me } else { p.mae })
                .collect();
            let mut ts = thresholds.to_vec();
            ts.sort_by(f64::total_cmp);
            for t in ts {
                rows.push(SuccessRateRow {
                    method: method.to_string(),
                    domain: domain.to_string(),
                    metric,
                    threshold: t,
                    success_rate: success_rate(&values, t)?,
                    k: values.iter().filter(|v| **v <= t).count(),
                    n: values.len(),
                });
            }
        }
    }
    Ok(SuccessRateTable { rows })
}

/// Registers every entry, scores it against its annotation and aggregates
/// success rates. Registration failures count as infinite error; unreadable
/// inputs abort the evaluation.
pub fn evaluate_dataset(
    manifest: &DatasetManifest,
    cfg: &RegistrationConfig,
    thresholds_me: &[f64],
    thresholds_mae: &[f64],
) -> Result<DatasetEvaluation> {
    if manifest.entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate()?;
    let pairs = manifest
        .entries
        .par_iter()
        .map(|e| evaluate_entry(e, cfg))
        .collect::<Result<Vec<_>>>()?;
    let table = success_table(cfg.estimator.method.as_str(), &pairs, thresholds_me, thresholds_mae)?;
    Ok(DatasetEvaluation { pairs, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(points: &[([f64; 2], [f64; 2])]) -> ControlPointAnnotation {
        ControlPointAnnotation {
            pair_id: "p".into(),
            points: points
                .iter()
                .map(|&(reference, moving)| ControlPoint { reference, moving })
                .collect(),
        }
    }

    #[test]
    fn pair_errors_examples() {
        let id = Homography::identity();
        let a = ann(&[([1.0, 2.0], [1.0, 2.0]), ([5.0, 5.0], [5.0, 5.0])]);
        assert_eq!(pair_errors(&id, &a).unwrap(), vec![0.0, 0.0]);
        let a = ann(&[([3.0, 4.0], [0.0, 0.0])]);
        assert_eq!(pair_errors(&id, &a).unwrap(), vec![5.0]);
        let t = Homography::translation(1.0, 0.0);
        let a = ann(&[([11.0, 3.0], [10.0, 3.0]), ([1.0, 0.0], [0.0, 0.0])]);
        assert_eq!(pair_errors(&t, &a).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn me_mae_examples() {
        assert_eq!((me(&[5.0]).unwrap(), mae(&[5.0]).unwrap()), (5.0, 5.0));
        assert_eq!((me(&[2.0, 4.0, 6.0]).unwrap(), mae(&[2.0, 4.0, 6.0]).unwrap()), (4.0, 6.0));
        assert_eq!((me(&[0.0; 4]).unwrap(), mae(&[0.0; 4]).unwrap()), (0.0, 0.0));
        assert!(matches!(me(&[]), Err(Error::EmptyErrorList)));
        assert!(matches!(mae(&[]), Err(Error::EmptyErrorList)));
    }

    #[test]
    fn success_rate_examples() {
        let sr = success_rate(&[2.0, 4.0, 6.0], 5.0).unwrap();
        assert!((sr - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(success_rate(&[1.0, 2.0], 2.0).unwrap(), 100.0);
        let mut thirteen = vec![1.0; 12];
        thirteen.push(f64::INFINITY);
        let sr = success_rate(&thirteen, 3.0).unwrap();
        assert_eq!(format!("{sr:.1}"), "92.3");
        assert!(matches!(success_rate(&[], 1.0), Err(Error::EmptyDataset)));
    }

    #[test]
    fn annotation_json() {
        let text = r#"{"pair_id": "a", "points": [{"reference": [1, 2], "moving": [3, 4.5]}]}"#;
        let a = ControlPointAnnotation::from_json(text, "mem").unwrap();
        assert_eq!(a.points[0].moving, [3.0, 4.5]);
        let empty = r#"{"pair_id": "a", "points": []}"#;
        assert!(matches!(
            ControlPointAnnotation::from_json(empty, "mem"),
            Err(Error::InvalidAnnotation(_))
        ));
        let broken = "{\n\"pair_id\": \"a\",\n\"points\": [\n}";
        let err = ControlPointAnnotation::from_json(broken, "mem").unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
        assert!(a.check_bounds((10, 10), (10, 10)).is_ok());
        assert!(a.check_bounds((10, 10), (2, 10)).is_err());
    }

    #[test]
    fn table_shapes() {
        let pairs: Vec<PairResult> = [0.5, 2.5, f64::INFINITY]
            .iter()
            .enumerate()
            .map(|(i, &e)| PairResult {
                pair_id: i.to_string(),
                domain: "VIS-IRR".into(),
                me: e,
                mae: e * 2.0,
                failure: None,
            })
            .collect();
        let t = success_table("ransac", &pairs, &[1.0, 3.0], &[5.0, 6.0]).unwrap();
        assert_eq!(t.rows.len(), 4);
        let me3 = t.rows.iter().find(|r| r.metric == Metric::Me && r.threshold == 3.0).unwrap();
        assert_eq!((me3.k, me3.n), (2, 3));
        let text = t.to_text();
        assert!(text.contains("ME<=3"), "{text}");
        assert!(text.lines().nth(1).unwrap().starts_with("ransac"));
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 5);
        let curves = t.curve_csvs();
        assert_eq!(curves.len(), 2);
        assert_eq!(curves[0].0, "ransac_VIS-IRR_ME.csv");
        assert!(matches!(
            success_table("ransac", &[], &[1.0], &[1.0]),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn empty_manifest_is_rejected() {
        let r = evaluate_dataset(&DatasetManifest::default(), &RegistrationConfig::default(), &[3.0], &[5.0]);
        assert!(matches!(r, Err(Error::EmptyDataset)));
    }
}
