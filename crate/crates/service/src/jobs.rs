use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};

use craqreg_core::bundle::{bundle_files, ReportSummary};
use craqreg_core::pipeline::StageTimings;
use craqreg_core::{register, ImageBuffer, RegistrationConfig, Stage};
use serde::Serialize;

/// Lifecycle of a registration job.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum JobState {
    Pending,
    Running,
    Done,
    Failed { stage: Option<Stage>, message: String },
}

impl JobState {
    fn rank(&self) -> u8 {
        match self {
            JobState::Pending => 0,
            JobState::Running => 1,
            JobState::Done | JobState::Failed { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Homographies {
    /// Moving-original → reference-original, row-major.
    pub original: [f64; 9],
    /// Moving-working → reference-working, row-major.
    pub working: [f64; 9],
}

/// Snapshot of a job as served by `GET /api/registrations/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobRecord {
    pub job_id: String,
    #[serde(flatten)]
    pub state: JobState,
    pub reference_id: String,
    pub moving_id: String,
    pub config: RegistrationConfig,
    /// Asset name → URL, filled once the job is done.
    pub assets: BTreeMap<String, String>,
    pub homographies: Option<Homographies>,
    pub report: Option<ReportSummary>,
    pub timings: Option<StageTimings>,
}

/// Results kept in memory for asset, blend and export requests.
#[derive(Debug)]
pub struct JobOutput {
    /// Bundle files in manifest order.
    pub files: Vec<(String, Vec<u8>)>,
    pub reference: Arc<ImageBuffer>,
    pub moving: Arc<ImageBuffer>,
    pub warped: ImageBuffer,
}

impl JobOutput {
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
    }
}

#[derive(Debug)]
pub struct Job {
    record: Mutex<JobRecord>,
    output: OnceLock<JobOutput>,
}

/// Asset names accepted by the assets endpoint with their bundle file.
pub const ASSETS: [(&str, Option<&str>); 5] = [
    ("warped", Some(craqreg_core::bundle::WARPED_PNG)),
    ("overlay_redcyan", Some(craqreg_core::bundle::OVERLAY_PNG)),
    ("matches", Some(craqreg_core::bundle::MATCHES_PNG)),
    ("reference", Some(craqreg_core::bundle::REFERENCE_PNG)),
    ("moving", None),
];

impl Job {
    pub fn new(job_id: String, reference_id: String, moving_id: String, config: RegistrationConfig) -> Self {
        Self {
            record: Mutex::new(JobRecord {
                job_id,
                state: JobState::Pending,
                reference_id,
                moving_id,
                config,
                assets: BTreeMap::new(),
                homographies: None,
                report: None,
                timings: None,
            }),
            output: OnceLock::new(),
        }
    }

    pub fn snapshot(&self) -> JobRecord {
        self.record.lock().expect("job lock").clone()
    }

    pub fn output(&self) -> Option<&JobOutput> {
        self.output.get()
    }

    /// Moves the job forward; backward transitions are ignored.
    fn advance(&self, state: JobState, update: impl FnOnce(&mut JobRecord)) {
        let mut rec = self.record.lock().expect("job lock");
        if state.rank() > rec.state.rank() {
            rec.state = state;
            update(&mut rec);
        }
    }

    pub fn mark_running(&self) {
        self.advance(JobState::Running, |_| {});
    }

    pub fn fail(&self, stage: Option<Stage>, message: String) {
        self.advance(JobState::Failed { stage, message }, |_| {});
    }

    /// Runs the registration synchronously and records the outcome.
    pub fn execute(&self, reference: Arc<ImageBuffer>, moving: Arc<ImageBuffer>) {
        let cfg = self.snapshot().config;
        let out = match register(&reference, &moving, &cfg) {
            Ok(out) => out,
            Err(e) => {
                self.fail(e.stage(), e.to_string());
                return;
            }
        };
        let (manifest, files) = bundle_files(&reference, &out, &cfg);
        let has_matches = out.matches_visualization.is_some();
        let _ = self.output.set(JobOutput {
            files,
            reference,
            moving,
            warped: out.warped_moving,
        });
        self.advance(JobState::Done, |rec| {
            let base = format!("/api/registrations/{}", rec.job_id);
            for (name, _) in ASSETS {
                if name != "matches" || has_matches {
                    rec.assets.insert(name.to_string(), format!("{base}/assets/{name}"));
                }
            }
            rec.assets.insert("export".into(), format!("{base}/export"));
            rec.homographies = Some(Homographies {
                original: manifest.h_original,
                working: manifest.h_working,
            });
            rec.report = Some(manifest.report);
            rec.timings = Some(out.timings);
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_never_regresses() {
        let job = Job::new("j".into(), "a".into(), "b".into(), RegistrationConfig::default());
        job.mark_running();
        job.fail(Some(Stage::Matching), "no matches".into());
        job.mark_running();
        assert!(matches!(job.snapshot().state, JobState::Failed { .. }));
    }

    #[test]
    fn failed_state_serializes_flat() {
        let job = Job::new("j".into(), "a".into(), "b".into(), RegistrationConfig::default());
        job.fail(Some(Stage::Detection), "nothing found".into());
        let v = serde_json::to_value(job.snapshot()).unwrap();
        assert_eq!(v["state"], "failed");
        assert_eq!(v["stage"], "detection");
        assert_eq!(v["message"], "nothing found");
    }

    #[test]
    fn blank_image_fails_in_detection() {
        let job = Job::new("j".into(), "a".into(), "b".into(), RegistrationConfig::default());
        let blank = Arc::new(ImageBuffer::filled(128, 128, 1, 10).unwrap());
        job.execute(blank.clone(), blank);
        match job.snapshot().state {
            JobState::Failed { stage, .. } => assert_eq!(stage, Some(Stage::Detection)),
            other => panic!("{other:?}"),
        }
        assert!(job.output().is_none());
    }
}
