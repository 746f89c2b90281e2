//! In-process pipeline jobs, at most one active job per kind.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use missauditor_core::pipeline::{self, Layout, RunManifest, Settings, StageReport};
use missauditor_core::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Embed,
    Train,
    Predict,
    Score,
    Sweep,
}

impl JobKind {
    pub fn name(self) -> &'static str {
        match self {
            JobKind::Embed => "embed",
            JobKind::Train => "train",
            JobKind::Predict => "predict",
            JobKind::Score => "score",
            JobKind::Sweep => "sweep",
        }
    }

    fn run(self, layout: &Layout, settings: &Settings) -> Result<StageReport> {
        match self {
            JobKind::Embed => pipeline::embed_corpus(layout, settings),
            JobKind::Train => pipeline::train_model(layout, settings),
            JobKind::Predict => pipeline::predict_corpus(layout, settings),
            JobKind::Score => pipeline::score_corpus(layout, settings),
            JobKind::Sweep => pipeline::sweep_thresholds(layout, settings),
        }
    }
}

impl std::str::FromStr for JobKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "embed" => Ok(JobKind::Embed),
            "train" => Ok(JobKind::Train),
            "predict" => Ok(JobKind::Predict),
            "score" => Ok(JobKind::Score),
            "sweep" => Ok(JobKind::Sweep),
            other => Err(format!(
                "unknown job kind {other:?} (expected embed, train, predict, score or sweep)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub kind: JobKind,
    pub state: JobState,
    /// 0 until the stage finishes, then 1.
    pub progress: f64,
    pub artifacts: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub created_at: DateTime<Utc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
}

#[derive(Debug, PartialEq, Eq)]
pub enum SubmitError {
    /// A job of this kind is queued or running; carries its id.
    Busy(String),
}

#[derive(Debug, Default)]
struct Registry {
    next_id: u64,
    jobs: BTreeMap<u64, JobStatus>,
    active: BTreeSet<JobKind>,
}

/// Job table shared between request handlers and the stage workers.
#[derive(Debug, Default)]
pub struct JobRunner {
    inner: Mutex<Registry>,
}

fn parse_id(job_id: &str) -> Option<u64> {
    job_id.strip_prefix("job-")?.parse().ok()
}

impl JobRunner {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn get(&self, job_id: &str) -> Option<JobStatus> {
        let id = parse_id(job_id)?;
        self.inner.lock().expect("job table").jobs.get(&id).cloned()
    }

    pub fn list(&self) -> Vec<JobStatus> {
        self.inner.lock().expect("job table").jobs.values().cloned().collect()
    }

    /// Queues a stage and runs it on the blocking pool. Must be called from
    /// within a Tokio runtime.
    pub fn submit(
        self: &Arc<Self>,
        kind: JobKind,
        layout: Layout,
        settings: Settings,
    ) -> std::result::Result<JobStatus, SubmitError> {
        let status = {
            let mut reg = self.inner.lock().expect("job table");
            if reg.active.contains(&kind) {
                let busy = reg
                    .jobs
                    .values()
                    .find(|j| j.kind == kind && !j.state.is_terminal())
                    .map(|j| j.job_id.clone())
                    .unwrap_or_default();
                return Err(SubmitError::Busy(busy));
            }
            reg.next_id += 1;
            let id = reg.next_id;
            let status = JobStatus {
                job_id: format!("job-{id}"),
                kind,
                state: JobState::Queued,
                progress: 0.0,
                artifacts: Vec::new(),
                summary: None,
                error: None,
                created_at: Utc::now(),
                finished_at: None,
            };
            reg.jobs.insert(id, status.clone());
            reg.active.insert(kind);
            status
        };
        let runner = Arc::clone(self);
        let job_id = status.job_id.clone();
        tokio::spawn(async move {
            runner.update(&job_id, |j| j.state = JobState::Running);
            let outcome = tokio::task::spawn_blocking(move || {
                let started_at = Utc::now();
                let clock = Instant::now();
                let report = kind.run(&layout, &settings)?;
                let manifest = RunManifest::new(kind.name(), &settings, report.clone(), started_at, clock);
                manifest.write(&layout)?;
                Ok::<_, missauditor_core::Error>(report)
            })
            .await;
            runner.update(&job_id, |j| {
                match outcome {
                    Ok(Ok(report)) => {
                        j.state = JobState::Done;
                        j.progress = 1.0;
                        j.artifacts = report.outputs;
                        j.summary = Some(report.summary);
                    }
                    Ok(Err(e)) => {
                        j.state = JobState::Failed;
                        j.error = Some(e.to_string());
                    }
                    Err(e) => {
                        j.state = JobState::Failed;
                        j.error = Some(format!("worker panicked: {e}"));
                    }
                }
                j.finished_at = Some(Utc::now());
            });
            runner.inner.lock().expect("job table").active.remove(&kind);
        });
        Ok(status)
    }

    /// Applies `f` unless the job already reached a terminal state.
    fn update(&self, job_id: &str, f: impl FnOnce(&mut JobStatus)) -> bool {
        let Some(id) = parse_id(job_id) else {
            return false;
        };
        let mut reg = self.inner.lock().expect("job table");
        match reg.jobs.get_mut(&id) {
            Some(job) if !job.state.is_terminal() => {
                f(job);
                true
            }
            _ => false,
        }
    }
}

/// Overlays `params` onto the serialized settings, recursing into tables.
pub fn settings_with_params(base: &Settings, params: &serde_json::Value) -> Result<Settings> {
    fn merge(into: &mut serde_json::Value, from: &serde_json::Value) {
        match (into, from) {
            (serde_json::Value::Object(a), serde_json::Value::Object(b)) => {
                for (k, v) in b {
                    match a.get_mut(k) {
                        Some(slot) => merge(slot, v),
                        None => {
                            a.insert(k.clone(), v.clone());
                        }
                    }
                }
            }
            (slot, v) => *slot = v.clone(),
        }
    }
    if params.is_null() {
        return Ok(base.clone());
    }
    if !params.is_object() {
        return Err(missauditor_core::Error::Validation("job params must be an object".into()));
    }
    let mut value = serde_json::to_value(base)?;
    merge(&mut value, params);
    serde_json::from_value(value)
        .map_err(|e| missauditor_core::Error::Validation(format!("job params: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse() {
        assert_eq!("score".parse::<JobKind>(), Ok(JobKind::Score));
        assert!("report".parse::<JobKind>().is_err());
    }

    #[test]
    fn params_overlay_nested_settings() {
        let base = Settings::default();
        let s = settings_with_params(&base, &serde_json::json!({"seed": 9, "regressor": {"c": 4.0}})).unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.regressor.c, 4.0);
        assert_eq!(s.regressor.epsilon, base.regressor.epsilon);
        assert!(settings_with_params(&base, &serde_json::json!({"nope": 1})).is_err());
        assert!(settings_with_params(&base, &serde_json::json!([1])).is_err());
        assert_eq!(settings_with_params(&base, &serde_json::Value::Null).unwrap(), base);
    }

    #[test]
    fn terminal_states_are_frozen() {
        let runner = JobRunner::new();
        {
            let mut reg = runner.inner.lock().unwrap();
            reg.jobs.insert(
                1,
                JobStatus {
                    job_id: "job-1".into(),
                    kind: JobKind::Score,
                    state: JobState::Done,
                    progress: 1.0,
                    artifacts: vec![],
                    summary: None,
                    error: None,
                    created_at: Utc::now(),
                    finished_at: Some(Utc::now()),
                },
            );
        }
        assert!(!runner.update("job-1", |j| j.state = JobState::Running));
        assert_eq!(runner.get("job-1").unwrap().state, JobState::Done);
        assert!(runner.get("job-2").is_none());
        assert!(runner.get("bogus").is_none());
    }
}
