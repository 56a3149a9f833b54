//! Background jobs with an append-only progress log. Every event gets a
//! sequence number starting at 0, the job record is rewritten on each
//! event, and subscribers can resume from any sequence.

use chrono::{DateTime, Utc};
use futures::Stream;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use tokio::sync::{watch, Semaphore};

use crate::ids::new_id;
use crate::progress::Progress;
use crate::store::{write_json_atomic, Stage, Store, StoreError};

pub const DEFAULT_WORKERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Exemplar,
    Analysis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overall {
    Queued,
    Running,
    Succeeded,
    Failed,
}

impl Overall {
    pub fn is_terminal(self) -> bool {
        matches!(self, Overall::Succeeded | Overall::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStep {
    pub name: String,
    pub status: StepStatus,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressEvent {
    pub job_id: String,
    pub sequence: u64,
    pub step_name: String,
    pub status: StepStatus,
    pub timestamp: DateTime<Utc>,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineJob {
    pub id: String,
    pub session_id: String,
    pub kind: JobKind,
    /// Practice id for analysis jobs.
    pub target_id: Option<String>,
    pub steps: Vec<JobStep>,
    pub overall: Overall,
    pub created_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub error: Option<String>,
    /// Id of what the job produced (analysis report id, exemplar hash).
    pub result: Option<String>,
    pub events: Vec<ProgressEvent>,
}

impl PipelineJob {
    /// Step index of the first running step, if any.
    pub fn running_step(&self) -> Option<usize> {
        self.steps
            .iter()
            .position(|s| s.status == StepStatus::Running)
    }
}

/// A live job: its record plus a notifier bumped on every change.
pub struct JobEntry {
    job: Mutex<PipelineJob>,
    path: PathBuf,
    notify: watch::Sender<u64>,
}

impl JobEntry {
    fn new(job: PipelineJob, dir: &Path) -> Self {
        let path = dir.join(format!("{}.json", job.id));
        let (notify, _) = watch::channel(job.events.len() as u64);
        Self {
            job: Mutex::new(job),
            path,
            notify,
        }
    }

    pub fn snapshot(&self) -> PipelineJob {
        self.job.lock().clone()
    }

    pub fn id(&self) -> String {
        self.job.lock().id.clone()
    }

    fn mutate(&self, f: impl FnOnce(&mut PipelineJob)) {
        let count = {
            let mut job = self.job.lock();
            f(&mut job);
            if let Err(e) = write_json_atomic(&self.path, &*job) {
                tracing::error!(job = %job.id, %e, "could not persist job record");
            }
            job.events.len() as u64
        };
        self.notify.send_replace(count);
    }

    fn push(job: &mut PipelineJob, step: usize, status: StepStatus, detail: Option<String>) {
        let event = ProgressEvent {
            job_id: job.id.clone(),
            sequence: job.events.len() as u64,
            step_name: job.steps[step].name.clone(),
            status,
            timestamp: Utc::now(),
            detail,
        };
        job.events.push(event);
    }

    /// Marks `step` failed and ends the job.
    pub fn fail(&self, step: usize, message: String) {
        self.mutate(|job| {
            let step = step.min(job.steps.len() - 1);
            job.steps[step].status = StepStatus::Failed;
            job.steps[step].detail = Some(message.clone());
            Self::push(job, step, StepStatus::Failed, Some(message.clone()));
            job.overall = Overall::Failed;
            job.error = Some(message);
            job.finished_at = Some(Utc::now());
        });
    }

    pub fn complete(&self, result: Option<String>) {
        self.mutate(|job| {
            job.overall = Overall::Succeeded;
            job.result = result;
            job.finished_at = Some(Utc::now());
        });
    }
}

impl Progress for JobEntry {
    fn started(&self, step: usize) {
        self.mutate(|job| {
            job.overall = Overall::Running;
            job.steps[step].status = StepStatus::Running;
            Self::push(job, step, StepStatus::Running, None);
        });
    }

    fn detail(&self, step: usize, detail: String) {
        self.mutate(|job| {
            job.steps[step].detail = Some(detail.clone());
            Self::push(job, step, StepStatus::Running, Some(detail));
        });
    }

    fn finished(&self, step: usize, detail: Option<String>) {
        self.mutate(|job| {
            job.steps[step].status = StepStatus::Done;
            if detail.is_some() {
                job.steps[step].detail = detail.clone();
            }
            Self::push(job, step, StepStatus::Done, detail);
        });
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RecoverySummary {
    pub failed_jobs: Vec<String>,
    pub reverted_sessions: Vec<String>,
}

/// Registry of jobs. Records live in `<store>/jobs/<id>.json`; finished
/// jobs are read back from disk on demand.
pub struct JobManager {
    dir: PathBuf,
    live: Mutex<HashMap<String, Arc<JobEntry>>>,
    active: Mutex<HashMap<String, String>>,
    workers: Arc<Semaphore>,
}

impl JobManager {
    pub fn new(store: &Store, workers: usize) -> Self {
        Self {
            dir: store.jobs_dir(),
            live: Mutex::new(HashMap::new()),
            active: Mutex::new(HashMap::new()),
            workers: Arc::new(Semaphore::new(workers.max(1))),
        }
    }

    /// Marks jobs left queued or running by a previous process as failed
    /// and returns their `generating` sessions to `setup`.
    pub fn recover(store: &Store) -> Result<RecoverySummary, StoreError> {
        let mut summary = RecoverySummary::default();
        for entry in std::fs::read_dir(store.jobs_dir())? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let job: PipelineJob = match std::fs::read(&path)
                .map_err(StoreError::from)
                .and_then(|b| serde_json::from_slice(&b).map_err(StoreError::from))
            {
                Ok(j) => j,
                Err(e) => {
                    tracing::warn!(path = %path.display(), %e, "skipping unreadable job record");
                    continue;
                }
            };
            if job.overall.is_terminal() {
                continue;
            }
            let entry = JobEntry::new(job, &store.jobs_dir());
            let step = entry.snapshot().running_step().unwrap_or(0);
            entry.fail(
                step,
                "interrupted: the server stopped while this job was running".into(),
            );
            summary.failed_jobs.push(entry.id());
        }
        for s in store.all_sessions()? {
            if s.stage == Stage::Generating {
                super::revert_to_setup(store, &s.id)?;
                summary.reverted_sessions.push(s.id);
            }
        }
        Ok(summary)
    }

    fn create(
        &self,
        session_id: &str,
        kind: JobKind,
        target_id: Option<String>,
        steps: &[&str],
    ) -> Arc<JobEntry> {
        let mut job = PipelineJob {
            id: new_id(),
            session_id: session_id.to_string(),
            kind,
            target_id,
            steps: steps
                .iter()
                .map(|n| JobStep {
                    name: (*n).to_string(),
                    status: StepStatus::Pending,
                    detail: None,
                })
                .collect(),
            overall: Overall::Queued,
            created_at: Utc::now(),
            finished_at: None,
            error: None,
            result: None,
            events: Vec::new(),
        };
        for i in 0..steps.len() {
            JobEntry::push(&mut job, i, StepStatus::Pending, None);
        }
        let entry = Arc::new(JobEntry::new(job, &self.dir));
        entry.mutate(|_| {});
        self.live.lock().insert(entry.id(), entry.clone());
        entry
    }

    /// Registers a job and runs `work` on a worker slot. At most one job
    /// per session may be active; a second one returns `None`.
    pub fn spawn<F, Fut>(
        self: &Arc<Self>,
        session_id: &str,
        kind: JobKind,
        target_id: Option<String>,
        steps: &[&str],
        work: F,
    ) -> Option<Arc<JobEntry>>
    where
        F: FnOnce(Arc<JobEntry>) -> Fut + Send + 'static,
        Fut: Future<Output = ()> + Send + 'static,
    {
        let entry = {
            let mut active = self.active.lock();
            if active.contains_key(session_id) {
                return None;
            }
            let entry = self.create(session_id, kind, target_id, steps);
            active.insert(session_id.to_string(), entry.id());
            entry
        };
        let me = self.clone();
        let session = session_id.to_string();
        let job = entry.clone();
        tokio::spawn(async move {
            let _permit = me
                .workers
                .clone()
                .acquire_owned()
                .await
                .expect("worker semaphore closed");
            let inner = job.clone();
            let outcome = tokio::spawn(work(inner)).await;
            if let Err(e) = outcome {
                let step = job.snapshot().running_step().unwrap_or(0);
                job.fail(step, format!("job task crashed: {e}"));
            } else if !job.snapshot().overall.is_terminal() {
                job.complete(None);
            }
            me.active.lock().remove(&session);
        });
        Some(entry)
    }

    /// Id of the job currently running for `session_id`.
    pub fn active_for(&self, session_id: &str) -> Option<String> {
        self.active.lock().get(session_id).cloned()
    }

    fn entry(&self, id: &str) -> Option<Arc<JobEntry>> {
        if let Some(e) = self.live.lock().get(id) {
            return Some(e.clone());
        }
        if id.is_empty() || !id.bytes().all(|b| b.is_ascii_alphanumeric()) {
            return None;
        }
        let bytes = std::fs::read(self.dir.join(format!("{id}.json"))).ok()?;
        let job: PipelineJob = serde_json::from_slice(&bytes).ok()?;
        Some(Arc::new(JobEntry::new(job, &self.dir)))
    }

    pub fn get(&self, id: &str) -> Option<PipelineJob> {
        self.entry(id).map(|e| e.snapshot())
    }

    /// Events with `sequence >= from`, then every later event as it
    /// happens. Ends once the job is finished and everything was sent.
    pub fn subscribe(
        &self,
        id: &str,
        from: u64,
    ) -> Option<impl Stream<Item = ProgressEvent> + Send + 'static> {
        let entry = self.entry(id)?;
        let rx = entry.notify.subscribe();
        Some(futures::stream::unfold(
            (entry, rx, from),
            |(entry, mut rx, next)| async move {
                loop {
                    let (event, done) = {
                        let job = entry.job.lock();
                        (
                            job.events.get(next as usize).cloned(),
                            job.overall.is_terminal(),
                        )
                    };
                    if let Some(e) = event {
                        return Some((e, (entry, rx, next + 1)));
                    }
                    if done || rx.changed().await.is_err() {
                        return None;
                    }
                }
            },
        ))
    }

    /// Waits for a job to finish and returns its final record.
    pub async fn wait(&self, id: &str) -> Option<PipelineJob> {
        let entry = self.entry(id)?;
        let mut rx = entry.notify.subscribe();
        loop {
            let snap = entry.snapshot();
            if snap.overall.is_terminal() {
                return Some(snap);
            }
            if rx.changed().await.is_err() {
                return Some(entry.snapshot());
            }
        }
    }
}
