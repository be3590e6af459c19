use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::Utc;
use parking_lot::Mutex;
use racelens_core::batch::BatchReport;

use crate::types::{JobState, JobStatus};

/// Processing jobs, at most one running per event.
#[derive(Default)]
pub struct Jobs {
    next: AtomicU64,
    jobs: Mutex<BTreeMap<String, JobStatus>>,
    running: Mutex<BTreeSet<String>>,
}

impl Jobs {
    /// Registers a running job, or returns `None` when the event already has
    /// one.
    pub fn start(&self, event_id: &str) -> Option<String> {
        if !self.running.lock().insert(event_id.to_string()) {
            return None;
        }
        let job_id = format!("job-{}", self.next.fetch_add(1, Ordering::Relaxed) + 1);
        self.jobs.lock().insert(
            job_id.clone(),
            JobStatus {
                job_id: job_id.clone(),
                event_id: event_id.into(),
                state: JobState::Running,
                done: 0,
                total: 0,
                started_at: Utc::now(),
                finished_at: None,
                report: None,
                error: None,
            },
        );
        Some(job_id)
    }

    pub fn progress(&self, job_id: &str, done: usize, total: usize) {
        if let Some(j) = self.jobs.lock().get_mut(job_id) {
            j.done = done;
            j.total = total;
        }
    }

    pub fn finish(&self, job_id: &str, result: Result<BatchReport, String>) {
        let mut jobs = self.jobs.lock();
        let Some(j) = jobs.get_mut(job_id) else {
            return;
        };
        j.finished_at = Some(Utc::now());
        match result {
            Ok(report) => {
                j.total = report.total;
                j.done = report.total - report.left_pending;
                j.state = if report.provider_error.is_some() {
                    JobState::Failed
                } else {
                    JobState::Succeeded
                };
                j.error = report.provider_error.clone();
                j.report = Some(report);
            }
            Err(e) => {
                j.state = JobState::Failed;
                j.error = Some(e);
            }
        }
        self.running.lock().remove(&j.event_id);
    }

    pub fn get(&self, job_id: &str) -> Option<JobStatus> {
        self.jobs.lock().get(job_id).cloned()
    }
}
