use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

/// Asynchronous render progress. Status only moves forward, progress never
/// decreases, and terminal states are frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderJob {
    pub id: String,
    pub project_id: String,
    pub status: JobStatus,
    pub completed: usize,
    pub total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RenderJob {
    pub fn new(id: String, project_id: String, total: usize) -> Self {
        Self { id, project_id, status: JobStatus::Queued, completed: 0, total, report: None, error: None }
    }

    /// Returns false (and changes nothing) for a backwards or post-terminal transition.
    pub fn advance(&mut self, status: JobStatus) -> bool {
        if self.status.is_terminal() || status < self.status {
            return false;
        }
        self.status = status;
        true
    }

    pub fn set_progress(&mut self, completed: usize) {
        if !self.status.is_terminal() {
            self.completed = self.completed.max(completed.min(self.total));
        }
    }

    pub fn finish(&mut self, report: String) {
        if self.advance(JobStatus::Done) {
            self.completed = self.total;
            self.report = Some(report);
        }
    }

    pub fn fail(&mut self, error: String) {
        if !self.status.is_terminal() {
            self.status = JobStatus::Failed;
            self.error = Some(error);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transitions_are_monotone() {
        let mut job = RenderJob::new("j".into(), "p".into(), 10);
        assert!(job.advance(JobStatus::Running));
        assert!(!job.advance(JobStatus::Queued));
        job.set_progress(4);
        job.set_progress(2);
        assert_eq!(job.completed, 4);
        job.finish("render_report.json".into());
        assert_eq!((job.status, job.completed), (JobStatus::Done, 10));
        job.fail("late".into());
        assert_eq!(job.status, JobStatus::Done);
        assert!(job.error.is_none());
    }
}
