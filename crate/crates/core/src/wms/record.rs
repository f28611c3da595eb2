use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobState {
    Queued,
    Running,
    Succeeded,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Succeeded | JobState::Failed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WorkflowState {
    Running,
    Done,
    Failed,
}

/// WMS-side execution provenance for one job, as the WMS database holds it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: u64,
    pub wms_wfid: String,
    pub name: String,
    pub condor_id: u64,
    pub state: JobState,
    pub host_ip: Option<Ipv4Addr>,
    pub start_time: Option<SimTime>,
    pub end_time: Option<SimTime>,
    pub stdout_log: String,
    pub stderr_log: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WmsRunResult {
    pub wms_wfid: String,
    pub state: WorkflowState,
    pub makespan_s: SimTime,
    pub job_records: Vec<JobRecord>,
    pub submit_output: String,
}

/// `max(end) - min(start)` over records that ran; zero when none did.
pub fn makespan(records: &[JobRecord]) -> SimTime {
    let start = records.iter().filter_map(|r| r.start_time).min();
    let end = records.iter().filter_map(|r| r.end_time).max();
    match (start, end) {
        (Some(s), Some(e)) => e.saturating_sub(s),
        _ => SimTime::ZERO,
    }
}
