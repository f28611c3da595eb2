//! Job-to-Cloud-resource mapping strategies and the aggregator that turns
//! a finished run into persisted Cloud-aware provenance.

mod eager;
mod lazy;
mod snohi;
mod static_map;

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eager::{eager_finalize, eager_monitor_tick};
pub use lazy::{lazy_finalize, lazy_monitor_tick};
pub use snohi::{parse_host_line, snohi_finalize, snohi_parse_logs, MalformedHostLine, ParseReport};
pub use static_map::{static_finalize, static_map};

use crate::cloud::{Cloud, CloudFileRecord, VirtualMachine, VmSnapshot};
use crate::store::{CapRecord, CpuSpecRow, FileDirection, JobCloudFile, RecapStore, ResourceConfig, StoreError};
use crate::time::SimTime;
use crate::wms::{output_location, JobRecord, ObjectRef, PoolMachine, SiteConfig, WorkflowDag, WorkflowState};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingType {
    #[default]
    Static,
    Eager,
    Lazy,
    Snohi,
}

impl MappingType {
    pub const ALL: [MappingType; 4] = [MappingType::Static, MappingType::Eager, MappingType::Lazy, MappingType::Snohi];

    pub fn as_str(self) -> &'static str {
        match self {
            MappingType::Static => "static",
            MappingType::Eager => "eager",
            MappingType::Lazy => "lazy",
            MappingType::Snohi => "snohi",
        }
    }

    /// Whether jobs must log their host themselves.
    pub fn needs_instrumentation(self) -> bool {
        self == MappingType::Snohi
    }
}

impl fmt::Display for MappingType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown mapping type `{0}` (expected static, eager, lazy or snohi)")]
pub struct UnknownMappingType(pub String);

impl FromStr for MappingType {
    type Err = UnknownMappingType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MappingType::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownMappingType(s.into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UnmappedReason {
    NoHostInfo,
    VmGone,
    NoObservation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unmapped {
    pub job_name: String,
    pub reason: UnmappedReason,
}

/// Result of mapping one workflow: every job lands in exactly one list.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingOutcome {
    pub mapped: Vec<CapRecord>,
    pub unmapped: Vec<Unmapped>,
}

impl MappingOutcome {
    pub fn len(&self) -> usize {
        self.mapped.len() + self.unmapped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mapped_jobs(&self) -> Vec<&str> {
        self.mapped.iter().map(|c| c.job_name.as_str()).collect()
    }

    pub fn unmapped_jobs(&self) -> Vec<&str> {
        self.unmapped.iter().map(|u| u.job_name.as_str()).collect()
    }

    fn push(&mut self, job: &JobRecord, wf_id: i64, resolved: Result<ResourceConfig, UnmappedReason>) {
        match resolved {
            Ok(resource) => self.mapped.push(CapRecord::new(wf_id, job.name.clone(), resource)),
            Err(reason) => self.unmapped.push(Unmapped { job_name: job.name.clone(), reason }),
        }
    }
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("workflow {0} has not finished")]
    WorkflowStillRunning(i64),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// The running VM with this IP that already existed when the job started.
/// The creation-time guard keeps a recycled IP from matching a later VM.
pub(crate) fn live_vm(vms: &VmSnapshot, ip: Ipv4Addr, start: Option<SimTime>) -> Option<&VirtualMachine> {
    vms.by_ip(ip).filter(|vm| start.is_none_or(|s| vm.created_at <= s))
}

/// Shared finalize loop: keeps existing mappings, resolves the rest and
/// persists what resolved.
pub(crate) fn finalize_with(
    store: &RecapStore,
    wf_id: i64,
    jobs: &[JobRecord],
    mut resolve: impl FnMut(&JobRecord) -> Result<Result<ResourceConfig, UnmappedReason>, StoreError>,
) -> Result<MappingOutcome, StoreError> {
    let mut out = MappingOutcome::default();
    for job in jobs {
        if let Some(existing) = store.get_cap_for_job(wf_id, &job.name)? {
            out.mapped.push(existing);
            continue;
        }
        let resolved = resolve(job)?;
        if let Ok(resource) = &resolved {
            match store.insert_cap_record(&CapRecord::new(wf_id, job.name.clone(), resource.clone())) {
                Ok(()) => {}
                Err(StoreError::DuplicateMapping { .. }) => {
                    let existing = store.get_cap_for_job(wf_id, &job.name)?.expect("duplicate implies a row");
                    out.mapped.push(existing);
                    continue;
                }
                Err(e) => return Err(e),
            }
        }
        out.push(job, wf_id, resolved);
    }
    Ok(out)
}

/// What the aggregator needs to know about a finished run.
#[derive(Clone, Debug)]
pub struct FinishedRun<'a> {
    pub state: WorkflowState,
    pub jobs: &'a [JobRecord],
    /// Cloud snapshot taken when the run is aggregated.
    pub vms: &'a VmSnapshot,
    pub pool: &'a BTreeMap<String, PoolMachine>,
    pub files: &'a [(String, FileDirection, CloudFileRecord)],
}

/// Runs the configured strategy for a finished workflow and persists its
/// mappings, CPU details and file links.
pub fn aggregate(store: &RecapStore, wf_id: i64, kind: MappingType, run: &FinishedRun<'_>) -> Result<MappingOutcome, MapError> {
    store.get_source(wf_id)?;
    if run.state == WorkflowState::Running {
        return Err(MapError::WorkflowStillRunning(wf_id));
    }
    let outcome = match kind {
        MappingType::Static => static_finalize(store, wf_id, run.jobs, run.vms)?,
        MappingType::Eager => eager_finalize(store, wf_id, run.jobs, run.vms)?,
        MappingType::Lazy => lazy_finalize(store, wf_id, run.jobs)?,
        MappingType::Snohi => {
            let report = snohi_parse_logs(store, wf_id, run.jobs)?;
            for (job, err) in &report.malformed {
                log::warn!("workflow {wf_id}: job {job}: {err}");
            }
            snohi_finalize(store, wf_id, run.jobs, run.vms)?
        }
    };
    for rec in &outcome.mapped {
        if let Some(m) = run.pool.get(&rec.resource.nodename) {
            store.upsert_cpu_spec(&CpuSpecRow {
                wf_id,
                job_name: rec.job_name.clone(),
                arch: m.arch.clone(),
                os: m.os.clone(),
                mips: m.mips,
                kflops: m.kflops,
            })?;
        }
    }
    for (job, direction, file) in run.files {
        store.link_job_file(&JobCloudFile { wf_id, job_name: job.clone(), direction: *direction, file: file.clone() })?;
    }
    log::info!(
        "aggregated workflow {wf_id} with {kind}: {} mapped, {} unmapped",
        outcome.mapped.len(),
        outcome.unmapped.len()
    );
    Ok(outcome)
}

/// Files each job read and wrote, as they currently sit in object storage.
/// Objects that do not exist (a failed job's outputs) are skipped.
pub fn collect_job_files(
    cloud: &Cloud,
    dag: &WorkflowDag,
    site: &SiteConfig,
    wms_wfid: &str,
    input_overrides: &BTreeMap<ObjectRef, ObjectRef>,
) -> Vec<(String, FileDirection, CloudFileRecord)> {
    let produced: std::collections::BTreeSet<&ObjectRef> = dag.jobs().iter().flat_map(|j| j.outputs.iter()).collect();
    let head = |r: &ObjectRef| cloud.objects().head(&r.container, &r.keyname).cloned();
    let mut out = Vec::new();
    for job in dag.jobs() {
        for input in &job.inputs {
            let loc = if produced.contains(input) {
                output_location(site, wms_wfid, input)
            } else {
                input_overrides.get(input).cloned().unwrap_or_else(|| input.clone())
            };
            if let Some(rec) = head(&loc) {
                out.push((job.name.clone(), FileDirection::In, rec));
            }
        }
        for output in &job.outputs {
            if let Some(rec) = head(&output_location(site, wms_wfid, output)) {
                out.push((job.name.clone(), FileDirection::Out, rec));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;
