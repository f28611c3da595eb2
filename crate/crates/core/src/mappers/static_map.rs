//! Mapping by matching each job's recorded host IP against the VMs still
//! running once the workflow has finished.

use super::{finalize_with, live_vm, MappingOutcome, UnmappedReason};
use crate::cloud::VmSnapshot;
use crate::store::{RecapStore, ResourceConfig, StoreError};
use crate::wms::JobRecord;

fn resolve(job: &JobRecord, vms: &VmSnapshot) -> Result<ResourceConfig, UnmappedReason> {
    let ip = job.host_ip.ok_or(UnmappedReason::NoHostInfo)?;
    live_vm(vms, ip, job.start_time).map(ResourceConfig::from_vm).ok_or(UnmappedReason::VmGone)
}

/// Pure form: computes the outcome without touching a store.
pub fn static_map(wf_id: i64, jobs: &[JobRecord], vms: &VmSnapshot) -> MappingOutcome {
    let mut out = MappingOutcome::default();
    for job in jobs {
        out.push(job, wf_id, resolve(job, vms));
    }
    out
}

pub fn static_finalize(store: &RecapStore, wf_id: i64, jobs: &[JobRecord], vms: &VmSnapshot) -> Result<MappingOutcome, StoreError> {
    finalize_with(store, wf_id, jobs, |job| Ok(resolve(job, vms)))
}
