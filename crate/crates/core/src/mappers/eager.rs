//! Eager mapping: record where running jobs are while they run, then settle
//! each job on its live VM or, failing that, on its last temporary mapping.

use super::{finalize_with, live_vm, MappingOutcome, UnmappedReason};
use crate::cloud::VmSnapshot;
use crate::store::{CapRecord, RecapStore, ResourceConfig, StoreError, TempMapping};
use crate::time::SimTime;
use crate::wms::{CondorQuery, JobRecord, JobState};

/// One monitor pass over the running jobs. Returns how many temporary
/// mappings were written; unchanged placements are left alone.
pub fn eager_monitor_tick(
    store: &RecapStore,
    wf_id: i64,
    jobs: &[JobRecord],
    condor: &dyn CondorQuery,
    vms: &VmSnapshot,
    now: SimTime,
) -> Result<usize, StoreError> {
    let mut written = 0;
    for job in jobs.iter().filter(|j| j.state == JobState::Running) {
        let Ok(host) = condor.condor_lookup(job.condor_id) else { continue };
        let Some(vm) = vms.by_ip(host.host_ip) else { continue };
        if store.get_temp_mapping(wf_id, &job.name)?.is_some_and(|t| t.vm_id == vm.vm_id) {
            continue;
        }
        store.upsert_temp_mapping(&TempMapping {
            cap: CapRecord::from_vm(wf_id, job.name.clone(), vm),
            vm_id: vm.vm_id.clone(),
            ip: vm.ip,
            capture_time: now,
        })?;
        written += 1;
    }
    Ok(written)
}

/// Promotes mappings to final records and leaves no temporary rows behind.
pub fn eager_finalize(store: &RecapStore, wf_id: i64, jobs: &[JobRecord], vms: &VmSnapshot) -> Result<MappingOutcome, StoreError> {
    let out = finalize_with(store, wf_id, jobs, |job| {
        let temp = store.take_temp_mapping(wf_id, &job.name)?;
        if let Some(vm) = job.host_ip.and_then(|ip| live_vm(vms, ip, job.start_time)) {
            return Ok(Ok(ResourceConfig::from_vm(vm)));
        }
        Ok(match (temp, job.host_ip) {
            (Some(t), _) => Ok(t.cap.resource),
            (None, None) => Err(UnmappedReason::NoHostInfo),
            (None, Some(_)) => Err(UnmappedReason::VmGone),
        })
    })?;
    store.clear_temp_mappings(wf_id)?;
    Ok(out)
}
