//! Lazy mapping: watch the Cloud for new VMs, then match each job's host IP
//! to the observed VM created nearest to the job's start.

use super::{finalize_with, MappingOutcome, UnmappedReason};
use crate::cloud::VmSnapshot;
use crate::store::{LazyVmObservation, RecapStore, StoreError};
use crate::time::SimTime;
use crate::wms::JobRecord;

/// Records every VM in the snapshot. Returns how many were new.
pub fn lazy_monitor_tick(store: &RecapStore, vms: &VmSnapshot, now: SimTime) -> Result<usize, StoreError> {
    let mut fresh = 0;
    for vm in vms.iter() {
        if store.record_vm_observation(&LazyVmObservation::from_vm(vm, now))? {
            fresh += 1;
        }
    }
    Ok(fresh)
}

pub fn lazy_finalize(store: &RecapStore, wf_id: i64, jobs: &[JobRecord]) -> Result<MappingOutcome, StoreError> {
    finalize_with(store, wf_id, jobs, |job| {
        let Some(ip) = job.host_ip else { return Ok(Err(UnmappedReason::NoHostInfo)) };
        let start = job.start_time.unwrap_or(SimTime::ZERO);
        Ok(store.find_vm_by_ip_near(ip, start)?.map(|o| o.resource).ok_or(UnmappedReason::NoObservation))
    })
}
