//! Mapping for WMSs that keep no host information: instrumented jobs log
//! their own host, and the logs are joined with the Cloud's VMs.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{finalize_with, live_vm, MappingOutcome, UnmappedReason};
use crate::cloud::VmSnapshot;
use crate::store::{JobHostTemp, RecapStore, StoreError};
use crate::wms::kernel::HOST_LINE_PREFIX;
use crate::wms::JobRecord;

#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize, Deserialize)]
#[error("malformed host line `{0}`")]
pub struct MalformedHostLine(pub String);

/// Finds the host line in a job's stdout. `Ok(None)` when there is none.
pub fn parse_host_line(stdout: &str) -> Result<Option<(Ipv4Addr, String)>, MalformedHostLine> {
    let Some(line) = stdout.lines().find(|l| l.split_whitespace().next() == Some(HOST_LINE_PREFIX)) else {
        return Ok(None);
    };
    let bad = || MalformedHostLine(line.to_string());
    let mut fields = line.split_whitespace().skip(1);
    let ip = fields.next().and_then(|f| f.strip_prefix("ip=")).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    let host = fields.next().and_then(|f| f.strip_prefix("hostname=")).filter(|h| !h.is_empty()).ok_or_else(bad)?;
    if fields.next().is_some() {
        return Err(bad());
    }
    Ok(Some((ip, host.to_string())))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub parsed: usize,
    pub malformed: Vec<(String, MalformedHostLine)>,
}

/// Extracts host lines into the temporary job-host table.
pub fn snohi_parse_logs(store: &RecapStore, wf_id: i64, jobs: &[JobRecord]) -> Result<ParseReport, StoreError> {
    let mut report = ParseReport::default();
    for job in jobs {
        match parse_host_line(&job.stdout_log) {
            Ok(Some((host_ip, hostname))) => {
                store.upsert_job_host(&JobHostTemp { wf_id, job_name: job.name.clone(), host_ip, hostname })?;
                report.parsed += 1;
            }
            Ok(None) => {}
            Err(e) => report.malformed.push((job.name.clone(), e)),
        }
    }
    Ok(report)
}

/// Joins the logged hosts with the running VMs, falling back to the Lazy
/// observations for VMs that are already gone.
pub fn snohi_finalize(store: &RecapStore, wf_id: i64, jobs: &[JobRecord], vms: &VmSnapshot) -> Result<MappingOutcome, StoreError> {
    let hosts: BTreeMap<String, JobHostTemp> =
        store.get_job_hosts(wf_id)?.into_iter().map(|h| (h.job_name.clone(), h)).collect();
    let out = finalize_with(store, wf_id, jobs, |job| {
        let Some(host) = hosts.get(&job.name) else { return Ok(Err(UnmappedReason::NoHostInfo)) };
        if let Some(vm) = live_vm(vms, host.host_ip, job.start_time) {
            return Ok(Ok(crate::store::ResourceConfig::from_vm(vm)));
        }
        let start = job.start_time.unwrap_or_default();
        Ok(store.find_vm_by_ip_near(host.host_ip, start)?.map(|o| o.resource).ok_or(UnmappedReason::VmGone))
    })?;
    store.clear_job_hosts(wf_id)?;
    Ok(out)
}
