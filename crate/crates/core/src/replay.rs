//! Re-provisioning the captured infrastructure and re-running a stored
//! workflow on it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::CloudError;
use crate::store::{RecapStore, SourceFiles, StoreError, WorkflowSource};
use crate::testbed::{RunSummary, Submission, Testbed, TestbedError};
use crate::wms::{DagError, ObjectRef, SubmitOptions, WorkflowDag};

pub const REPLAY_SUFFIX: &str = "-rep";

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("workflow {wf_id} has no mapping for jobs {missing:?}")]
    IncompleteProvenance { wf_id: i64, missing: Vec<String> },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Testbed(#[from] TestbedError),
}

/// One VM to provision for the replay.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceRequest {
    pub source_nodename: String,
    pub nodename: String,
    pub flavor_id: i64,
    pub flavor_name: String,
    pub image_id: String,
    pub image_name: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayPlan {
    pub source_wf_id: i64,
    pub source: WorkflowSource,
    pub dag: WorkflowDag,
    /// One per distinct original VM, by nodename.
    pub requests: Vec<ResourceRequest>,
    /// Job name to the original nodename it ran on.
    pub placement: BTreeMap<String, String>,
}

/// Deliberate deviations from the captured setup.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayOptions {
    /// Original flavor id to the flavor id provisioned instead.
    pub flavor_substitution: BTreeMap<i64, i64>,
    /// Declared input to the object read instead.
    pub input_overrides: BTreeMap<ObjectRef, ObjectRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayResult {
    pub submission: Submission,
    pub summary: RunSummary,
    pub provisioned: Vec<String>,
}

pub fn build_plan(store: &RecapStore, wf_id: i64) -> Result<ReplayPlan, ReplayError> {
    let source = store.get_source(wf_id)?;
    let dag = WorkflowDag::from_toml_str(&source.wf_dag)?;
    let caps: BTreeMap<String, _> = store.get_cap(wf_id)?.into_iter().map(|c| (c.job_name.clone(), c)).collect();
    let missing: Vec<String> = dag.jobs().iter().filter(|j| !caps.contains_key(&j.name)).map(|j| j.name.clone()).collect();
    if !missing.is_empty() {
        return Err(ReplayError::IncompleteProvenance { wf_id, missing });
    }
    let mut requests: BTreeMap<String, ResourceRequest> = BTreeMap::new();
    let mut placement = BTreeMap::new();
    for job in dag.jobs() {
        let r = &caps[&job.name].resource;
        placement.insert(job.name.clone(), r.nodename.clone());
        requests.entry(r.nodename.clone()).or_insert_with(|| ResourceRequest {
            source_nodename: r.nodename.clone(),
            nodename: format!("{}{REPLAY_SUFFIX}", r.nodename),
            flavor_id: r.flavor_id,
            flavor_name: r.flavor_name.clone(),
            image_id: r.image_id.clone(),
            image_name: r.image_name.clone(),
        });
    }
    Ok(ReplayPlan { source_wf_id: wf_id, source, dag, requests: requests.into_values().collect(), placement })
}

/// Provisions the planned VMs, resubmits the stored files pinned to them,
/// runs the replay to completion and aggregates its provenance.
pub fn execute_replay(tb: &mut Testbed, plan: &ReplayPlan, opts: &ReplayOptions) -> Result<ReplayResult, ReplayError> {
    let mut provisioned: Vec<(String, String)> = Vec::new();
    let mut names = BTreeMap::new();
    for req in &plan.requests {
        let flavor = opts.flavor_substitution.get(&req.flavor_id).copied().unwrap_or(req.flavor_id);
        let taken: BTreeSet<String> = tb.cloud().list_vms().iter().map(|vm| vm.nodename.clone()).collect();
        let nodename = std::iter::once(req.nodename.clone())
            .chain((2..).map(|n| format!("{}{n}", req.nodename)))
            .find(|n| !taken.contains(n))
            .expect("unbounded candidates");
        match tb.cloud_mut().provision_by_id(flavor, &req.image_id, &nodename) {
            Ok(vm) => provisioned.push((vm.vm_id, nodename.clone())),
            Err(e) => {
                for (vm_id, _) in &provisioned {
                    tb.cloud_mut().destroy(vm_id)?;
                }
                return Err(e.into());
            }
        }
        names.insert(req.source_nodename.clone(), nodename);
    }
    let placement = plan.placement.iter().map(|(job, node)| (job.clone(), names[node].clone())).collect();
    let s = &plan.source;
    let files = SourceFiles::new(s.wf_dag.clone(), s.wf_site.clone(), s.wf_tc.clone(), s.wf_props.clone());
    let submit = SubmitOptions { instrumented: false, placement, input_overrides: opts.input_overrides.clone() };
    let submission = tb.submit_with(files, submit)?;
    let summary = tb.run_until_done(&submission.wms_wfid)?;
    log::info!("workflow {} replayed as {}", plan.source_wf_id, submission.wf_id);
    Ok(ReplayResult { submission, summary, provisioned: provisioned.into_iter().map(|(_, n)| n).collect() })
}

/// `build_plan` followed by `execute_replay`.
pub fn reproduce(tb: &mut Testbed, wf_id: i64, opts: &ReplayOptions) -> Result<ReplayResult, ReplayError> {
    let plan = build_plan(tb.store(), wf_id)?;
    execute_replay(tb, &plan, opts)
}
