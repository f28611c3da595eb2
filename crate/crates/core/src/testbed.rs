//! Wires the simulated Cloud, the WMS, the provenance store and the
//! monitors together. Monitors poll on a fixed grid of virtual time; a
//! workflow is aggregated with the configured strategy once the WMS reports
//! it finished.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{Cloud, CloudError};
use crate::mappers::{
    aggregate, collect_job_files, eager_monitor_tick, lazy_monitor_tick, FinishedRun, MapError, MappingOutcome,
    MappingType,
};
use crate::scenario::{Scenario, ScenarioError};
use crate::store::{RecapStore, SourceFiles, StoreError};
use crate::time::SimTime;
use crate::wms::{
    DagError, JobRecord, ObjectRef, SiteConfig, SiteError, SubmitOptions, Wms, WmsError, WmsRunResult, WorkflowDag,
    WorkflowState,
};

#[derive(Debug, Error)]
pub enum TestbedError {
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Site(#[from] SiteError),
    #[error(transparent)]
    Wms(#[from] WmsError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("unknown workflow `{0}`")]
    UnknownWorkflow(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub wf_id: i64,
    pub wms_wfid: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub wf_id: i64,
    pub wms_wfid: String,
    pub state: WorkflowState,
    pub makespan_s: SimTime,
    pub outcome: Option<MappingOutcome>,
}

#[derive(Clone, Debug)]
struct Tracked {
    wf_id: i64,
    dag: WorkflowDag,
    site: SiteConfig,
    input_overrides: BTreeMap<ObjectRef, ObjectRef>,
    outcome: Option<MappingOutcome>,
}

/// Placeholder catalog files for callers that only have a DAG.
pub const DEFAULT_TC: &str = "# transformation catalog: synthetic kernels\n";
pub const DEFAULT_PROPS: &str = "# planner properties\n";

#[derive(Debug)]
pub struct Testbed {
    cloud: Cloud,
    wms: Wms,
    store: RecapStore,
    mapping: MappingType,
    poll: SimTime,
    next_poll: SimTime,
    tracked: BTreeMap<String, Tracked>,
}

impl Testbed {
    pub fn new(scenario: &Scenario, store: RecapStore, mapping: MappingType) -> Result<Self, TestbedError> {
        let (cloud, mut wms) = scenario.build()?;
        let mut next = store.next_wf_id()? as u64;
        for (_, wms_wfid) in store.list_workflows()? {
            if let Some(n) = wms_wfid.strip_prefix("wms-").and_then(|n| n.parse::<u64>().ok()) {
                next = next.max(n + 1);
            }
        }
        wms.set_next_run_number(next);
        Ok(Testbed {
            cloud,
            wms,
            store,
            mapping,
            poll: scenario.monitor.poll_interval_s,
            next_poll: SimTime::ZERO,
            tracked: BTreeMap::new(),
        })
    }

    /// Fresh in-memory store; handy for tests and experiments.
    pub fn in_memory(scenario: &Scenario, mapping: MappingType) -> Result<Self, TestbedError> {
        Testbed::new(scenario, RecapStore::open_in_memory()?, mapping)
    }

    pub fn cloud(&self) -> &Cloud {
        &self.cloud
    }

    pub fn cloud_mut(&mut self) -> &mut Cloud {
        &mut self.cloud
    }

    pub fn wms(&self) -> &Wms {
        &self.wms
    }

    pub fn store(&self) -> &RecapStore {
        &self.store
    }

    pub fn into_store(self) -> RecapStore {
        self.store
    }

    pub fn mapping(&self) -> MappingType {
        self.mapping
    }

    pub fn now(&self) -> SimTime {
        self.wms.now().max(self.cloud.now())
    }

    pub fn poll_interval(&self) -> SimTime {
        self.poll
    }

    /// Submits the four user files. Nothing is persisted if planning fails.
    pub fn submit(&mut self, files: SourceFiles, instrumented: bool) -> Result<Submission, TestbedError> {
        self.submit_with(files, SubmitOptions { instrumented, ..SubmitOptions::default() })
    }

    pub fn submit_with(&mut self, files: SourceFiles, mut opts: SubmitOptions) -> Result<Submission, TestbedError> {
        let dag_text = files.dag.as_deref().ok_or(StoreError::MissingFile("dag"))?;
        let dag = WorkflowDag::from_toml_str(dag_text)?;
        let site = SiteConfig::from_toml_str(files.site.as_deref().ok_or(StoreError::MissingFile("site"))?)?;
        opts.instrumented |= self.mapping.needs_instrumentation();
        self.wms.check_submittable(&dag, &self.cloud, &opts)?;

        let wms_wfid = self.wms.peek_next_wfid();
        let wf_id = self.store.register_source(&wms_wfid, &files)?;
        let overrides = opts.input_overrides.clone();
        let submitted = match self.wms.plan_and_submit(&mut self.cloud, &dag, &site, opts) {
            Ok(id) => id,
            Err(e) => {
                self.store.delete_source(wf_id)?;
                return Err(e.into());
            }
        };
        debug_assert_eq!(submitted, wms_wfid);
        self.tracked.insert(
            wms_wfid.clone(),
            Tracked { wf_id, dag, site, input_overrides: overrides, outcome: None },
        );
        log::info!("workflow {wf_id} ({wms_wfid}) submitted with {} mapping", self.mapping);
        self.poll_monitors()?;
        self.finalize_finished()?;
        Ok(Submission { wf_id, wms_wfid })
    }

    /// Convenience for in-process callers holding a parsed DAG.
    pub fn submit_dag(&mut self, dag: &WorkflowDag, site: &SiteConfig, instrumented: bool) -> Result<Submission, TestbedError> {
        let files = SourceFiles::new(dag.to_toml_string(), site.to_toml_string(), DEFAULT_TC, DEFAULT_PROPS);
        self.submit(files, instrumented)
    }

    fn poll_monitors(&mut self) -> Result<(), TestbedError> {
        let now = self.now();
        match self.mapping {
            MappingType::Eager => {
                let vms = self.cloud.list_vms();
                for (wms_wfid, t) in &self.tracked {
                    if self.wms.get_workflow_state(wms_wfid)? != WorkflowState::Running {
                        continue;
                    }
                    let jobs = self.wms.get_job_records(wms_wfid)?;
                    eager_monitor_tick(&self.store, t.wf_id, &jobs, &self.wms, &vms, now)?;
                }
            }
            MappingType::Lazy | MappingType::Snohi => {
                lazy_monitor_tick(&self.store, &self.cloud.list_vms(), now)?;
            }
            MappingType::Static => {}
        }
        Ok(())
    }

    fn finalize_finished(&mut self) -> Result<(), TestbedError> {
        let done: Vec<String> = self
            .tracked
            .iter()
            .filter(|(_, t)| t.outcome.is_none())
            .map(|(id, _)| id.clone())
            .filter(|id| self.wms.get_workflow_state(id).is_ok_and(|s| s != WorkflowState::Running))
            .collect();
        for id in done {
            self.finalize(&id)?;
        }
        Ok(())
    }

    /// Aggregates a finished workflow (again, if it already was).
    pub fn finalize(&mut self, wms_wfid: &str) -> Result<MappingOutcome, TestbedError> {
        let t = self.tracked.get(wms_wfid).ok_or_else(|| TestbedError::UnknownWorkflow(wms_wfid.into()))?;
        let result = self.wms.run_result(wms_wfid)?;
        let vms = self.cloud.list_vms();
        let pool = self.wms.pool_mips(&self.cloud);
        let files = collect_job_files(&self.cloud, &t.dag, &t.site, wms_wfid, &t.input_overrides);
        let run = FinishedRun { state: result.state, jobs: &result.job_records, vms: &vms, pool: &pool, files: &files };
        let outcome = aggregate(&self.store, t.wf_id, self.mapping, &run)?;
        self.tracked.get_mut(wms_wfid).expect("tracked above").outcome = Some(outcome.clone());
        Ok(outcome)
    }

    /// Advances virtual time, running monitor polls on their grid and
    /// aggregating workflows as they finish.
    pub fn advance_to(&mut self, t: SimTime) -> Result<(), TestbedError> {
        while self.next_poll <= t {
            let at = self.next_poll;
            if at >= self.now() {
                self.wms.advance_to(&mut self.cloud, at)?;
                self.poll_monitors()?;
                self.finalize_finished()?;
            }
            self.next_poll = at + self.poll;
        }
        self.wms.advance_to(&mut self.cloud, t)?;
        self.finalize_finished()
    }

    pub fn advance_by(&mut self, dt: SimTime) -> Result<(), TestbedError> {
        self.advance_to(self.now() + dt)
    }

    /// Runs until the workflow finishes and has been aggregated.
    pub fn run_until_done(&mut self, wms_wfid: &str) -> Result<RunSummary, TestbedError> {
        if !self.tracked.contains_key(wms_wfid) {
            return Err(TestbedError::UnknownWorkflow(wms_wfid.into()));
        }
        while self.wms.get_workflow_state(wms_wfid)? == WorkflowState::Running {
            let next = self.wms.next_event_time().ok_or_else(|| WmsError::Stalled(wms_wfid.into()))?;
            self.advance_to(next)?;
        }
        if self.tracked[wms_wfid].outcome.is_none() {
            self.finalize(wms_wfid)?;
        }
        self.summary(wms_wfid)
    }

    /// Runs every submitted workflow to completion.
    pub fn run_all(&mut self) -> Result<Vec<RunSummary>, TestbedError> {
        let ids: Vec<String> = self.tracked.keys().cloned().collect();
        ids.iter().map(|id| self.run_until_done(id)).collect()
    }

    pub fn summary(&self, wms_wfid: &str) -> Result<RunSummary, TestbedError> {
        let t = self.tracked.get(wms_wfid).ok_or_else(|| TestbedError::UnknownWorkflow(wms_wfid.into()))?;
        let r = self.wms.run_result(wms_wfid)?;
        Ok(RunSummary {
            wf_id: t.wf_id,
            wms_wfid: wms_wfid.into(),
            state: r.state,
            makespan_s: r.makespan_s,
            outcome: t.outcome.clone(),
        })
    }

    pub fn run_result(&self, wms_wfid: &str) -> Result<WmsRunResult, TestbedError> {
        Ok(self.wms.run_result(wms_wfid)?)
    }

    pub fn job_records(&self, wms_wfid: &str) -> Result<Vec<JobRecord>, TestbedError> {
        Ok(self.wms.get_job_records(wms_wfid)?)
    }

    pub fn wms_wfid_of(&self, wf_id: i64) -> Option<&str> {
        self.tracked.iter().find(|(_, t)| t.wf_id == wf_id).map(|(id, _)| id.as_str())
    }

    pub fn wf_id_of(&self, wms_wfid: &str) -> Option<i64> {
        self.tracked.get(wms_wfid).map(|t| t.wf_id)
    }
}
