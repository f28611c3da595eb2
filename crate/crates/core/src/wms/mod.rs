//! Simulated workflow management system: plans DAGs onto the VM pool and
//! executes them on the shared virtual clock under a MIPS/RAM cost model.
//!
//! The engine is a single-threaded discrete-event loop. Each VM runs one job
//! at a time. Unpinned jobs go to the idle VM that has been free the longest
//! (ties broken by nodename) in the static lifecycle, or to a freshly
//! provisioned VM in the dynamic one.

mod dag;
pub mod kernel;
mod record;
mod site;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dag::{DagError, JobSpec, ObjectRef, Work, WorkflowDag};
pub use record::{makespan, JobRecord, JobState, WmsRunResult, WorkflowState};
pub use site::{HostProfile, Lifecycle, ProvisioningPolicy, SiteConfig, SiteError, WmsConfig};

use crate::cloud::{Cloud, CloudError, VirtualMachine};
use crate::time::SimTime;
use kernel::ResolvedInput;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WmsError {
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error("no resources available to run the workflow")]
    NoResources,
    #[error("unknown workflow `{0}`")]
    UnknownWorkflow(String),
    #[error("VM `{0}` is not running")]
    VmNotRunning(String),
    #[error("condor job {0} is not running")]
    NotRunning(u64),
    #[error("workflow `{0}` cannot make progress")]
    Stalled(String),
    #[error(transparent)]
    Cloud(#[from] CloudError),
}

/// Per-submission switches.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SubmitOptions {
    /// Jobs prepend a host line to stdout and take `instrument_delay_s` longer.
    pub instrumented: bool,
    /// Job name to the nodename it must run on.
    pub placement: BTreeMap<String, String>,
    /// Declared input to the object actually read.
    pub input_overrides: BTreeMap<ObjectRef, ObjectRef>,
}

/// Live placement of a running job as the Condor pool reports it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CondorHost {
    pub state: JobState,
    pub host_ip: Ipv4Addr,
    pub hostname: String,
}

/// Anything that can answer "where is this Condor job running right now".
pub trait CondorQuery {
    fn condor_lookup(&self, condor_id: u64) -> Result<CondorHost, WmsError>;
}

/// Benchmark figures of one pool member.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolMachine {
    pub mips: u32,
    pub kflops: u64,
    pub arch: String,
    pub os: String,
}

/// RAM left to a job on a flavor once the OS has taken its share decides success.
pub fn ram_fits(ram_req_mb: u32, flavor_ram_mb: u32, os_overhead_mb: u32) -> bool {
    ram_req_mb <= flavor_ram_mb.saturating_sub(os_overhead_mb)
}

/// Where a declared output is written: under the workflow id, in the site's
/// output container when one is set.
pub fn output_location(site: &SiteConfig, wms_wfid: &str, declared: &ObjectRef) -> ObjectRef {
    let container = site.storage.output_container.clone().unwrap_or_else(|| declared.container.clone());
    ObjectRef::new(container, format!("{wms_wfid}/{}", declared.keyname))
}

/// Run time of a job on a VM, excluding instrumentation and dispatch latency.
pub fn job_duration(job: &JobSpec, vm: &VirtualMachine) -> SimTime {
    match job.work {
        Work::Fixed { duration } => duration,
        Work::Compute { length_mi } => {
            let cores = job.max_parallelism.min(vm.flavor.vcpus).max(1);
            let micros = length_mi * 1e6 / (f64::from(vm.cpu_spec.mips) * f64::from(cores));
            SimTime::from_micros(micros.round() as u64)
        }
    }
}

#[derive(Clone, Debug)]
struct Attempt {
    vm_id: String,
    ip: Ipv4Addr,
    nodename: String,
    succeeds: bool,
    stdout: String,
    stderr: String,
    outputs: Vec<(ObjectRef, Vec<u8>)>,
}

#[derive(Clone, Debug)]
struct JobSlot {
    spec: JobSpec,
    record: JobRecord,
    parents: Vec<usize>,
    ready_at: Option<SimTime>,
    attempts: Vec<Attempt>,
    excluded: BTreeSet<String>,
}

#[derive(Clone, Debug)]
struct Run {
    wms_wfid: String,
    site: SiteConfig,
    opts: SubmitOptions,
    jobs: Vec<JobSlot>,
    produced: BTreeSet<ObjectRef>,
    submit_output: String,
    state: WorkflowState,
    pending_events: usize,
    finished_at: Option<SimTime>,
}

impl Run {
    fn dispatchable(&self, j: usize) -> bool {
        let job = &self.jobs[j];
        job.record.state == JobState::Queued
            && job.ready_at.is_some()
            && job.parents.iter().all(|&p| self.jobs[p].record.state == JobState::Succeeded)
    }

    fn output_location(&self, declared: &ObjectRef) -> ObjectRef {
        output_location(&self.site, &self.wms_wfid, declared)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    AttemptEnd { run: usize, job: usize },
    RecordWrite { run: usize, job: usize },
    Teardown { run: usize, vm: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    at: SimTime,
    // Same-instant order: attempt ends, then record writes, then teardowns.
    rank: u8,
    seq: u64,
    kind: EventKind,
}

#[derive(Clone, Debug)]
pub struct Wms {
    config: WmsConfig,
    now: SimTime,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    runs: Vec<Run>,
    by_wfid: BTreeMap<String, usize>,
    condor: BTreeMap<u64, (usize, usize)>,
    busy: BTreeMap<String, (usize, usize)>,
    free_since: BTreeMap<String, SimTime>,
    dynamic_vms: BTreeMap<String, usize>,
    teardown_ids: Vec<String>,
    next_run: u64,
    next_job_id: u64,
    next_condor_id: u64,
    next_dyn_node: u64,
    rng: ChaCha8Rng,
}

impl Wms {
    pub fn new(config: WmsConfig) -> Self {
        let seed = match &config.provisioning {
            Some(ProvisioningPolicy::RandomFlavor { seed, .. }) => *seed,
            _ => 0,
        };
        Wms {
            config,
            now: SimTime::ZERO,
            queue: BinaryHeap::new(),
            seq: 0,
            runs: Vec::new(),
            by_wfid: BTreeMap::new(),
            condor: BTreeMap::new(),
            busy: BTreeMap::new(),
            free_since: BTreeMap::new(),
            dynamic_vms: BTreeMap::new(),
            teardown_ids: Vec::new(),
            next_run: 1,
            next_job_id: 1,
            next_condor_id: 1,
            next_dyn_node: 1,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn config(&self) -> &WmsConfig {
        &self.config
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Sets the number used for the next workflow id (`wms-NNNN`).
    pub fn set_next_run_number(&mut self, n: u64) {
        self.next_run = self.next_run.max(n);
    }

    pub fn peek_next_wfid(&self) -> String {
        format!("wms-{:04}", self.next_run)
    }

    /// Everything `plan_and_submit` would reject, without side effects.
    pub fn check_submittable(&self, dag: &WorkflowDag, cloud: &Cloud, opts: &SubmitOptions) -> Result<(), WmsError> {
        if dag.is_empty() {
            return Ok(());
        }
        let all_pinned = dag.jobs().iter().all(|j| opts.placement.contains_key(&j.name));
        let has_pool = cloud.list_vms().iter().any(|vm| !self.dynamic_vms.contains_key(&vm.vm_id));
        let ok = match self.config.lifecycle {
            Lifecycle::Static => has_pool,
            Lifecycle::Dynamic => self.config.provisioning.is_some() || (all_pinned && has_pool),
        };
        if ok {
            Ok(())
        } else {
            Err(WmsError::NoResources)
        }
    }

    pub fn plan_and_submit(
        &mut self,
        cloud: &mut Cloud,
        dag: &WorkflowDag,
        site: &SiteConfig,
        opts: SubmitOptions,
    ) -> Result<String, WmsError> {
        self.check_submittable(dag, cloud, &opts)?;
        self.sync_clock(cloud)?;
        let wms_wfid = self.peek_next_wfid();
        self.next_run += 1;
        let run_idx = self.runs.len();
        let parents = dag.parent_indices();
        let mut jobs = Vec::with_capacity(dag.len());
        for (i, spec) in dag.jobs().iter().enumerate() {
            let condor_id = self.next_condor_id;
            self.next_condor_id += 1;
            self.condor.insert(condor_id, (run_idx, i));
            jobs.push(JobSlot {
                spec: spec.clone(),
                record: JobRecord {
                    job_id: self.next_job_id,
                    wms_wfid: wms_wfid.clone(),
                    name: spec.name.clone(),
                    condor_id,
                    state: JobState::Queued,
                    host_ip: None,
                    start_time: None,
                    end_time: None,
                    stdout_log: String::new(),
                    stderr_log: String::new(),
                },
                parents: parents[i].clone(),
                ready_at: parents[i].is_empty().then_some(self.now),
                attempts: Vec::new(),
                excluded: BTreeSet::new(),
            });
            self.next_job_id += 1;
        }
        let produced = dag.jobs().iter().flat_map(|j| j.outputs.iter().cloned()).collect();
        let submit_output = format!(
            "planned workflow {wms_wfid}\njobs: {}\nedges: {}\nsite: {}\nhost profile: {:?}\ninstrumented: {}\nsubmitted at: {}s\n",
            dag.len(),
            dag.edges().len(),
            site.name.as_deref().unwrap_or("local"),
            site.host_profile(),
            opts.instrumented,
            self.now,
        );
        let empty = dag.is_empty();
        self.runs.push(Run {
            wms_wfid: wms_wfid.clone(),
            site: site.clone(),
            opts,
            jobs,
            produced,
            submit_output,
            state: WorkflowState::Running,
            pending_events: 0,
            finished_at: None,
        });
        self.by_wfid.insert(wms_wfid.clone(), run_idx);
        if empty {
            self.finish_if_complete(run_idx);
        }
        self.settle(cloud)?;
        log::info!("submitted {wms_wfid} with {} jobs at {}", dag.len(), self.now);
        Ok(wms_wfid)
    }

    /// Runs one job on a specific VM and returns its final record.
    pub fn execute_job(&mut self, cloud: &mut Cloud, job: &JobSpec, vm_id: &str) -> Result<JobRecord, WmsError> {
        let vm = cloud.vm(vm_id).filter(|vm| cloud.is_running(&vm.vm_id)).ok_or_else(|| WmsError::VmNotRunning(vm_id.into()))?;
        let dag = WorkflowDag::new(vec![job.clone()], Vec::new())?;
        let opts = SubmitOptions { placement: BTreeMap::from([(job.name.clone(), vm.nodename.clone())]), ..Default::default() };
        let wfid = self.plan_and_submit(cloud, &dag, &SiteConfig::default(), opts)?;
        self.run_to_completion(cloud, &wfid)?;
        Ok(self.get_job_records(&wfid)?.remove(0))
    }

    /// Advances until the workflow is DONE or FAILED.
    pub fn run_to_completion(&mut self, cloud: &mut Cloud, wms_wfid: &str) -> Result<WmsRunResult, WmsError> {
        let idx = self.run_index(wms_wfid)?;
        while self.runs[idx].state == WorkflowState::Running {
            let next = self.next_event_time().ok_or_else(|| WmsError::Stalled(wms_wfid.into()))?;
            self.advance_to(cloud, next)?;
        }
        self.run_result(wms_wfid)
    }

    pub fn next_event_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse(e)| e.at)
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    fn sync_clock(&mut self, cloud: &mut Cloud) -> Result<(), WmsError> {
        if cloud.now() > self.now {
            self.now = cloud.now();
        } else {
            cloud.set_time(self.now)?;
        }
        Ok(())
    }

    /// Processes every event up to and including `t`, then leaves the clock at `t`.
    pub fn advance_to(&mut self, cloud: &mut Cloud, t: SimTime) -> Result<(), WmsError> {
        self.sync_clock(cloud)?;
        let t = t.max(self.now);
        self.settle(cloud)?;
        while let Some(at) = self.next_event_time().filter(|&at| at <= t) {
            self.now = at;
            cloud.set_time(at)?;
            self.settle(cloud)?;
        }
        self.now = t;
        cloud.set_time(t)?;
        self.settle(cloud)
    }

    pub fn advance_by(&mut self, cloud: &mut Cloud, dt: SimTime) -> Result<(), WmsError> {
        self.advance_to(cloud, self.now + dt)
    }

    /// Drains all events at the current instant, dispatching in between,
    /// until nothing more happens at `now`.
    fn settle(&mut self, cloud: &mut Cloud) -> Result<(), WmsError> {
        loop {
            let mut progressed = false;
            while let Some(Reverse(e)) = self.queue.peek().copied() {
                if e.at > self.now {
                    break;
                }
                self.queue.pop();
                self.handle(cloud, e)?;
                progressed = true;
            }
            progressed |= self.schedule(cloud)?;
            if !progressed {
                return Ok(());
            }
        }
    }

    fn push(&mut self, at: SimTime, kind: EventKind) {
        let rank = match kind {
            EventKind::AttemptEnd { .. } => 0,
            EventKind::RecordWrite { .. } => 1,
            EventKind::Teardown { .. } => 2,
        };
        let run = match kind {
            EventKind::AttemptEnd { run, .. } | EventKind::RecordWrite { run, .. } | EventKind::Teardown { run, .. } => run,
        };
        self.runs[run].pending_events += 1;
        self.seq += 1;
        self.queue.push(Reverse(Event { at, rank, seq: self.seq, kind }));
    }

    fn handle(&mut self, cloud: &mut Cloud, e: Event) -> Result<(), WmsError> {
        match e.kind {
            EventKind::AttemptEnd { run, job } => {
                self.runs[run].pending_events -= 1;
                self.end_attempt(cloud, run, job);
                self.finish_if_complete(run);
            }
            EventKind::RecordWrite { run, job } => {
                self.runs[run].pending_events -= 1;
                self.write_record(cloud, run, job);
                self.finish_if_complete(run);
            }
            EventKind::Teardown { run, vm } => {
                self.runs[run].pending_events -= 1;
                let vm_id = self.teardown_ids[vm as usize].clone();
                match cloud.destroy(&vm_id) {
                    Ok(()) | Err(CloudError::AlreadyDestroyed(_)) | Err(CloudError::UnknownVm(_)) => {}
                    Err(other) => return Err(other.into()),
                }
                self.dynamic_vms.remove(&vm_id);
                self.finish_if_complete(run);
            }
        }
        Ok(())
    }

    fn end_attempt(&mut self, cloud: &mut Cloud, run_idx: usize, job_idx: usize) {
        let now = self.now;
        let attempt = self.runs[run_idx].jobs[job_idx].attempts.last().cloned().expect("attempt exists");
        self.busy.remove(&attempt.vm_id);
        if self.dynamic_vms.contains_key(&attempt.vm_id) {
            let slot = self.teardown_ids.len() as u64;
            self.teardown_ids.push(attempt.vm_id.clone());
            self.push(now + self.config.teardown_delay_s, EventKind::Teardown { run: run_idx, vm: slot });
        } else {
            self.free_since.insert(attempt.vm_id.clone(), now);
        }

        if attempt.succeeds {
            for (declared, bytes) in &attempt.outputs {
                let loc = self.runs[run_idx].output_location(declared);
                let meta = BTreeMap::from([
                    ("job".to_string(), self.runs[run_idx].jobs[job_idx].spec.name.clone()),
                    ("wms_wfid".to_string(), self.runs[run_idx].wms_wfid.clone()),
                ]);
                cloud.put_object(&loc.container, &loc.keyname, bytes.clone(), meta);
            }
        }

        let can_retry = !attempt.succeeds && self.retry_possible(cloud, run_idx, job_idx);
        let run = &mut self.runs[run_idx];
        let job = &mut run.jobs[job_idx];
        job.record.stdout_log = attempt.stdout.clone();
        job.record.stderr_log = attempt.stderr.clone();
        if attempt.succeeds {
            job.record.state = JobState::Succeeded;
            job.record.end_time = Some(now);
            let children: Vec<usize> =
                (0..run.jobs.len()).filter(|&c| run.jobs[c].parents.contains(&job_idx)).collect();
            for c in children {
                if run.jobs[c].parents.iter().all(|&p| run.jobs[p].record.state == JobState::Succeeded) {
                    run.jobs[c].ready_at = Some(now);
                }
            }
        } else if can_retry {
            log::debug!("{}: rescheduling {} away from {}", run.wms_wfid, job.spec.name, attempt.nodename);
            job.excluded.insert(attempt.vm_id.clone());
            job.record.state = JobState::Queued;
            job.ready_at = Some(now);
            return;
        } else {
            job.record.state = JobState::Failed;
            job.record.end_time = Some(now);
        }
        let write_at = now.ceil_to(self.config.record_flush_interval_s);
        self.push(write_at, EventKind::RecordWrite { run: run_idx, job: job_idx });
    }

    fn retry_possible(&self, cloud: &Cloud, run_idx: usize, job_idx: usize) -> bool {
        let job = &self.runs[run_idx].jobs[job_idx];
        if job.attempts.len() > self.config.max_retries as usize {
            return false;
        }
        if self.runs[run_idx].opts.placement.contains_key(&job.spec.name) {
            return false;
        }
        match self.config.lifecycle {
            Lifecycle::Dynamic => true,
            Lifecycle::Static => cloud.list_vms().iter().any(|vm| {
                !self.dynamic_vms.contains_key(&vm.vm_id)
                    && !job.excluded.contains(&vm.vm_id)
                    && Some(&vm.vm_id) != job.attempts.last().map(|a| &a.vm_id)
            }),
        }
    }

    fn write_record(&mut self, cloud: &Cloud, run_idx: usize, job_idx: usize) {
        let run = &mut self.runs[run_idx];
        let profile = run.site.host_profile();
        let job = &mut run.jobs[job_idx];
        let Some(attempt) = job.attempts.last() else { return };
        job.record.host_ip = match profile {
            HostProfile::Full => Some(attempt.ip),
            HostProfile::NoHostInfo => None,
            HostProfile::Volatile => cloud.is_running(&attempt.vm_id).then_some(attempt.ip),
        };
    }

    fn finish_if_complete(&mut self, run_idx: usize) {
        let run = &mut self.runs[run_idx];
        if run.state != WorkflowState::Running || run.pending_events > 0 {
            return;
        }
        if run.jobs.iter().any(|j| j.record.state == JobState::Running) {
            return;
        }
        if (0..run.jobs.len()).any(|j| run.dispatchable(j)) {
            return;
        }
        run.state = if run.jobs.iter().all(|j| j.record.state == JobState::Succeeded) {
            WorkflowState::Done
        } else {
            WorkflowState::Failed
        };
        run.finished_at = Some(self.now);
        log::info!("{} finished {:?} at {}", run.wms_wfid, run.state, self.now);
    }

    /// One dispatch pass at `now`. Returns whether anything was dispatched.
    fn schedule(&mut self, cloud: &mut Cloud) -> Result<bool, WmsError> {
        let mut dispatched = false;
        for run_idx in 0..self.runs.len() {
            if self.runs[run_idx].state != WorkflowState::Running {
                continue;
            }
            let mut ready: Vec<(SimTime, usize)> = (0..self.runs[run_idx].jobs.len())
                .filter(|&j| self.runs[run_idx].dispatchable(j))
                .map(|j| (self.runs[run_idx].jobs[j].ready_at.expect("dispatchable jobs are ready"), j))
                .collect();
            ready.sort();
            for (_, job_idx) in ready {
                match self.pick_host(cloud, run_idx, job_idx) {
                    Ok(Some(vm)) => {
                        self.dispatch(cloud, run_idx, job_idx, &vm);
                        dispatched = true;
                    }
                    Ok(None) => {}
                    Err(reason) => {
                        let job = &mut self.runs[run_idx].jobs[job_idx];
                        job.record.state = JobState::Failed;
                        job.record.stderr_log = format!("provisioning failed: {reason}\n");
                        job.record.start_time = Some(self.now);
                        job.record.end_time = Some(self.now);
                        self.finish_if_complete(run_idx);
                        dispatched = true;
                    }
                }
            }
        }
        Ok(dispatched)
    }

    fn pick_host(&mut self, cloud: &mut Cloud, run_idx: usize, job_idx: usize) -> Result<Option<VirtualMachine>, CloudError> {
        let run = &self.runs[run_idx];
        let job = &run.jobs[job_idx];
        if let Some(node) = run.opts.placement.get(&job.spec.name) {
            let vm = cloud.list_vms().by_nodename(node).cloned();
            return Ok(vm.filter(|vm| !self.busy.contains_key(&vm.vm_id)));
        }
        match self.config.lifecycle {
            Lifecycle::Static => {
                let snapshot = cloud.list_vms();
                let best = snapshot
                    .iter()
                    .filter(|vm| {
                        !self.busy.contains_key(&vm.vm_id)
                            && !self.dynamic_vms.contains_key(&vm.vm_id)
                            && !job.excluded.contains(&vm.vm_id)
                    })
                    .min_by_key(|vm| (self.free_since.get(&vm.vm_id).copied().unwrap_or(vm.created_at), vm.nodename.clone()))
                    .cloned();
                Ok(best)
            }
            Lifecycle::Dynamic => {
                let Some(policy) = self.config.provisioning.clone() else { return Ok(None) };
                let flavor = match &policy {
                    ProvisioningPolicy::Fixed { flavor, .. } => flavor.clone(),
                    ProvisioningPolicy::RandomFlavor { flavors, .. } => {
                        if flavors.is_empty() {
                            return Err(CloudError::UnknownFlavor(String::new()));
                        }
                        flavors[self.rng.random_range(0..flavors.len())].clone()
                    }
                };
                let nodename = loop {
                    let candidate = format!("{}{}", self.config.nodename_prefix, self.next_dyn_node);
                    self.next_dyn_node += 1;
                    if cloud.list_vms().by_nodename(&candidate).is_none() {
                        break candidate;
                    }
                };
                match cloud.provision(&flavor, policy.image(), &nodename) {
                    Ok(vm) => {
                        self.dynamic_vms.insert(vm.vm_id.clone(), run_idx);
                        Ok(Some(vm))
                    }
                    Err(CloudError::PoolExhausted(_)) => {
                        self.next_dyn_node -= 1;
                        Ok(None)
                    }
                    Err(other) => Err(other),
                }
            }
        }
    }

    fn dispatch(&mut self, cloud: &Cloud, run_idx: usize, job_idx: usize, vm: &VirtualMachine) {
        let start = self.now + self.config.dispatch_latency_s;
        let run = &self.runs[run_idx];
        let job = &run.jobs[job_idx];
        let spec = &job.spec;

        let mut stderr = String::new();
        let mut resolved = Vec::with_capacity(spec.inputs.len());
        for declared in &spec.inputs {
            let loc = if run.produced.contains(declared) {
                run.output_location(declared)
            } else {
                run.opts.input_overrides.get(declared).cloned().unwrap_or_else(|| declared.clone())
            };
            match cloud.get_object(&loc.container, &loc.keyname) {
                Ok((bytes, rec)) => resolved.push(ResolvedInput { declared, md5: rec.md5, len: bytes.len() }),
                Err(_) => stderr.push_str(&format!("missing input {loc}\n")),
            }
        }
        let ram_ok = ram_fits(spec.ram_req_mb, vm.flavor.ram_mb, self.config.os_overhead_mb);
        if !ram_ok {
            stderr.push_str(&format!(
                "out of memory: job needs {} MB, {} leaves {} MB after the OS\n",
                spec.ram_req_mb,
                vm.flavor.name,
                vm.flavor.ram_mb.saturating_sub(self.config.os_overhead_mb)
            ));
        }
        let succeeds = stderr.is_empty();

        let mut stdout = String::new();
        if run.opts.instrumented {
            stdout.push_str(&kernel::host_line(vm.ip, &vm.nodename));
            stdout.push('\n');
        }
        let (end, outputs) = if succeeds {
            let mut run_time = job_duration(spec, vm);
            if run.opts.instrumented {
                run_time += self.config.instrument_delay_s;
            }
            let outputs: Vec<_> =
                spec.outputs.iter().map(|o| (o.clone(), kernel::output_bytes(spec, o, &resolved))).collect();
            stdout.push_str(&format!("{} finished on {} writing {} output(s)\n", spec.name, vm.nodename, outputs.len()));
            (start + run_time, outputs)
        } else {
            (start + self.config.failure_latency_s, Vec::new())
        };

        let attempt = Attempt {
            vm_id: vm.vm_id.clone(),
            ip: vm.ip,
            nodename: vm.nodename.clone(),
            succeeds,
            stdout,
            stderr,
            outputs,
        };
        let job = &mut self.runs[run_idx].jobs[job_idx];
        job.attempts.push(attempt);
        job.record.state = JobState::Running;
        job.record.start_time = Some(start);
        job.record.end_time = None;
        self.busy.insert(vm.vm_id.clone(), (run_idx, job_idx));
        log::debug!("dispatched {} to {} ({}) until {}", job.spec.name, vm.nodename, vm.ip, end);
        self.push(end, EventKind::AttemptEnd { run: run_idx, job: job_idx });
    }

    fn run_index(&self, wms_wfid: &str) -> Result<usize, WmsError> {
        self.by_wfid.get(wms_wfid).copied().ok_or_else(|| WmsError::UnknownWorkflow(wms_wfid.into()))
    }

    pub fn get_job_records(&self, wms_wfid: &str) -> Result<Vec<JobRecord>, WmsError> {
        let idx = self.run_index(wms_wfid)?;
        Ok(self.runs[idx].jobs.iter().map(|j| j.record.clone()).collect())
    }

    pub fn get_workflow_state(&self, wms_wfid: &str) -> Result<WorkflowState, WmsError> {
        Ok(self.runs[self.run_index(wms_wfid)?].state)
    }

    pub fn finished_at(&self, wms_wfid: &str) -> Result<Option<SimTime>, WmsError> {
        Ok(self.runs[self.run_index(wms_wfid)?].finished_at)
    }

    pub fn submit_output(&self, wms_wfid: &str) -> Result<&str, WmsError> {
        Ok(&self.runs[self.run_index(wms_wfid)?].submit_output)
    }

    pub fn site(&self, wms_wfid: &str) -> Result<&SiteConfig, WmsError> {
        Ok(&self.runs[self.run_index(wms_wfid)?].site)
    }

    /// Where each declared output of a job ends up in object storage.
    pub fn output_locations(&self, wms_wfid: &str, job: &str) -> Result<Vec<ObjectRef>, WmsError> {
        let run = &self.runs[self.run_index(wms_wfid)?];
        Ok(run
            .jobs
            .iter()
            .filter(|j| j.spec.name == job)
            .flat_map(|j| j.spec.outputs.iter().map(|o| run.output_location(o)))
            .collect())
    }

    pub fn run_result(&self, wms_wfid: &str) -> Result<WmsRunResult, WmsError> {
        let run = &self.runs[self.run_index(wms_wfid)?];
        let records: Vec<JobRecord> = run.jobs.iter().map(|j| j.record.clone()).collect();
        Ok(WmsRunResult {
            wms_wfid: run.wms_wfid.clone(),
            state: run.state,
            makespan_s: makespan(&records),
            job_records: records,
            submit_output: run.submit_output.clone(),
        })
    }

    pub fn workflows(&self) -> impl Iterator<Item = (&str, WorkflowState)> {
        self.runs.iter().map(|r| (r.wms_wfid.as_str(), r.state))
    }

    /// Benchmark figures of every running pool member, keyed by nodename.
    pub fn pool_mips(&self, cloud: &Cloud) -> BTreeMap<String, PoolMachine> {
        cloud
            .list_vms()
            .iter()
            .map(|vm| {
                let c = &vm.cpu_spec;
                (vm.nodename.clone(), PoolMachine { mips: c.mips, kflops: c.kflops, arch: c.arch.clone(), os: c.os.clone() })
            })
            .collect()
    }
}

impl CondorQuery for Wms {
    fn condor_lookup(&self, condor_id: u64) -> Result<CondorHost, WmsError> {
        let &(run, job) = self.condor.get(&condor_id).ok_or(WmsError::NotRunning(condor_id))?;
        let slot = &self.runs[run].jobs[job];
        if slot.record.state != JobState::Running {
            return Err(WmsError::NotRunning(condor_id));
        }
        let attempt = slot.attempts.last().ok_or(WmsError::NotRunning(condor_id))?;
        Ok(CondorHost { state: JobState::Running, host_ip: attempt.ip, hostname: attempt.nodename.clone() })
    }
}

#[cfg(test)]
mod tests;
