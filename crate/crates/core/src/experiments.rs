//! Named experiment runs over the simulated testbed. Each produces a table
//! (header plus rows) and a one-paragraph summary; writing them out is the
//! caller's business.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::cloud::{openstack_flavors, CloudConfig, MipsModel};
use crate::compare::{compare, CompareError};
use crate::mappers::MappingType;
use crate::replay::{reproduce, ReplayError, ReplayOptions};
use crate::scenario::Scenario;
use crate::store::SourceFiles;
use crate::testbed::{Testbed, TestbedError, DEFAULT_PROPS, DEFAULT_TC};
use crate::time::SimTime;
use crate::wms::{JobSpec, ProvisioningPolicy, SiteConfig, WmsConfig, WorkflowDag, WorkflowState};
use crate::workloads::{reconall, wordcount, WorkMode, Workload, REFERENCE_MIPS};

pub const EXPERIMENTS: [&str; 5] = ["ram-sweep", "mips-sweep", "flavor-sweep", "overhead", "replay-roundtrip"];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment `{0}` (expected one of {EXPERIMENTS:?})")]
    Unknown(String),
    #[error(transparent)]
    Testbed(#[from] TestbedError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Compare(#[from] CompareError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub summary: String,
}

impl ExperimentReport {
    fn new(name: &str, header: &[&str]) -> Self {
        ExperimentReport {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
            summary: String::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

pub fn run_experiment(name: &str) -> Result<ExperimentReport, ExperimentError> {
    match name {
        "ram-sweep" => ram_sweep(),
        "mips-sweep" => mips_sweep(),
        "flavor-sweep" => flavor_sweep(),
        "overhead" => overhead(),
        "replay-roundtrip" => replay_roundtrip(),
        other => Err(ExperimentError::Unknown(other.into())),
    }
}

fn secs(t: SimTime) -> String {
    format!("{:.4}", t.as_secs_f64())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Stored files for a workload DAG under a site description.
pub fn workload_files(dag: &WorkflowDag, site: &SiteConfig) -> SourceFiles {
    SourceFiles::new(dag.to_toml_string(), site.to_toml_string(), DEFAULT_TC, DEFAULT_PROPS)
}

/// Two m1.small VMs (flavor 2 of the OpenStack catalog) on the Condor image,
/// named like the original Wordcount pool.
pub fn wordcount_pool(mips: MipsModel) -> Scenario {
    Scenario { cloud: CloudConfig { mips, flavors: openstack_flavors(), ..CloudConfig::default() }, ..Scenario::default() }
        .with_vm("uwe-vm3", "m1.small", "condorvm-quantal-snapshot")
        .with_vm("uwe-vm4", "m1.small", "condorvm-quantal-snapshot")
}

/// Submits a workload on a fresh testbed and runs it to completion.
pub fn run_workload(
    scenario: &Scenario,
    mapping: MappingType,
    wl: &Workload,
    site: &SiteConfig,
) -> Result<(Testbed, crate::testbed::RunSummary), TestbedError> {
    let mut tb = Testbed::in_memory(scenario, mapping)?;
    wl.install_inputs(tb.cloud_mut());
    let sub = tb.submit(workload_files(&wl.dag, site), false)?;
    let summary = tb.run_until_done(&sub.wms_wfid)?;
    Ok((tb, summary))
}

fn single_job(job: JobSpec) -> Workload {
    Workload { name: "single", dag: WorkflowDag::new(vec![job], vec![]).expect("single job"), inputs: Vec::new() }
}

fn with_parallelism(wl: Workload, p: u32) -> Workload {
    let jobs = wl.dag.jobs().iter().cloned().map(|j| j.parallelism(p)).collect();
    Workload { dag: WorkflowDag::new(jobs, wl.dag.edges().to_vec()).expect("same shape"), ..wl }
}

pub const RAM_SWEEP_MB: [u32; 8] = [100, 200, 300, 400, 450, 500, 600, 700];
pub const RAM_SWEEP_FLAVORS: [&str; 3] = ["m1.tiny", "m1.small", "m1.medium"];
pub const RAM_SWEEP_RUNS: u64 = 5;

/// One job per (flavor, RAM requirement, run) on a single VM of that flavor.
pub fn ram_sweep() -> Result<ExperimentReport, ExperimentError> {
    let mut report = ExperimentReport::new("ram-sweep", &["flavor", "flavor_ram_mb", "ram_req_mb", "runs", "failures"]);
    let overhead = WmsConfig::default().os_overhead_mb;
    let mut onset: BTreeMap<&str, Option<u32>> = BTreeMap::new();
    for flavor in RAM_SWEEP_FLAVORS {
        for ram in RAM_SWEEP_MB {
            let mut failures = 0;
            let mut flavor_ram = 0;
            for run in 0..RAM_SWEEP_RUNS {
                let scenario = Scenario {
                    cloud: CloudConfig { mips: MipsModel::uniform(12_500, 1_500, run), ..CloudConfig::default() },
                    ..Scenario::default()
                }
                .with_vm("sweep-vm", flavor, "condorvm-quantal-snapshot");
                let wl = single_job(JobSpec::fixed("memhog", 10.0).ram(ram));
                let (tb, summary) = run_workload(&scenario, MappingType::Static, &wl, &SiteConfig::default())?;
                flavor_ram = tb.cloud().flavor_by_name(flavor).map_or(0, |f| f.ram_mb);
                if summary.state == WorkflowState::Failed {
                    failures += 1;
                }
            }
            if failures > 0 {
                onset.entry(flavor).or_insert(Some(ram));
            }
            report.push(vec![
                flavor.into(),
                flavor_ram.to_string(),
                ram.to_string(),
                RAM_SWEEP_RUNS.to_string(),
                failures.to_string(),
            ]);
        }
        onset.entry(flavor).or_insert(None);
    }
    let describe: Vec<String> = onset
        .iter()
        .map(|(f, o)| match o {
            Some(mb) => format!("{f} fails from {mb} MB"),
            None => format!("{f} never fails"),
        })
        .collect();
    report.summary = format!("OS overhead {overhead} MB; {}", describe.join("; "));
    Ok(report)
}

pub const MIPS_FACTORS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
pub const MIPS_POPULATION_RUNS: u64 = 20;

/// Compute-mode Wordcount under scaled fixed MIPS, then under two sampled
/// MIPS populations.
pub fn mips_sweep() -> Result<ExperimentReport, ExperimentError> {
    let mut report = ExperimentReport::new("mips-sweep", &["series", "param", "seed", "makespan_s"]);
    let wl = wordcount(WorkMode::Compute);
    let mut base = None;
    for k in MIPS_FACTORS {
        let mips = (REFERENCE_MIPS * k) as u32;
        let (_, s) = run_workload(&wordcount_pool(MipsModel::fixed(mips)), MappingType::Static, &wl, &SiteConfig::default())?;
        base.get_or_insert(s.makespan_s.as_secs_f64() * k);
        report.push(vec!["scale".into(), format!("{k}"), "-".into(), secs(s.makespan_s)]);
    }
    let mut means = Vec::new();
    for (center, spread) in [(12_500, 1_500), (10_500, 4_500)] {
        let mut spans = Vec::new();
        for seed in 0..MIPS_POPULATION_RUNS {
            let model = MipsModel::uniform(center, spread, seed);
            let (_, s) = run_workload(&wordcount_pool(model), MappingType::Static, &wl, &SiteConfig::default())?;
            spans.push(s.makespan_s.as_secs_f64());
            report.push(vec!["population".into(), format!("{center}±{spread}"), seed.to_string(), secs(s.makespan_s)]);
        }
        means.push(((center, spread), mean(&spans)));
    }
    report.summary = format!(
        "makespan x MIPS factor = {:.4} s for every factor; mean makespan {}±{}: {:.4} s, {}±{}: {:.4} s",
        base.unwrap_or_default(),
        means[0].0 .0,
        means[0].0 .1,
        means[0].1,
        means[1].0 .0,
        means[1].0 .1,
        means[1].1
    );
    Ok(report)
}

pub const FLAVOR_SWEEP_RUNS: u64 = 5;

/// Job-level CPU effect (single vs 4-way parallel job per flavor), then
/// Wordcount on per-job VMs of fixed or random flavors.
pub fn flavor_sweep() -> Result<ExperimentReport, ExperimentError> {
    let mut report = ExperimentReport::new("flavor-sweep", &["series", "config", "run", "state", "makespan_s", "flavors_used"]);
    let length_mi = 600.0 * REFERENCE_MIPS;
    for flavor in ["m1.small", "m1.medium", "m1.large"] {
        for p in [1, 4] {
            let scenario = Scenario { cloud: CloudConfig { mips: MipsModel::fixed(12_500), ..CloudConfig::default() }, ..Scenario::default() }
                .with_vm("fib-vm", flavor, "condorvm-quantal-snapshot");
            let wl = single_job(JobSpec::compute("fibonacci", length_mi).ram(256).parallelism(p));
            let (_, s) = run_workload(&scenario, MappingType::Static, &wl, &SiteConfig::default())?;
            let series = if p == 1 { "single-process" } else { "multi-process" };
            report.push(vec![series.into(), flavor.into(), "0".into(), format!("{:?}", s.state), secs(s.makespan_s), flavor.into()]);
        }
    }
    let wl = with_parallelism(wordcount(WorkMode::Compute), 4);
    type PolicyFor = fn(u64) -> ProvisioningPolicy;
    let configs: [(&str, PolicyFor); 3] = [
        ("tiny", |_| ProvisioningPolicy::Fixed { flavor: "m1.tiny".into(), image: "condorvm-quantal-snapshot".into() }),
        ("small", |_| ProvisioningPolicy::Fixed { flavor: "m1.small".into(), image: "condorvm-quantal-snapshot".into() }),
        ("random", |seed| ProvisioningPolicy::RandomFlavor {
            flavors: vec!["m1.tiny".into(), "m1.small".into(), "m1.medium".into(), "m1.large".into()],
            image: "condorvm-quantal-snapshot".into(),
            seed,
        }),
    ];
    let mut means = Vec::new();
    for (label, policy) in configs {
        let mut spans = Vec::new();
        for run in 0..FLAVOR_SWEEP_RUNS {
            let scenario = Scenario {
                cloud: CloudConfig { mips: MipsModel::fixed(12_500), ..CloudConfig::default() },
                wms: WmsConfig::dynamic(policy(run)),
                ..Scenario::default()
            };
            let (tb, s) = run_workload(&scenario, MappingType::Eager, &wl, &SiteConfig::default())?;
            let mut used: BTreeMap<String, usize> = BTreeMap::new();
            for cap in tb.store().get_cap(s.wf_id).map_err(TestbedError::from)? {
                *used.entry(cap.resource.flavor_name).or_default() += 1;
            }
            let used: Vec<String> = used.iter().map(|(f, n)| format!("{f}:{n}")).collect();
            spans.push(s.makespan_s.as_secs_f64());
            report.push(vec!["wordcount".into(), label.into(), run.to_string(), format!("{:?}", s.state), secs(s.makespan_s), used.join(" ")]);
        }
        means.push(format!("{label} {:.4} s", mean(&spans)));
    }
    report.summary = format!("mean Wordcount makespan with 4-way parallel jobs: {}", means.join(", "));
    Ok(report)
}

/// Sleep-mode Wordcount without provenance capture and under each mapping.
pub fn overhead() -> Result<ExperimentReport, ExperimentError> {
    let mut report = ExperimentReport::new("overhead", &["mapping", "makespan_s", "delta_s", "mapped_jobs"]);
    let wl = wordcount(WorkMode::Sleep);
    let scenario = wordcount_pool(MipsModel::fixed(12_500));
    let baseline = {
        let (mut cloud, mut wms) = scenario.build().map_err(TestbedError::from)?;
        wl.install_inputs(&mut cloud);
        let id = wms.plan_and_submit(&mut cloud, &wl.dag, &SiteConfig::default(), Default::default()).map_err(TestbedError::from)?;
        wms.run_to_completion(&mut cloud, &id).map_err(TestbedError::from)?;
        wms.run_result(&id).map_err(TestbedError::from)?.makespan_s
    };
    report.push(vec!["none".into(), secs(baseline), secs(SimTime::ZERO), "0".into()]);
    let mut deltas = Vec::new();
    for mapping in MappingType::ALL {
        let (_, s) = run_workload(&scenario, mapping, &wl, &SiteConfig::default())?;
        let delta = s.makespan_s.saturating_sub(baseline);
        let mapped = s.outcome.as_ref().map_or(0, |o| o.mapped.len());
        report.push(vec![mapping.to_string(), secs(s.makespan_s), secs(delta), mapped.to_string()]);
        deltas.push(format!("{mapping} +{}", secs(delta)));
    }
    report.summary = format!("baseline makespan {} s; {}", secs(baseline), deltas.join(", "));
    Ok(report)
}

/// One m1.small VM on the FreeSurfer image, as in the original ReconAll run.
pub fn reconall_pool(mips: MipsModel) -> Scenario {
    Scenario { cloud: CloudConfig { mips, flavors: openstack_flavors(), ..CloudConfig::default() }, ..Scenario::default() }
        .with_vm("freesurf", "m1.small", "freesurf-condor")
}

/// Wordcount captured, replayed on re-provisioned VMs and compared; then a
/// 2-core compute-mode ReconAll replayed on the next flavor up.
pub fn replay_roundtrip() -> Result<ExperimentReport, ExperimentError> {
    let mut report = ExperimentReport::new(
        "replay-roundtrip",
        &["run", "wf_id", "makespan_s", "structure", "infrastructure", "outputs", "verdict"],
    );
    let mips = MipsModel::fixed(12_500);
    let cases = [
        ("wordcount", wordcount_pool(mips.clone()), wordcount(WorkMode::Sleep), None),
        ("reconall-upgraded", reconall_pool(mips), reconall(WorkMode::Compute, 2), Some((2, 3))),
    ];
    let mut summary = Vec::new();
    for (label, scenario, wl, substitution) in cases {
        let (mut tb, orig) = run_workload(&scenario, MappingType::Static, &wl, &SiteConfig::default())?;
        let mut opts = ReplayOptions::default();
        if let Some((from, to)) = substitution {
            opts.flavor_substitution.insert(from, to);
        }
        let rep = reproduce(&mut tb, orig.wf_id, &opts)?;
        let cmp = compare(tb.store(), orig.wf_id, rep.summary.wf_id)?;
        report.push(vec![format!("{label}-original"), orig.wf_id.to_string(), secs(orig.makespan_s), "-".into(), "-".into(), "-".into(), "-".into()]);
        report.push(vec![
            format!("{label}-replay"),
            rep.summary.wf_id.to_string(),
            secs(rep.summary.makespan_s),
            format!("{:?}", cmp.structure.status),
            format!("{:?}", cmp.infrastructure.status),
            format!("{:?}", cmp.outputs.status),
            format!("{:?}", cmp.verdict),
        ]);
        summary.push(format!(
            "{label}: {:?} ({} s -> {} s on {})",
            cmp.verdict,
            secs(orig.makespan_s),
            secs(rep.summary.makespan_s),
            rep.provisioned.join(", ")
        ));
    }
    report.summary = summary.join("; ");
    Ok(report)
}
