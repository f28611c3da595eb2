use std::collections::BTreeSet;

use super::*;
use crate::cloud::{ip, openstack_flavors, CloudConfig, MipsModel};
use crate::store::SourceFiles;
use crate::wms::{JobSpec, JobState, SubmitOptions, Wms, WmsConfig};

fn store_with_wf() -> (RecapStore, i64) {
    let store = RecapStore::open_in_memory().unwrap();
    let wf = store.register_source("wms-0001", &SourceFiles::new("dag", "site", "tc", "props")).unwrap();
    (store, wf)
}

fn uwe_cloud() -> Cloud {
    let mut cloud =
        Cloud::new(CloudConfig { flavors: openstack_flavors(), mips: MipsModel::fixed(12500), ..CloudConfig::default() }).unwrap();
    cloud.provision("m1.small", "condorvm-quantal-snapshot", "uwe-vm3").unwrap();
    cloud.provision("m1.small", "condorvm-quantal-snapshot", "uwe-vm4").unwrap();
    cloud
}

fn record(name: &str, host: Option<&str>, start: u64) -> JobRecord {
    JobRecord {
        job_id: 1,
        wms_wfid: "wms-0001".into(),
        name: name.into(),
        condor_id: 1,
        state: JobState::Succeeded,
        host_ip: host.map(ip),
        start_time: Some(SimTime::from_secs(start)),
        end_time: Some(SimTime::from_secs(start + 1)),
        stdout_log: String::new(),
        stderr_log: String::new(),
    }
}

#[test]
fn mapping_type_parses_case_insensitively() {
    assert_eq!("static".parse::<MappingType>().unwrap(), MappingType::Static);
    assert_eq!("SNoHi".parse::<MappingType>().unwrap(), MappingType::Snohi);
    assert!("greedy".parse::<MappingType>().is_err());
}

#[test]
fn static_matches_table_three() {
    let cloud = uwe_cloud();
    let jobs = [record("split", Some("10.0.0.2"), 0), record("merge", Some("10.0.0.3"), 5)];
    let out = static_map(132, &jobs, &cloud.list_vms());
    assert_eq!(out.mapped.len(), 2);
    for cap in &out.mapped {
        assert_eq!(cap.resource.provisionable(), (2, 2048, 20, 1, "269cfb39-7882-4067-bf20-b3350a4b1b05"));
    }
    let nodes: BTreeSet<_> = out.mapped.iter().map(|c| c.resource.nodename.as_str()).collect();
    assert_eq!(nodes, BTreeSet::from(["uwe-vm3", "uwe-vm4"]));
    assert!(static_map(132, &[], &cloud.list_vms()).is_empty());
}

#[test]
fn static_reports_why_jobs_are_unmapped() {
    let cloud = uwe_cloud();
    let jobs = [record("a", None, 0), record("b", Some("10.0.0.9"), 0)];
    let out = static_map(1, &jobs, &cloud.list_vms());
    assert_eq!(
        out.unmapped,
        vec![
            Unmapped { job_name: "a".into(), reason: UnmappedReason::NoHostInfo },
            Unmapped { job_name: "b".into(), reason: UnmappedReason::VmGone },
        ]
    );
}

#[test]
fn static_ignores_vm_created_after_job_start() {
    let mut cloud = uwe_cloud();
    let vm = cloud.list_vms().by_nodename("uwe-vm3").unwrap().clone();
    cloud.set_time(SimTime::from_secs(100)).unwrap();
    cloud.destroy(&vm.vm_id).unwrap();
    cloud.provision("m1.tiny", "condorvm-quantal-snapshot", "late").unwrap();
    let out = static_map(1, &[record("a", Some("10.0.0.2"), 10)], &cloud.list_vms());
    assert_eq!(out.unmapped[0].reason, UnmappedReason::VmGone);
}

#[test]
fn finalize_is_idempotent() {
    let (store, wf) = store_with_wf();
    let cloud = uwe_cloud();
    let jobs = [record("split", Some("10.0.0.2"), 0)];
    let first = static_finalize(&store, wf, &jobs, &cloud.list_vms()).unwrap();
    let second = static_finalize(&store, wf, &jobs, &cloud.list_vms()).unwrap();
    assert_eq!(first, second);
    assert_eq!(store.get_cap(wf).unwrap().len(), 1);
}

/// Condor stand-in with a scripted placement.
struct FakeCondor(Vec<(u64, &'static str, &'static str)>);

impl CondorQuery for FakeCondor {
    fn condor_lookup(&self, condor_id: u64) -> Result<crate::wms::CondorHost, crate::wms::WmsError> {
        self.0
            .iter()
            .find(|(id, _, _)| *id == condor_id)
            .map(|(_, addr, node)| crate::wms::CondorHost { state: JobState::Running, host_ip: ip(addr), hostname: node.to_string() })
            .ok_or(crate::wms::WmsError::NotRunning(condor_id))
    }
}

use crate::wms::CondorQuery;

#[test]
fn eager_follows_a_rescheduled_job() {
    let (store, wf) = store_with_wf();
    let cloud = uwe_cloud();
    let mut job = record("j", None, 0);
    job.state = JobState::Running;
    job.condor_id = 7;
    let vms = cloud.list_vms();
    let n = eager_monitor_tick(&store, wf, &[job.clone()], &FakeCondor(vec![(7, "10.0.0.2", "uwe-vm3")]), &vms, SimTime::ZERO).unwrap();
    assert_eq!(n, 1);
    let again = eager_monitor_tick(&store, wf, &[job.clone()], &FakeCondor(vec![(7, "10.0.0.2", "uwe-vm3")]), &vms, SimTime::ZERO).unwrap();
    assert_eq!(again, 0);
    eager_monitor_tick(&store, wf, &[job.clone()], &FakeCondor(vec![(7, "10.0.0.3", "uwe-vm4")]), &vms, SimTime::from_secs(5)).unwrap();
    assert_eq!(store.get_temp_mapping(wf, "j").unwrap().unwrap().cap.resource.nodename, "uwe-vm4");
    assert_eq!(store.temp_mapping_count(wf).unwrap(), 1);

    let none = eager_monitor_tick(&store, wf, &[record("k", None, 0)], &FakeCondor(vec![]), &vms, SimTime::ZERO).unwrap();
    assert_eq!(none, 0);

    let out = eager_finalize(&store, wf, &[record("j", None, 0), record("never", None, 0)], &VmSnapshot::default()).unwrap();
    assert_eq!(out.mapped[0].resource.nodename, "uwe-vm4");
    assert_eq!(out.unmapped, vec![Unmapped { job_name: "never".into(), reason: UnmappedReason::NoHostInfo }]);
    assert_eq!(store.temp_mapping_count(wf).unwrap(), 0);
}

#[test]
fn lazy_picks_nearest_observation_under_ip_reuse() {
    let (store, wf) = store_with_wf();
    let mut cloud = Cloud::new(CloudConfig { mips: MipsModel::fixed(1000), ..CloudConfig::default() }).unwrap();
    let a = cloud.provision("m1.small", "condorvm-quantal-snapshot", "a").unwrap();
    lazy_monitor_tick(&store, &cloud.list_vms(), SimTime::ZERO).unwrap();
    cloud.set_time(SimTime::from_secs(100)).unwrap();
    cloud.destroy(&a.vm_id).unwrap();
    cloud.set_time(SimTime::from_secs(200)).unwrap();
    let b = cloud.provision("m1.medium", "condorvm-quantal-snapshot", "b").unwrap();
    assert_eq!(a.ip, b.ip);
    assert_eq!(lazy_monitor_tick(&store, &cloud.list_vms(), SimTime::from_secs(200)).unwrap(), 1);
    assert_eq!(lazy_monitor_tick(&store, &cloud.list_vms(), SimTime::from_secs(205)).unwrap(), 0);

    let jobs = [record("early", Some("10.0.0.2"), 50), record("late", Some("10.0.0.2"), 250), record("blind", None, 0)];
    let out = lazy_finalize(&store, wf, &jobs).unwrap();
    let by_job: BTreeMap<_, _> = out.mapped.iter().map(|c| (c.job_name.as_str(), c.resource.nodename.as_str())).collect();
    assert_eq!(by_job, BTreeMap::from([("early", "a"), ("late", "b")]));
    assert_eq!(out.unmapped[0].reason, UnmappedReason::NoHostInfo);
}

#[test]
fn host_line_parsing() {
    assert_eq!(
        parse_host_line("RECAP_HOST ip=10.0.0.4 hostname=uwe-vm4\nrest").unwrap(),
        Some((ip("10.0.0.4"), "uwe-vm4".to_string()))
    );
    assert_eq!(parse_host_line("nothing here\n").unwrap(), None);
    assert!(parse_host_line("RECAP_HOST ip=10.0.0 hostname=x").is_err());
    assert!(parse_host_line("RECAP_HOST ip=10.0.0.4").is_err());
    assert!(parse_host_line("RECAP_HOST ip=10.0.0.4 hostname=x extra").is_err());
}

#[test]
fn snohi_maps_from_logs_and_clears_temp_rows() {
    let (store, wf) = store_with_wf();
    let cloud = uwe_cloud();
    let mut good = record("good", None, 0);
    good.stdout_log = "RECAP_HOST ip=10.0.0.3 hostname=uwe-vm4\nok\n".into();
    let mut bad = record("bad", None, 0);
    bad.stdout_log = "RECAP_HOST ip=garbage\n".into();
    let silent = record("silent", None, 0);
    let jobs = [good, bad, silent];
    let report = snohi_parse_logs(&store, wf, &jobs).unwrap();
    assert_eq!(report.parsed, 1);
    assert_eq!(report.malformed.len(), 1);
    let out = snohi_finalize(&store, wf, &jobs, &cloud.list_vms()).unwrap();
    assert_eq!(out.mapped_jobs(), vec!["good"]);
    assert_eq!(out.mapped[0].resource.nodename, "uwe-vm4");
    assert!(out.unmapped.iter().all(|u| u.reason == UnmappedReason::NoHostInfo));
    assert!(store.get_job_hosts(wf).unwrap().is_empty());
}

#[test]
fn aggregate_refuses_running_workflows() {
    let (store, wf) = store_with_wf();
    let vms = VmSnapshot::default();
    let pool = BTreeMap::new();
    let run = FinishedRun { state: WorkflowState::Running, jobs: &[], vms: &vms, pool: &pool, files: &[] };
    assert!(matches!(aggregate(&store, wf, MappingType::Static, &run), Err(MapError::WorkflowStillRunning(_))));
    assert!(matches!(aggregate(&store, 42, MappingType::Static, &run), Err(MapError::Store(StoreError::UnknownWorkflow(42)))));
}

#[test]
fn aggregate_persists_cpu_specs_and_files() {
    let (store, wf) = store_with_wf();
    let mut cloud = Cloud::new(CloudConfig {
        flavors: openstack_flavors(),
        mips: MipsModel::Sequence { specs: vec![crate::cloud::CpuSpec::new(15369, 1518351)] },
        ..CloudConfig::default()
    })
    .unwrap();
    cloud.provision("m1.small", "condorvm-quantal-snapshot", "vm1").unwrap();
    let dag = WorkflowDag::new(vec![JobSpec::fixed("a", 1.0).output("out", "a.txt")], vec![]).unwrap();
    let mut wms = Wms::new(WmsConfig::default());
    let site = SiteConfig::default();
    let id = wms.plan_and_submit(&mut cloud, &dag, &site, SubmitOptions::default()).unwrap();
    let res = wms.run_to_completion(&mut cloud, &id).unwrap();
    let vms = cloud.list_vms();
    let pool = wms.pool_mips(&cloud);
    let files = collect_job_files(&cloud, &dag, &site, &id, &BTreeMap::new());
    let run = FinishedRun { state: res.state, jobs: &res.job_records, vms: &vms, pool: &pool, files: &files };
    let out = aggregate(&store, wf, MappingType::Static, &run).unwrap();
    assert_eq!(out.mapped.len(), 1);
    assert_eq!(store.get_cpu_specs(wf).unwrap()[0].mips, 15369);
    let linked = store.get_job_files(wf).unwrap();
    assert_eq!(linked.len(), 1);
    assert_eq!(linked[0].file.keyname, format!("{id}/a.txt"));
}
