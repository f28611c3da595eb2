use super::*;
use crate::cloud::{Cloud, CloudConfig, MipsModel};

fn cloud_with(vms: &[(&str, &str)], mips: u32) -> Cloud {
    let mut cloud = Cloud::new(CloudConfig { mips: MipsModel::fixed(mips), ..CloudConfig::default() }).unwrap();
    for (node, flavor) in vms {
        cloud.provision(flavor, "condorvm-quantal-snapshot", node).unwrap();
    }
    cloud
}

fn chain() -> WorkflowDag {
    WorkflowDag::new(
        vec![JobSpec::fixed("a", 10.0), JobSpec::fixed("b", 5.0), JobSpec::fixed("c", 7.0)],
        vec![("a".into(), "b".into()), ("a".into(), "c".into())],
    )
    .unwrap()
}

#[test]
fn ram_predicate_uses_os_overhead() {
    assert!(ram_fits(448, 512, 64));
    assert!(!ram_fits(449, 512, 64));
    assert!(ram_fits(0, 32, 64));
    assert!(!ram_fits(1, 32, 64));
}

#[test]
fn fan_out_runs_children_in_parallel() {
    let mut cloud = cloud_with(&[("vm1", "m1.small"), ("vm2", "m1.small")], 1000);
    let mut wms = Wms::new(WmsConfig::default());
    let id = wms.plan_and_submit(&mut cloud, &chain(), &SiteConfig::default(), SubmitOptions::default()).unwrap();
    let res = wms.run_to_completion(&mut cloud, &id).unwrap();
    assert_eq!(res.state, WorkflowState::Done);
    assert_eq!(res.makespan_s, SimTime::from_secs(17));
    let hosts: BTreeSet<_> = res.job_records.iter().filter(|r| r.name != "a").map(|r| r.host_ip).collect();
    assert_eq!(hosts.len(), 2);
}

#[test]
fn compute_duration_scales_with_mips_and_cores() {
    let mut cloud = cloud_with(&[("vm1", "m1.large")], 2000);
    let vm = cloud.list_vms().by_nodename("vm1").unwrap().clone();
    let job = JobSpec::compute("k", 4000.0).parallelism(8);
    assert_eq!(job_duration(&job, &vm), SimTime::from_micros(500_000));
    let mut wms = Wms::new(WmsConfig::default());
    let rec = wms.execute_job(&mut cloud, &job, &vm.vm_id).unwrap();
    assert_eq!(rec.state, JobState::Succeeded);
    assert_eq!(rec.end_time.unwrap() - rec.start_time.unwrap(), SimTime::from_micros(500_000));
}

#[test]
fn oversized_job_retries_then_fails() {
    let mut cloud = cloud_with(&[("vm1", "m1.tiny"), ("vm2", "m1.tiny")], 1000);
    let mut wms = Wms::new(WmsConfig::default());
    let dag = WorkflowDag::new(vec![JobSpec::fixed("big", 1.0).ram(1000)], vec![]).unwrap();
    let id = wms.plan_and_submit(&mut cloud, &dag, &SiteConfig::default(), SubmitOptions::default()).unwrap();
    let res = wms.run_to_completion(&mut cloud, &id).unwrap();
    assert_eq!(res.state, WorkflowState::Failed);
    assert!(res.job_records[0].stderr_log.contains("out of memory"));
}

#[test]
fn instrumented_jobs_log_host_and_take_longer() {
    let mut cloud = cloud_with(&[("vm1", "m1.small")], 1000);
    let mut wms = Wms::new(WmsConfig::default());
    let dag = WorkflowDag::new(vec![JobSpec::fixed("a", 1.0)], vec![]).unwrap();
    let opts = SubmitOptions { instrumented: true, ..Default::default() };
    let id = wms.plan_and_submit(&mut cloud, &dag, &SiteConfig::default(), opts).unwrap();
    let res = wms.run_to_completion(&mut cloud, &id).unwrap();
    let rec = &res.job_records[0];
    assert!(rec.stdout_log.starts_with("RECAP_HOST ip=10.0.0.2 hostname=vm1\n"));
    assert_eq!(res.makespan_s, SimTime::from_micros(1_041_800));
}

#[test]
fn no_host_profile_hides_ip() {
    let mut cloud = cloud_with(&[("vm1", "m1.small")], 1000);
    let mut wms = Wms::new(WmsConfig::default());
    let id = wms
        .plan_and_submit(&mut cloud, &chain(), &SiteConfig::with_profile(HostProfile::NoHostInfo), SubmitOptions::default())
        .unwrap();
    let res = wms.run_to_completion(&mut cloud, &id).unwrap();
    assert!(res.job_records.iter().all(|r| r.host_ip.is_none()));
}

#[test]
fn condor_lookup_only_while_running() {
    let mut cloud = cloud_with(&[("vm1", "m1.small")], 1000);
    let mut wms = Wms::new(WmsConfig::default());
    let id = wms.plan_and_submit(&mut cloud, &chain(), &SiteConfig::default(), SubmitOptions::default()).unwrap();
    let recs = wms.get_job_records(&id).unwrap();
    let host = wms.condor_lookup(recs[0].condor_id).unwrap();
    assert_eq!(host.hostname, "vm1");
    assert!(matches!(wms.condor_lookup(recs[1].condor_id), Err(WmsError::NotRunning(_))));
    wms.run_to_completion(&mut cloud, &id).unwrap();
    assert!(wms.condor_lookup(recs[0].condor_id).is_err());
}

#[test]
fn dynamic_lifecycle_tears_down_vms() {
    let mut cloud = cloud_with(&[], 1000);
    let mut cfg = WmsConfig::dynamic(ProvisioningPolicy::Fixed { flavor: "m1.small".into(), image: "condorvm-quantal-snapshot".into() });
    cfg.teardown_delay_s = SimTime::from_secs(2);
    let mut wms = Wms::new(cfg);
    let id = wms.plan_and_submit(&mut cloud, &chain(), &SiteConfig::default(), SubmitOptions::default()).unwrap();
    let res = wms.run_to_completion(&mut cloud, &id).unwrap();
    assert_eq!(res.state, WorkflowState::Done);
    assert!(cloud.list_vms().is_empty());
    let ips: Vec<_> = res.job_records.iter().map(|r| r.host_ip.unwrap()).collect();
    assert_eq!(ips.len(), 3);
}

#[test]
fn static_pool_is_required() {
    let mut cloud = cloud_with(&[], 1000);
    let mut wms = Wms::new(WmsConfig::default());
    let err = wms.plan_and_submit(&mut cloud, &chain(), &SiteConfig::default(), SubmitOptions::default()).unwrap_err();
    assert_eq!(err, WmsError::NoResources);
}

#[test]
fn outputs_land_under_workflow_prefix() {
    let mut cloud = cloud_with(&[("vm1", "m1.small")], 1000);
    cloud.put_object("in", "x.txt", b"hello".to_vec(), Default::default());
    let dag = WorkflowDag::new(
        vec![
            JobSpec::fixed("a", 1.0).input("in", "x.txt").output("out", "a.dat"),
            JobSpec::fixed("b", 1.0).input("out", "a.dat").output("out", "b.dat"),
        ],
        vec![("a".into(), "b".into())],
    )
    .unwrap();
    let mut wms = Wms::new(WmsConfig::default());
    let id = wms.plan_and_submit(&mut cloud, &dag, &SiteConfig::default(), SubmitOptions::default()).unwrap();
    assert_eq!(wms.run_to_completion(&mut cloud, &id).unwrap().state, WorkflowState::Done);
    let keys: Vec<_> = cloud.list_objects("out", &id).unwrap().into_iter().map(|r| r.keyname).collect();
    assert_eq!(keys, vec![format!("{id}/a.dat"), format!("{id}/b.dat")]);
}
