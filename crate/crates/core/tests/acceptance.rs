//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines are always printed; exits nonzero on any FAIL.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use recap_core::cloud::{openstack_flavors, CloudConfig, MipsModel};
use recap_core::compare::{compare, compare_infrastructure, compare_outputs, Status};
use recap_core::experiments::{ram_sweep, reconall_pool, run_workload, wordcount_pool, workload_files};
use recap_core::mappers::MappingType;
use recap_core::replay::{reproduce, ReplayOptions};
use recap_core::scenario::Scenario;
use recap_core::store::{CapRecord, ResourceConfig};
use recap_core::testbed::Testbed;
use recap_core::wms::{HostProfile, JobSpec, ProvisioningPolicy, SiteConfig, WmsConfig, Work, WorkflowDag, WorkflowState};
use recap_core::workloads::{random_dag, reconall, wordcount, WorkMode, Workload, WORDCOUNT_CONTAINER, WORDCOUNT_INPUT};
use recap_core::SimTime;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    }};
}

const WALL_BUDGET: Duration = Duration::from_secs(1);
const IMAGE_ID: &str = "269cfb39-7882-4067-bf20-b3350a4b1b05";
const FLAVOR_2: (i64, u32, u32, u32) = (2, 2048, 20, 1);
const FLAVOR_3: (i64, u32, u32, u32) = (3, 4096, 40, 2);

fn fixed_mips() -> MipsModel {
    MipsModel::fixed(12_500)
}

fn resource_tuple(r: &ResourceConfig) -> (i64, u32, u32, u32) {
    (r.flavor_id, r.min_ram_mb, r.min_hd_gb, r.min_cpu)
}

/// Longest path through the DAG where each job costs `cost(job)` microseconds.
fn critical_path(dag: &WorkflowDag, cost: impl Fn(&JobSpec) -> u64) -> u64 {
    let mut finish: BTreeMap<&str, u64> = BTreeMap::new();
    let mut remaining: Vec<&JobSpec> = dag.jobs().iter().collect();
    while !remaining.is_empty() {
        remaining.retain(|job| {
            let parents: Vec<&str> =
                dag.edges().iter().filter(|(_, c)| c == &job.name).map(|(p, _)| p.as_str()).collect();
            if parents.iter().all(|p| finish.contains_key(p)) {
                let start = parents.iter().map(|p| finish[p]).max().unwrap_or(0);
                finish.insert(&job.name, start + cost(job));
                false
            } else {
                true
            }
        });
    }
    finish.values().copied().max().unwrap_or(0)
}

fn sleep_micros(job: &JobSpec) -> u64 {
    match job.work {
        Work::Fixed { duration } => duration.as_micros(),
        Work::Compute { .. } => unreachable!("sleep-mode workload"),
    }
}

fn c1_replay_round_trip() -> Check {
    let t0 = Instant::now();
    let wl = wordcount(WorkMode::Sleep);
    let (mut tb, orig) = run_workload(&wordcount_pool(fixed_mips()), MappingType::Static, &wl, &SiteConfig::default())
        .map_err(|e| e.to_string())?;
    let rep = reproduce(&mut tb, orig.wf_id, &ReplayOptions::default()).map_err(|e| e.to_string())?;
    let infra = compare_infrastructure(tb.store(), orig.wf_id, rep.summary.wf_id).map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();

    let a = tb.store().get_cap(orig.wf_id).map_err(|e| e.to_string())?;
    let b = tb.store().get_cap(rep.summary.wf_id).map_err(|e| e.to_string())?;
    ensure!(a.len() == 4 && b.len() == 4, "expected 4 CAP rows per run, got {} and {}", a.len(), b.len());
    for c in a.iter().chain(&b) {
        ensure!(resource_tuple(&c.resource) == FLAVOR_2, "{} mapped to {:?}", c.job_name, resource_tuple(&c.resource));
        ensure!(c.resource.image_id == IMAGE_ID, "{} ran on image {}", c.job_name, c.resource.image_id);
    }
    let orig_nodes: BTreeMap<&str, &str> = a.iter().map(|c| (c.job_name.as_str(), c.resource.nodename.as_str())).collect();
    for c in &b {
        let want = format!("{}-rep", orig_nodes[c.job_name.as_str()]);
        ensure!(c.resource.nodename == want, "{} replayed on {}, expected {}", c.job_name, c.resource.nodename, want);
    }
    ensure!(infra.status == Status::Equal, "infrastructure {:?}: {:?}", infra.status, infra.diffs);
    ensure!(elapsed < WALL_BUDGET, "took {elapsed:?}");
    Ok(format!("infrastructure EQUAL on {} in {:?}", rep.provisioned.join(", "), elapsed))
}

fn c2_resource_change_detected() -> Check {
    let t0 = Instant::now();
    let wl = reconall(WorkMode::Compute, 2);
    let (mut tb, orig) = run_workload(&reconall_pool(fixed_mips()), MappingType::Static, &wl, &SiteConfig::default())
        .map_err(|e| e.to_string())?;
    let opts = ReplayOptions { flavor_substitution: [(FLAVOR_2.0, FLAVOR_3.0)].into(), ..ReplayOptions::default() };
    let rep = reproduce(&mut tb, orig.wf_id, &opts).map_err(|e| e.to_string())?;
    let infra = compare_infrastructure(tb.store(), orig.wf_id, rep.summary.wf_id).map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();

    let replayed = tb.store().get_cap(rep.summary.wf_id).map_err(|e| e.to_string())?;
    ensure!(replayed.len() == 1 && resource_tuple(&replayed[0].resource) == FLAVOR_3, "replay captured {replayed:?}");
    ensure!(infra.status == Status::Different, "infrastructure {:?}", infra.status);
    let fields: BTreeSet<&str> = infra.diffs.iter().map(|d| d.field.as_str()).collect();
    ensure!(
        fields == BTreeSet::from(["flavor_id", "min_ram_mb", "min_hd_gb", "min_cpu"]),
        "differing fields {fields:?}"
    );
    // recon-all length is 32599 s at the reference rate; flavor 2 has 1 core, flavor 3 has 2.
    let single = 32_599 * 1_000_000u64;
    ensure!(orig.makespan_s.as_micros() == single, "original makespan {}", orig.makespan_s);
    ensure!(rep.summary.makespan_s.as_micros() == single / 2, "replay makespan {}", rep.summary.makespan_s);
    ensure!(rep.summary.makespan_s < orig.makespan_s, "replay not faster");
    ensure!(elapsed < WALL_BUDGET, "took {elapsed:?}");
    Ok(format!("infrastructure DIFFERENT, makespan {} s -> {} s in {:?}", orig.makespan_s, rep.summary.makespan_s, elapsed))
}

fn c3_ram_failure_onset() -> Check {
    let report = ram_sweep().map_err(|e| e.to_string())?;
    let overhead = 64;
    let flavor_ram = BTreeMap::from([("m1.tiny", 512), ("m1.small", 1024), ("m1.medium", 2048)]);
    let mut seen = 0;
    for row in &report.rows {
        let flavor = row[0].as_str();
        let ram: u32 = row[2].parse().map_err(|_| format!("bad row {row:?}"))?;
        let runs: u32 = row[3].parse().map_err(|_| format!("bad row {row:?}"))?;
        let failures: u32 = row[4].parse().map_err(|_| format!("bad row {row:?}"))?;
        ensure!(runs == 5, "{flavor}/{ram}: {runs} runs");
        let expected = if ram > flavor_ram[flavor] - overhead { runs } else { 0 };
        ensure!(failures == expected, "{flavor} at {ram} MB: {failures} failures, expected {expected}");
        if flavor != "m1.tiny" {
            ensure!(failures == 0, "{flavor} failed at {ram} MB");
        }
        seen += 1;
    }
    ensure!(seen == 24, "{seen} sweep cells");
    Ok(report.summary)
}

fn c4_mips_scaling() -> Check {
    let wl = wordcount(WorkMode::Compute);
    let mut spans = Vec::new();
    for (num, den) in [(1u64, 2u64), (1, 1), (2, 1), (4, 1)] {
        let mips = (12_500 * num / den) as u32;
        let (_, s) = run_workload(&wordcount_pool(MipsModel::fixed(mips)), MappingType::Static, &wl, &SiteConfig::default())
            .map_err(|e| e.to_string())?;
        // Critical path split -> analysis1 -> merge is 120 + 120 + 60 s at 12500 MIPS.
        let expected = 300_000_000 * den / num;
        ensure!(s.makespan_s.as_micros() == expected, "k={num}/{den}: makespan {} µs, expected {expected}", s.makespan_s.as_micros());
        spans.push(s.makespan_s);
    }
    let mut means = Vec::new();
    for (center, spread) in [(12_500, 1_500), (10_500, 4_500)] {
        let mut total = 0.0;
        for seed in 0..20 {
            let (_, s) = run_workload(
                &wordcount_pool(MipsModel::uniform(center, spread, seed)),
                MappingType::Static,
                &wl,
                &SiteConfig::default(),
            )
            .map_err(|e| e.to_string())?;
            total += s.makespan_s.as_secs_f64();
        }
        means.push(total / 20.0);
    }
    ensure!(means[0] < means[1], "mean makespan 12500±1500 = {:.3} s, 10500±4500 = {:.3} s", means[0], means[1]);
    Ok(format!(
        "makespans {:?} s for k = 0.5, 1, 2, 4; population means {:.3} s < {:.3} s",
        spans.iter().map(|s| s.as_secs_f64()).collect::<Vec<_>>(),
        means[0],
        means[1]
    ))
}

fn c5_parallelism() -> Check {
    let length_mi = 1_000.0 * 12_500.0;
    let single = 1_000_000_000u64;
    let mut out = Vec::new();
    for (flavor, expected) in [("m1.large", single / 4), ("m1.small", single)] {
        let mut durations = Vec::new();
        for p in [1, 4] {
            let scenario = Scenario { cloud: CloudConfig { mips: fixed_mips(), ..CloudConfig::default() }, ..Scenario::default() }
                .with_vm("fib", flavor, "condorvm-quantal-snapshot");
            let wl = Workload {
                name: "fib",
                dag: WorkflowDag::new(vec![JobSpec::compute("fib", length_mi).parallelism(p)], vec![]).map_err(|e| e.to_string())?,
                inputs: Vec::new(),
            };
            let (_, s) = run_workload(&scenario, MappingType::Static, &wl, &SiteConfig::default()).map_err(|e| e.to_string())?;
            durations.push(s.makespan_s.as_micros());
        }
        ensure!(durations[0] == single, "{flavor} single-core {} µs", durations[0]);
        ensure!(durations[1] == expected, "{flavor} 4-way {} µs, expected {expected}", durations[1]);
        out.push(format!("{flavor} {} s -> {} s", durations[0] as f64 / 1e6, durations[1] as f64 / 1e6));
    }
    Ok(out.join(", "))
}

fn c6_mapping_overhead() -> Check {
    let wl = wordcount(WorkMode::Sleep);
    let scenario = wordcount_pool(fixed_mips());
    let delay = WmsConfig::default().instrument_delay_s.as_micros();
    ensure!(delay == 41_800, "instrumentation delay {delay} µs");

    let baseline = {
        let (mut cloud, mut wms) = scenario.build().map_err(|e| e.to_string())?;
        wl.install_inputs(&mut cloud);
        let id = wms.plan_and_submit(&mut cloud, &wl.dag, &SiteConfig::default(), Default::default()).map_err(|e| e.to_string())?;
        wms.run_to_completion(&mut cloud, &id).map_err(|e| e.to_string())?;
        wms.run_result(&id).map_err(|e| e.to_string())?.makespan_s
    };
    let plain = critical_path(&wl.dag, sleep_micros);
    let instrumented = critical_path(&wl.dag, |j| sleep_micros(j) + delay);
    ensure!(baseline.as_micros() == plain, "no-mapping makespan {} µs, expected {plain}", baseline.as_micros());
    ensure!(instrumented - plain == 125_400, "critical path overhead {} µs", instrumented - plain);

    let mut parts = vec![format!("none {baseline} s")];
    for kind in MappingType::ALL {
        let (_, s) = run_workload(&scenario, kind, &wl, &SiteConfig::default()).map_err(|e| e.to_string())?;
        let expected = if kind == MappingType::Snohi { instrumented } else { plain };
        ensure!(s.makespan_s.as_micros() == expected, "{kind}: makespan {} µs, expected {expected}", s.makespan_s.as_micros());
        parts.push(format!("{kind} {} s", s.makespan_s));
    }
    Ok(parts.join(", "))
}

fn normalized(mut caps: Vec<CapRecord>) -> Vec<CapRecord> {
    for c in &mut caps {
        c.wf_id = 0;
    }
    caps.sort_by(|a, b| a.job_name.cmp(&b.job_name));
    caps
}

fn c7_strategy_equivalence() -> Check {
    let cases = 100u64;
    let mut jobs_total = 0;
    for seed in 0..cases {
        let dag = random_dag(seed, 35, WorkMode::Compute);
        let vms = 1 + (seed % 8) as usize;
        let mut scenario = Scenario { cloud: CloudConfig { mips: MipsModel::uniform(12_500, 1_500, seed), ..CloudConfig::default() }, ..Scenario::default() };
        for i in 0..vms {
            let flavor = ["m1.tiny", "m1.small", "m1.medium", "m1.large"][(seed as usize + i) % 4];
            scenario = scenario.with_vm(&format!("node{i}"), flavor, "condorvm-quantal-snapshot");
        }
        let wl = Workload { name: "random", dag: dag.clone(), inputs: Vec::new() };
        let mut reference: Option<Vec<CapRecord>> = None;
        for kind in MappingType::ALL {
            let (tb, s) = run_workload(&scenario, kind, &wl, &SiteConfig::default()).map_err(|e| e.to_string())?;
            let caps = normalized(tb.store().get_cap(s.wf_id).map_err(|e| e.to_string())?);
            ensure!(caps.len() == dag.len(), "seed {seed} {kind}: {} of {} jobs mapped", caps.len(), dag.len());
            match &reference {
                None => reference = Some(caps),
                Some(r) => ensure!(*r == caps, "seed {seed}: {kind} differs from static"),
            }
        }
        jobs_total += dag.len();
    }
    Ok(format!("{cases} seeded DAGs ({jobs_total} jobs, up to 35 jobs / 8 VMs): identical CAP multisets"))
}

fn c8_dynamic_differentiation() -> Check {
    let mut scenario = Scenario {
        wms: WmsConfig::dynamic(ProvisioningPolicy::Fixed { flavor: "m1.small".into(), image: "wf.peg-repeat".into() }),
        ..Scenario::default()
    };
    let flush = SimTime::from_secs(50);
    let teardown = SimTime::from_secs(20);
    scenario.wms.record_flush_interval_s = flush;
    scenario.wms.teardown_delay_s = teardown;
    let wl = wordcount(WorkMode::Sleep);
    let all: BTreeSet<String> = wl.dag.job_names();
    let mapped = |kind, profile| -> Result<(BTreeSet<String>, BTreeSet<String>), String> {
        let (tb, s) = run_workload(&scenario, kind, &wl, &SiteConfig::with_profile(profile)).map_err(|e| e.to_string())?;
        let names = tb.store().get_cap(s.wf_id).map_err(|e| e.to_string())?.into_iter().map(|c| c.job_name).collect();
        let recs = tb.job_records(&s.wms_wfid).map_err(|e| e.to_string())?;
        // A volatile record keeps its host only if written before the VM is torn down.
        let survivors = recs
            .iter()
            .filter(|r| {
                let end = r.end_time.expect("finished");
                end.ceil_to(flush) <= end + teardown
            })
            .map(|r| r.name.clone())
            .collect::<BTreeSet<_>>();
        let with_host: BTreeSet<String> = recs.iter().filter(|r| r.host_ip.is_some()).map(|r| r.name.clone()).collect();
        if profile == HostProfile::Volatile && with_host != survivors {
            return Err(format!("volatile hosts {with_host:?}, expected {survivors:?}"));
        }
        Ok((names, with_host))
    };
    let (static_full, _) = mapped(MappingType::Static, HostProfile::Full)?;
    ensure!(static_full.is_empty(), "STATIC mapped {static_full:?}");
    let (eager, _) = mapped(MappingType::Eager, HostProfile::Full)?;
    ensure!(eager == all, "EAGER mapped {eager:?}");
    let (lazy, hosts) = mapped(MappingType::Lazy, HostProfile::Volatile)?;
    ensure!(lazy == hosts, "LAZY mapped {lazy:?}, jobs with host_ip {hosts:?}");
    ensure!(!hosts.is_empty() && hosts != all, "volatile trace not mixed: {hosts:?}");
    let (lazy_none, _) = mapped(MappingType::Lazy, HostProfile::NoHostInfo)?;
    ensure!(lazy_none.is_empty(), "LAZY without host info mapped {lazy_none:?}");
    let (snohi, _) = mapped(MappingType::Snohi, HostProfile::NoHostInfo)?;
    ensure!(snohi == all, "SNOHI mapped {snohi:?}");
    Ok(format!("static 0, eager {}, lazy {} of {} (volatile) / 0 (no host info), snohi {}", eager.len(), lazy.len(), all.len(), snohi.len()))
}

fn c9_output_reproducibility() -> Check {
    let wl = wordcount(WorkMode::Sleep);
    let (mut tb, orig) = run_workload(&wordcount_pool(fixed_mips()), MappingType::Eager, &wl, &SiteConfig::default())
        .map_err(|e| e.to_string())?;
    let same = reproduce(&mut tb, orig.wf_id, &ReplayOptions::default()).map_err(|e| e.to_string())?;
    let equal = compare_outputs(tb.store(), orig.wf_id, same.summary.wf_id).map_err(|e| e.to_string())?;
    ensure!(equal.status == Status::Equal, "faithful replay outputs {:?}: {:?}", equal.status, equal.diffs);

    let (mut bytes, _) = tb.cloud().get_object(WORDCOUNT_CONTAINER, WORDCOUNT_INPUT).map_err(|e| e.to_string())?;
    bytes[0] ^= 0x01;
    tb.cloud_mut().put_object(WORDCOUNT_CONTAINER, WORDCOUNT_INPUT, bytes, Default::default());
    let flipped = reproduce(&mut tb, orig.wf_id, &ReplayOptions::default()).map_err(|e| e.to_string())?;
    let diff = compare_outputs(tb.store(), orig.wf_id, flipped.summary.wf_id).map_err(|e| e.to_string())?;
    ensure!(diff.status == Status::Different, "flipped-input outputs {:?}", diff.status);
    let report = compare(tb.store(), orig.wf_id, flipped.summary.wf_id).map_err(|e| e.to_string())?;
    ensure!(report.infrastructure.status == Status::Equal, "infrastructure changed");
    Ok(format!("faithful replay EQUAL; one flipped input byte changes {} output file(s)", diff.diffs.len()))
}

fn c10_eager_cleanliness() -> Check {
    let wl = wordcount(WorkMode::Sleep);
    let mut tb = Testbed::in_memory(&wordcount_pool(fixed_mips()), MappingType::Eager).map_err(|e| e.to_string())?;
    wl.install_inputs(tb.cloud_mut());
    let sub = tb.submit(workload_files(&wl.dag, &SiteConfig::default()), false).map_err(|e| e.to_string())?;
    let poll = tb.poll_interval().as_micros();
    let mut checked = Vec::new();
    for t in [1u64, 60, 119, 121, 185, 239, 241, 299] {
        let now = SimTime::from_secs(t);
        tb.advance_to(now).map_err(|e| e.to_string())?;
        let recs = tb.job_records(&sub.wms_wfid).map_err(|e| e.to_string())?;
        // Seen by some poll p <= now with start <= p < end.
        let observed = recs
            .iter()
            .filter(|r| {
                let Some(start) = r.start_time else { return false };
                let end = r.end_time.map_or(u64::MAX, SimTime::as_micros);
                let first_poll = start.as_micros().div_ceil(poll) * poll;
                first_poll <= now.as_micros() && first_poll < end
            })
            .count();
        let rows = tb.store().temp_mapping_count(sub.wf_id).map_err(|e| e.to_string())?;
        ensure!(rows == observed, "t={t}s: {rows} temp rows, {observed} observed jobs");
        checked.push(format!("{t}s:{rows}"));
    }
    let s = tb.run_until_done(&sub.wms_wfid).map_err(|e| e.to_string())?;
    ensure!(s.state == WorkflowState::Done, "workflow {:?}", s.state);
    let left = tb.store().temp_mapping_count(sub.wf_id).map_err(|e| e.to_string())?;
    ensure!(left == 0, "{left} temp rows after finalize");
    ensure!(tb.store().get_cap(sub.wf_id).map_err(|e| e.to_string())?.len() == 4, "not all jobs mapped");
    Ok(format!("mid-run rows {}; 0 after finalize", checked.join(" ")))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("replay round trip", c1_replay_round_trip),
        ("degraded/upgraded resource detection", c2_resource_change_detected),
        ("RAM failure onset", c3_ram_failure_onset),
        ("MIPS scaling", c4_mips_scaling),
        ("parallelism", c5_parallelism),
        ("mapping-overhead neutrality", c6_mapping_overhead),
        ("strategy equivalence", c7_strategy_equivalence),
        ("dynamic-environment differentiation", c8_dynamic_differentiation),
        ("output reproducibility", c9_output_reproducibility),
        ("eager cleanliness", c10_eager_cleanliness),
    ];
    assert_eq!(openstack_flavors()[1].triple(), (FLAVOR_2.3, FLAVOR_2.1, FLAVOR_2.2));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
