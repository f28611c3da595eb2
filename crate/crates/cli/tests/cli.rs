use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use recap_core::cloud::MipsModel;
use recap_core::experiments::{wordcount_pool, workload_files};
use recap_core::scenario::Scenario;
use recap_core::wms::{ProvisioningPolicy, SiteConfig, WmsConfig};
use recap_core::workloads::{wordcount, WorkMode};
use serde_json::Value;

const CONFIG: &str = "\
[cloud_settings]
service_name=Compute Service
#mapping types could be static,eager,lazy
MAPPING_TYPE=%MAPPING%
scenario=scenario.toml
[storage_settings]
swift_host=127.0.0.1
OS_REGION_NAME=UWE_Region
[wmsdb_settings]
dburl=sqlite://wms.db
[recapdb_settings]
dburl=sqlite://recap.db
[WMS_settings]
wms_monitor=PegasusMonitor
wms_parser=PegasusParser
[WrapperService]
endpoint=http://127.0.0.1:8000/service_wrapper/api/v1.0
service_user=recap
service_password=s3cret
[log_settings]
log_conf=warn
";

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(mapping: &str, scenario: &Scenario) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("recap.ini"), CONFIG.replace("%MAPPING%", mapping)).unwrap();
        let mut scenario = scenario.clone();
        for (obj, bytes) in wordcount(WorkMode::Sleep).inputs {
            scenario = scenario.with_object(&obj.container, &obj.keyname, std::str::from_utf8(&bytes).unwrap());
        }
        fs::write(dir.path().join("scenario.toml"), scenario.to_toml_string()).unwrap();
        let files = workload_files(&wordcount(WorkMode::Sleep).dag, &SiteConfig::default());
        for (name, text) in [("dag", &files.dag), ("site", &files.site), ("tc", &files.tc), ("props", &files.props)] {
            fs::write(dir.path().join(name), text.as_deref().unwrap()).unwrap();
        }
        Workspace { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn recap(&self, args: &[&str]) -> Output {
        let config = self.path("recap.ini");
        Command::new(env!("CARGO_BIN_EXE_recap"))
            .current_dir(self.dir.path())
            .arg("--config")
            .arg(&config)
            .args(args)
            .output()
            .unwrap()
    }

    fn submit(&self) -> Value {
        let out = self.recap(&["--json", "submit", "--dag", "dag", "--site", "site", "--tc", "tc", "--props", "props"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice(&out.stdout).unwrap()
    }
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn submit_reproduce_compare_round_trip() {
    let ws = Workspace::new("eager", &wordcount_pool(MipsModel::fixed(12_500)));
    let run = ws.submit();
    assert_eq!(run["wf_id"], 1);
    assert_eq!(run["state"], "DONE");
    assert_eq!(run["mapped"], 4);
    assert_eq!(run["makespan_s"], 300.0);

    let same = ws.recap(&["compare", "--wf-a", "1", "--wf-b", "1"]);
    assert_eq!(same.status.code(), Some(0), "{}", stdout(&same));
    assert!(stdout(&same).contains("Reproduced"));

    let out = ws.recap(&["reproduce", "--wf-id", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let replay: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(replay["wf_id"], 2);

    let cmp = ws.recap(&["--json", "compare", "--wf-a", "1", "--wf-b", "2"]);
    assert_eq!(cmp.status.code(), Some(0), "{}", stdout(&cmp));
    let report: Value = serde_json::from_slice(&cmp.stdout).unwrap();
    assert_eq!(report["verdict"], "REPRODUCED");

    let status = ws.recap(&["--json", "status"]);
    let rows: Value = serde_json::from_slice(&status.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert!(rows.as_array().unwrap().iter().all(|r| r["mapped"] == 4 && r["jobs"] == 4));
}

#[test]
fn flavor_substitution_is_not_a_reproduction() {
    let ws = Workspace::new("static", &wordcount_pool(MipsModel::fixed(12_500)));
    ws.submit();
    let out = ws.recap(&["reproduce", "--wf-id", "1", "--flavor-sub", "2=3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cmp = ws.recap(&["compare", "--wf-a", "1", "--wf-b", "2"]);
    assert_eq!(cmp.status.code(), Some(1));
    assert!(stdout(&cmp).contains("infrastructure: Different"), "{}", stdout(&cmp));
}

#[test]
fn unmapped_workflow_is_refused_for_replay() {
    let dynamic = Scenario {
        wms: WmsConfig::dynamic(ProvisioningPolicy::Fixed { flavor: "m1.small".into(), image: "wf.peg-repeat".into() }),
        ..Scenario::default()
    };
    let ws = Workspace::new("static", &dynamic);
    let run = ws.submit();
    assert_eq!(run["mapped"], 0);
    let out = ws.recap(&["reproduce", "--wf-id", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("IncompleteProvenance"));
    assert!(stdout(&out).is_empty());
}

#[test]
fn bad_configs_are_rejected() {
    let ws = Workspace::new("psychic", &Scenario::default());
    let out = ws.recap(&["status"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("psychic"));

    let out = Command::new(env!("CARGO_BIN_EXE_recap")).arg("status").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn ram_sweep_csv_shows_the_failure_onset() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("ram.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_recap"))
        .args(["experiment", "ram-sweep", "--out"])
        .arg(&csv_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&csv_path);
    let tiny: Vec<_> = rows.iter().filter(|r| r["flavor"] == "m1.tiny").collect();
    assert!(!tiny.is_empty());
    for r in tiny {
        let ram: u32 = r["ram_req_mb"].parse().unwrap();
        let failed = r["failures"] != "0";
        assert_eq!(failed, ram > 448, "ram {ram}");
    }
}

fn read_csv(path: &Path) -> Vec<std::collections::HashMap<String, String>> {
    csv::Reader::from_path(path).unwrap().deserialize().map(Result::unwrap).collect()
}
