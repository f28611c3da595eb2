use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::cloud::{CloudFileRecord, VirtualMachine};
use crate::time::SimTime;

/// The user-submitted files a workflow run was planned from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowSource {
    pub wf_id: i64,
    pub wms_wfid: String,
    pub wf_dag: String,
    pub wf_site: String,
    pub wf_tc: String,
    pub wf_props: String,
}

/// Submitted files before the store has assigned an id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SourceFiles {
    pub dag: Option<String>,
    pub site: Option<String>,
    pub tc: Option<String>,
    pub props: Option<String>,
}

impl SourceFiles {
    pub fn new(dag: impl Into<String>, site: impl Into<String>, tc: impl Into<String>, props: impl Into<String>) -> Self {
        SourceFiles { dag: Some(dag.into()), site: Some(site.into()), tc: Some(tc.into()), props: Some(props.into()) }
    }
}

/// Configuration of the Cloud resource a job ran on.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ResourceConfig {
    pub nodename: String,
    pub flavor_id: i64,
    pub flavor_name: String,
    pub min_ram_mb: u32,
    pub min_hd_gb: u32,
    pub min_cpu: u32,
    pub image_name: String,
    pub image_id: String,
    /// Canonical JSON object.
    pub extra: String,
}

impl ResourceConfig {
    pub fn from_vm(vm: &VirtualMachine) -> Self {
        let mut extra = vm.extra.clone();
        extra.insert("vm_id".into(), vm.vm_id.clone().into());
        extra.insert("ip".into(), vm.ip.to_string().into());
        ResourceConfig {
            nodename: vm.nodename.clone(),
            flavor_id: vm.flavor.flavor_id,
            flavor_name: vm.flavor.name.clone(),
            min_ram_mb: vm.flavor.ram_mb,
            min_hd_gb: vm.flavor.disk_gb,
            min_cpu: vm.flavor.vcpus,
            image_name: vm.image.name.clone(),
            image_id: vm.image.image_id.clone(),
            extra: crate::cloud::canonical_json(&extra),
        }
    }

    /// The fields a user can actually request from the provider.
    pub fn provisionable(&self) -> (i64, u32, u32, u32, &str) {
        (self.flavor_id, self.min_ram_mb, self.min_hd_gb, self.min_cpu, &self.image_id)
    }
}

/// One row of Cloud-aware provenance: a job and the resource it ran on.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CapRecord {
    pub wf_id: i64,
    pub job_name: String,
    #[serde(flatten)]
    pub resource: ResourceConfig,
}

impl CapRecord {
    pub fn new(wf_id: i64, job_name: impl Into<String>, resource: ResourceConfig) -> Self {
        CapRecord { wf_id, job_name: job_name.into(), resource }
    }

    pub fn from_vm(wf_id: i64, job_name: impl Into<String>, vm: &VirtualMachine) -> Self {
        CapRecord::new(wf_id, job_name, ResourceConfig::from_vm(vm))
    }
}

/// Mapping seen while the job was still running.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TempMapping {
    pub cap: CapRecord,
    pub vm_id: String,
    pub ip: Ipv4Addr,
    pub capture_time: SimTime,
}

/// Host a job reported for itself in its stdout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobHostTemp {
    pub wf_id: i64,
    pub job_name: String,
    pub host_ip: Ipv4Addr,
    pub hostname: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpuSpecRow {
    pub wf_id: i64,
    pub job_name: String,
    pub arch: String,
    pub os: String,
    pub mips: u32,
    pub kflops: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileDirection {
    In,
    Out,
}

impl FileDirection {
    pub(crate) fn as_str(self) -> &'static str {
        match self {
            FileDirection::In => "in",
            FileDirection::Out => "out",
        }
    }

    pub(crate) fn parse(s: &str) -> Option<Self> {
        match s {
            "in" => Some(FileDirection::In),
            "out" => Some(FileDirection::Out),
            _ => None,
        }
    }
}

/// A file a job consumed or produced, with its catalog entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobCloudFile {
    pub wf_id: i64,
    pub job_name: String,
    pub direction: FileDirection,
    pub file: CloudFileRecord,
}

/// A VM the Lazy monitor saw on the Cloud.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LazyVmObservation {
    pub vm_id: String,
    pub ip: Ipv4Addr,
    pub resource: ResourceConfig,
    pub created_at: SimTime,
    pub first_seen: SimTime,
    pub last_seen: SimTime,
}

impl LazyVmObservation {
    pub fn from_vm(vm: &VirtualMachine, seen: SimTime) -> Self {
        LazyVmObservation {
            vm_id: vm.vm_id.clone(),
            ip: vm.ip,
            resource: ResourceConfig::from_vm(vm),
            created_at: vm.created_at,
            first_seen: seen,
            last_seen: seen,
        }
    }
}

/// Everything the store holds about one workflow, as a single document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowExport {
    pub source: WorkflowSource,
    pub cap: Vec<CapRecord>,
    pub cpu_specs: Vec<CpuSpecRow>,
    pub files: Vec<JobCloudFile>,
}
