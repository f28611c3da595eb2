use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

/// A provisionable VM size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flavor {
    pub flavor_id: i64,
    pub name: String,
    pub vcpus: u32,
    pub ram_mb: u32,
    pub disk_gb: u32,
}

impl Flavor {
    pub fn new(flavor_id: i64, name: impl Into<String>, vcpus: u32, ram_mb: u32, disk_gb: u32) -> Self {
        Flavor { flavor_id, name: name.into(), vcpus, ram_mb, disk_gb }
    }

    pub fn is_valid(&self) -> bool {
        self.vcpus >= 1 && self.ram_mb >= 1 && self.disk_gb >= 1 && !self.name.is_empty()
    }

    /// The (vcpus, ram, disk) triple a CAP record must reproduce.
    pub fn triple(&self) -> (u32, u32, u32) {
        (self.vcpus, self.ram_mb, self.disk_gb)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineImage {
    pub image_id: String,
    pub name: String,
    #[serde(default)]
    pub software_manifest: BTreeSet<String>,
}

impl MachineImage {
    pub fn new(image_id: impl Into<String>, name: impl Into<String>) -> Self {
        MachineImage { image_id: image_id.into(), name: name.into(), software_manifest: BTreeSet::new() }
    }

    pub fn with_software<I, S>(mut self, libs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.software_manifest.extend(libs.into_iter().map(Into::into));
        self
    }
}

/// Benchmarked CPU characteristics, as a Condor pool would report them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpuSpec {
    pub arch: String,
    pub os: String,
    pub mips: u32,
    pub kflops: u64,
}

impl CpuSpec {
    pub fn new(mips: u32, kflops: u64) -> Self {
        CpuSpec { arch: "x86_64".into(), os: "Linux".into(), mips, kflops }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VmState {
    Building,
    Running,
    Shutoff,
    Destroyed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualMachine {
    pub vm_id: String,
    pub nodename: String,
    pub ip: Ipv4Addr,
    pub flavor: Flavor,
    pub image: MachineImage,
    pub cpu_spec: CpuSpec,
    pub state: VmState,
    pub created_at: SimTime,
    #[serde(default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl VirtualMachine {
    /// `extra` as canonical JSON text (sorted keys).
    pub fn extra_json(&self) -> String {
        canonical_json(&self.extra)
    }
}

pub(crate) fn canonical_json(map: &BTreeMap<String, serde_json::Value>) -> String {
    // BTreeMap iteration order is sorted, and serde_json::Map is backed by a
    // BTreeMap without the preserve_order feature, so nested objects sort too.
    serde_json::to_string(map).expect("string-keyed map always serializes")
}

/// Immutable point-in-time view of the RUNNING VMs. Cheap to clone and
/// safe to share across threads.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VmSnapshot {
    taken_at: SimTime,
    vms: Arc<[VirtualMachine]>,
}

impl VmSnapshot {
    pub fn new(taken_at: SimTime, vms: Vec<VirtualMachine>) -> Self {
        VmSnapshot { taken_at, vms: vms.into() }
    }

    pub fn taken_at(&self) -> SimTime {
        self.taken_at
    }

    pub fn vms(&self) -> &[VirtualMachine] {
        &self.vms
    }

    pub fn len(&self) -> usize {
        self.vms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vms.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, VirtualMachine> {
        self.vms.iter()
    }

    pub fn by_ip(&self, ip: Ipv4Addr) -> Option<&VirtualMachine> {
        self.vms.iter().find(|vm| vm.ip == ip)
    }

    pub fn by_nodename(&self, nodename: &str) -> Option<&VirtualMachine> {
        self.vms.iter().find(|vm| vm.nodename == nodename)
    }
}

/// Object-storage file metadata.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudFileRecord {
    pub container: String,
    pub keyname: String,
    pub md5: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub created: SimTime,
    pub modified: SimTime,
}

impl CloudFileRecord {
    /// Last path segment of the key.
    pub fn basename(&self) -> &str {
        basename(&self.keyname)
    }
}

pub fn basename(key: &str) -> &str {
    key.rsplit('/').next().unwrap_or(key)
}
