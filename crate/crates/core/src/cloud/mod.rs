//! Simulated IaaS layer: flavor/image catalog, VM lifecycle over an IP pool,
//! and a Swift-like object store, all driven by a virtual clock.

mod ippool;
mod mips;
mod model;
mod objects;

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ippool::IpPool;
pub use mips::MipsModel;
pub use model::{
    basename, CloudFileRecord, CpuSpec, Flavor, MachineImage, VirtualMachine, VmSnapshot, VmState,
};
pub use objects::{md5_hex, ObjectStore};
pub(crate) use model::canonical_json;

use mips::MipsSampler;

use crate::time::SimTime;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CloudError {
    #[error("unknown flavor `{0}`")]
    UnknownFlavor(String),
    #[error("unknown image `{0}`")]
    UnknownImage(String),
    #[error("nodename `{0}` is held by a running VM")]
    NameInUse(String),
    #[error("no free IP address left in {0}")]
    PoolExhausted(Ipv4Net),
    #[error("unknown VM `{0}`")]
    UnknownVm(String),
    #[error("VM `{0}` is already destroyed")]
    AlreadyDestroyed(String),
    #[error("no object `{keyname}` in container `{container}`")]
    UnknownObject { container: String, keyname: String },
    #[error("invalid cloud catalog: {0}")]
    InvalidCatalog(String),
    #[error("clock cannot move backwards (now {now}, requested {requested})")]
    ClockWentBackwards { now: SimTime, requested: SimTime },
}

pub const CONDORVM_IMAGE_ID: &str = "269cfb39-7882-4067-bf20-b3350a4b1b05";
pub const PEG_REPEAT_IMAGE_ID: &str = "f102960c-557c-4253-8277-2df5ffe3c169";
pub const MONTAGE_IMAGE_ID: &str = "2d9787e4-b0e9-4802-bf4f-4a0c868bb11a";
pub const FREESURF_IMAGE_ID: &str = "2ee3c500-61b5-4592-8d54-e572536b5df1";

/// Static description of a cloud: catalog, address block, CPU model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudConfig {
    #[serde(default = "default_cidr")]
    pub ip_cidr: Ipv4Net,
    #[serde(default)]
    pub mips: MipsModel,
    #[serde(default = "default_flavors", rename = "flavor")]
    pub flavors: Vec<Flavor>,
    #[serde(default = "default_images", rename = "image")]
    pub images: Vec<MachineImage>,
}

fn default_cidr() -> Ipv4Net {
    "10.0.0.0/24".parse().expect("literal CIDR")
}

/// tiny/small/medium/large as used for the single-job resource experiments.
pub fn default_flavors() -> Vec<Flavor> {
    vec![
        Flavor::new(1, "m1.tiny", 1, 512, 5),
        Flavor::new(2, "m1.small", 1, 1024, 10),
        Flavor::new(3, "m1.medium", 2, 2048, 20),
        Flavor::new(4, "m1.large", 4, 4096, 40),
    ]
}

/// The classic OpenStack catalog the re-provisioning runs were recorded on:
/// flavor 2 is 1 vCPU / 2048 MB / 20 GB and flavor 3 is 2 vCPU / 4096 MB / 40 GB.
pub fn openstack_flavors() -> Vec<Flavor> {
    vec![
        Flavor::new(1, "m1.tiny", 1, 512, 1),
        Flavor::new(2, "m1.small", 1, 2048, 20),
        Flavor::new(3, "m1.medium", 2, 4096, 40),
        Flavor::new(4, "m1.large", 4, 8192, 80),
        Flavor::new(5, "m1.xlarge", 8, 16384, 160),
    ]
}

pub fn default_images() -> Vec<MachineImage> {
    vec![
        MachineImage::new(CONDORVM_IMAGE_ID, "condorvm-quantal-snapshot").with_software(["condor", "pegasus-worker", "python"]),
        MachineImage::new(PEG_REPEAT_IMAGE_ID, "wf.peg-repeat").with_software(["condor", "pegasus-worker"]),
        MachineImage::new(MONTAGE_IMAGE_ID, "montage-condor-setup").with_software(["condor", "montage"]),
        MachineImage::new(FREESURF_IMAGE_ID, "freesurf-condor").with_software(["condor", "freesurfer"]),
    ]
}

impl Default for CloudConfig {
    fn default() -> Self {
        CloudConfig { ip_cidr: default_cidr(), mips: MipsModel::default(), flavors: default_flavors(), images: default_images() }
    }
}

#[derive(Clone, Debug)]
pub struct Cloud {
    now: SimTime,
    flavors: BTreeMap<i64, Flavor>,
    images: BTreeMap<String, MachineImage>,
    vms: BTreeMap<String, VirtualMachine>,
    running_names: BTreeSet<String>,
    ip_pool: IpPool,
    mips: MipsSampler,
    objects: ObjectStore,
    next_vm: u64,
}

impl Cloud {
    pub fn new(config: CloudConfig) -> Result<Self, CloudError> {
        config.mips.validate().map_err(CloudError::InvalidCatalog)?;
        let mut flavors = BTreeMap::new();
        for f in config.flavors {
            if !f.is_valid() {
                return Err(CloudError::InvalidCatalog(format!("flavor {f:?} has a zero-sized resource")));
            }
            if flavors.values().any(|g: &Flavor| g.name == f.name) {
                return Err(CloudError::InvalidCatalog(format!("duplicate flavor name `{}`", f.name)));
            }
            if flavors.insert(f.flavor_id, f.clone()).is_some() {
                return Err(CloudError::InvalidCatalog(format!("duplicate flavor id {}", f.flavor_id)));
            }
        }
        let mut images = BTreeMap::new();
        for img in config.images {
            if images.insert(img.image_id.clone(), img.clone()).is_some() {
                return Err(CloudError::InvalidCatalog(format!("duplicate image id `{}`", img.image_id)));
            }
        }
        Ok(Cloud {
            now: SimTime::ZERO,
            flavors,
            images,
            vms: BTreeMap::new(),
            running_names: BTreeSet::new(),
            ip_pool: IpPool::new(config.ip_cidr),
            mips: MipsSampler::new(config.mips),
            objects: ObjectStore::default(),
            next_vm: 1,
        })
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn set_time(&mut self, t: SimTime) -> Result<(), CloudError> {
        if t < self.now {
            return Err(CloudError::ClockWentBackwards { now: self.now, requested: t });
        }
        self.now = t;
        Ok(())
    }

    pub fn mips_model(&self) -> &MipsModel {
        self.mips.model()
    }

    pub fn flavors(&self) -> impl Iterator<Item = &Flavor> {
        self.flavors.values()
    }

    pub fn flavor_by_id(&self, id: i64) -> Option<&Flavor> {
        self.flavors.get(&id)
    }

    pub fn flavor_by_name(&self, name: &str) -> Option<&Flavor> {
        self.flavors.values().find(|f| f.name == name)
    }

    pub fn images(&self) -> impl Iterator<Item = &MachineImage> {
        self.images.values()
    }

    pub fn image_by_id(&self, id: &str) -> Option<&MachineImage> {
        self.images.get(id)
    }

    pub fn image_by_name(&self, name: &str) -> Option<&MachineImage> {
        self.images.values().find(|i| i.name == name)
    }

    /// Removes an image from the catalog. Running VMs keep their copy.
    pub fn delete_image(&mut self, image_id: &str) -> Result<MachineImage, CloudError> {
        self.images.remove(image_id).ok_or_else(|| CloudError::UnknownImage(image_id.into()))
    }

    pub fn provision(&mut self, flavor_name: &str, image_name: &str, nodename: &str) -> Result<VirtualMachine, CloudError> {
        let flavor = self.flavor_by_name(flavor_name).cloned().ok_or_else(|| CloudError::UnknownFlavor(flavor_name.into()))?;
        let image = self.image_by_name(image_name).cloned().ok_or_else(|| CloudError::UnknownImage(image_name.into()))?;
        self.launch(flavor, image, nodename)
    }

    /// Provision by catalog ids, the stable anchor used when re-provisioning.
    pub fn provision_by_id(&mut self, flavor_id: i64, image_id: &str, nodename: &str) -> Result<VirtualMachine, CloudError> {
        let flavor = self.flavors.get(&flavor_id).cloned().ok_or_else(|| CloudError::UnknownFlavor(flavor_id.to_string()))?;
        let image = self.images.get(image_id).cloned().ok_or_else(|| CloudError::UnknownImage(image_id.into()))?;
        self.launch(flavor, image, nodename)
    }

    fn launch(&mut self, flavor: Flavor, image: MachineImage, nodename: &str) -> Result<VirtualMachine, CloudError> {
        if self.running_names.contains(nodename) {
            return Err(CloudError::NameInUse(nodename.into()));
        }
        let ip = self.ip_pool.allocate().ok_or(CloudError::PoolExhausted(self.ip_pool.network()))?;
        let vm = VirtualMachine {
            vm_id: format!("vm-{:06}", self.next_vm),
            nodename: nodename.to_string(),
            ip,
            flavor,
            image,
            cpu_spec: self.mips.next_spec(),
            state: VmState::Running,
            created_at: self.now,
            extra: BTreeMap::new(),
        };
        self.next_vm += 1;
        self.running_names.insert(vm.nodename.clone());
        self.vms.insert(vm.vm_id.clone(), vm.clone());
        log::debug!("provisioned {} ({}, {}) at {}", vm.nodename, vm.ip, vm.flavor.name, self.now);
        Ok(vm)
    }

    pub fn set_vm_extra(&mut self, vm_id: &str, key: &str, value: serde_json::Value) -> Result<(), CloudError> {
        let vm = self.vms.get_mut(vm_id).ok_or_else(|| CloudError::UnknownVm(vm_id.into()))?;
        vm.extra.insert(key.to_string(), value);
        Ok(())
    }

    pub fn destroy(&mut self, vm_id: &str) -> Result<(), CloudError> {
        let vm = self.vms.get_mut(vm_id).ok_or_else(|| CloudError::UnknownVm(vm_id.into()))?;
        if vm.state == VmState::Destroyed {
            return Err(CloudError::AlreadyDestroyed(vm_id.into()));
        }
        vm.state = VmState::Destroyed;
        self.ip_pool.release(vm.ip);
        self.running_names.remove(&vm.nodename);
        log::debug!("destroyed {} ({}) at {}", vm.nodename, vm.ip, self.now);
        Ok(())
    }

    /// Any VM ever provisioned, including destroyed ones.
    pub fn vm(&self, vm_id: &str) -> Option<&VirtualMachine> {
        self.vms.get(vm_id)
    }

    pub fn is_running(&self, vm_id: &str) -> bool {
        self.vms.get(vm_id).is_some_and(|vm| vm.state == VmState::Running)
    }

    pub fn list_vms(&self) -> VmSnapshot {
        let running = self.vms.values().filter(|vm| vm.state == VmState::Running).cloned().collect();
        VmSnapshot::new(self.now, running)
    }

    pub fn objects(&self) -> &ObjectStore {
        &self.objects
    }

    pub fn put_object(
        &mut self,
        container: &str,
        keyname: &str,
        bytes: Vec<u8>,
        metadata: BTreeMap<String, String>,
    ) -> CloudFileRecord {
        self.objects.put(container, keyname, bytes, metadata, self.now)
    }

    pub fn get_object(&self, container: &str, keyname: &str) -> Result<(Vec<u8>, CloudFileRecord), CloudError> {
        self.objects.get(container, keyname)
    }

    pub fn list_objects(&self, container: &str, prefix: &str) -> Result<Vec<CloudFileRecord>, CloudError> {
        self.objects.list(container, prefix)
    }
}

impl Default for Cloud {
    fn default() -> Self {
        Cloud::new(CloudConfig::default()).expect("default catalog is valid")
    }
}

/// Convenience for tests and scenarios: `"10.0.0.2"` → address.
pub fn ip(s: &str) -> Ipv4Addr {
    s.parse().expect("valid IPv4 literal")
}
