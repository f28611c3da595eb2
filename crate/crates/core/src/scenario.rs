//! Scenario files: the Cloud catalog, the WMS knobs, the initial VM pool and
//! any objects that must exist before workflows run.
//!
//! ```toml
//! [cloud]
//! ip_cidr = "10.0.0.0/24"
//! mips = { mode = "fixed", mips = 12500, kflops = 1250000 }
//!
//! [wms]
//! lifecycle = "static"
//!
//! [monitor]
//! poll_interval_s = 5
//!
//! [[vm]]
//! nodename = "uwe-vm3"
//! flavor = "m1.small"
//! image = "condorvm-quantal-snapshot"
//!
//! [[object]]
//! container = "wordcount"
//! keyname = "input.txt"
//! content = "the quick brown fox"
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{Cloud, CloudConfig, CloudError};
use crate::time::SimTime;
use crate::wms::{Wms, WmsConfig};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Malformed(String),
    #[error(transparent)]
    Cloud(#[from] CloudError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VmDecl {
    pub nodename: String,
    pub flavor: String,
    pub image: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDecl {
    pub container: String,
    pub keyname: String,
    pub content: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    pub poll_interval_s: SimTime,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig { poll_interval_s: SimTime::from_secs(5) }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub cloud: CloudConfig,
    pub wms: WmsConfig,
    pub monitor: MonitorConfig,
    #[serde(rename = "vm")]
    pub vms: Vec<VmDecl>,
    #[serde(rename = "object")]
    pub objects: Vec<ObjectDecl>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Malformed(e.message().to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn with_vm(mut self, nodename: &str, flavor: &str, image: &str) -> Self {
        self.vms.push(VmDecl { nodename: nodename.into(), flavor: flavor.into(), image: image.into() });
        self
    }

    pub fn with_object(mut self, container: &str, keyname: &str, content: &str) -> Self {
        self.objects.push(ObjectDecl { container: container.into(), keyname: keyname.into(), content: content.into() });
        self
    }

    /// A cloud with the declared pool provisioned at t = 0 and objects stored.
    pub fn build_cloud(&self) -> Result<Cloud, ScenarioError> {
        if self.monitor.poll_interval_s == SimTime::ZERO {
            return Err(ScenarioError::Malformed("monitor.poll_interval_s must be positive".into()));
        }
        let mut cloud = Cloud::new(self.cloud.clone())?;
        for vm in &self.vms {
            cloud.provision(&vm.flavor, &vm.image, &vm.nodename)?;
        }
        for obj in &self.objects {
            cloud.put_object(&obj.container, &obj.keyname, obj.content.as_bytes().to_vec(), Default::default());
        }
        Ok(cloud)
    }

    pub fn build(&self) -> Result<(Cloud, Wms), ScenarioError> {
        Ok((self.build_cloud()?, Wms::new(self.wms.clone())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::MipsModel;

    #[test]
    fn documented_example_parses() {
        let text = r#"
[cloud]
ip_cidr = "10.0.0.0/24"
mips = { mode = "fixed", mips = 12500, kflops = 1250000 }

[wms]
lifecycle = "static"

[monitor]
poll_interval_s = 5

[[vm]]
nodename = "uwe-vm3"
flavor = "m1.small"
image = "condorvm-quantal-snapshot"

[[object]]
container = "wordcount"
keyname = "input.txt"
content = "the quick brown fox"
"#;
        let s = Scenario::from_toml_str(text).unwrap();
        assert_eq!(s.cloud.mips, MipsModel::Fixed { mips: 12500, kflops: 1_250_000 });
        let cloud = s.build_cloud().unwrap();
        assert_eq!(cloud.list_vms().len(), 1);
        assert_eq!(cloud.get_object("wordcount", "input.txt").unwrap().0, b"the quick brown fox");
    }

    #[test]
    fn round_trips_through_toml() {
        let s = Scenario::default().with_vm("a", "m1.small", "wf.peg-repeat").with_object("c", "k", "v");
        assert_eq!(Scenario::from_toml_str(&s.to_toml_string()).unwrap(), s);
    }

    #[test]
    fn rejects_unknown_keys_and_zero_poll() {
        assert!(Scenario::from_toml_str("[cloud]\nbogus = 1\n").is_err());
        let mut s = Scenario::default();
        s.monitor.poll_interval_s = SimTime::ZERO;
        assert!(s.build_cloud().is_err());
    }
}
