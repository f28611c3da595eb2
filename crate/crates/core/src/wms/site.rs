use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

/// What the WMS database remembers about execution hosts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HostProfile {
    /// Host IP stored for every job (Pegasus-like).
    #[default]
    Full,
    /// No host information at all (Chimera-like).
    NoHostInfo,
    /// Host IP stored only if the VM still exists when the record is written.
    Volatile,
}

#[derive(Debug, Error)]
#[error("malformed site file: {0}")]
pub struct SiteError(String);

/// Per-submission site description: storage layout and WMS provenance profile.
///
/// ```toml
/// [storage]
/// output_container = "wordcount-out"
///
/// [wms]
/// host_profile = "full"   # full | no_host_info | volatile
/// ```
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub storage: StorageSection,
    #[serde(default)]
    pub wms: SiteWmsSection,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageSection {
    /// Overrides the container of every declared output.
    #[serde(default)]
    pub output_container: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteWmsSection {
    #[serde(default)]
    pub host_profile: HostProfile,
}

impl SiteConfig {
    pub fn with_profile(profile: HostProfile) -> Self {
        SiteConfig { wms: SiteWmsSection { host_profile: profile }, ..SiteConfig::default() }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SiteError> {
        toml::from_str(text).map_err(|e| SiteError(e.message().to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("site file serializes")
    }

    pub fn host_profile(&self) -> HostProfile {
        self.wms.host_profile
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifecycle {
    /// VMs persist after their jobs.
    #[default]
    Static,
    /// Each job attempt gets a fresh VM that is destroyed when it completes.
    Dynamic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum ProvisioningPolicy {
    Fixed {
        flavor: String,
        image: String,
    },
    RandomFlavor {
        flavors: Vec<String>,
        image: String,
        #[serde(default)]
        seed: u64,
    },
}

impl ProvisioningPolicy {
    pub fn image(&self) -> &str {
        match self {
            ProvisioningPolicy::Fixed { image, .. } | ProvisioningPolicy::RandomFlavor { image, .. } => image,
        }
    }
}

/// Engine knobs shared by every workflow the simulated WMS runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WmsConfig {
    /// RAM the guest OS keeps for itself; a job fails when it needs more than the rest.
    pub os_overhead_mb: u32,
    /// Delay between a job being matched to a VM and it starting.
    pub dispatch_latency_s: SimTime,
    /// Extra run time of an instrumented job (host logging).
    pub instrument_delay_s: SimTime,
    /// How long a doomed attempt occupies its VM before failing.
    pub failure_latency_s: SimTime,
    /// Job records are written on this grid; zero writes immediately.
    pub record_flush_interval_s: SimTime,
    /// Reschedules allowed after a failed attempt.
    pub max_retries: u32,
    pub lifecycle: Lifecycle,
    /// Delay between a dynamic VM's job completing and the VM being destroyed.
    pub teardown_delay_s: SimTime,
    pub nodename_prefix: String,
    pub provisioning: Option<ProvisioningPolicy>,
}

impl Default for WmsConfig {
    fn default() -> Self {
        WmsConfig {
            os_overhead_mb: 64,
            dispatch_latency_s: SimTime::ZERO,
            instrument_delay_s: SimTime::from_micros(41_800),
            failure_latency_s: SimTime::ZERO,
            record_flush_interval_s: SimTime::ZERO,
            max_retries: 1,
            lifecycle: Lifecycle::Static,
            teardown_delay_s: SimTime::ZERO,
            nodename_prefix: "dyn-vm".into(),
            provisioning: None,
        }
    }
}

impl WmsConfig {
    pub fn dynamic(policy: ProvisioningPolicy) -> Self {
        WmsConfig { lifecycle: Lifecycle::Dynamic, provisioning: Some(policy), ..WmsConfig::default() }
    }
}
