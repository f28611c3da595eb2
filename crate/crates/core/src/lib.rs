//! Provenance capture for workflows executed on a (simulated) IaaS cloud.
//!
//! The crate bundles a virtual cloud, a workflow management system driving
//! jobs on it, a provenance store, the job-to-VM mapping strategies that
//! fill it, and the replay and comparison machinery built on top.

pub mod cloud;
pub mod compare;
pub mod config;
pub mod experiments;
pub mod mappers;
pub mod replay;
pub mod scenario;
pub mod store;
pub mod testbed;
pub mod time;
pub mod wms;
pub mod workloads;

pub use time::SimTime;
