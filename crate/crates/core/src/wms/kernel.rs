//! Synthetic job kernels: deterministic output bytes derived from the job
//! definition and the digests of its inputs, never from the host it ran on.

use std::net::Ipv4Addr;

use super::dag::{JobSpec, ObjectRef};

pub const HOST_LINE_PREFIX: &str = "RECAP_HOST";

/// The line an instrumented job writes first to its stdout.
pub fn host_line(ip: Ipv4Addr, nodename: &str) -> String {
    format!("{HOST_LINE_PREFIX} ip={ip} hostname={nodename}")
}

pub(crate) struct ResolvedInput<'a> {
    pub declared: &'a ObjectRef,
    pub md5: String,
    pub len: usize,
}

pub(crate) fn output_bytes(job: &JobSpec, output: &ObjectRef, inputs: &[ResolvedInput<'_>]) -> Vec<u8> {
    let mut text = format!("kernel: {}\nargs: {}\noutput: {}\n", job.name, job.args.join(" "), output.keyname);
    for input in inputs {
        text.push_str(&format!("input: {} md5={} bytes={}\n", input.declared, input.md5, input.len));
    }
    text.into_bytes()
}
