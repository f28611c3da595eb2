use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;

/// Lowest-free-address allocator over a CIDR block.
///
/// The network and broadcast addresses are never handed out, and neither is
/// the first host address, which is reserved for the gateway.
#[derive(Clone, Debug)]
pub struct IpPool {
    net: Ipv4Net,
    in_use: BTreeSet<Ipv4Addr>,
}

impl IpPool {
    pub fn new(net: Ipv4Net) -> Self {
        IpPool { net: net.trunc(), in_use: BTreeSet::new() }
    }

    pub fn network(&self) -> Ipv4Net {
        self.net
    }

    fn usable(&self) -> impl Iterator<Item = Ipv4Addr> + '_ {
        // hosts() already drops network/broadcast for prefixes < 31.
        self.net.hosts().skip(1)
    }

    pub fn capacity(&self) -> usize {
        self.usable().count()
    }

    pub fn allocate(&mut self) -> Option<Ipv4Addr> {
        let ip = self.usable().find(|ip| !self.in_use.contains(ip))?;
        self.in_use.insert(ip);
        Some(ip)
    }

    /// Returns `false` if the address was not allocated.
    pub fn release(&mut self, ip: Ipv4Addr) -> bool {
        self.in_use.remove(&ip)
    }

    pub fn in_use(&self) -> usize {
        self.in_use.len()
    }
}
