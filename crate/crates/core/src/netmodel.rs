//! Wall-clock time for collectives on the dual-bandwidth (NVS + IB) fabric.
//!
//! Gathers and scatters use the ring algorithm. A group of `n` GPUs with `g`
//! members co-resident per NVS domain pays `n/g - 1` slow hops and `n - n/g`
//! fast hops of latency; the bandwidth term runs at the slower of the NVS
//! rate and the aggregate NIC rate available to the group.

use crate::hwspec::SystemSpec;

/// Placement of a communicating group on the machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupLocality {
    pub group_size: u64,
    /// Members of this group co-resident in one NVS domain.
    pub gpus_per_nvs: u64,
    pub nics_available: u64,
}

impl GroupLocality {
    /// NICs follow GPUs: a group using `g` of the domain's GPUs gets the
    /// proportional share of its NICs, never less than one.
    pub fn for_system(group_size: u64, gpus_per_nvs: u64, sys: &SystemSpec) -> Self {
        let nics = (sys.n_nic * gpus_per_nvs / sys.n_nvs).max(1);
        GroupLocality {
            group_size,
            gpus_per_nvs: gpus_per_nvs.max(1),
            nics_available: nics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingKind {
    AllGather,
    ReduceScatter,
}

fn latency_term(n: f64, g: f64, sys: &SystemSpec) -> f64 {
    sys.ib_latency * (n / g - 1.0) + sys.nvs_latency * (n - n / g)
}

/// Slower of the NVS path and the NIC-aggregated IB path, as a time for
/// `volume` bytes.
fn cross_domain_bw_time(volume: f64, nics: f64, sys: &SystemSpec) -> f64 {
    let eta = sys.bw_efficiency;
    let ib = volume / (nics * sys.ib_bw_per_nic * eta);
    let nvs = volume / (sys.nvs_bw * eta);
    ib.max(nvs)
}

/// Ring AllGather / ReduceScatter of `volume` bytes per GPU.
pub fn ring_time(_kind: RingKind, volume: f64, loc: GroupLocality, sys: &SystemSpec) -> f64 {
    let n = loc.group_size as f64;
    if loc.group_size <= 1 {
        return 0.0;
    }
    let fraction = (n - 1.0) / n;
    if loc.gpus_per_nvs == loc.group_size {
        // Entirely inside one fast domain.
        return sys.nvs_latency * (n - 1.0) + fraction * volume / (sys.nvs_bw * sys.bw_efficiency);
    }
    let g = loc.gpus_per_nvs as f64;
    latency_term(n, g, sys) + fraction * cross_domain_bw_time(volume, loc.nics_available as f64, sys)
}

/// AllReduce as a ReduceScatter followed by an AllGather.
pub fn allreduce_time(volume: f64, loc: GroupLocality, sys: &SystemSpec) -> f64 {
    ring_time(RingKind::ReduceScatter, volume, loc, sys)
        + ring_time(RingKind::AllGather, volume, loc, sys)
}

/// Ring-pipelined broadcast: same latency structure as the ring collectives
/// but the root's full volume crosses every link.
pub fn broadcast_time(volume: f64, loc: GroupLocality, sys: &SystemSpec) -> f64 {
    let n = loc.group_size as f64;
    if loc.group_size <= 1 {
        return 0.0;
    }
    if loc.gpus_per_nvs == loc.group_size {
        return sys.nvs_latency * (n - 1.0) + volume / (sys.nvs_bw * sys.bw_efficiency);
    }
    let g = loc.gpus_per_nvs as f64;
    latency_term(n, g, sys) + cross_domain_bw_time(volume, loc.nics_available as f64, sys)
}

/// Reduce mirrors broadcast under this model.
pub fn reduce_time(volume: f64, loc: GroupLocality, sys: &SystemSpec) -> f64 {
    broadcast_time(volume, loc, sys)
}

/// Point-to-point transfer between pipeline neighbors. Crossing domains
/// uses a single NIC.
pub fn p2p_time(volume: f64, adjacent_in_nvs: bool, sys: &SystemSpec) -> f64 {
    if adjacent_in_nvs {
        sys.nvs_latency + volume / (sys.nvs_bw * sys.bw_efficiency)
    } else {
        sys.ib_latency + volume / (sys.ib_bw_per_nic * sys.bw_efficiency)
    }
}
