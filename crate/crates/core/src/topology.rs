//! The simulated site: servers, rack switches (RSW), cluster switches (CSW)
//! and "Fat Cat" routers (FC), wired as a three-tier Clos with per-tier ring
//! links and stage-indexed uplinks.
//!
//! Stage indices are assigned with a rotation so that every upper-tier switch
//! keeps at least one always-on (stage 1) link into each group below it:
//! RSW `r` has its stage-1 uplink to CSW `r mod n_csw` of its cluster, and
//! CSW `i` has its stage-1 uplink to FC `i mod n_fc`. Together with the
//! always-on rings this guarantees full connectivity when every switch sits
//! at stage 1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServerId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SwitchId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u32);

/// Which end of a link. `Lower` is the endpoint at the switch that owns the
/// stage (or the server, for access links); `Upper` is the peer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkEnd {
    Lower,
    Upper,
}

impl LinkEnd {
    pub fn other(self) -> LinkEnd {
        match self {
            LinkEnd::Lower => LinkEnd::Upper,
            LinkEnd::Upper => LinkEnd::Lower,
        }
    }
}

/// Either end of a link attaches to a server or a switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Server(ServerId),
    Switch(SwitchId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkTier {
    ServerRsw,
    RswCsw,
    CswFc,
    CswRing,
    FcRing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwitchKind {
    Rsw,
    Csw,
    Fc,
}

/// Fiber propagation delay, ~2e8 m/s.
pub const PROPAGATION_PS_PER_M: u64 = 5_000;

/// Latency of a fiber run of `length_m` meters at 5 ns/m.
pub fn link_latency(length_m: u64) -> SimTime {
    SimTime::from_ps(length_m * PROPAGATION_PS_PER_M)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SiteConfig {
    pub clusters: u32,
    pub rsw_per_cluster: u32,
    pub csw_per_cluster: u32,
    pub fc_count: u32,
    pub servers_per_rack: u32,
    /// Server access and RSW uplink bandwidth (10G default).
    pub edge_bandwidth_bps: u64,
    /// CSW-to-FC uplink bandwidth (40G default).
    pub core_bandwidth_bps: u64,
    /// Ring link bandwidth (10G default).
    pub ring_bandwidth_bps: u64,
    /// Parallel ring links per CSW ring edge (8 links over 4 edges = 2).
    pub csw_ring_multiplicity: u32,
    /// Parallel ring links per FC ring edge (16 links over 4 edges = 4).
    pub fc_ring_multiplicity: u32,
    pub server_fiber_m: u64,
    pub rsw_csw_fiber_m: u64,
    pub csw_fc_fiber_m: u64,
    pub ring_fiber_m: u64,
    /// When set, ring links also participate in gating. Off by default: the
    /// rings are the always-on fallback that keeps the site connected.
    pub gate_ring_links: bool,
}

impl Default for SiteConfig {
    fn default() -> Self {
        SiteConfig {
            clusters: 4,
            rsw_per_cluster: 32,
            csw_per_cluster: 4,
            fc_count: 4,
            servers_per_rack: 48,
            edge_bandwidth_bps: 10_000_000_000,
            core_bandwidth_bps: 40_000_000_000,
            ring_bandwidth_bps: 10_000_000_000,
            csw_ring_multiplicity: 2,
            fc_ring_multiplicity: 4,
            server_fiber_m: 2,
            rsw_csw_fiber_m: 20,
            csw_fc_fiber_m: 100,
            ring_fiber_m: 10,
            gate_ring_links: false,
        }
    }
}

impl SiteConfig {
    /// Desk-scale site used for fast experiments and the test suite.
    pub fn desk() -> Self {
        SiteConfig {
            clusters: 2,
            rsw_per_cluster: 4,
            csw_per_cluster: 4,
            fc_count: 2,
            servers_per_rack: 4,
            ..SiteConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let check = |name: &'static str, v: u32| {
            if v < 1 {
                Err(TopologyError::InvalidCount { field: name, value: v })
            } else {
                Ok(())
            }
        };
        check("clusters", self.clusters)?;
        check("rsw_per_cluster", self.rsw_per_cluster)?;
        check("csw_per_cluster", self.csw_per_cluster)?;
        check("fc_count", self.fc_count)?;
        check("servers_per_rack", self.servers_per_rack)?;
        check("csw_ring_multiplicity", self.csw_ring_multiplicity)?;
        check("fc_ring_multiplicity", self.fc_ring_multiplicity)?;
        for (name, bw) in [
            ("edge_bandwidth_bps", self.edge_bandwidth_bps),
            ("core_bandwidth_bps", self.core_bandwidth_bps),
            ("ring_bandwidth_bps", self.ring_bandwidth_bps),
        ] {
            if bw == 0 {
                return Err(TopologyError::InvalidCount { field: name, value: 0 });
            }
        }
        Ok(())
    }

    pub fn server_count(&self) -> u32 {
        self.clusters * self.rsw_per_cluster * self.servers_per_rack
    }
    pub fn rsw_count(&self) -> u32 {
        self.clusters * self.rsw_per_cluster
    }
    pub fn csw_count(&self) -> u32 {
        self.clusters * self.csw_per_cluster
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("site config field `{field}` must be >= 1, got {value}")]
    InvalidCount { field: &'static str, value: u32 },
    #[error("stage {stage} out of range 1..={max} for switch {switch:?}")]
    StageOutOfRange { switch: SwitchId, stage: u32, max: u32 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub lower: NodeId,
    pub upper: NodeId,
    pub bandwidth_bps: u64,
    pub length_m: u64,
    pub latency: SimTime,
    pub tier: LinkTier,
    /// 1-based position within the lower switch's stage ordering; 0 for
    /// links that never gate (server access and, by default, rings).
    pub stage_index: u32,
}

impl Link {
    pub fn endpoint(&self, end: LinkEnd) -> NodeId {
        match end {
            LinkEnd::Lower => self.lower,
            LinkEnd::Upper => self.upper,
        }
    }

    pub fn is_gated(&self) -> bool {
        self.stage_index > 0
    }
}

#[derive(Debug, Clone)]
pub struct Switch {
    pub id: SwitchId,
    pub kind: SwitchKind,
    pub cluster: u32,
    /// Index within its cluster (RSW/CSW) or globally (FC).
    pub index: u32,
    /// Gated uplinks in stage order: `uplinks[k-1]` is stage k.
    pub uplinks: Vec<LinkId>,
    /// Links to the tier below (server links for RSW, RSW links for CSW,
    /// CSW links for FC).
    pub downlinks: Vec<LinkId>,
    /// Ring links, grouped by neighbor: (neighbor switch, parallel links).
    pub ring: Vec<(SwitchId, Vec<LinkId>)>,
}

impl Switch {
    pub fn max_stage(&self) -> u32 {
        self.uplinks.len() as u32
    }

    /// Uplinks that are members of stages 1..=k.
    pub fn stage_links(&self, k: u32) -> Result<&[LinkId], TopologyError> {
        if k < 1 || k > self.max_stage() {
            return Err(TopologyError::StageOutOfRange {
                switch: self.id,
                stage: k,
                max: self.max_stage(),
            });
        }
        Ok(&self.uplinks[..k as usize])
    }
}

#[derive(Debug, Clone)]
pub struct Topology {
    pub config: SiteConfig,
    pub links: Vec<Link>,
    pub switches: Vec<Switch>,
    /// Per server: (home RSW, access link).
    pub servers: Vec<(SwitchId, LinkId)>,
    rsw_base: u32,
    csw_base: u32,
    fc_base: u32,
}

impl Topology {
    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0 as usize]
    }
    pub fn switch(&self, id: SwitchId) -> &Switch {
        &self.switches[id.0 as usize]
    }

    pub fn rsw_id(&self, cluster: u32, index: u32) -> SwitchId {
        SwitchId(self.rsw_base + cluster * self.config.rsw_per_cluster + index)
    }
    pub fn csw_id(&self, cluster: u32, index: u32) -> SwitchId {
        SwitchId(self.csw_base + cluster * self.config.csw_per_cluster + index)
    }
    pub fn fc_id(&self, index: u32) -> SwitchId {
        SwitchId(self.fc_base + index)
    }

    pub fn server_rsw(&self, s: ServerId) -> SwitchId {
        self.servers[s.0 as usize].0
    }
    pub fn server_link(&self, s: ServerId) -> LinkId {
        self.servers[s.0 as usize].1
    }

    pub fn server_cluster(&self, s: ServerId) -> u32 {
        self.switch(self.server_rsw(s)).cluster
    }

    /// The CSW that holds the always-on stage-1 link of rack `rsw`.
    pub fn guardian_csw(&self, rsw: SwitchId) -> SwitchId {
        let sw = self.switch(rsw);
        debug_assert_eq!(sw.kind, SwitchKind::Rsw);
        self.csw_id(sw.cluster, sw.index % self.config.csw_per_cluster)
    }

    /// The FC on the far side of `csw`'s always-on stage-1 uplink.
    pub fn guardian_fc(&self, csw: SwitchId) -> SwitchId {
        let sw = self.switch(csw);
        debug_assert_eq!(sw.kind, SwitchKind::Csw);
        self.fc_id(sw.index % self.config.fc_count)
    }
}

/// Builds the full site graph from a validated config.
pub fn build_site(config: &SiteConfig) -> Result<Topology, TopologyError> {
    config.validate()?;

    let n_rsw = config.rsw_count();
    let n_csw = config.csw_count();
    let rsw_base = 0u32;
    let csw_base = n_rsw;
    let fc_base = n_rsw + n_csw;

    let mut switches = Vec::new();
    for c in 0..config.clusters {
        for i in 0..config.rsw_per_cluster {
            switches.push(Switch {
                id: SwitchId(rsw_base + c * config.rsw_per_cluster + i),
                kind: SwitchKind::Rsw,
                cluster: c,
                index: i,
                uplinks: Vec::new(),
                downlinks: Vec::new(),
                ring: Vec::new(),
            });
        }
    }
    for c in 0..config.clusters {
        for i in 0..config.csw_per_cluster {
            switches.push(Switch {
                id: SwitchId(csw_base + c * config.csw_per_cluster + i),
                kind: SwitchKind::Csw,
                cluster: c,
                index: i,
                uplinks: Vec::new(),
                downlinks: Vec::new(),
                ring: Vec::new(),
            });
        }
    }
    for i in 0..config.fc_count {
        switches.push(Switch {
            id: SwitchId(fc_base + i),
            kind: SwitchKind::Fc,
            cluster: 0,
            index: i,
            uplinks: Vec::new(),
            downlinks: Vec::new(),
            ring: Vec::new(),
        });
    }

    let mut links: Vec<Link> = Vec::new();
    let mut servers = Vec::new();

    let push_link = |links: &mut Vec<Link>,
                         lower: NodeId,
                         upper: NodeId,
                         bw: u64,
                         len: u64,
                         tier: LinkTier,
                         stage: u32| {
        let id = LinkId(links.len() as u32);
        links.push(Link {
            id,
            lower,
            upper,
            bandwidth_bps: bw,
            length_m: len,
            latency: link_latency(len),
            tier,
            stage_index: stage,
        });
        id
    };

    // Server access links.
    for c in 0..config.clusters {
        for r in 0..config.rsw_per_cluster {
            let rsw = SwitchId(rsw_base + c * config.rsw_per_cluster + r);
            for _ in 0..config.servers_per_rack {
                let sid = ServerId(servers.len() as u32);
                let lid = push_link(
                    &mut links,
                    NodeId::Server(sid),
                    NodeId::Switch(rsw),
                    config.edge_bandwidth_bps,
                    config.server_fiber_m,
                    LinkTier::ServerRsw,
                    0,
                );
                servers.push((rsw, lid));
                switches[rsw.0 as usize].downlinks.push(lid);
            }
        }
    }

    // RSW uplinks, one per CSW of the cluster, stage-rotated so every CSW
    // holds stage-1 links for a quarter of the racks.
    for c in 0..config.clusters {
        for r in 0..config.rsw_per_cluster {
            let rsw = SwitchId(rsw_base + c * config.rsw_per_cluster + r);
            let n = config.csw_per_cluster;
            let mut staged = vec![LinkId(0); n as usize];
            for csw_i in 0..n {
                let csw = SwitchId(csw_base + c * config.csw_per_cluster + csw_i);
                let stage = (csw_i + n - r % n) % n + 1;
                let lid = push_link(
                    &mut links,
                    NodeId::Switch(rsw),
                    NodeId::Switch(csw),
                    config.edge_bandwidth_bps,
                    config.rsw_csw_fiber_m,
                    LinkTier::RswCsw,
                    stage,
                );
                staged[(stage - 1) as usize] = lid;
                switches[csw.0 as usize].downlinks.push(lid);
            }
            switches[rsw.0 as usize].uplinks = staged;
        }
    }

    // CSW uplinks to FCs, same rotation.
    for c in 0..config.clusters {
        for i in 0..config.csw_per_cluster {
            let csw = SwitchId(csw_base + c * config.csw_per_cluster + i);
            let n = config.fc_count;
            let mut staged = vec![LinkId(0); n as usize];
            for f in 0..n {
                let fc = SwitchId(fc_base + f);
                let stage = (f + n - i % n) % n + 1;
                let lid = push_link(
                    &mut links,
                    NodeId::Switch(csw),
                    NodeId::Switch(fc),
                    config.core_bandwidth_bps,
                    config.csw_fc_fiber_m,
                    LinkTier::CswFc,
                    stage,
                );
                staged[(stage - 1) as usize] = lid;
                switches[fc.0 as usize].downlinks.push(lid);
            }
            switches[csw.0 as usize].uplinks = staged;
        }
    }

    let ring_stage = |_cfg: &SiteConfig| if config.gate_ring_links { 1 } else { 0 };

    // CSW rings, one per cluster. A two-switch "ring" gets a single edge.
    for c in 0..config.clusters {
        let n = config.csw_per_cluster;
        if n >= 2 {
            let edges = if n == 2 { 1 } else { n };
            for i in 0..edges {
                let a = SwitchId(csw_base + c * n + i);
                let b = SwitchId(csw_base + c * n + (i + 1) % n);
                for _ in 0..config.csw_ring_multiplicity {
                    let lid = push_link(
                        &mut links,
                        NodeId::Switch(a),
                        NodeId::Switch(b),
                        config.ring_bandwidth_bps,
                        config.ring_fiber_m,
                        LinkTier::CswRing,
                        ring_stage(config),
                    );
                    add_ring(&mut switches, a, b, lid);
                }
            }
        }
    }

    // FC ring.
    {
        let n = config.fc_count;
        if n >= 2 {
            let edges = if n == 2 { 1 } else { n };
            for i in 0..edges {
                let a = SwitchId(fc_base + i);
                let b = SwitchId(fc_base + (i + 1) % n);
                for _ in 0..config.fc_ring_multiplicity {
                    let lid = push_link(
                        &mut links,
                        NodeId::Switch(a),
                        NodeId::Switch(b),
                        config.ring_bandwidth_bps,
                        config.ring_fiber_m,
                        LinkTier::FcRing,
                        ring_stage(config),
                    );
                    add_ring(&mut switches, a, b, lid);
                }
            }
        }
    }

    Ok(Topology {
        config: config.clone(),
        links,
        switches,
        servers,
        rsw_base,
        csw_base,
        fc_base,
    })
}

fn add_ring(switches: &mut [Switch], a: SwitchId, b: SwitchId, lid: LinkId) {
    for (me, peer) in [(a, b), (b, a)] {
        let sw = &mut switches[me.0 as usize];
        match sw.ring.iter_mut().find(|(n, _)| *n == peer) {
            Some((_, v)) => v.push(lid),
            None => sw.ring.push((peer, vec![lid])),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn default_site_counts() {
        let topo = build_site(&SiteConfig::default()).unwrap();
        let rsw = topo.switches.iter().filter(|s| s.kind == SwitchKind::Rsw).count();
        let csw = topo.switches.iter().filter(|s| s.kind == SwitchKind::Csw).count();
        let fc = topo.switches.iter().filter(|s| s.kind == SwitchKind::Fc).count();
        assert_eq!(rsw, 128);
        assert_eq!(csw, 16);
        assert_eq!(fc, 4);
        assert_eq!(topo.servers.len(), 6144);
    }

    #[test]
    fn minimal_site() {
        let cfg = SiteConfig {
            clusters: 1,
            rsw_per_cluster: 2,
            csw_per_cluster: 2,
            fc_count: 1,
            servers_per_rack: 2,
            ..SiteConfig::default()
        };
        let topo = build_site(&cfg).unwrap();
        assert_eq!(topo.servers.len(), 4);
        for sw in topo.switches.iter().filter(|s| s.kind == SwitchKind::Rsw) {
            assert_eq!(sw.max_stage(), 2);
            let stages: Vec<u32> =
                sw.uplinks.iter().map(|l| topo.link(*l).stage_index).collect();
            assert_eq!(stages, vec![1, 2]);
        }
    }

    #[test]
    fn invalid_count_rejected() {
        let cfg = SiteConfig { clusters: 0, ..SiteConfig::default() };
        let err = build_site(&cfg).unwrap_err();
        assert!(err.to_string().contains("clusters"));
    }

    #[test]
    fn link_latency_from_length() {
        assert_eq!(link_latency(20), SimTime::from_ns(100));
        assert_eq!(link_latency(0), SimTime::ZERO);
        assert_eq!(link_latency(100), SimTime::from_ns(500));
    }

    #[test]
    fn stage_links_monotone() {
        let topo = build_site(&SiteConfig::desk()).unwrap();
        let rsw = topo.switch(topo.rsw_id(0, 0));
        for k in 1..rsw.max_stage() {
            let a: HashSet<_> = rsw.stage_links(k).unwrap().iter().collect();
            let b: HashSet<_> = rsw.stage_links(k + 1).unwrap().iter().collect();
            assert!(a.is_subset(&b));
            assert!(a.len() < b.len());
        }
        assert!(rsw.stage_links(0).is_err());
        assert!(rsw.stage_links(rsw.max_stage() + 1).is_err());
    }

    #[test]
    fn rsw_stage_links_match_paper_counts() {
        let topo = build_site(&SiteConfig::default()).unwrap();
        let rsw = topo.switch(topo.rsw_id(0, 0));
        assert_eq!(rsw.stage_links(1).unwrap().len(), 1);
        assert_eq!(rsw.stage_links(4).unwrap().len(), 4);
        assert_eq!(rsw.stage_links(2).unwrap().len(), 2);
    }

    #[test]
    fn oversubscription_ratios() {
        let cfg = SiteConfig::default();
        let topo = build_site(&cfg).unwrap();
        let rsw = topo.switch(topo.rsw_id(0, 0));
        let down: u64 = rsw
            .downlinks
            .iter()
            .map(|l| topo.link(*l).bandwidth_bps)
            .sum();
        let up: u64 = rsw.uplinks.iter().map(|l| topo.link(*l).bandwidth_bps).sum();
        assert_eq!(down / up, 12);

        let csw = topo.switch(topo.csw_id(0, 0));
        let down: u64 = csw
            .downlinks
            .iter()
            .map(|l| topo.link(*l).bandwidth_bps)
            .sum();
        let up: u64 = csw.uplinks.iter().map(|l| topo.link(*l).bandwidth_bps).sum();
        assert_eq!(down, up * 2); // 32x10G down vs 4x40G up: 2:1
    }

    #[test]
    fn ring_link_totals_match_config() {
        let topo = build_site(&SiteConfig::default()).unwrap();
        let csw_ring = topo.links.iter().filter(|l| l.tier == LinkTier::CswRing).count();
        let fc_ring = topo.links.iter().filter(|l| l.tier == LinkTier::FcRing).count();
        assert_eq!(csw_ring, 4 * 8); // 8 ring links per cluster
        assert_eq!(fc_ring, 16);
    }

    /// Stage-1-only connectivity: BFS over always-on + stage-1 links reaches
    /// every node from server 0.
    #[test]
    fn connected_at_minimum_stages() {
        for cfg in [SiteConfig::desk(), SiteConfig::default()] {
            let topo = build_site(&cfg).unwrap();
            let mut adj: std::collections::HashMap<NodeId, Vec<NodeId>> = Default::default();
            for l in &topo.links {
                if l.stage_index <= 1 {
                    adj.entry(l.lower).or_default().push(l.upper);
                    adj.entry(l.upper).or_default().push(l.lower);
                }
            }
            let mut seen = HashSet::new();
            let start = NodeId::Server(ServerId(0));
            let mut queue = vec![start];
            seen.insert(start);
            while let Some(n) = queue.pop() {
                for &m in adj.get(&n).into_iter().flatten() {
                    if seen.insert(m) {
                        queue.push(m);
                    }
                }
            }
            for s in 0..topo.servers.len() {
                assert!(seen.contains(&NodeId::Server(ServerId(s as u32))));
            }
        }
    }
}
