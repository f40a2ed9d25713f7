//! CAM forwarding tables: destination MAC to logical port, and per-stage
//! logical port to one-hot maps of permitted physical output ports.
//!
//! A logical port is the deployment-unique id of the destination switch. The
//! per-stage maps are programmed at topology build time; the scheduler picks
//! the map of the currently enabled stage.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::control::Mac;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogicalPort(pub u16);

/// The annotation flit attached to a packet after the lookup stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Annotation {
    pub logical: LogicalPort,
    pub multicast: bool,
}

#[derive(Debug, Clone, Default)]
pub struct CamTables {
    logical: HashMap<Mac, (LogicalPort, bool)>,
    /// Exact-match delivery ports for directly attached servers.
    local: HashMap<Mac, usize>,
    /// `stage_maps[k-1][logical]` is the one-hot output map at stage k.
    stage_maps: Vec<HashMap<LogicalPort, u64>>,
}

impl CamTables {
    pub fn new(max_stage: u32) -> Self {
        CamTables {
            logical: HashMap::new(),
            local: HashMap::new(),
            stage_maps: vec![HashMap::new(); max_stage.max(1) as usize],
        }
    }

    pub fn program_logical(&mut self, mac: Mac, logical: LogicalPort, multicast: bool) {
        self.logical.insert(mac, (logical, multicast));
    }

    pub fn program_local(&mut self, mac: Mac, port: usize) {
        self.local.insert(mac, port);
    }

    /// Sets the permitted output map for `logical` at stage `k` (1-based).
    pub fn program_stage_map(&mut self, k: u32, logical: LogicalPort, map: u64) {
        self.stage_maps[(k - 1) as usize].insert(logical, map);
    }

    /// Convenience: program the same map across all stages.
    pub fn program_all_stages(&mut self, logical: LogicalPort, map: u64) {
        for k in 1..=self.stage_maps.len() as u32 {
            self.program_stage_map(k, logical, map);
        }
    }

    /// Lookup stage: MAC to logical port + multicast bit. A miss means the
    /// control plane never programmed this destination; the caller drops and
    /// counts the packet.
    pub fn lookup_logical(&self, mac: Mac) -> Option<Annotation> {
        self.logical
            .get(&mac)
            .map(|&(logical, multicast)| Annotation { logical, multicast })
    }

    pub fn local_port(&self, mac: Mac) -> Option<usize> {
        self.local.get(&mac).copied()
    }

    pub fn stage_map(&self, k: u32, logical: LogicalPort) -> Option<u64> {
        self.stage_maps.get((k - 1) as usize)?.get(&logical).copied()
    }

    pub fn max_stage(&self) -> u32 {
        self.stage_maps.len() as u32
    }

    /// Checks the growth invariant: higher stages never remove options.
    #[cfg(test)]
    pub fn stage_maps_monotone(&self) -> bool {
        for w in self.stage_maps.windows(2) {
            for (logical, &map) in &w[0] {
                if let Some(&next) = w[1].get(logical) {
                    if map & !next != 0 {
                        return false;
                    }
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::ServerId;

    #[test]
    fn lookup_and_miss() {
        let mut cam = CamTables::new(4);
        let mac = Mac::for_server(ServerId(17));
        cam.program_logical(mac, LogicalPort(3), false);
        assert_eq!(
            cam.lookup_logical(mac),
            Some(Annotation { logical: LogicalPort(3), multicast: false })
        );
        assert_eq!(cam.lookup_logical(Mac::for_server(ServerId(99))), None);
    }

    #[test]
    fn multicast_bit_set() {
        let mut cam = CamTables::new(2);
        let group = Mac([0x01, 0x00, 0x5e, 0, 0, 1]);
        cam.program_logical(group, LogicalPort(0x800), true);
        assert!(cam.lookup_logical(group).unwrap().multicast);
    }

    #[test]
    fn stage_map_growth() {
        let mut cam = CamTables::new(4);
        let l = LogicalPort(1);
        for k in 1..=4u32 {
            cam.program_stage_map(k, l, (1u64 << k) - 1);
        }
        assert!(cam.stage_maps_monotone());
        assert_eq!(cam.stage_map(1, l), Some(0b1));
        assert_eq!(cam.stage_map(4, l), Some(0b1111));
    }
}
