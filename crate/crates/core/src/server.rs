//! Server-side model: the send-path interception pipeline, NIC laser policy
//! parameters, and flow-to-packet decomposition.
//!
//! The send pipeline hides the egress laser turn-on: the kernel raises the
//! laser the moment a send is intercepted, and by the time the payload has
//! crossed the 3.2 us syscall/DMA path the 1 us turn-on is long finished. The
//! laser then idles on until `nic_idle_timeout` passes with nothing to send.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;
use crate::transceiver::TransceiverParams;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct NodePipelineParams {
    /// Send-path latency from interception to first byte at the NIC.
    pub pipeline_delay: SimTime,
    /// Egress laser powers off after this long with an empty NIC queue.
    pub nic_idle_timeout: SimTime,
    /// Payload bytes per packet.
    pub mtu: u64,
}

impl Default for NodePipelineParams {
    fn default() -> Self {
        NodePipelineParams {
            pipeline_delay: SimTime::from_ns(3_200),
            nic_idle_timeout: SimTime::from_us(100),
            mtu: 1_500,
        }
    }
}

impl NodePipelineParams {
    /// Alternate preset for hosts with the slower measured send path.
    pub fn slow_path() -> Self {
        NodePipelineParams { pipeline_delay: SimTime::from_ns(3_750), ..Default::default() }
    }

    /// When a flow is intercepted at `arrival`, its first packet is ready at
    /// the NIC after the pipeline delay.
    pub fn ready_time(&self, arrival: SimTime) -> SimTime {
        arrival + self.pipeline_delay
    }

    /// The turn-on penalty visible to a flow that finds the laser off: zero
    /// whenever the pipeline is at least as long as the laser turn-on.
    pub fn turn_on_penalty(&self, laser: &TransceiverParams) -> SimTime {
        laser.turn_on_delay.saturating_sub(self.pipeline_delay)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("zero-size flow rejected")]
    ZeroSize,
}

/// Splits a flow into MTU-sized packet payloads; the last packet carries the
/// remainder.
pub fn flow_to_packets(size_bytes: u64, mtu: u64) -> Result<Vec<u64>, FlowError> {
    assert!(mtu >= 1);
    if size_bytes == 0 {
        return Err(FlowError::ZeroSize);
    }
    let full = (size_bytes / mtu) as usize;
    let rem = size_bytes % mtu;
    let mut sizes = vec![mtu; full];
    if rem > 0 {
        sizes.push(rem);
    }
    Ok(sizes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packetization_rounds_up() {
        assert_eq!(flow_to_packets(1, 1500).unwrap(), vec![1]);
        assert_eq!(flow_to_packets(1500, 1500).unwrap(), vec![1500]);
        assert_eq!(flow_to_packets(1501, 1500).unwrap(), vec![1500, 1]);
        assert_eq!(flow_to_packets(4000, 1500).unwrap(), vec![1500, 1500, 1000]);
        assert_eq!(flow_to_packets(0, 1500), Err(FlowError::ZeroSize));
    }

    #[test]
    fn pipeline_hides_laser_turn_on() {
        let p = NodePipelineParams::default();
        let laser = TransceiverParams::default();
        // 3.2 us pipeline vs 1 us turn-on: no visible penalty.
        assert_eq!(p.turn_on_penalty(&laser), SimTime::ZERO);
        assert_eq!(p.ready_time(SimTime::from_us(10)), SimTime::from_ps(13_200_000));

        // A hypothetical slow laser would poke out by the difference.
        let slow = TransceiverParams { turn_on_delay: SimTime::from_us(5), ..laser };
        assert_eq!(p.turn_on_penalty(&slow), SimTime::from_ns(1_800));
    }
}
