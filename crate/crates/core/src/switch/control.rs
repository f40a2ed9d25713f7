//! Bit-exact codec for the in-band stage control frame.
//!
//! Wire layout, big-endian, padded to the 64-byte minimum Ethernet frame:
//!
//! ```text
//! offset 0..6    dst MAC
//! offset 6..12   src MAC
//! offset 12..14  ethertype 0x9100
//! offset 14..18  sender id (originating switch)
//! offset 18..20  stage id: top 4 bits opcode, low 12 bits stage number
//! offset 20..22  TTL (remaining switching layers)
//! offset 22..64  zero padding
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::ServerId;

pub const CONTROL_ETHERTYPE: u16 = 0x9100;
pub const CONTROL_FRAME_LEN: usize = 64;
/// Initial hop budget: one per switching tier.
pub const CONTROL_TTL: u16 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mac(pub [u8; 6]);

impl Mac {
    /// Locally-administered unicast address derived from the server id.
    pub fn for_server(s: ServerId) -> Mac {
        let b = s.0.to_be_bytes();
        Mac([0x02, 0x00, b[0], b[1], b[2], b[3]])
    }

    /// Address used for control frames addressed at a switch.
    pub fn for_switch(id: u32) -> Mac {
        let b = id.to_be_bytes();
        Mac([0x02, 0x10, b[0], b[1], b[2], b[3]])
    }

    pub const BROADCAST: Mac = Mac([0xff; 6]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Opcode {
    Enable = 0,
    Disable = 1,
    AckEnable = 2,
    AckDisable = 3,
}

impl Opcode {
    fn from_nibble(v: u8) -> Option<Opcode> {
        match v {
            0 => Some(Opcode::Enable),
            1 => Some(Opcode::Disable),
            2 => Some(Opcode::AckEnable),
            3 => Some(Opcode::AckDisable),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ControlFrame {
    pub dst_mac: Mac,
    pub src_mac: Mac,
    pub sender_id: u32,
    pub opcode: Opcode,
    /// Stage number, 12 bits.
    pub stage: u16,
    pub ttl: u16,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("frame length {0} != 64 bytes")]
    Malformed(usize),
    #[error("ethertype {0:#06x} is not an LCDC control frame")]
    NotControl(u16),
    #[error("unknown control opcode {0}")]
    UnknownOpcode(u8),
    #[error("stage {0} exceeds the 12-bit field")]
    StageOverflow(u16),
}

pub fn encode_control(frame: &ControlFrame) -> Result<[u8; CONTROL_FRAME_LEN], CodecError> {
    if frame.stage > 0x0fff {
        return Err(CodecError::StageOverflow(frame.stage));
    }
    let mut buf = [0u8; CONTROL_FRAME_LEN];
    buf[0..6].copy_from_slice(&frame.dst_mac.0);
    buf[6..12].copy_from_slice(&frame.src_mac.0);
    buf[12..14].copy_from_slice(&CONTROL_ETHERTYPE.to_be_bytes());
    buf[14..18].copy_from_slice(&frame.sender_id.to_be_bytes());
    let stage_id = ((frame.opcode as u16) << 12) | frame.stage;
    buf[18..20].copy_from_slice(&stage_id.to_be_bytes());
    buf[20..22].copy_from_slice(&frame.ttl.to_be_bytes());
    Ok(buf)
}

pub fn decode_control(bytes: &[u8]) -> Result<ControlFrame, CodecError> {
    if bytes.len() != CONTROL_FRAME_LEN {
        return Err(CodecError::Malformed(bytes.len()));
    }
    let ethertype = u16::from_be_bytes([bytes[12], bytes[13]]);
    if ethertype != CONTROL_ETHERTYPE {
        return Err(CodecError::NotControl(ethertype));
    }
    let stage_id = u16::from_be_bytes([bytes[18], bytes[19]]);
    let opcode = Opcode::from_nibble((stage_id >> 12) as u8)
        .ok_or(CodecError::UnknownOpcode((stage_id >> 12) as u8))?;
    Ok(ControlFrame {
        dst_mac: Mac(bytes[0..6].try_into().unwrap()),
        src_mac: Mac(bytes[6..12].try_into().unwrap()),
        sender_id: u32::from_be_bytes(bytes[14..18].try_into().unwrap()),
        opcode,
        stage: stage_id & 0x0fff,
        ttl: u16::from_be_bytes([bytes[20], bytes[21]]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Hand-derived byte layout for "enable stage 2, ttl 3, sender 0xA".
    #[test]
    fn golden_enable_stage2() {
        let frame = ControlFrame {
            dst_mac: Mac::BROADCAST,
            src_mac: Mac::for_switch(0x0A),
            sender_id: 0x0000_000A,
            opcode: Opcode::Enable,
            stage: 2,
            ttl: 3,
        };
        let bytes = encode_control(&frame).unwrap();
        assert_eq!(bytes.len(), 64);
        assert_eq!(&bytes[12..14], &[0x91, 0x00]);
        assert_eq!(&bytes[14..18], &[0x00, 0x00, 0x00, 0x0A]);
        assert_eq!(&bytes[18..20], &[0x00, 0x02]);
        assert_eq!(&bytes[20..22], &[0x00, 0x03]);
        assert!(bytes[22..].iter().all(|&b| b == 0));
        assert_eq!(decode_control(&bytes).unwrap(), frame);
    }

    #[test]
    fn short_frame_is_malformed() {
        assert_eq!(decode_control(&[0u8; 63]), Err(CodecError::Malformed(63)));
        assert_eq!(decode_control(&[0u8; 65]), Err(CodecError::Malformed(65)));
    }

    #[test]
    fn wrong_ethertype_is_not_control() {
        let mut buf = [0u8; 64];
        buf[12] = 0x08; // 0x0800, plain IPv4
        assert_eq!(decode_control(&buf), Err(CodecError::NotControl(0x0800)));
    }

    #[test]
    fn ack_opcodes_round_trip() {
        for opcode in [Opcode::Enable, Opcode::Disable, Opcode::AckEnable, Opcode::AckDisable] {
            let f = ControlFrame {
                dst_mac: Mac::for_switch(7),
                src_mac: Mac::for_switch(9),
                sender_id: 9,
                opcode,
                stage: 4,
                ttl: 1,
            };
            assert_eq!(decode_control(&encode_control(&f).unwrap()).unwrap(), f);
        }
    }

    #[test]
    fn stage_overflow_rejected() {
        let f = ControlFrame {
            dst_mac: Mac::BROADCAST,
            src_mac: Mac::BROADCAST,
            sender_id: 0,
            opcode: Opcode::Enable,
            stage: 0x1000,
            ttl: 0,
        };
        assert_eq!(encode_control(&f), Err(CodecError::StageOverflow(0x1000)));
    }

    fn arb_frame() -> impl Strategy<Value = ControlFrame> {
        (
            any::<[u8; 6]>(),
            any::<[u8; 6]>(),
            any::<u32>(),
            0u8..4,
            0u16..0x1000,
            any::<u16>(),
        )
            .prop_map(|(d, s, sender, op, stage, ttl)| ControlFrame {
                dst_mac: Mac(d),
                src_mac: Mac(s),
                sender_id: sender,
                opcode: Opcode::from_nibble(op).unwrap(),
                stage,
                ttl,
            })
    }

    proptest! {
        #[test]
        fn round_trip_identity(f in arb_frame()) {
            let bytes = encode_control(&f).unwrap();
            prop_assert_eq!(bytes.len(), CONTROL_FRAME_LEN);
            prop_assert_eq!(decode_control(&bytes).unwrap(), f);
        }
    }
}
