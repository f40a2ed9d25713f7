//! The LCDC switch model: control-frame codec, CAM tables, ingress
//! arbitration, min-backlog output scheduling, backlog watermark monitor and
//! the stage activation state machine. The event-driven wiring between these
//! pieces lives in [`crate::engine`].

pub mod arbiter;
pub mod cam;
pub mod control;
pub mod monitor;
pub mod scheduler;
pub mod stage;

use control::ControlFrame;

/// What a switch does with a received control frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControlAction {
    /// Our own frame came back around: no stage action (the local transition
    /// was initiated before the frame was generated); keep forwarding it.
    ForwardLocal,
    /// Remote frame: raise the stage notification, then flood the copy with
    /// the decremented TTL (or drop it when the hop budget is spent).
    Apply { notification: ControlFrame, forward: Option<ControlFrame> },
}

/// TTL / local-sender handling for a decoded control frame.
pub fn process_control(frame: &ControlFrame, local_sender_id: u32) -> ControlAction {
    if frame.sender_id == local_sender_id {
        return ControlAction::ForwardLocal;
    }
    let forward = if frame.ttl > 1 {
        Some(ControlFrame { ttl: frame.ttl - 1, ..*frame })
    } else {
        None
    };
    ControlAction::Apply { notification: *frame, forward }
}

#[cfg(test)]
mod tests {
    use super::control::{Mac, Opcode};
    use super::*;

    fn frame(sender: u32, ttl: u16) -> ControlFrame {
        ControlFrame {
            dst_mac: Mac::BROADCAST,
            src_mac: Mac::for_switch(sender),
            sender_id: sender,
            opcode: Opcode::Enable,
            stage: 2,
            ttl,
        }
    }

    #[test]
    fn remote_frame_applied_and_forwarded_with_decremented_ttl() {
        match process_control(&frame(7, 3), 1) {
            ControlAction::Apply { notification, forward } => {
                assert_eq!(notification.stage, 2);
                assert_eq!(forward.unwrap().ttl, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ttl_one_still_notifies_but_drops() {
        match process_control(&frame(7, 1), 1) {
            ControlAction::Apply { notification, forward } => {
                assert_eq!(notification.sender_id, 7);
                assert!(forward.is_none());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn local_sender_forwards_unchanged() {
        assert_eq!(process_control(&frame(7, 3), 7), ControlAction::ForwardLocal);
    }
}
