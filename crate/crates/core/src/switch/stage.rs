//! Per-switch stage activation state.
//!
//! Stage 1 is pinned Active forever; higher stages walk
//! Idle -> Activating -> Active -> Draining -> Deactivating -> Idle, with a
//! Draining stage restorable to Active when traffic returns before the
//! disable notification went out.

use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Idle,
    /// Waiting for the local transceiver and the peer acknowledgement.
    Activating { laser_ready: bool, ack_received: bool },
    Active,
    /// Excluded from scheduling; queue still serving its backlog.
    Draining,
    /// Disable notification sent; waiting for the peer ack.
    Deactivating,
}

#[derive(Debug, Clone)]
pub struct StageState {
    active_stage: u32,
    /// Status per stage, 1-based (`statuses[0]` is stage 1).
    statuses: Vec<StageStatus>,
    pub last_transition: SimTime,
}

impl StageState {
    pub fn new(max_stage: u32) -> Self {
        let max = max_stage.max(1) as usize;
        let mut statuses = vec![StageStatus::Idle; max];
        statuses[0] = StageStatus::Active;
        StageState { active_stage: 1, statuses, last_transition: SimTime::ZERO }
    }

    /// All stages up, for always-on baseline runs.
    pub fn all_active(max_stage: u32) -> Self {
        let max = max_stage.max(1);
        StageState {
            active_stage: max,
            statuses: vec![StageStatus::Active; max as usize],
            last_transition: SimTime::ZERO,
        }
    }

    pub fn max_stage(&self) -> u32 {
        self.statuses.len() as u32
    }

    pub fn active_stage(&self) -> u32 {
        self.active_stage
    }

    pub fn status(&self, k: u32) -> StageStatus {
        self.statuses[(k - 1) as usize]
    }

    pub fn set_status(&mut self, k: u32, status: StageStatus, t: SimTime) {
        assert!(k >= 2, "stage 1 never changes status");
        self.statuses[(k - 1) as usize] = status;
        self.last_transition = t;
    }

    pub fn promote(&mut self, k: u32, t: SimTime) {
        assert_eq!(k, self.active_stage + 1, "stage changes are strictly +-1");
        self.set_status(k, StageStatus::Active, t);
        self.active_stage = k;
    }

    pub fn demote(&mut self, k: u32, t: SimTime) {
        assert_eq!(k, self.active_stage, "only the top stage deactivates");
        assert!(k >= 2);
        self.set_status(k, StageStatus::Idle, t);
        self.active_stage = k - 1;
    }

    /// True when stage `k` may carry data.
    pub fn stage_usable(&self, k: u32) -> bool {
        k >= 1 && k <= self.max_stage() && self.status(k) == StageStatus::Active
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_at_stage_one() {
        let s = StageState::new(4);
        assert_eq!(s.active_stage(), 1);
        assert_eq!(s.status(1), StageStatus::Active);
        assert_eq!(s.status(2), StageStatus::Idle);
        assert!(s.stage_usable(1));
        assert!(!s.stage_usable(2));
    }

    #[test]
    fn promote_and_demote_walk_by_one() {
        let mut s = StageState::new(4);
        s.set_status(2, StageStatus::Activating { laser_ready: false, ack_received: false },
            SimTime::ZERO);
        s.promote(2, SimTime::from_us(1));
        assert_eq!(s.active_stage(), 2);
        assert_eq!(s.last_transition, SimTime::from_us(1));
        s.set_status(2, StageStatus::Draining, SimTime::from_us(2));
        assert!(!s.stage_usable(2));
        s.set_status(2, StageStatus::Deactivating, SimTime::from_us(3));
        s.demote(2, SimTime::from_us(4));
        assert_eq!(s.active_stage(), 1);
    }

    #[test]
    #[should_panic]
    fn promote_must_be_adjacent() {
        let mut s = StageState::new(4);
        s.promote(3, SimTime::ZERO);
    }
}
