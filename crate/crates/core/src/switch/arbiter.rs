//! Ingress arbitration: round-robin over physical input ports, with the
//! virtual port (locally generated control frames) polled out of order so
//! stage-change notifications never wait behind data.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArbiterChoice {
    /// Serve the virtual control-packet port.
    Virtual,
    /// Serve physical input port `i`.
    Physical(usize),
}

#[derive(Debug, Clone)]
pub struct RoundRobinArbiter {
    ports: usize,
    last_served: usize,
}

impl RoundRobinArbiter {
    pub fn new(ports: usize) -> Self {
        RoundRobinArbiter { ports, last_served: ports.saturating_sub(1) }
    }

    /// Picks the next input to serve. The virtual port wins whenever it has
    /// a pending frame; otherwise physical ports are polled round-robin
    /// starting after the last one served.
    pub fn next(&mut self, virtual_pending: bool, pending: &[bool]) -> Option<ArbiterChoice> {
        assert_eq!(pending.len(), self.ports);
        if virtual_pending {
            return Some(ArbiterChoice::Virtual);
        }
        for offset in 1..=self.ports {
            let i = (self.last_served + offset) % self.ports;
            if pending[i] {
                self.last_served = i;
                return Some(ArbiterChoice::Physical(i));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_port_served_first() {
        let mut arb = RoundRobinArbiter::new(4);
        let pending = [true, true, true, true];
        assert_eq!(arb.next(true, &pending), Some(ArbiterChoice::Virtual));
        // Virtual service does not advance the round-robin pointer.
        assert_eq!(arb.next(false, &pending), Some(ArbiterChoice::Physical(0)));
    }

    #[test]
    fn round_robin_continues_after_last_served() {
        let mut arb = RoundRobinArbiter::new(2);
        assert_eq!(arb.next(false, &[true, true]), Some(ArbiterChoice::Physical(0)));
        assert_eq!(arb.next(false, &[true, true]), Some(ArbiterChoice::Physical(1)));
        assert_eq!(arb.next(false, &[true, true]), Some(ArbiterChoice::Physical(0)));
    }

    #[test]
    fn only_pending_port_served() {
        let mut arb = RoundRobinArbiter::new(4);
        assert_eq!(
            arb.next(false, &[false, false, false, true]),
            Some(ArbiterChoice::Physical(3))
        );
        assert_eq!(arb.next(false, &[false; 4]), None);
    }
}
