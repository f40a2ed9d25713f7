//! Simulation time in integer picoseconds.
//!
//! Integer picoseconds keep every timing constant in the model exact: the
//! 5.906 ns switch cycle, the 5.8 ns trigger delay, serialization times on
//! 10G/40G links, and the microsecond-scale laser delays are all whole
//! numbers of picoseconds, so there is no floating-point drift anywhere in
//! the event kernel.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// Picosecond-resolution timestamp, counted from simulation start.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

pub const PS_PER_NS: u64 = 1_000;
pub const PS_PER_US: u64 = 1_000_000;
pub const PS_PER_MS: u64 = 1_000_000_000;
pub const PS_PER_S: u64 = 1_000_000_000_000;

/// One switch clock cycle at 169.32 MHz, rounded to the picosecond.
pub const SWITCH_CYCLE: SimTime = SimTime(5_906);
/// Data packets traverse the 7-cycle switch pipeline before reaching an
/// output queue.
pub const SWITCH_PIPELINE: SimTime = SimTime(7 * 5_906);
/// Control frames are parsed after 2 cycles; the measured figure is 12.8 ns.
pub const CONTROL_PARSE: SimTime = SimTime(12_800);
/// Backlog watermark violations reach the stage-enable logic within a cycle.
pub const STAGE_TRIGGER_DELAY: SimTime = SimTime(5_800);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ps(ps: u64) -> SimTime {
        SimTime(ps)
    }
    pub const fn from_ns(ns: u64) -> SimTime {
        SimTime(ns * PS_PER_NS)
    }
    pub const fn from_us(us: u64) -> SimTime {
        SimTime(us * PS_PER_US)
    }
    pub const fn from_ms(ms: u64) -> SimTime {
        SimTime(ms * PS_PER_MS)
    }

    /// Seconds as f64, for reporting only. Never feeds back into the model.
    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / PS_PER_S as f64
    }

    pub fn as_ps(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    /// Time to serialize `bytes` onto a link of `bits_per_sec`, rounded up to
    /// the next picosecond.
    pub fn serialization(bytes: u64, bits_per_sec: u64) -> SimTime {
        debug_assert!(bits_per_sec > 0);
        let bits = bytes as u128 * 8;
        let ps = (bits * PS_PER_S as u128).div_ceil(bits_per_sec as u128);
        SimTime(ps as u64)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 >= PS_PER_MS {
            write!(f, "{:.3}ms", self.0 as f64 / PS_PER_MS as f64)
        } else if self.0 >= PS_PER_US {
            write!(f, "{:.3}us", self.0 as f64 / PS_PER_US as f64)
        } else if self.0 >= PS_PER_NS {
            write!(f, "{:.3}ns", self.0 as f64 / PS_PER_NS as f64)
        } else {
            write!(f, "{}ps", self.0)
        }
    }
}
