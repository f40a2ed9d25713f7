//! Laser/transceiver power state machine with turn-on/turn-off delays and an
//! energy ledger.
//!
//! The ledger is conservative: transition intervals (TurningOn, TurningOff)
//! are charged at full active power, so reported savings never overstate what
//! the hardware could deliver.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TransceiverParams {
    pub turn_on_delay: SimTime,
    pub turn_off_delay: SimTime,
    pub power_on_w: f64,
    pub power_off_w: f64,
}

impl Default for TransceiverParams {
    /// MRV SFPFC401-style 10G SFP+: 1 us on, 10 us off, 1 W active.
    fn default() -> Self {
        TransceiverParams {
            turn_on_delay: SimTime::from_us(1),
            turn_off_delay: SimTime::from_us(10),
            power_on_w: 1.0,
            power_off_w: 0.0,
        }
    }
}

impl TransceiverParams {
    /// 40G QSFP at 2.4 W, same timing.
    pub fn qsfp_40g() -> Self {
        TransceiverParams { power_on_w: 2.4, ..TransceiverParams::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Off,
    TurningOn { ready_at: SimTime },
    On,
    TurningOff { done_at: SimTime },
}

impl Mode {
    fn is_powered(self) -> bool {
        !matches!(self, Mode::Off)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransceiverError {
    #[error("request_off while not On (mode {mode}) at t={at}: link was never fully activated")]
    OffWhileNotOn { mode: &'static str, at: SimTime },
}

/// One laser endpoint. Transitions are applied lazily: `advance_to` folds
/// any elapsed TurningOn/TurningOff completion into the state before a
/// query or a new request is handled.
#[derive(Debug, Clone)]
pub struct TransceiverState {
    pub params: TransceiverParams,
    mode: Mode,
    last_transition: SimTime,
    /// (time, powered) history for windowed energy queries.
    history: Vec<(SimTime, bool)>,
    energy_on_j: f64,
    energy_off_j: f64,
}

impl TransceiverState {
    pub fn new(params: TransceiverParams, initially_on: bool) -> Self {
        let mode = if initially_on { Mode::On } else { Mode::Off };
        TransceiverState {
            params,
            mode,
            last_transition: SimTime::ZERO,
            history: vec![(SimTime::ZERO, mode.is_powered())],
            energy_on_j: 0.0,
            energy_off_j: 0.0,
        }
    }

    pub fn mode_at(&mut self, t: SimTime) -> Mode {
        self.advance_to(t);
        self.mode
    }

    pub fn is_on_at(&mut self, t: SimTime) -> bool {
        matches!(self.mode_at(t), Mode::On)
    }

    fn set_mode(&mut self, t: SimTime, mode: Mode) {
        let was = self.mode.is_powered();
        let dt = (t - self.last_transition).as_secs_f64();
        if was {
            self.energy_on_j += self.params.power_on_w * dt;
        } else {
            self.energy_off_j += self.params.power_off_w * dt;
        }
        self.last_transition = t;
        self.mode = mode;
        if mode.is_powered() != was {
            self.history.push((t, mode.is_powered()));
        }
    }

    fn advance_to(&mut self, t: SimTime) {
        debug_assert!(t >= self.last_transition, "time moved backwards");
        match self.mode {
            Mode::TurningOn { ready_at } if t >= ready_at => self.set_mode(ready_at, Mode::On),
            Mode::TurningOff { done_at } if t >= done_at => self.set_mode(done_at, Mode::Off),
            _ => {}
        }
    }

    /// Asks the laser to come up. Returns the time it will be (or already
    /// was) usable. Idempotent when already On or TurningOn; a TurningOff in
    /// progress is aborted and the full turn-on delay restarts from `t`.
    pub fn request_on(&mut self, t: SimTime) -> SimTime {
        self.advance_to(t);
        match self.mode {
            Mode::On => t,
            Mode::TurningOn { ready_at } => ready_at,
            Mode::Off | Mode::TurningOff { .. } => {
                let ready_at = t + self.params.turn_on_delay;
                self.set_mode(t, Mode::TurningOn { ready_at });
                ready_at
            }
        }
    }

    /// Starts powering down. Only legal from On: the gating protocol never
    /// powers off a link it has not finished activating.
    pub fn request_off(&mut self, t: SimTime) -> Result<SimTime, TransceiverError> {
        self.advance_to(t);
        match self.mode {
            Mode::On => {
                let done_at = t + self.params.turn_off_delay;
                self.set_mode(t, Mode::TurningOff { done_at });
                Ok(done_at)
            }
            mode => Err(TransceiverError::OffWhileNotOn {
                mode: match mode {
                    Mode::Off => "Off",
                    Mode::TurningOn { .. } => "TurningOn",
                    Mode::TurningOff { .. } => "TurningOff",
                    Mode::On => unreachable!(),
                },
                at: t,
            }),
        }
    }

    /// Closes the ledger at `t_end` and returns total joules consumed.
    pub fn finalize(&mut self, t_end: SimTime) -> f64 {
        self.advance_to(t_end);
        self.set_mode(t_end, self.mode);
        self.energy_on_j + self.energy_off_j
    }

    /// Joules consumed in `[t0, t1]`, integrating the recorded power trace.
    /// Valid for windows that end at or before the last observed time.
    pub fn energy_in(&self, t0: SimTime, t1: SimTime) -> f64 {
        assert!(t0 <= t1);
        let mut total = 0.0;
        for (i, &(start, powered)) in self.history.iter().enumerate() {
            let end = self
                .history
                .get(i + 1)
                .map(|&(t, _)| t)
                .unwrap_or(SimTime::MAX);
            let s = start.max(t0);
            let e = end.min(t1);
            if s < e {
                let p = if powered { self.params.power_on_w } else { self.params.power_off_w };
                total += p * (e - s).as_secs_f64();
            }
        }
        total
    }

    /// Total time spent powered (On or transitioning) up to the last
    /// finalize point, in picoseconds.
    pub fn powered_time(&self, t_end: SimTime) -> SimTime {
        let mut total = SimTime::ZERO;
        for (i, &(start, powered)) in self.history.iter().enumerate() {
            if !powered {
                continue;
            }
            let end = self
                .history
                .get(i + 1)
                .map(|&(t, _)| t)
                .unwrap_or(t_end)
                .min(t_end);
            if end > start {
                total += end - start;
            }
        }
        total
    }

    pub fn history(&self) -> &[(SimTime, bool)] {
        &self.history
    }
}
