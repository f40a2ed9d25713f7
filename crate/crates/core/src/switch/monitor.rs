//! Queue-backlog watermark monitor driving stage up/down triggers.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageTrigger {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct WatermarkConfig {
    /// Output queue capacity, MTU-sized packets per port.
    pub queue_capacity: usize,
    /// Stage-up threshold as a fraction of capacity.
    pub high_watermark: f64,
    /// Stage-down threshold as a fraction of capacity.
    pub low_watermark: f64,
}

impl Default for WatermarkConfig {
    fn default() -> Self {
        WatermarkConfig { queue_capacity: 128, high_watermark: 0.75, low_watermark: 0.22 }
    }
}

impl WatermarkConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.queue_capacity == 0 {
            return Err("queue_capacity must be >= 1".into());
        }
        if !(0.0 <= self.low_watermark
            && self.low_watermark < self.high_watermark
            && self.high_watermark <= 1.0)
        {
            return Err(format!(
                "watermarks must satisfy 0 <= low < high <= 1, got low={} high={}",
                self.low_watermark, self.high_watermark
            ));
        }
        Ok(())
    }
}

/// Evaluates the watermark rules over the active uplink queue depths.
///
/// Stage up: any active-uplink queue strictly above `high * capacity` while
/// more stages remain. Stage down: every active-uplink queue strictly below
/// `low * capacity` while above stage 1 and the hold-down period has passed.
/// The band between the watermarks is the hysteresis region: no trigger.
pub fn monitor_backlogs(
    cfg: &WatermarkConfig,
    active_uplink_depths: &[usize],
    active_stage: u32,
    max_stage: u32,
    holddown_expired: bool,
) -> Option<StageTrigger> {
    let cap = cfg.queue_capacity as f64;
    let high = cfg.high_watermark * cap;
    let low = cfg.low_watermark * cap;
    if active_stage < max_stage && active_uplink_depths.iter().any(|&d| d as f64 > high) {
        return Some(StageTrigger::Up);
    }
    if active_stage > 1
        && holddown_expired
        && active_uplink_depths.iter().all(|&d| (d as f64) < low)
    {
        return Some(StageTrigger::Down);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg100() -> WatermarkConfig {
        WatermarkConfig { queue_capacity: 100, ..WatermarkConfig::default() }
    }

    #[test]
    fn high_watermark_triggers_stage_up() {
        assert_eq!(
            monitor_backlogs(&cfg100(), &[76], 1, 4, true),
            Some(StageTrigger::Up)
        );
        // 75 is not strictly above the 75% watermark.
        assert_eq!(monitor_backlogs(&cfg100(), &[75], 1, 4, true), None);
        // No headroom at max stage.
        assert_eq!(monitor_backlogs(&cfg100(), &[99], 4, 4, false), None);
    }

    #[test]
    fn low_watermark_triggers_stage_down() {
        assert_eq!(
            monitor_backlogs(&cfg100(), &[21, 0], 2, 4, true),
            Some(StageTrigger::Down)
        );
        assert_eq!(monitor_backlogs(&cfg100(), &[22, 0], 2, 4, true), None);
        // Hold-down still running.
        assert_eq!(monitor_backlogs(&cfg100(), &[0, 0], 2, 4, false), None);
        // Stage 1 never deactivates.
        assert_eq!(monitor_backlogs(&cfg100(), &[0], 1, 4, true), None);
    }

    #[test]
    fn hysteresis_band_is_quiet() {
        assert_eq!(monitor_backlogs(&cfg100(), &[50], 1, 4, true), None);
        assert_eq!(monitor_backlogs(&cfg100(), &[50, 30], 2, 4, true), None);
    }

    #[test]
    fn watermark_validation() {
        assert!(WatermarkConfig::default().validate().is_ok());
        let bad = WatermarkConfig { low_watermark: 0.8, ..WatermarkConfig::default() };
        assert!(bad.validate().is_err());
    }
}
