//! Run statistics: latency distributions, packet conservation counters, and
//! per-link activation timelines.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::time::SimTime;
use crate::topology::LinkId;

/// Latency distribution over a geometric histogram with ~1% bucket width,
/// plus exact count/sum/min/max. Percentiles come back as the upper edge of
/// the holding bucket, so they are accurate to about one percent.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LatencyStats {
    buckets: HashMap<u32, u64>,
    count: u64,
    sum_ps: u128,
    min_ps: u64,
    max_ps: u64,
}

const BUCKET_BASE: f64 = 1.01;

fn bucket_of(ps: u64) -> u32 {
    if ps <= 1 {
        return 0;
    }
    ((ps as f64).ln() / BUCKET_BASE.ln()).floor() as u32
}

fn bucket_upper(b: u32) -> u64 {
    BUCKET_BASE.powi(b as i32 + 1) as u64
}

impl LatencyStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, latency: SimTime) {
        let ps = latency.as_ps();
        *self.buckets.entry(bucket_of(ps)).or_insert(0) += 1;
        if self.count == 0 {
            self.min_ps = ps;
            self.max_ps = ps;
        } else {
            self.min_ps = self.min_ps.min(ps);
            self.max_ps = self.max_ps.max(ps);
        }
        self.count += 1;
        self.sum_ps += ps as u128;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Option<SimTime> {
        if self.count == 0 {
            return None;
        }
        Some(SimTime::from_ps((self.sum_ps / self.count as u128) as u64))
    }

    pub fn min(&self) -> Option<SimTime> {
        (self.count > 0).then_some(SimTime::from_ps(self.min_ps))
    }
    pub fn max(&self) -> Option<SimTime> {
        (self.count > 0).then_some(SimTime::from_ps(self.max_ps))
    }

    /// `q` in (0, 1]; e.g. 0.99 for p99.
    pub fn quantile(&self, q: f64) -> Option<SimTime> {
        assert!(q > 0.0 && q <= 1.0);
        if self.count == 0 {
            return None;
        }
        let rank = (q * self.count as f64).ceil() as u64;
        let mut ids: Vec<u32> = self.buckets.keys().copied().collect();
        ids.sort_unstable();
        let mut seen = 0;
        for b in ids {
            seen += self.buckets[&b];
            if seen >= rank {
                return Some(SimTime::from_ps(bucket_upper(b).min(self.max_ps).max(self.min_ps)));
            }
        }
        Some(SimTime::from_ps(self.max_ps))
    }

    pub fn merge(&mut self, other: &LatencyStats) {
        for (&b, &n) in &other.buckets {
            *self.buckets.entry(b).or_insert(0) += n;
        }
        if other.count > 0 {
            if self.count == 0 {
                self.min_ps = other.min_ps;
                self.max_ps = other.max_ps;
            } else {
                self.min_ps = self.min_ps.min(other.min_ps);
                self.max_ps = self.max_ps.max(other.max_ps);
            }
        }
        self.count += other.count;
        self.sum_ps += other.sum_ps;
    }
}

/// Why a packet never reached its destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DropCause {
    /// Output queue full.
    BufferOverflow,
    /// Arrived at a port whose laser was off or stage unusable with no
    /// alternative route.
    GatedAway,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketCounters {
    pub injected: u64,
    pub delivered: u64,
    pub dropped_buffer: u64,
    pub dropped_gated: u64,
    /// Data packets still queued or on the wire when the run ended.
    pub in_flight_at_end: u64,
    pub control_sent: u64,
    pub control_delivered: u64,
    /// Control frames that reached a server NIC and were discarded there.
    pub control_discarded_at_server: u64,
    /// Control frames dropped when their TTL expired.
    pub control_ttl_expired: u64,
}

impl PacketCounters {
    /// Every injected packet is delivered, dropped, or still in flight.
    pub fn conserved(&self) -> bool {
        self.injected
            == self.delivered + self.dropped_buffer + self.dropped_gated + self.in_flight_at_end
    }
}

/// Per-link on-intervals, for activation-fraction reporting.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ActivationTimeline {
    /// Closed on-intervals per link, in order.
    pub intervals: HashMap<u32, Vec<(SimTime, SimTime)>>,
    open: HashMap<u32, SimTime>,
}

impl ActivationTimeline {
    pub fn link_on(&mut self, link: LinkId, t: SimTime) {
        self.open.entry(link.0).or_insert(t);
    }

    pub fn link_off(&mut self, link: LinkId, t: SimTime) {
        if let Some(start) = self.open.remove(&link.0) {
            self.intervals.entry(link.0).or_default().push((start, t));
        }
    }

    /// Closes any still-open intervals at the end of the run.
    pub fn finalize(&mut self, t_end: SimTime) {
        let open: Vec<_> = self.open.keys().copied().collect();
        for l in open {
            self.link_off(LinkId(l), t_end);
        }
    }

    pub fn on_fraction(&self, link: LinkId, t_end: SimTime) -> f64 {
        let total: u64 = self
            .intervals
            .get(&link.0)
            .map(|v| v.iter().map(|(a, b)| b.as_ps() - a.as_ps()).sum())
            .unwrap_or(0);
        if t_end == SimTime::ZERO {
            return 0.0;
        }
        total as f64 / t_end.as_ps() as f64
    }

    /// Histogram of per-link on-fractions in eighths: bin i counts links with
    /// fraction in [i/8, (i+1)/8), except the last bin which includes 1.0.
    pub fn eighth_histogram(&self, links: &[LinkId], t_end: SimTime) -> [u64; 8] {
        let mut bins = [0u64; 8];
        for &l in links {
            let f = self.on_fraction(l, t_end);
            let i = ((f * 8.0).floor() as usize).min(7);
            bins[i] += 1;
        }
        bins
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latency_quantiles_within_one_percent() {
        let mut s = LatencyStats::new();
        for i in 1..=1000u64 {
            s.record(SimTime::from_ns(i));
        }
        assert_eq!(s.count(), 1000);
        let p50 = s.quantile(0.5).unwrap().as_ps() as f64;
        assert!((p50 / 500_000.0 - 1.0).abs() < 0.02, "p50={p50}");
        let p99 = s.quantile(0.99).unwrap().as_ps() as f64;
        assert!((p99 / 990_000.0 - 1.0).abs() < 0.02, "p99={p99}");
        assert_eq!(s.min().unwrap(), SimTime::from_ns(1));
        assert_eq!(s.max().unwrap(), SimTime::from_ns(1000));
        // Mean of 1..=1000 ns is 500.5 ns.
        let mean = s.mean().unwrap().as_ps();
        assert_eq!(mean, 500_500);
    }

    #[test]
    fn quantile_clamped_to_observed_range() {
        let mut s = LatencyStats::new();
        s.record(SimTime::from_ns(100));
        assert_eq!(s.quantile(0.5).unwrap(), SimTime::from_ns(100));
        assert_eq!(s.quantile(1.0).unwrap(), SimTime::from_ns(100));
    }

    #[test]
    fn merge_equals_combined_recording() {
        let mut a = LatencyStats::new();
        let mut b = LatencyStats::new();
        let mut both = LatencyStats::new();
        for i in 1..50u64 {
            a.record(SimTime::from_ns(i));
            both.record(SimTime::from_ns(i));
        }
        for i in 50..100u64 {
            b.record(SimTime::from_ns(i));
            both.record(SimTime::from_ns(i));
        }
        a.merge(&b);
        assert_eq!(a.count(), both.count());
        assert_eq!(a.quantile(0.95), both.quantile(0.95));
        assert_eq!(a.mean(), both.mean());
    }

    #[test]
    fn conservation_identity() {
        let c = PacketCounters {
            injected: 10,
            delivered: 7,
            dropped_buffer: 1,
            dropped_gated: 1,
            in_flight_at_end: 1,
            ..Default::default()
        };
        assert!(c.conserved());
        let broken = PacketCounters { delivered: 8, ..c };
        assert!(!broken.conserved());
    }

    #[test]
    fn timeline_fractions_and_histogram() {
        let mut tl = ActivationTimeline::default();
        let end = SimTime::from_us(100);
        // Link 0: on 25% in two intervals. Link 1: never off.
        tl.link_on(LinkId(0), SimTime::from_us(10));
        tl.link_off(LinkId(0), SimTime::from_us(20));
        tl.link_on(LinkId(0), SimTime::from_us(50));
        tl.link_off(LinkId(0), SimTime::from_us(65));
        tl.link_on(LinkId(1), SimTime::ZERO);
        tl.finalize(end);
        assert!((tl.on_fraction(LinkId(0), end) - 0.25).abs() < 1e-12);
        assert_eq!(tl.on_fraction(LinkId(1), end), 1.0);
        assert_eq!(tl.on_fraction(LinkId(2), end), 0.0);
        let bins = tl.eighth_histogram(&[LinkId(0), LinkId(1), LinkId(2)], end);
        assert_eq!(bins, [1, 0, 1, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn double_on_is_idempotent() {
        let mut tl = ActivationTimeline::default();
        tl.link_on(LinkId(0), SimTime::from_us(1));
        tl.link_on(LinkId(0), SimTime::from_us(5));
        tl.link_off(LinkId(0), SimTime::from_us(11));
        let end = SimTime::from_us(100);
        assert!((tl.on_fraction(LinkId(0), end) - 0.10).abs() < 1e-12);
    }
}
