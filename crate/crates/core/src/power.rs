//! Static whole-data-center power calculator: component inventories, server
//! utilization curves, an optimization ladder, and the projection of network
//! transceiver savings onto total facility power. Cooling overhead (PUE) is
//! deliberately excluded.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PowerError {
    #[error("inventory field `{0}` must be positive")]
    NonPositive(&'static str),
    #[error("qsfp_count {qsfp} exceeds total switch ports {ports}")]
    TooManyQsfp { qsfp: u64, ports: u64 },
    #[error("power curve must be monotone non-decreasing with f(1.0) == 1.0")]
    BadCurve,
    #[error("optimization factor `{0}` must be in (0, 1]")]
    BadFactor(&'static str),
    #[error("share or savings fraction out of [0, 1]: {0}")]
    OutOfRange(f64),
}

/// Device counts and per-unit wattages of one network design plus its server
/// fleet. Counts are reconstructions from the designs' published
/// descriptions, shipped as editable configs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ComponentInventory {
    pub name: String,
    pub switches: u64,
    pub ports_per_switch: u64,
    /// Switch ports populated with 40G QSFP; the rest carry 10G SFP+.
    pub qsfp_ports: u64,
    pub phy_watts_per_port: f64,
    pub switch_asic_watts: f64,
    pub nic_watts: f64,
    pub sfp_watts: f64,
    pub qsfp_watts: f64,
    pub servers: u64,
    /// Ratio-neutral scale anchor; the breakdown depends only on ratios.
    pub server_peak_watts: f64,
}

impl Default for ComponentInventory {
    /// Three-tier Clos at full site scale, fully populated switch ports.
    fn default() -> Self {
        ComponentInventory {
            name: "clos".into(),
            switches: 350,
            ports_per_switch: 64,
            qsfp_ports: 800,
            phy_watts_per_port: 0.8,
            switch_asic_watts: 28.0,
            nic_watts: 10.0,
            sfp_watts: 1.0,
            qsfp_watts: 2.4,
            servers: 6_144,
            server_peak_watts: 300.0,
        }
    }
}

impl ComponentInventory {
    pub fn validate(&self) -> Result<(), PowerError> {
        for (name, v) in [
            ("phy_watts_per_port", self.phy_watts_per_port),
            ("switch_asic_watts", self.switch_asic_watts),
            ("nic_watts", self.nic_watts),
            ("sfp_watts", self.sfp_watts),
            ("qsfp_watts", self.qsfp_watts),
            ("server_peak_watts", self.server_peak_watts),
        ] {
            if !(v > 0.0) {
                return Err(PowerError::NonPositive(name));
            }
        }
        if self.switches == 0 || self.ports_per_switch == 0 {
            return Err(PowerError::NonPositive("switches/ports_per_switch"));
        }
        let ports = self.switches * self.ports_per_switch;
        if self.qsfp_ports > ports {
            return Err(PowerError::TooManyQsfp { qsfp: self.qsfp_ports, ports });
        }
        Ok(())
    }

    fn switch_ports(&self) -> u64 {
        self.switches * self.ports_per_switch
    }

    /// Transceiver wattage: every switch port plus one server-side SFP+ per
    /// server NIC.
    pub fn transceiver_watts(&self) -> f64 {
        let sfp = (self.switch_ports() - self.qsfp_ports + self.servers) as f64;
        sfp * self.sfp_watts + self.qsfp_ports as f64 * self.qsfp_watts
    }

    pub fn phy_watts(&self) -> f64 {
        self.switch_ports() as f64 * self.phy_watts_per_port
    }
    pub fn asic_watts(&self) -> f64 {
        self.switches as f64 * self.switch_asic_watts
    }
    pub fn nic_total_watts(&self) -> f64 {
        self.servers as f64 * self.nic_watts
    }
}

/// Utilization fraction to power fraction of peak, piecewise linear.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ServerPowerCurve {
    pub name: String,
    /// (utilization, power fraction) points, sorted by utilization.
    pub points: Vec<(f64, f64)>,
}

impl ServerPowerCurve {
    /// Measured 2013-era server: 70% of peak at 30% utilization.
    pub fn server_2013() -> Self {
        ServerPowerCurve {
            name: "2013-server".into(),
            points: vec![(0.0, 0.55), (0.3, 0.70), (1.0, 1.0)],
        }
    }

    /// Current-generation rack server: 58% of peak at 30% utilization.
    pub fn sr665() -> Self {
        ServerPowerCurve { name: "sr665".into(), points: vec![(0.0, 0.40), (0.3, 0.58), (1.0, 1.0)] }
    }

    /// Hypothetical fully energy-proportional server: 40% at 30% utilization.
    pub fn energy_proportional() -> Self {
        ServerPowerCurve {
            name: "energy-proportional".into(),
            points: vec![(0.0, 0.10), (0.3, 0.40), (0.5, 0.56), (0.7, 0.65), (1.0, 1.0)],
        }
    }

    /// Flat-out: power independent of utilization.
    pub fn peak() -> Self {
        ServerPowerCurve { name: "peak".into(), points: vec![(0.0, 1.0), (1.0, 1.0)] }
    }

    pub fn validate(&self) -> Result<(), PowerError> {
        if self.points.is_empty() {
            return Err(PowerError::BadCurve);
        }
        for w in self.points.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 < w[0].1 {
                return Err(PowerError::BadCurve);
            }
        }
        let last = self.points.last().unwrap();
        if last.0 != 1.0 || last.1 != 1.0 {
            return Err(PowerError::BadCurve);
        }
        Ok(())
    }

    pub fn power_fraction(&self, utilization: f64) -> f64 {
        let u = utilization.clamp(0.0, 1.0);
        let pts = &self.points;
        if u <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            if u <= w[1].0 {
                return w[0].1 + (u - w[0].0) / (w[1].0 - w[0].0) * (w[1].1 - w[0].1);
            }
        }
        1.0
    }
}

/// Multiplicative power-reduction factors per component class. Server-side
/// factors compound onto server power; the electronics factor applies to
/// switch ASIC, PHY and NIC chips (optics do not scale with CMOS).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizationScenario {
    /// Specialized / accelerated compute.
    pub server_compute: f64,
    /// Stacked memory and near-memory processing.
    pub server_memory: f64,
    /// Solid-state storage consolidation.
    pub server_storage: f64,
    /// CMOS scaling of switch, PHY and NIC electronics.
    pub electronics: f64,
}

impl Default for OptimizationScenario {
    fn default() -> Self {
        OptimizationScenario {
            server_compute: 1.0,
            server_memory: 1.0,
            server_storage: 1.0,
            electronics: 1.0,
        }
    }
}

impl OptimizationScenario {
    /// Full ladder applied: the far-future bar of the breakdown figure.
    /// Factors are calibrated reconstructions, not published values.
    pub fn fully_optimized() -> Self {
        OptimizationScenario {
            server_compute: 0.35,
            server_memory: 0.40,
            server_storage: 0.70,
            electronics: 0.47,
        }
    }

    pub fn validate(&self) -> Result<(), PowerError> {
        for (name, f) in [
            ("server_compute", self.server_compute),
            ("server_memory", self.server_memory),
            ("server_storage", self.server_storage),
            ("electronics", self.electronics),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(PowerError::BadFactor(name));
            }
        }
        Ok(())
    }

    pub fn server_factor(&self) -> f64 {
        self.server_compute * self.server_memory * self.server_storage
    }
}

/// Absolute watts and fractional shares per component class.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Breakdown {
    pub servers_w: f64,
    pub switch_asic_w: f64,
    pub nic_w: f64,
    pub switch_phy_w: f64,
    pub transceivers_w: f64,
}

impl Breakdown {
    pub fn total_w(&self) -> f64 {
        self.servers_w + self.switch_asic_w + self.nic_w + self.switch_phy_w + self.transceivers_w
    }

    pub fn server_share(&self) -> f64 {
        self.servers_w / self.total_w()
    }
    pub fn transceiver_share(&self) -> f64 {
        self.transceivers_w / self.total_w()
    }
    /// Share of everything the link-gating mechanism could plausibly touch:
    /// transceivers plus the PHY and NIC electronics behind them.
    pub fn gating_eligible_share(&self) -> f64 {
        (self.transceivers_w + self.switch_phy_w + self.nic_w) / self.total_w()
    }

    pub fn shares(&self) -> [(&'static str, f64); 5] {
        let t = self.total_w();
        [
            ("servers", self.servers_w / t),
            ("switch_asic", self.switch_asic_w / t),
            ("nic", self.nic_w / t),
            ("switch_phy", self.switch_phy_w / t),
            ("transceivers", self.transceivers_w / t),
        ]
    }
}

pub fn breakdown(
    inventory: &ComponentInventory,
    curve: &ServerPowerCurve,
    utilization: f64,
    scenario: &OptimizationScenario,
) -> Result<Breakdown, PowerError> {
    inventory.validate()?;
    curve.validate()?;
    scenario.validate()?;
    let servers_w = inventory.servers as f64
        * inventory.server_peak_watts
        * curve.power_fraction(utilization)
        * scenario.server_factor();
    Ok(Breakdown {
        servers_w,
        switch_asic_w: inventory.asic_watts() * scenario.electronics,
        nic_w: inventory.nic_total_watts() * scenario.electronics,
        switch_phy_w: inventory.phy_watts() * scenario.electronics,
        transceivers_w: inventory.transceiver_watts(),
    })
}

/// Projects network-level transceiver savings onto the whole facility:
/// `eligible_share * network_savings`.
pub fn overall_savings(
    transceiver_share: f64,
    network_savings_fraction: f64,
    include_phy_nic: bool,
    phy_nic_share: f64,
) -> Result<f64, PowerError> {
    for v in [transceiver_share, network_savings_fraction, phy_nic_share] {
        if !(0.0..=1.0).contains(&v) {
            return Err(PowerError::OutOfRange(v));
        }
    }
    let eligible = transceiver_share + if include_phy_nic { phy_nic_share } else { 0.0 };
    Ok(eligible * network_savings_fraction)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(x: f64) -> f64 {
        x * 100.0
    }

    #[test]
    fn shares_sum_to_one() {
        let b = breakdown(
            &ComponentInventory::default(),
            &ServerPowerCurve::sr665(),
            0.5,
            &OptimizationScenario::default(),
        )
        .unwrap();
        let sum: f64 = b.shares().iter().map(|(_, s)| s).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn peak_servers_dominate_the_default_site() {
        let b = breakdown(
            &ComponentInventory::default(),
            &ServerPowerCurve::peak(),
            1.0,
            &OptimizationScenario::default(),
        )
        .unwrap();
        let share = b.server_share();
        assert!((0.92..=0.95).contains(&share), "server share {share}");
    }

    #[test]
    fn small_switch_transceiver_fraction() {
        // One 64-port access switch, SFP+ everywhere, no servers: the
        // transceiver fraction of (switch electronics + optics) where the
        // electronics average 140 W. 64 / (140 + 64) = 31.4%, loosely quoted
        // as "a third" of switch power going to optics.
        let tx = 64.0f64;
        let electronics = 140.0;
        let frac = tx / (tx + electronics);
        assert!((frac - 64.0 / 204.0).abs() < 1e-12);
        assert!((pp(frac) - 31.37).abs() < 0.01);
    }

    #[test]
    fn no_servers_means_all_network() {
        let inv = ComponentInventory { servers: 0, ..Default::default() };
        let b = breakdown(
            &inv,
            &ServerPowerCurve::peak(),
            1.0,
            &OptimizationScenario::default(),
        )
        .unwrap();
        assert_eq!(b.servers_w, 0.0);
        assert!((b.shares().iter().map(|(_, s)| s).sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(b.server_share() == 0.0);
    }

    #[test]
    fn optimized_site_shares_match_published_anchors() {
        // Fully optimized servers and electronics at 30% utilization on an
        // energy-proportional fleet: optics become 20% of the facility, and
        // optics + PHY + NIC together 46%.
        let b = breakdown(
            &ComponentInventory::default(),
            &ServerPowerCurve::energy_proportional(),
            0.3,
            &OptimizationScenario::fully_optimized(),
        )
        .unwrap();
        assert!((pp(b.transceiver_share()) - 20.0).abs() <= 1.0, "{}", pp(b.transceiver_share()));
        assert!(
            (pp(b.gating_eligible_share()) - 46.0).abs() <= 1.0,
            "{}",
            pp(b.gating_eligible_share())
        );
    }

    #[test]
    fn facility_savings_rows() {
        // 20% optics share x 60% network savings = 12% of the facility.
        assert!((overall_savings(0.20, 0.60, false, 0.0).unwrap() - 0.12).abs() < 1e-12);
        // Including PHY + NIC at the 46% eligible share reaches ~27%.
        let s = overall_savings(0.20, 0.60, true, 0.26).unwrap();
        assert!((pp(s) - 27.0).abs() <= 1.0);
        // Zero network savings projects to zero.
        assert_eq!(overall_savings(0.46, 0.0, true, 0.0).unwrap(), 0.0);
        assert!(overall_savings(1.2, 0.5, false, 0.0).is_err());
    }

    #[test]
    fn savings_rows_at_higher_utilization() {
        // As the servers work harder their share grows and the projected
        // facility savings shrink: ~27% at 30% load, ~23% at 50%, ~21% at 70%.
        let inv = ComponentInventory::default();
        let curve = ServerPowerCurve::energy_proportional();
        let opt = OptimizationScenario::fully_optimized();
        let expect = [(0.3, 27.0), (0.5, 23.0), (0.7, 21.0)];
        for (u, want) in expect {
            let b = breakdown(&inv, &curve, u, &opt).unwrap();
            let s = pp(b.gating_eligible_share() * 0.60);
            assert!((s - want).abs() <= 1.0, "util {u}: got {s}, want {want}");
        }
    }

    #[test]
    fn curve_presets_valid_and_anchored() {
        for (curve, at30) in [
            (ServerPowerCurve::server_2013(), 0.70),
            (ServerPowerCurve::sr665(), 0.58),
            (ServerPowerCurve::energy_proportional(), 0.40),
            (ServerPowerCurve::peak(), 1.0),
        ] {
            curve.validate().unwrap();
            assert!((curve.power_fraction(0.3) - at30).abs() < 1e-12, "{}", curve.name);
            assert_eq!(curve.power_fraction(1.0), 1.0);
        }
        let bad = ServerPowerCurve { name: "bad".into(), points: vec![(0.0, 0.9), (1.0, 0.8)] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn server_optimization_never_shrinks_network_share() {
        let inv = ComponentInventory::default();
        let curve = ServerPowerCurve::sr665();
        let mut last = 0.0;
        for step in 0..10 {
            let f = 1.0 - step as f64 * 0.1;
            let sc = OptimizationScenario { server_compute: f.max(0.05), ..Default::default() };
            let b = breakdown(&inv, &curve, 0.5, &sc).unwrap();
            let network = 1.0 - b.server_share();
            assert!(network >= last);
            last = network;
        }
    }

    #[test]
    fn inventory_validation() {
        let bad = ComponentInventory { nic_watts: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ComponentInventory { qsfp_ports: 1_000_000, ..Default::default() };
        assert!(bad.validate().is_err());
        ComponentInventory::default().validate().unwrap();
    }
}
