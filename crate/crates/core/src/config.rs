//! On-disk scenario and power-report configuration: flat TOML with sections,
//! human units (ns/us), unknown keys rejected, and a lossless round trip
//! between the parsed form and the serialized text.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::engine::RunConfig;
use crate::power::{ComponentInventory, OptimizationScenario, ServerPowerCurve};
use crate::server::NodePipelineParams;
use crate::switch::monitor::WatermarkConfig;
use crate::time::SimTime;
use crate::topology::SiteConfig;
use crate::traffic::{self, FlowSpec, ProfileName, SiteDims, WorkloadProfile};
use crate::transceiver::TransceiverParams;

/// Which fabric variants a run simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GatingMode {
    /// Staged uplink gating plus server egress gating.
    Gated,
    /// Every laser stays on; the energy baseline.
    AlwaysOn,
    /// Run both variants back to back and report the comparison.
    Both,
}

impl GatingMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gated" => Ok(GatingMode::Gated),
            "always-on" => Ok(GatingMode::AlwaysOn),
            "both" => Ok(GatingMode::Both),
            other => bail!("unknown mode `{other}` (expected gated, always-on or both)"),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            GatingMode::Gated => "gated",
            GatingMode::AlwaysOn => "always-on",
            GatingMode::Both => "both",
        }
    }
}

/// Site size shorthand when no explicit `[site]` section is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// 2 clusters x 4 racks x 4 servers: fast enough for tests.
    Desk,
    /// 4 clusters x 32 racks x 48 servers.
    Full,
}

impl Scale {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            other => bail!("unknown scale `{other}` (expected desk or full)"),
        }
    }

    pub fn site(&self) -> SiteConfig {
        match self {
            Scale::Desk => SiteConfig::desk(),
            Scale::Full => SiteConfig::default(),
        }
    }
}

/// Server send-path timings in human units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeTimings {
    pub pipeline_delay_ns: u64,
    pub nic_idle_timeout_us: u64,
    pub mtu: u64,
}

impl Default for NodeTimings {
    fn default() -> Self {
        NodeTimings { pipeline_delay_ns: 3_200, nic_idle_timeout_us: 100, mtu: 1_500 }
    }
}

impl NodeTimings {
    pub fn to_params(self) -> NodePipelineParams {
        NodePipelineParams {
            pipeline_delay: SimTime::from_ns(self.pipeline_delay_ns),
            nic_idle_timeout: SimTime::from_us(self.nic_idle_timeout_us),
            mtu: self.mtu,
        }
    }
}

/// Transceiver timing and power in human units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaserTimings {
    pub turn_on_ns: u64,
    pub turn_off_ns: u64,
    pub power_on_w: f64,
    pub power_off_w: f64,
}

impl Default for LaserTimings {
    fn default() -> Self {
        LaserTimings { turn_on_ns: 1_000, turn_off_ns: 10_000, power_on_w: 1.0, power_off_w: 0.0 }
    }
}

impl LaserTimings {
    pub fn qsfp_40g() -> Self {
        LaserTimings { power_on_w: 2.4, ..LaserTimings::default() }
    }

    pub fn to_params(self) -> TransceiverParams {
        TransceiverParams {
            turn_on_delay: SimTime::from_ns(self.turn_on_ns),
            turn_off_delay: SimTime::from_ns(self.turn_off_ns),
            power_on_w: self.power_on_w,
            power_off_w: self.power_off_w,
        }
    }
}

/// One simulation scenario: what to run, on which site, for how long, and
/// where to write the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: GatingMode,
    pub seed: u64,
    pub duration_us: u64,
    /// One of fb-web, fb-cache, fb-hadoop, ms-dc. Ignored when `trace_file`
    /// is set.
    pub workload: String,
    /// Offered load as a fraction of server access bandwidth.
    pub offered_load: f64,
    /// Replay flows from a trace file instead of the synthetic generator.
    pub trace_file: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub scale: Scale,
    /// Keep per-flow completion latencies in the summary (memory-heavy).
    pub record_flow_latencies: bool,
    /// Reachability check across the whole site at every stage transition.
    pub connectivity_probe: bool,
    /// Quiet period before a stage-down, in microseconds.
    pub holddown_us: u64,
    /// Explicit site shape; overrides `scale` when present.
    pub site: Option<SiteConfig>,
    pub watermarks: WatermarkConfig,
    pub node: NodeTimings,
    pub edge_laser: LaserTimings,
    pub core_laser: LaserTimings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            mode: GatingMode::Gated,
            seed: 1,
            duration_us: 10_000,
            workload: "fb-web".into(),
            offered_load: 0.3,
            trace_file: None,
            output_dir: PathBuf::from("out"),
            scale: Scale::Desk,
            record_flow_latencies: false,
            connectivity_probe: true,
            holddown_us: 50,
            site: None,
            watermarks: WatermarkConfig::default(),
            node: NodeTimings::default(),
            edge_laser: LaserTimings::default(),
            core_laser: LaserTimings::qsfp_40g(),
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ScenarioConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trace_file.is_none() {
            ProfileName::parse(&self.workload)
                .with_context(|| format!("workload `{}`", self.workload))?;
            if !(self.offered_load > 0.0 && self.offered_load <= 1.0) {
                bail!("offered_load must be in (0, 1], got {}", self.offered_load);
            }
        }
        self.watermarks.validate().map_err(|e| anyhow::anyhow!(e))?;
        self.effective_site().validate()?;
        if self.node.mtu == 0 {
            bail!("mtu must be >= 1");
        }
        Ok(())
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_us(self.duration_us)
    }

    pub fn effective_site(&self) -> SiteConfig {
        self.site.clone().unwrap_or_else(|| self.scale.site())
    }

    /// Engine configuration for one variant of this scenario.
    pub fn run_config(&self, gated: bool) -> RunConfig {
        RunConfig {
            site: self.effective_site(),
            switch_gating: gated,
            server_gating: gated,
            duration: self.duration(),
            watermarks: self.watermarks,
            holddown: SimTime::from_us(self.holddown_us),
            pipeline: self.node.to_params(),
            edge_laser: self.edge_laser.to_params(),
            core_laser: self.core_laser.to_params(),
            record_flow_latencies: self.record_flow_latencies,
            connectivity_probe: self.connectivity_probe,
        }
    }

    /// The flow schedule this scenario drives through the fabric. The same
    /// schedule is reused for every variant so comparisons see identical
    /// offered traffic.
    pub fn build_flows(&self) -> Result<Vec<FlowSpec>> {
        let site = self.effective_site();
        if let Some(path) = &self.trace_file {
            let dims = SiteDims::of(&site);
            return Ok(traffic::load_trace(path, dims.total_servers())
                .with_context(|| format!("loading trace {}", path.display()))?);
        }
        let name = ProfileName::parse(&self.workload)?;
        let profile = WorkloadProfile::builtin(name);
        let scale = profile.interval_scale_for_load(self.offered_load, site.edge_bandwidth_bps);
        let dims = SiteDims::of(&site);
        Ok(traffic::generate(&profile, &dims, self.duration(), self.seed, scale))
    }
}

/// Inputs of the static facility power report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerReportConfig {
    /// One of 2013-server, sr665, energy-proportional, peak.
    pub curve: String,
    /// Network-level transceiver energy savings fraction to project onto the
    /// facility breakdown.
    pub network_savings: f64,
    pub utilizations: Vec<f64>,
    pub inventory: ComponentInventory,
    pub scenario: OptimizationScenario,
}

impl Default for PowerReportConfig {
    fn default() -> Self {
        PowerReportConfig {
            curve: "energy-proportional".into(),
            network_savings: 0.60,
            utilizations: vec![0.3, 0.5, 0.7],
            inventory: ComponentInventory::default(),
            scenario: OptimizationScenario::fully_optimized(),
        }
    }
}

impl PowerReportConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: PowerReportConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn curve_preset(&self) -> Result<ServerPowerCurve> {
        match self.curve.as_str() {
            "2013-server" => Ok(ServerPowerCurve::server_2013()),
            "sr665" => Ok(ServerPowerCurve::sr665()),
            "energy-proportional" => Ok(ServerPowerCurve::energy_proportional()),
            "peak" => Ok(ServerPowerCurve::peak()),
            other => bail!(
                "unknown curve `{other}` (expected 2013-server, sr665, energy-proportional or peak)"
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.curve_preset()?;
        self.inventory.validate()?;
        self.scenario.validate()?;
        if !(0.0..=1.0).contains(&self.network_savings) {
            bail!("network_savings must be in [0, 1], got {}", self.network_savings);
        }
        if self.utilizations.is_empty() {
            bail!("utilizations must not be empty");
        }
        for &u in &self.utilizations {
            if !(0.0..=1.0).contains(&u) {
                bail!("utilization {u} out of [0, 1]");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_round_trip_is_lossless() {
        let mut cfg = ScenarioConfig::default();
        cfg.mode = GatingMode::Both;
        cfg.seed = 7;
        cfg.offered_load = 0.5;
        cfg.workload = "fb-cache".into();
        cfg.site = Some(SiteConfig::desk());
        cfg.watermarks.high_watermark = 0.8;
        let text = cfg.to_toml_string().unwrap();
        let back: ScenarioConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        // And a second trip through text is byte-identical.
        assert_eq!(back.to_toml_string().unwrap(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<ScenarioConfig>("mode = \"gated\"\nworklood = \"fb-web\"\n");
        assert!(err.is_err());
        let err = toml::from_str::<ScenarioConfig>("[node]\nmtuu = 9000\n");
        assert!(err.is_err());
    }

    #[test]
    fn defaults_validate_and_build() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        let rc = cfg.run_config(true);
        assert!(rc.switch_gating && rc.server_gating);
        assert_eq!(rc.duration, SimTime::from_ms(10));
        assert_eq!(rc.holddown, SimTime::from_us(50));
        let base = cfg.run_config(false);
        assert!(!base.switch_gating && !base.server_gating);
        // Desk scale by default, explicit site wins.
        assert_eq!(cfg.effective_site(), SiteConfig::desk());
        let full = ScenarioConfig { scale: Scale::Full, ..ScenarioConfig::default() };
        assert_eq!(full.effective_site(), SiteConfig::default());
    }

    #[test]
    fn bad_values_rejected() {
        let cfg = ScenarioConfig { offered_load: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ScenarioConfig { workload: "webby".into(), ..Default::default() };
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.watermarks.low_watermark = 0.9;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mode_and_scale_parse() {
        assert_eq!(GatingMode::parse("always-on").unwrap(), GatingMode::AlwaysOn);
        assert_eq!(GatingMode::parse("gated").unwrap(), GatingMode::Gated);
        assert_eq!(GatingMode::parse("both").unwrap(), GatingMode::Both);
        assert!(GatingMode::parse("on").is_err());
        assert_eq!(Scale::parse("desk").unwrap(), Scale::Desk);
        assert!(Scale::parse("huge").is_err());
    }

    #[test]
    fn flows_from_generator_are_seed_stable() {
        let cfg = ScenarioConfig { duration_us: 500, ..Default::default() };
        let a = cfg.build_flows().unwrap();
        let b = cfg.build_flows().unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
        let other = ScenarioConfig { seed: 2, duration_us: 500, ..Default::default() };
        assert_ne!(other.build_flows().unwrap(), a);
    }

    #[test]
    fn power_config_round_trip_and_presets() {
        let cfg = PowerReportConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        let back: PowerReportConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.curve_preset().unwrap().name, "energy-proportional");
        let bad = PowerReportConfig { curve: "linear".into(), ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = PowerReportConfig { utilizations: vec![1.5], ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
