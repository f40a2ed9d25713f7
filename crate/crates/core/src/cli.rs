//! Command-line front end. `run` executes the gated and/or always-on variant
//! of a scenario and writes a JSON summary plus CSV timelines; `power-report`
//! prints the static facility power breakdown and the projected savings
//! table.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{GatingMode, PowerReportConfig, Scale, ScenarioConfig};
use crate::engine::{self, savings_report, RunSummary, SavingsReport};
use crate::power::{breakdown, overall_savings};

#[derive(Debug, Parser)]
#[command(
    name = "lcdc-sim",
    version,
    about = "Event-driven simulator of a laser-gated optical data-center network"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write summary.json, uplinks.csv and the
    /// effective config.
    Run(RunArgs),
    /// Print the facility power breakdown and projected savings table.
    PowerReport(PowerReportArgs),
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// Scenario config (TOML). Built-in defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// gated | always-on | both
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated duration in microseconds.
    #[arg(long)]
    pub duration: Option<u64>,
    /// desk | full
    #[arg(long)]
    pub scale: Option<String>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Execute every variant twice and fail unless the event-trace hashes
    /// are identical.
    #[arg(long)]
    pub verify_replay: bool,
    /// fb-web | fb-cache | fb-hadoop | ms-dc
    #[arg(long)]
    pub workload: Option<String>,
    /// Offered load as a fraction of server access bandwidth.
    #[arg(long)]
    pub load: Option<f64>,
    /// Replay flows from a trace file instead of the generator.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct PowerReportArgs {
    /// Power-report config (TOML). Built-in defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write the shares and savings rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Config after file load and flag overrides; this is what gets echoed to
/// `effective_config.toml` and must re-parse to an identical run.
pub fn effective_config(args: &RunArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &args.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(mode) = &args.mode {
        cfg.mode = GatingMode::parse(mode)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(us) = args.duration {
        cfg.duration_us = us;
    }
    if let Some(scale) = &args.scale {
        cfg.scale = Scale::parse(scale)?;
        // An explicit --scale overrides a config-file [site] section too.
        cfg.site = None;
    }
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(workload) = &args.workload {
        cfg.workload = workload.clone();
        cfg.trace_file = None;
    }
    if let Some(load) = args.load {
        cfg.offered_load = load;
    }
    if let Some(trace) = &args.trace {
        cfg.trace_file = Some(trace.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Everything `run` learned, serialized to summary.json.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub mode: &'static str,
    pub seed: u64,
    pub duration_us: u64,
    pub gated: Option<RunSummary>,
    pub always_on: Option<RunSummary>,
    /// Present in `both` mode: gated vs always-on under identical traffic.
    pub comparison: Option<SavingsReport>,
}

fn simulate(cfg: &ScenarioConfig, gated: bool, verify: bool) -> Result<RunSummary> {
    let flows = cfg.build_flows()?;
    let rc = cfg.run_config(gated);
    let summary = engine::run(&rc, &flows)?;
    if verify {
        let replay = engine::run(&rc, &flows)?;
        if replay.trace_hash != summary.trace_hash {
            bail!(
                "replay diverged ({} variant): {} vs {}",
                if gated { "gated" } else { "always-on" },
                summary.trace_hash,
                replay.trace_hash
            );
        }
    }
    Ok(summary)
}

pub fn run_scenario(cfg: &ScenarioConfig, verify: bool) -> Result<RunReport> {
    let (gated, always_on) = match cfg.mode {
        GatingMode::Gated => (Some(simulate(cfg, true, verify)?), None),
        GatingMode::AlwaysOn => (None, Some(simulate(cfg, false, verify)?)),
        GatingMode::Both => {
            (Some(simulate(cfg, true, verify)?), Some(simulate(cfg, false, verify)?))
        }
    };
    let comparison = match (&gated, &always_on) {
        (Some(g), Some(b)) => Some(savings_report(g, b)),
        _ => None,
    };
    Ok(RunReport {
        mode: cfg.mode.as_str(),
        seed: cfg.seed,
        duration_us: cfg.duration_us,
        gated,
        always_on,
        comparison,
    })
}

fn uplinks_csv(report: &RunReport) -> String {
    let mut out = String::from("variant,link,stage,off_fraction\n");
    for (variant, summary) in
        [("gated", &report.gated), ("always-on", &report.always_on)]
    {
        if let Some(s) = summary {
            for (link, stage, frac) in &s.uplink_off_fractions {
                out.push_str(&format!("{variant},{link},{stage},{frac:.6}\n"));
            }
        }
    }
    out
}

pub fn write_outputs(cfg: &ScenarioConfig, report: &RunReport) -> Result<()> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("effective_config.toml"), cfg.to_toml_string()?)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(report)?)?;
    fs::write(dir.join("uplinks.csv"), uplinks_csv(report))?;
    Ok(())
}

fn print_run_summary(report: &RunReport) {
    for (variant, summary) in
        [("gated", &report.gated), ("always-on", &report.always_on)]
    {
        if let Some(s) = summary {
            println!(
                "{variant}: {} events, {}/{} packets delivered, mean latency {:.2} us, \
                 transceiver energy {:.3} J",
                s.events,
                s.counters.delivered,
                s.counters.injected,
                s.packet_latency.mean_ps as f64 / 1e6,
                s.energy.total_j,
            );
        }
    }
    if let Some(c) = &report.comparison {
        println!(
            "comparison: gated-class savings {:.1}%, all-transceiver savings {:.1}%, \
             mean latency overhead {:.1}%",
            c.transceiver_savings_gated_class * 100.0,
            c.transceiver_savings_all * 100.0,
            c.mean_latency_overhead * 100.0,
        );
    }
}

/// Shares and projected savings rows for the power report.
pub fn power_report_rows(cfg: &PowerReportConfig) -> Result<Vec<PowerRow>> {
    let curve = cfg.curve_preset()?;
    let mut rows = Vec::new();
    for &util in &cfg.utilizations {
        let b = breakdown(&cfg.inventory, &curve, util, &cfg.scenario)?;
        let phy_nic = b.gating_eligible_share() - b.transceiver_share();
        let transceivers_only =
            overall_savings(b.transceiver_share(), cfg.network_savings, false, 0.0)?;
        let with_phy_nic =
            overall_savings(b.transceiver_share(), cfg.network_savings, true, phy_nic)?;
        rows.push(PowerRow {
            utilization: util,
            shares: b.shares().map(|(name, s)| (name, s)),
            transceivers_only,
            with_phy_nic,
        });
    }
    Ok(rows)
}

#[derive(Debug, Serialize)]
pub struct PowerRow {
    pub utilization: f64,
    pub shares: [(&'static str, f64); 5],
    /// Facility savings projecting network savings onto transceivers only.
    pub transceivers_only: f64,
    /// Facility savings when gated PHY and NIC electronics are included.
    pub with_phy_nic: f64,
}

fn print_power_report(cfg: &PowerReportConfig, rows: &[PowerRow]) {
    println!(
        "inventory {}, curve {}, network savings {:.0}%",
        cfg.inventory.name,
        cfg.curve,
        cfg.network_savings * 100.0
    );
    for row in rows {
        println!("utilization {:.0}%", row.utilization * 100.0);
        for (name, share) in &row.shares {
            println!("  {name:<13} {:5.1}%", share * 100.0);
        }
        println!("  facility savings, transceivers only: {:.1}%", row.transceivers_only * 100.0);
        println!("  facility savings, with PHY and NIC:  {:.1}%", row.with_phy_nic * 100.0);
    }
}

fn power_csv(rows: &[PowerRow]) -> String {
    let mut out = String::from(
        "utilization,servers,switch_asic,nic,switch_phy,transceivers,\
         savings_transceivers_only,savings_with_phy_nic\n",
    );
    for r in rows {
        out.push_str(&format!("{:.2}", r.utilization));
        for (_, s) in &r.shares {
            out.push_str(&format!(",{s:.6}"));
        }
        out.push_str(&format!(",{:.6},{:.6}\n", r.transceivers_only, r.with_phy_nic));
    }
    out
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = effective_config(&args)?;
            let report = run_scenario(&cfg, args.verify_replay)?;
            write_outputs(&cfg, &report)?;
            print_run_summary(&report);
            if args.verify_replay {
                println!("verify-replay: trace hashes identical");
            }
            Ok(())
        }
        Command::PowerReport(args) => {
            let cfg = match &args.config {
                Some(path) => PowerReportConfig::load(path)?,
                None => PowerReportConfig::default(),
            };
            let rows = power_report_rows(&cfg)?;
            print_power_report(&cfg, &rows);
            if let Some(path) = &args.csv {
                write_csv(path, &power_csv(&rows))?;
            }
            Ok(())
        }
    }
}

fn write_csv(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
