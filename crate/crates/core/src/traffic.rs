//! Flow synthesis from empirical CDFs, trace ingestion, and fidelity
//! validation via Pearson correlation.
//!
//! The shipped profile CDFs are digitized approximations of published
//! large-scale data-center measurements (Facebook web/cache/Hadoop and a
//! Microsoft data center); they live in `data/` as plain text so better
//! digitizations can be dropped in without a rebuild.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{SimTime, PS_PER_S};
use crate::topology::{ServerId, SiteConfig};

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("CDF must contain at least one point")]
    EmptyCdf,
    #[error("CDF point {index}: {reason}")]
    BadCdfPoint { index: usize, reason: String },
    #[error("CDF must end at probability 1.0, ends at {0}")]
    CdfNotNormalized(f64),
    #[error("unknown workload profile `{0}`")]
    UnknownProfile(String),
    #[error("locality probabilities must sum to 1, got {0}")]
    BadLocality(f64),
    #[error("trace line {line}: {reason}")]
    BadTraceLine { line: usize, reason: String },
    #[error("trace rejected: {malformed} of {total} lines malformed (>1%)")]
    TraceTooNoisy { malformed: usize, total: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("Pearson r undefined: zero-variance input")]
    DegeneratePearson,
}

/// Ordered (value, cumulative probability) points with linear interpolation
/// between them.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    points: Vec<(f64, f64)>,
}

impl EmpiricalCdf {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, TrafficError> {
        if points.is_empty() {
            return Err(TrafficError::EmptyCdf);
        }
        for (i, w) in points.windows(2).enumerate() {
            if w[1].0 < w[0].0 {
                return Err(TrafficError::BadCdfPoint {
                    index: i + 1,
                    reason: format!("values must be non-decreasing ({} < {})", w[1].0, w[0].0),
                });
            }
            if w[1].1 < w[0].1 {
                return Err(TrafficError::BadCdfPoint {
                    index: i + 1,
                    reason: "probabilities must be non-decreasing".into(),
                });
            }
        }
        for (i, p) in points.iter().enumerate() {
            if !(0.0..=1.0).contains(&p.1) || !p.1.is_finite() || !p.0.is_finite() {
                return Err(TrafficError::BadCdfPoint {
                    index: i,
                    reason: format!("non-finite or out-of-range point {p:?}"),
                });
            }
        }
        let last = points.last().unwrap().1;
        if (last - 1.0).abs() > 1e-12 {
            return Err(TrafficError::CdfNotNormalized(last));
        }
        Ok(EmpiricalCdf { points })
    }

    /// Parses "value probability" lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, TrafficError> {
        let mut points = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<f64, TrafficError> {
                tok.and_then(|t| t.parse().ok()).ok_or(TrafficError::BadCdfPoint {
                    index: i,
                    reason: format!("cannot parse `{line}`"),
                })
            };
            let v = parse(it.next())?;
            let p = parse(it.next())?;
            points.push((v, p));
        }
        EmpiricalCdf::new(points)
    }

    pub fn min_value(&self) -> f64 {
        self.points.first().unwrap().0
    }
    pub fn max_value(&self) -> f64 {
        self.points.last().unwrap().0
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Inverse-transform sample: linear interpolation between the bracketing
    /// CDF points. `u` below the first recorded probability maps to the
    /// minimum value.
    pub fn sample(&self, u: f64) -> f64 {
        debug_assert!((0.0..1.0).contains(&u) || u == 0.0);
        let pts = &self.points;
        if u <= pts[0].1 {
            return pts[0].0;
        }
        for w in pts.windows(2) {
            let (v0, p0) = w[0];
            let (v1, p1) = w[1];
            if u <= p1 {
                if p1 == p0 {
                    return v1;
                }
                return v0 + (u - p0) / (p1 - p0) * (v1 - v0);
            }
        }
        pts.last().unwrap().0
    }

    /// Cumulative probability at `v` under the same linear interpolation.
    pub fn eval(&self, v: f64) -> f64 {
        let pts = &self.points;
        if v <= pts[0].0 {
            return if v < pts[0].0 { 0.0 } else { pts[0].1 };
        }
        for w in pts.windows(2) {
            let (v0, p0) = w[0];
            let (v1, p1) = w[1];
            if v <= v1 {
                if v1 == v0 {
                    return p1;
                }
                return p0 + (v - v0) / (v1 - v0) * (p1 - p0);
            }
        }
        1.0
    }

    /// Mean of the interpolated distribution (trapezoid over the inverse).
    pub fn mean(&self) -> f64 {
        let pts = &self.points;
        let mut m = pts[0].0 * pts[0].1;
        for w in pts.windows(2) {
            m += (w[1].1 - w[0].1) * (w[0].0 + w[1].0) / 2.0;
        }
        m
    }
}

/// Destination scope probabilities; must sum to 1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LocalityMix {
    pub intra_rack: f64,
    pub intra_cluster: f64,
    pub inter_cluster: f64,
}

impl LocalityMix {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let sum = self.intra_rack + self.intra_cluster + self.inter_cluster;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(TrafficError::BadLocality(sum));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileName {
    FbWeb,
    FbCache,
    FbHadoop,
    MsDc,
}

impl ProfileName {
    pub const ALL: [ProfileName; 4] =
        [ProfileName::FbWeb, ProfileName::FbCache, ProfileName::FbHadoop, ProfileName::MsDc];

    pub fn parse(s: &str) -> Result<Self, TrafficError> {
        match s {
            "fb-web" => Ok(ProfileName::FbWeb),
            "fb-cache" => Ok(ProfileName::FbCache),
            "fb-hadoop" => Ok(ProfileName::FbHadoop),
            "ms-dc" => Ok(ProfileName::MsDc),
            other => Err(TrafficError::UnknownProfile(other.into())),
        }
    }
}

impl fmt::Display for ProfileName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProfileName::FbWeb => "fb-web",
            ProfileName::FbCache => "fb-cache",
            ProfileName::FbHadoop => "fb-hadoop",
            ProfileName::MsDc => "ms-dc",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct WorkloadProfile {
    pub name: String,
    pub flow_size_cdf: EmpiricalCdf,
    pub flow_interval_cdf: EmpiricalCdf,
    pub locality: LocalityMix,
}

impl WorkloadProfile {
    pub fn builtin(name: ProfileName) -> WorkloadProfile {
        let (size, interval, locality) = match name {
            ProfileName::FbWeb => (
                include_str!("../data/fb_web_size.cdf"),
                include_str!("../data/fb_web_interval.cdf"),
                LocalityMix { intra_rack: 0.10, intra_cluster: 0.50, inter_cluster: 0.40 },
            ),
            ProfileName::FbCache => (
                include_str!("../data/fb_cache_size.cdf"),
                include_str!("../data/fb_cache_interval.cdf"),
                LocalityMix { intra_rack: 0.05, intra_cluster: 0.70, inter_cluster: 0.25 },
            ),
            ProfileName::FbHadoop => (
                include_str!("../data/fb_hadoop_size.cdf"),
                include_str!("../data/fb_hadoop_interval.cdf"),
                LocalityMix { intra_rack: 0.60, intra_cluster: 0.30, inter_cluster: 0.10 },
            ),
            ProfileName::MsDc => (
                include_str!("../data/ms_dc_size.cdf"),
                include_str!("../data/ms_dc_interval.cdf"),
                LocalityMix { intra_rack: 0.50, intra_cluster: 0.40, inter_cluster: 0.10 },
            ),
        };
        WorkloadProfile {
            name: name.to_string(),
            flow_size_cdf: EmpiricalCdf::parse(size).expect("builtin size CDF"),
            flow_interval_cdf: EmpiricalCdf::parse(interval).expect("builtin interval CDF"),
            locality,
        }
    }

    /// Interval multiplier that makes the per-server offered load equal
    /// `target` as a fraction of `nic_bps`.
    pub fn interval_scale_for_load(&self, target: f64, nic_bps: u64) -> f64 {
        assert!(target > 0.0);
        let mean_bits = self.flow_size_cdf.mean() * 8.0;
        let natural_interval = self.flow_interval_cdf.mean();
        let wanted_interval = mean_bits / (target * nic_bps as f64);
        wanted_interval / natural_interval
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub src: ServerId,
    pub dst: ServerId,
    pub size_bytes: u64,
    pub arrival: SimTime,
}

/// Per-source-server flow sampler. Each server owns an independent,
/// seed-derived RNG stream so the generated schedule is reproducible and
/// insensitive to event interleaving.
#[derive(Debug, Clone)]
pub struct ServerFlowSampler {
    rng: ChaCha8Rng,
    src: ServerId,
    interval_scale: f64,
    next_arrival: SimTime,
}

/// Site dimensions the destination picker needs.
#[derive(Debug, Clone, Copy)]
pub struct SiteDims {
    pub servers_per_rack: u32,
    pub racks_per_cluster: u32,
    pub clusters: u32,
}

impl SiteDims {
    pub fn of(cfg: &SiteConfig) -> SiteDims {
        SiteDims {
            servers_per_rack: cfg.servers_per_rack,
            racks_per_cluster: cfg.rsw_per_cluster,
            clusters: cfg.clusters,
        }
    }
    pub fn total_servers(&self) -> u32 {
        self.servers_per_rack * self.racks_per_cluster * self.clusters
    }
}

impl ServerFlowSampler {
    pub fn new(seed: u64, src: ServerId, profile: &WorkloadProfile, interval_scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((src.0 as u64) << 20) ^ 0x1cdc);
        let mut s = ServerFlowSampler {
            next_arrival: SimTime::ZERO,
            interval_scale,
            src,
            rng: ChaCha8Rng::seed_from_u64(0),
        };
        // First arrival is one interval in, so load ramps from t=0.
        let first = sample_interval(profile, &mut rng, interval_scale);
        s.rng = rng;
        s.next_arrival = first;
        s
    }

    pub fn next_arrival(&self) -> SimTime {
        self.next_arrival
    }

    /// Draws the flow arriving at `next_arrival` and advances the clock.
    pub fn draw(&mut self, profile: &WorkloadProfile, dims: &SiteDims) -> FlowSpec {
        let arrival = self.next_arrival;
        let size = profile.flow_size_cdf.sample(self.rng.gen::<f64>()).round().max(1.0) as u64;
        let dst = pick_destination(&mut self.rng, self.src, &profile.locality, dims);
        self.next_arrival =
            arrival + sample_interval(profile, &mut self.rng, self.interval_scale);
        FlowSpec { src: self.src, dst, size_bytes: size, arrival }
    }
}

fn sample_interval(profile: &WorkloadProfile, rng: &mut ChaCha8Rng, scale: f64) -> SimTime {
    let secs = profile.flow_interval_cdf.sample(rng.gen::<f64>()) * scale;
    SimTime::from_ps((secs * PS_PER_S as f64).round().max(1.0) as u64)
}

fn pick_destination(
    rng: &mut ChaCha8Rng,
    src: ServerId,
    locality: &LocalityMix,
    dims: &SiteDims,
) -> ServerId {
    let spr = dims.servers_per_rack as u64;
    let spc = spr * dims.racks_per_cluster as u64;
    let total = spc * dims.clusters as u64;
    let me = src.0 as u64;
    let rack0 = me / spr * spr;
    let cluster0 = me / spc * spc;

    let r = rng.gen::<f64>();
    // Fall outward when a scope has no other member (single-server rack,
    // single-rack cluster, single-cluster site).
    let scope = if r < locality.intra_rack && spr > 1 {
        (rack0, spr)
    } else if r < locality.intra_rack + locality.intra_cluster && spc > spr {
        (cluster0, spc)
    } else if total > spc {
        (0, total)
    } else if spc > spr {
        (cluster0, spc)
    } else {
        (rack0, spr)
    };
    let (base, span) = scope;
    if span <= 1 {
        return src; // degenerate one-server site; caller filters self-flows
    }
    let mut pick = base + rng.gen_range(0..span - 1);
    if pick >= me {
        pick += 1;
    }
    // Inter/intra-cluster scopes include the source's own subtree; redraw
    // by offset keeps the choice uniform over the remaining servers.
    ServerId((pick % total) as u32)
}

/// Collects every flow with arrival < `duration` from all servers. This is
/// the batch form of the per-server samplers the engine drives one event at
/// a time.
pub fn generate(
    profile: &WorkloadProfile,
    dims: &SiteDims,
    duration: SimTime,
    seed: u64,
    interval_scale: f64,
) -> Vec<FlowSpec> {
    let mut flows = Vec::new();
    for s in 0..dims.total_servers() {
        let mut sampler = ServerFlowSampler::new(seed, ServerId(s), profile, interval_scale);
        while sampler.next_arrival() < duration {
            flows.push(sampler.draw(profile, dims));
        }
    }
    flows.sort_by_key(|f| (f.arrival, f.src));
    flows
}

/// Pearson correlation of two equally sized vectors.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64, TrafficError> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(TrafficError::DegeneratePearson);
    }
    Ok(cov / (vx * vy).sqrt())
}

/// Self-fidelity of a sample against a target CDF: empirical CDF of the
/// sample and the target evaluated on the target's value grid plus interior
/// midpoints, correlated with Pearson r.
pub fn cdf_fidelity(samples: &mut [f64], target: &EmpiricalCdf) -> Result<f64, TrafficError> {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut grid = Vec::new();
    for w in target.points().windows(2) {
        grid.push(w[0].0);
        grid.push((w[0].0 + w[1].0) / 2.0);
    }
    grid.push(target.max_value());
    let n = samples.len() as f64;
    let empirical: Vec<f64> = grid
        .iter()
        .map(|&v| samples.partition_point(|&s| s <= v) as f64 / n)
        .collect();
    let expected: Vec<f64> = grid.iter().map(|&v| target.eval(v)).collect();
    pearson_r(&empirical, &expected)
}

/// Loads a flow trace: one flow per line, `arrival_seconds src dst bytes`.
/// Endpoint tokens are hashed onto the simulated server id space.
pub fn load_trace(path: &Path, total_servers: u32) -> Result<Vec<FlowSpec>, TrafficError> {
    let text = std::fs::read_to_string(path)?;
    parse_trace(&text, total_servers)
}

pub fn parse_trace(text: &str, total_servers: u32) -> Result<Vec<FlowSpec>, TrafficError> {
    assert!(total_servers >= 2, "trace replay needs at least two servers");
    let mut flows = Vec::new();
    let mut host_map: HashMap<String, ServerId> = HashMap::new();
    let mut malformed = Vec::new();
    let mut total = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        total += 1;
        let mut it = line.split_whitespace();
        let parsed = (|| {
            let arrival: f64 = it.next()?.parse().ok()?;
            let src = it.next()?.to_string();
            let dst = it.next()?.to_string();
            let size: u64 = it.next()?.parse().ok()?;
            if arrival < 0.0 || size == 0 {
                return None;
            }
            Some((arrival, src, dst, size))
        })();
        let Some((arrival, src_tok, dst_tok, size)) = parsed else {
            malformed.push(i + 1);
            continue;
        };
        let src = *host_map
            .entry(src_tok)
            .or_insert_with_key(|k| ServerId(stable_hash(k) % total_servers));
        let mut dst = *host_map
            .entry(dst_tok)
            .or_insert_with_key(|k| ServerId(stable_hash(k) % total_servers));
        if dst == src {
            dst = ServerId((dst.0 + 1) % total_servers);
        }
        flows.push(FlowSpec {
            src,
            dst,
            size_bytes: size,
            arrival: SimTime::from_ps((arrival * PS_PER_S as f64).round() as u64),
        });
    }
    if malformed.len() * 100 > total {
        return Err(TrafficError::TraceTooNoisy { malformed: malformed.len(), total });
    }
    if let Some(&line) = malformed.first() {
        // Tolerated but surfaced: under the 1% budget.
        eprintln!("warning: {} malformed trace line(s), first at line {}", malformed.len(), line);
    }
    flows.sort_by_key(|f| (f.arrival, f.src));
    Ok(flows)
}

/// FNV-1a, fixed so endpoint mapping is stable across runs and platforms.
fn stable_hash(s: &str) -> u32 {
    let mut h: u32 = 0x811c9dc5;
    for b in s.bytes() {
        h ^= b as u32;
        h = h.wrapping_mul(0x01000193);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> EmpiricalCdf {
        EmpiricalCdf::new(vec![(100.0, 0.5), (300.0, 1.0)]).unwrap()
    }

    #[test]
    fn sample_bounds() {
        let cdf = two_point();
        assert_eq!(cdf.sample(0.0), 100.0);
        assert!((cdf.sample(0.999999) - 299.9996).abs() < 1e-3);
        assert!(cdf.sample(0.999999) <= cdf.max_value());
    }

    #[test]
    fn sample_interpolates_linearly() {
        // {(100, 0.5), (300, 1.0)}, u=0.75 -> 200 by hand.
        assert_eq!(two_point().sample(0.75), 200.0);
    }

    #[test]
    fn invalid_cdfs_rejected() {
        assert!(EmpiricalCdf::new(vec![]).is_err());
        assert!(EmpiricalCdf::new(vec![(1.0, 0.5)]).is_err()); // doesn't reach 1
        assert!(EmpiricalCdf::new(vec![(2.0, 0.5), (1.0, 1.0)]).is_err());
        assert!(EmpiricalCdf::new(vec![(1.0, 0.9), (2.0, 0.5)]).is_err());
    }

    #[test]
    fn mean_of_uniform_segment() {
        // Uniform on [0, 10]: mean 5.
        let cdf = EmpiricalCdf::new(vec![(0.0, 0.0), (10.0, 1.0)]).unwrap();
        assert!((cdf.mean() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_extremes() {
        let xs = [0.1, 0.4, 0.7, 1.0];
        let ys: Vec<f64> = xs.iter().map(|p| 1.0 - p).collect();
        assert!((pearson_r(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson_r(&xs, &ys).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson_r(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn builtin_profiles_parse_and_validate() {
        for name in ProfileName::ALL {
            let p = WorkloadProfile::builtin(name);
            p.locality.validate().unwrap();
            assert!(p.flow_size_cdf.mean() > 0.0);
            assert!(p.flow_interval_cdf.mean() > 0.0);
        }
    }

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let profile = WorkloadProfile::builtin(ProfileName::FbWeb);
        let dims = SiteDims { servers_per_rack: 4, racks_per_cluster: 4, clusters: 2 };
        let a = generate(&profile, &dims, SimTime::from_ms(5), 7, 1.0);
        let b = generate(&profile, &dims, SimTime::from_ms(5), 7, 1.0);
        assert_eq!(a, b);
        assert!(!a.is_empty());
        for f in &a {
            assert_ne!(f.src, f.dst);
            assert!(f.size_bytes >= 1);
            assert!(f.arrival < SimTime::from_ms(5));
        }
        assert!(generate(&profile, &dims, SimTime::ZERO, 7, 1.0).is_empty());
    }

    #[test]
    fn load_scaling_hits_target() {
        let profile = WorkloadProfile::builtin(ProfileName::FbCache);
        let scale = profile.interval_scale_for_load(0.3, 10_000_000_000);
        let mean_interval = profile.flow_interval_cdf.mean() * scale;
        let load = profile.flow_size_cdf.mean() * 8.0 / mean_interval / 10e9;
        assert!((load - 0.3).abs() < 1e-9);
    }

    #[test]
    fn trace_parsing() {
        let flows = parse_trace("0.000100 A B 4000\n", 8).unwrap();
        assert_eq!(flows.len(), 1);
        assert_eq!(flows[0].arrival, SimTime::from_us(100));
        assert_eq!(flows[0].size_bytes, 4000);
        assert_ne!(flows[0].src, flows[0].dst);

        assert!(parse_trace("", 8).unwrap().is_empty());

        // Same token maps to the same server everywhere.
        let flows = parse_trace("0.0 A B 1\n0.5 C A 2\n", 8).unwrap();
        assert_eq!(flows[0].src, flows[1].dst);

        // All-malformed file rejected.
        assert!(parse_trace("nonsense here\n", 8).is_err());
    }
}
