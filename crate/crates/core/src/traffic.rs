//! Server-to-server demand matrices.
//!
//! Demand files are CSV with a `src,dst,rate_bps` header and device names as
//! written by the topology edge-list export. A generated matrix is saved with
//! a leading `# seed=..,count=..,min_rate_bps=..,max_rate_bps=..` comment so
//! loading it back reproduces the matrix exactly.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{DeviceId, Topology};

/// Redraws allowed per demand before generation gives up.
pub const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("cannot place demand {index} of {count} within server capacity after {MAX_REDRAWS} redraws")]
    Infeasible { index: usize, count: usize },
    #[error("invalid traffic parameters: {0}")]
    InvalidParams(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("server `{server}` {direction} {total_bps} bps, above its {capacity_bps} bps data rate")]
    OverCapacity { server: String, direction: &'static str, total_bps: f64, capacity_bps: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub src: DeviceId,
    pub dst: DeviceId,
    pub rate_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficParams {
    pub count: usize,
    pub min_rate_bps: f64,
    pub max_rate_bps: f64,
    /// Per-server send and receive limit enforced during generation.
    pub server_rate_bps: f64,
}

impl Default for TrafficParams {
    fn default() -> Self {
        TrafficParams { count: 16, min_rate_bps: 200e6, max_rate_bps: 800e6, server_rate_bps: 1e9 }
    }
}

impl TrafficParams {
    pub fn check(&self) -> Result<(), TrafficError> {
        let ok = self.min_rate_bps.is_finite()
            && self.max_rate_bps.is_finite()
            && self.min_rate_bps > 0.0
            && self.min_rate_bps <= self.max_rate_bps
            && self.server_rate_bps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(TrafficError::InvalidParams(format!(
                "need 0 < min_rate_bps <= max_rate_bps and server_rate_bps > 0, got {:?}",
                self
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficMatrix {
    demands: Vec<Demand>,
    pub seed: Option<u64>,
    pub params: TrafficParams,
}

impl TrafficMatrix {
    pub fn new(demands: Vec<Demand>) -> Self {
        TrafficMatrix { demands, seed: None, params: TrafficParams { count: 0, ..Default::default() } }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    /// One demand for every ordered server pair, all at `rate_bps`. Used for
    /// reachability checks where rates do not matter.
    pub fn all_pairs(t: &Topology, rate_bps: f64) -> Self {
        let servers = t.servers();
        let demands = servers
            .iter()
            .flat_map(|&a| servers.iter().filter(move |&&b| b != a).map(move |&b| Demand { src: a, dst: b, rate_bps }))
            .collect();
        Self::new(demands)
    }

    pub fn demands(&self) -> &[Demand] {
        &self.demands
    }

    pub fn len(&self) -> usize {
        self.demands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demands.is_empty()
    }

    /// Total sourced and received traffic per server.
    pub fn aggregates(&self) -> (HashMap<DeviceId, f64>, HashMap<DeviceId, f64>) {
        let mut sent = HashMap::new();
        let mut received = HashMap::new();
        for d in &self.demands {
            *sent.entry(d.src).or_insert(0.0) += d.rate_bps;
            *received.entry(d.dst).or_insert(0.0) += d.rate_bps;
        }
        (sent, received)
    }

    /// Checks src != dst, unique ordered pairs, positive rates and per-server
    /// send/receive totals against `server_rate_bps`.
    pub fn check(&self, t: &Topology, server_rate_bps: f64) -> Result<(), TrafficError> {
        let mut pairs = HashSet::new();
        for (i, d) in self.demands.iter().enumerate() {
            if d.src == d.dst {
                return Err(TrafficError::Malformed { line: i + 1, reason: "source equals destination".into() });
            }
            if !(d.rate_bps > 0.0 && d.rate_bps.is_finite()) {
                return Err(TrafficError::Malformed { line: i + 1, reason: format!("bad rate {}", d.rate_bps) });
            }
            if !pairs.insert((d.src, d.dst)) {
                return Err(TrafficError::Malformed { line: i + 1, reason: "repeated (src,dst) pair".into() });
            }
        }
        let (sent, received) = self.aggregates();
        let over = |totals: HashMap<DeviceId, f64>, direction| {
            let mut worst: Vec<(DeviceId, f64)> = totals.into_iter().filter(|(_, v)| *v > server_rate_bps).collect();
            worst.sort_by_key(|(id, _)| *id);
            match worst.first() {
                Some(&(id, total)) => Err(TrafficError::OverCapacity {
                    server: t.name(id).to_string(),
                    direction,
                    total_bps: total,
                    capacity_bps: server_rate_bps,
                }),
                None => Ok(()),
            }
        };
        over(sent, "sends")?;
        over(received, "receives")
    }

    pub fn save(&self, t: &Topology, path: impl AsRef<Path>) -> Result<(), TrafficError> {
        fs::write(path, self.to_csv(t)?)?;
        Ok(())
    }

    pub fn to_csv(&self, t: &Topology) -> Result<String, TrafficError> {
        let mut out = String::new();
        if let Some(seed) = self.seed {
            let p = &self.params;
            out.push_str(&format!(
                "# seed={seed},count={},min_rate_bps={},max_rate_bps={},server_rate_bps={}\n",
                p.count, p.min_rate_bps, p.max_rate_bps, p.server_rate_bps
            ));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["src", "dst", "rate_bps"])?;
        for d in &self.demands {
            w.write_record([t.name(d.src), t.name(d.dst), &d.rate_bps.to_string()])?;
        }
        let body = w.into_inner().map_err(|e| TrafficError::Io(e.into_error()))?;
        out.push_str(std::str::from_utf8(&body).expect("csv of ASCII names"));
        Ok(out)
    }
}

/// Result of loading a demand file: the matrix plus non-fatal findings.
#[derive(Debug)]
pub struct Loaded {
    pub matrix: TrafficMatrix,
    pub warnings: Vec<String>,
}

/// Loads a demand file. Rates outside the generation range only warn;
/// rates that push a server past `server_rate_bps` are errors.
pub fn load(path: impl AsRef<Path>, t: &Topology, server_rate_bps: f64) -> Result<Loaded, TrafficError> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text, t, server_rate_bps)
}

fn parse_meta(line: &str) -> Result<(u64, TrafficParams), String> {
    let mut seed = None;
    let mut p = TrafficParams::default();
    for field in line.trim_start_matches('#').trim().split(',') {
        let (k, v) = field.split_once('=').ok_or_else(|| format!("bad metadata field `{field}`"))?;
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{k}`: {e}"));
        match k.trim() {
            "seed" => seed = Some(v.trim().parse::<u64>().map_err(|e| format!("`seed`: {e}"))?),
            "count" => p.count = v.trim().parse().map_err(|e| format!("`count`: {e}"))?,
            "min_rate_bps" => p.min_rate_bps = num(v)?,
            "max_rate_bps" => p.max_rate_bps = num(v)?,
            "server_rate_bps" => p.server_rate_bps = num(v)?,
            other => return Err(format!("unknown metadata key `{other}`")),
        }
    }
    Ok((seed.ok_or("metadata without seed")?, p))
}

pub fn parse_csv(text: &str, t: &Topology, server_rate_bps: f64) -> Result<Loaded, TrafficError> {
    let mut body = text;
    let mut offset = 0;
    let mut meta = None;
    if let Some(first) = text.lines().next().filter(|l| l.starts_with('#')) {
        meta = Some(parse_meta(first).map_err(|reason| TrafficError::Malformed { line: 1, reason })?);
        body = text.split_once('\n').map(|(_, rest)| rest).unwrap_or("");
        offset = 1;
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(body.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["src", "dst", "rate_bps"] {
        return Err(TrafficError::Malformed {
            line: offset + 1,
            reason: format!(
                "expected header `src,dst,rate_bps`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let (range_min, range_max) = meta
        .as_ref()
        .map(|(_, p)| (p.min_rate_bps, p.max_rate_bps))
        .unwrap_or_else(|| (TrafficParams::default().min_rate_bps, TrafficParams::default().max_rate_bps));

    let mut demands = Vec::new();
    let mut warnings = Vec::new();
    let mut pairs = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = offset + rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |reason: String| TrafficError::Malformed { line, reason };
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", rec.len())));
        }
        let server = |name: &str| {
            t.device_by_name(name)
                .ok()
                .filter(|&id| t.kind(id) == crate::topology::DeviceKind::Server)
                .ok_or_else(|| bad(format!("`{name}` is not a server of this cell")))
        };
        let src = server(&rec[0])?;
        let dst = server(&rec[1])?;
        let rate: f64 = rec[2].parse().map_err(|e| bad(format!("rate `{}`: {e}", &rec[2])))?;
        if src == dst {
            return Err(bad(format!("source equals destination `{}`", &rec[0])));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(bad(format!("rate must be positive, got {rate}")));
        }
        if !pairs.insert((src, dst)) {
            return Err(bad(format!("repeated pair {} -> {}", &rec[0], &rec[1])));
        }
        if rate < range_min || rate > range_max {
            warnings.push(format!("line {line}: rate {rate} bps outside generation range [{range_min}, {range_max}]"));
        }
        demands.push(Demand { src, dst, rate_bps: rate });
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let mut matrix = TrafficMatrix::new(demands);
    if let Some((seed, params)) = meta {
        matrix.seed = Some(seed);
        matrix.params = params;
    }
    matrix.check(t, server_rate_bps)?;
    Ok(Loaded { matrix, warnings })
}

/// Draws `params.count` demands. Sources cycle through the servers in id
/// order, so with `count` equal to the server count every server sources
/// exactly one demand. Destinations are uniform over the other servers and
/// rates uniform in `[min_rate_bps, max_rate_bps]`. A draw that repeats a
/// pair or overloads either endpoint is redrawn.
pub fn generate(t: &Topology, params: &TrafficParams, seed: u64) -> Result<TrafficMatrix, TrafficError> {
    params.check()?;
    let servers = t.servers();
    let mut demands = Vec::with_capacity(params.count);
    if params.count > 0 && servers.len() < 2 {
        return Err(TrafficError::Infeasible { index: 0, count: params.count });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sent: HashMap<DeviceId, f64> = HashMap::new();
    let mut received: HashMap<DeviceId, f64> = HashMap::new();
    let mut pairs = HashSet::new();
    for i in 0..params.count {
        let src_idx = i % servers.len();
        let src = servers[src_idx];
        let mut placed = false;
        for _ in 0..MAX_REDRAWS {
            let mut j = rng.gen_range(0..servers.len() - 1);
            if j >= src_idx {
                j += 1;
            }
            let dst = servers[j];
            let rate = if params.min_rate_bps == params.max_rate_bps {
                params.min_rate_bps
            } else {
                rng.gen_range(params.min_rate_bps..=params.max_rate_bps)
            };
            let out_ok = sent.get(&src).copied().unwrap_or(0.0) + rate <= params.server_rate_bps;
            let in_ok = received.get(&dst).copied().unwrap_or(0.0) + rate <= params.server_rate_bps;
            if out_ok && in_ok && !pairs.contains(&(src, dst)) {
                pairs.insert((src, dst));
                *sent.entry(src).or_insert(0.0) += rate;
                *received.entry(dst).or_insert(0.0) += rate;
                demands.push(Demand { src, dst, rate_bps: rate });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(TrafficError::Infeasible { index: i, count: params.count });
        }
    }
    Ok(TrafficMatrix { demands, seed: Some(seed), params: params.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_cell, CellParams};

    fn cell() -> Topology {
        build_cell(&CellParams::default()).unwrap()
    }

    #[test]
    fn zero_count_is_empty() {
        let m = generate(&cell(), &TrafficParams { count: 0, ..Default::default() }, 1).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn same_seed_same_matrix() {
        let t = cell();
        let p = TrafficParams::default();
        assert_eq!(generate(&t, &p, 9).unwrap(), generate(&t, &p, 9).unwrap());
        assert_ne!(generate(&t, &p, 9).unwrap(), generate(&t, &p, 10).unwrap());
    }

    #[test]
    fn eight_demands_respect_range_and_capacity() {
        let t = cell();
        let m = generate(&t, &TrafficParams { count: 8, ..Default::default() }, 3).unwrap();
        assert_eq!(m.len(), 8);
        for d in m.demands() {
            assert!((2e8..=8e8).contains(&d.rate_bps));
            assert_ne!(d.src, d.dst);
        }
        let (sent, received) = m.aggregates();
        assert!(sent.values().all(|&v| v <= 1e9));
        assert!(received.values().all(|&v| v <= 1e9));
    }

    #[test]
    fn default_count_sources_each_server_once() {
        let t = cell();
        let m = generate(&t, &TrafficParams::default(), 5).unwrap();
        let (sent, _) = m.aggregates();
        assert_eq!(sent.len(), 16);
    }

    #[test]
    fn infeasible_count_is_reported() {
        let t = cell();
        // Each server can send at most one 800 Mbps demand under a 1 Gbps cap.
        let p = TrafficParams { count: 17, min_rate_bps: 8e8, max_rate_bps: 8e8, ..Default::default() };
        assert!(matches!(generate(&t, &p, 1), Err(TrafficError::Infeasible { index: 16, .. })));
    }

    #[test]
    fn rejects_bad_range() {
        let p = TrafficParams { min_rate_bps: 9e8, max_rate_bps: 1e8, ..Default::default() };
        assert!(matches!(generate(&cell(), &p, 1), Err(TrafficError::InvalidParams(_))));
    }

    #[test]
    fn csv_round_trip() {
        let t = cell();
        let m = generate(&t, &TrafficParams::default(), 77).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        m.save(&t, &path).unwrap();
        let back = load(&path, &t, 1e9).unwrap();
        assert_eq!(back.matrix, m);
        assert!(back.warnings.is_empty());
    }

    #[test]
    fn self_loop_row_is_an_error_with_line() {
        let t = cell();
        let text = "src,dst,rate_bps\nsrv-r0-g0-q0-n0,srv-r0-g0-q0-n1,3e8\nsrv-r0-g0-q0-n0,srv-r0-g0-q0-n0,3e8\n";
        match parse_csv(text, &t, 1e9) {
            Err(TrafficError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_rate_warns_but_loads() {
        let t = cell();
        let text = "src,dst,rate_bps\nsrv-r0-g0-q0-n0,srv-r1-g0-q0-n1,900000000\n";
        let loaded = parse_csv(text, &t, 1e9).unwrap();
        assert_eq!(loaded.matrix.len(), 1);
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn over_capacity_names_the_server() {
        let t = cell();
        let text = "src,dst,rate_bps\nsrv-r0-g0-q0-n0,srv-r1-g0-q0-n1,6e8\nsrv-r0-g0-q0-n0,srv-r1-g0-q0-n0,6e8\n";
        match parse_csv(text, &t, 1e9) {
            Err(TrafficError::OverCapacity { server, .. }) => assert_eq!(server, "srv-r0-g0-q0-n0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows() {
        let t = cell();
        assert!(matches!(
            parse_csv("src,dst,rate_bps\nsrv-r0-g0-q0-n0,nope,1e8\n", &t, 1e9),
            Err(TrafficError::Malformed { line: 2, .. })
        ));
        assert!(matches!(
            parse_csv("src,dst,rate_bps\nsrv-r0-g0-q0-n0,srv-r0-g0-q0-n1,fast\n", &t, 1e9),
            Err(TrafficError::Malformed { line: 2, .. })
        ));
        assert!(parse_csv("a,b,c\n", &t, 1e9).is_err());
    }
}
