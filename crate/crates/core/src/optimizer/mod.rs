//! Power-minimising routing.
//!
//! Each demand is routed unsplit on one pre-enumerated candidate path. The
//! MILP has a binary selection variable per (demand, path) and a binary
//! activation variable per server, special server and OLT port:
//!
//! * exactly one path per demand,
//! * per-direction link capacity,
//! * per-server and per-special-server send and receive rate limits, OLT
//!   port rate limits, and processing utilisation at most one,
//! * activation coupling, both per demand (`sum_q x[d,q] <= a[v]` over the
//!   paths through `v`) and aggregated with the big-M constant
//!   (`traffic(v) <= M * a[v]`).
//!
//! The objective is the linearised power: every active device pays its idle
//! power, and every selected path pays the utilisation slope for each role
//! (transmit, receive, forward) it puts on a device plus the load-dependent
//! OLT share. Traffic rows are expressed in Mbps so the big-M value of
//! 100000 dominates any feasible load.
//!
//! [`solve_exact`] runs branch-and-bound on the LP relaxation,
//! [`solve_heuristic`] is a greedy descent and [`brute_force`] enumerates all
//! assignments for cross-checking.

mod bnb;
mod brute;
mod heuristic;
mod lp_format;
pub mod simplex;
mod solution;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{DeviceId, DeviceKind, Path, Topology, TopologyError, Variant};
use crate::traffic::{Demand, TrafficMatrix};

pub use bnb::{solve_exact, solve_exact_traced, NodeOutcome, NodeRecord, SolveLimits};
pub use brute::{brute_force, BRUTE_FORCE_LIMIT};
pub use heuristic::solve_heuristic;
pub use lp_format::write_lp;
pub use solution::{verify_solution, Loads, Route, RoutingSolution, SolverMeta, SolverMethod};

/// Traffic rows are scaled to this unit.
pub const MBPS: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("no candidate path for demand {src} -> {dst} (infeasible at build)")]
    InfeasibleAtBuild { src: String, dst: String },
    #[error("no assignment satisfies the capacity rows (infeasible at solve)")]
    InfeasibleAtSolve,
    #[error("greedy routing found no capacity-feasible path for demand {src} -> {dst}")]
    DeadEnd { src: String, dst: String },
    #[error("brute force would enumerate {count} assignments, above the limit of {limit}")]
    TooLarge { count: f64, limit: u64 },
    #[error("search limits reached before any feasible solution was found")]
    NoIncumbent,
    #[error("LP relaxation is unbounded")]
    Unbounded,
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Model constants. Defaults are the published input values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Physical link capacity (L_mn).
    pub link_capacity_bps: f64,
    /// Big-M constant for activation coupling, in Mbps.
    pub big_m: f64,
    /// Server idle power (PSI).
    pub server_idle_w: f64,
    /// Server maximum power (PSM).
    pub server_max_w: f64,
    /// OLT port idle power (OIP).
    pub olt_idle_w: f64,
    /// OLT port maximum power (OMP).
    pub olt_max_w: f64,
    /// Processing fraction per forwarded demand.
    pub forward_fraction: f64,
    /// Processing fraction per transmitted demand.
    pub transmit_fraction: f64,
    /// Processing fraction per received demand.
    pub receive_fraction: f64,
    pub server_rate_bps: f64,
    pub olt_rate_bps: f64,
    /// Power of the ONU fitted to each special server.
    pub onu_power_w: f64,
    pub onu_rate_bps: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            link_capacity_bps: 10e9,
            big_m: 100_000.0,
            server_idle_w: 301.6,
            server_max_w: 457.0,
            olt_idle_w: 2.0,
            olt_max_w: 14.3,
            forward_fraction: 0.015,
            transmit_fraction: 0.003,
            receive_fraction: 0.002,
            server_rate_bps: 1e9,
            olt_rate_bps: 10e9,
            onu_power_w: 2.5,
            onu_rate_bps: 10e9,
        }
    }
}

impl ModelParams {
    pub fn check(&self) -> Result<(), OptimizerError> {
        let bad = |m: String| Err(OptimizerError::InvalidParams(m));
        if !(self.server_idle_w < self.server_max_w) {
            return bad(format!(
                "server_idle_w {} must be below server_max_w {}",
                self.server_idle_w, self.server_max_w
            ));
        }
        if !(self.olt_idle_w < self.olt_max_w) {
            return bad(format!("olt_idle_w {} must be below olt_max_w {}", self.olt_idle_w, self.olt_max_w));
        }
        for (name, f) in [
            ("forward_fraction", self.forward_fraction),
            ("transmit_fraction", self.transmit_fraction),
            ("receive_fraction", self.receive_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("{name} must lie in (0,1), got {f}"));
            }
        }
        for (name, v) in [
            ("link_capacity_bps", self.link_capacity_bps),
            ("big_m", self.big_m),
            ("server_rate_bps", self.server_rate_bps),
            ("olt_rate_bps", self.olt_rate_bps),
            ("onu_rate_bps", self.onu_rate_bps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.server_idle_w < 0.0 || self.olt_idle_w < 0.0 || self.onu_power_w < 0.0 {
            return bad("power values must be non-negative".into());
        }
        Ok(())
    }

    /// Power slope of a server per unit of utilisation.
    pub fn server_slope_w(&self) -> f64 {
        self.server_max_w - self.server_idle_w
    }

    pub fn olt_slope_w(&self) -> f64 {
        self.olt_max_w - self.olt_idle_w
    }

    /// Idle power of an active device of `kind`; special servers include
    /// their ONU.
    pub fn idle_power_w(&self, kind: DeviceKind) -> f64 {
        match kind {
            DeviceKind::Server => self.server_idle_w,
            DeviceKind::SpecialServer => self.server_idle_w + self.onu_power_w,
            DeviceKind::OltPort => self.olt_idle_w,
            _ => 0.0,
        }
    }

    /// Data rate limiting a device's send/receive or its queue.
    pub fn device_rate_bps(&self, kind: DeviceKind) -> f64 {
        match kind {
            DeviceKind::Server => self.server_rate_bps,
            DeviceKind::SpecialServer => self.onu_rate_bps,
            DeviceKind::OltPort => self.olt_rate_bps,
            _ => self.link_capacity_bps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    OnePath,
    LinkCapacity,
    DeviceEgress,
    DeviceIngress,
    OltThroughput,
    Utilization,
    DemandCoupling,
    BigM,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub kind: RowKind,
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, c)| c * values[j]).sum()
    }

    pub fn satisfied(&self, values: &[f64], tol: f64) -> bool {
        let lhs = self.activity(values);
        match self.sense {
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Ge => lhs >= self.rhs - tol,
            Sense::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarRole {
    /// Demand index and candidate path index.
    Select {
        demand: usize,
        path: usize,
    },
    Activate {
        device: DeviceId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Var {
    pub name: String,
    pub role: VarRole,
    pub cost: f64,
    pub lower: f64,
    pub upper: f64,
}

/// A built routing MILP. Selection variables come first, ordered by demand
/// then path; activation variables follow in device id order.
#[derive(Debug, Clone)]
pub struct MilpInstance {
    pub topology: Topology,
    pub params: ModelParams,
    pub hop_limit: usize,
    pub demands: Vec<Demand>,
    pub paths: Vec<Vec<Path>>,
    pub select_var: Vec<Vec<usize>>,
    pub activate_var: BTreeMap<DeviceId, usize>,
    pub vars: Vec<Var>,
    pub rows: Vec<Row>,
}

/// Whether `path` goes straight through a rack backplane.
fn is_backplane_path(t: &Topology, path: &Path) -> bool {
    path.devices.len() == 3 && t.kind(path.devices[1]) == DeviceKind::Backplane
}

/// Candidate paths for one demand under the routing policy: in the modified
/// design an intra-rack demand whose direct backplane route is intact may
/// only use it; otherwise every candidate is admitted.
pub fn admissible_paths(t: &Topology, d: &Demand, hop_limit: usize) -> Result<Vec<Path>, TopologyError> {
    let all = t.candidate_paths(d.src, d.dst, hop_limit)?;
    if t.variant() == Variant::Modified && t.same_rack(d.src, d.dst) {
        let direct: Vec<Path> = all.iter().filter(|p| is_backplane_path(t, p)).cloned().collect();
        if !direct.is_empty() {
            return Ok(direct);
        }
    }
    Ok(all)
}

/// Role a device plays for a demand routed on a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Transmit,
    Receive,
    Forward,
}

/// Active elements of a path with their role, and the OLT ports it loads.
pub fn path_roles(t: &Topology, path: &Path) -> (Vec<(DeviceId, Role)>, Vec<DeviceId>) {
    let mut roles = vec![(path.src, Role::Transmit)];
    roles.extend(path.relays.iter().map(|&r| (r, Role::Forward)));
    roles.push((path.dst, Role::Receive));
    let olts = path.hops.iter().filter_map(|h| t.olt_for(h.link)).collect();
    (roles, olts)
}

impl ModelParams {
    pub fn role_fraction(&self, role: Role) -> f64 {
        match role {
            Role::Transmit => self.transmit_fraction,
            Role::Receive => self.receive_fraction,
            Role::Forward => self.forward_fraction,
        }
    }
}

/// Load-dependent power of routing `rate_bps` on `path`, excluding idle
/// power of the devices it activates.
pub fn path_cost_w(t: &Topology, p: &ModelParams, path: &Path, rate_bps: f64) -> f64 {
    let (roles, olts) = path_roles(t, path);
    let servers: f64 = roles.iter().map(|&(_, r)| p.server_slope_w() * p.role_fraction(r)).sum();
    let olt: f64 = olts.len() as f64 * p.olt_slope_w() * rate_bps / p.olt_rate_bps;
    servers + olt
}

/// Builds the routing MILP for `traffic` on `t`.
pub fn build_milp(
    t: &Topology,
    traffic: &TrafficMatrix,
    p: &ModelParams,
    hop_limit: usize,
) -> Result<MilpInstance, OptimizerError> {
    p.check()?;
    let demands: Vec<Demand> = traffic.demands().to_vec();
    let mut paths = Vec::with_capacity(demands.len());
    for d in &demands {
        let cands = admissible_paths(t, d, hop_limit)?;
        if cands.is_empty() {
            return Err(OptimizerError::InfeasibleAtBuild {
                src: t.name(d.src).to_string(),
                dst: t.name(d.dst).to_string(),
            });
        }
        paths.push(cands);
    }

    let mut vars = Vec::new();
    let mut select_var = Vec::with_capacity(demands.len());
    for (di, (d, cands)) in demands.iter().zip(&paths).enumerate() {
        let mut idx = Vec::with_capacity(cands.len());
        // A demand with a single candidate has its selection fixed.
        let lower = if cands.len() == 1 { 1.0 } else { 0.0 };
        for (qi, path) in cands.iter().enumerate() {
            idx.push(vars.len());
            vars.push(Var {
                name: format!("x_{di}_{qi}"),
                role: VarRole::Select { demand: di, path: qi },
                cost: path_cost_w(t, p, path, d.rate_bps),
                lower,
                upper: 1.0,
            });
        }
        select_var.push(idx);
    }

    let endpoints: BTreeSet<DeviceId> = demands.iter().flat_map(|d| [d.src, d.dst]).collect();
    let mut activate_var = BTreeMap::new();
    for dev in t.devices() {
        if matches!(dev.kind, DeviceKind::Server | DeviceKind::SpecialServer | DeviceKind::OltPort) {
            activate_var.insert(dev.id, vars.len());
            // Endpoints lie on every candidate path of their demand.
            let lower = if endpoints.contains(&dev.id) { 1.0 } else { 0.0 };
            vars.push(Var {
                name: format!("a_{}", dev.name.replace('-', "_")),
                role: VarRole::Activate { device: dev.id },
                cost: p.idle_power_w(dev.kind),
                lower,
                upper: 1.0,
            });
        }
    }

    let mut rows = Vec::new();
    for (di, idx) in select_var.iter().enumerate() {
        rows.push(Row {
            name: format!("one_path_{di}"),
            kind: RowKind::OnePath,
            coeffs: idx.iter().map(|&j| (j, 1.0)).collect(),
            sense: Sense::Eq,
            rhs: 1.0,
        });
    }

    // Accumulate per-resource coefficient lists in deterministic order.
    let mut link_rows: BTreeMap<(crate::topology::LinkId, DeviceId), Vec<(usize, f64)>> = BTreeMap::new();
    let mut egress: BTreeMap<DeviceId, Vec<(usize, f64)>> = BTreeMap::new();
    let mut ingress: BTreeMap<DeviceId, Vec<(usize, f64)>> = BTreeMap::new();
    let mut olt_load: BTreeMap<DeviceId, Vec<(usize, f64)>> = BTreeMap::new();
    let mut util: BTreeMap<DeviceId, Vec<(usize, f64)>> = BTreeMap::new();
    let mut through: BTreeMap<DeviceId, Vec<(usize, f64)>> = BTreeMap::new();
    let mut coupling: BTreeMap<(DeviceId, usize), Vec<(usize, f64)>> = BTreeMap::new();

    for (di, (d, cands)) in demands.iter().zip(&paths).enumerate() {
        let mbps = d.rate_bps / MBPS;
        for (qi, path) in cands.iter().enumerate() {
            let j = select_var[di][qi];
            for h in &path.hops {
                link_rows.entry((h.link, h.from)).or_default().push((j, mbps));
            }
            let (roles, olts) = path_roles(t, path);
            for &(dev, role) in &roles {
                if role != Role::Receive {
                    egress.entry(dev).or_default().push((j, mbps));
                }
                if role != Role::Transmit {
                    ingress.entry(dev).or_default().push((j, mbps));
                }
                util.entry(dev).or_default().push((j, p.role_fraction(role)));
                through.entry(dev).or_default().push((j, mbps));
                if role == Role::Forward {
                    coupling.entry((dev, di)).or_default().push((j, 1.0));
                }
            }
            for olt in olts {
                olt_load.entry(olt).or_default().push((j, mbps));
                through.entry(olt).or_default().push((j, mbps));
                coupling.entry((olt, di)).or_default().push((j, 1.0));
            }
        }
    }

    for ((link, from), coeffs) in link_rows {
        let cap = t.link(link).expect("paths use existing links").capacity_bps / MBPS;
        rows.push(Row {
            name: format!("link_{}_from_{}", link, t.name(from).replace('-', "_")),
            kind: RowKind::LinkCapacity,
            coeffs,
            sense: Sense::Le,
            rhs: cap,
        });
    }
    let dev_name = |d: DeviceId| t.name(d).replace('-', "_");
    for (dev, coeffs) in egress {
        rows.push(Row {
            name: format!("egress_{}", dev_name(dev)),
            kind: RowKind::DeviceEgress,
            coeffs,
            sense: Sense::Le,
            rhs: p.device_rate_bps(t.kind(dev)) / MBPS,
        });
    }
    for (dev, coeffs) in ingress {
        rows.push(Row {
            name: format!("ingress_{}", dev_name(dev)),
            kind: RowKind::DeviceIngress,
            coeffs,
            sense: Sense::Le,
            rhs: p.device_rate_bps(t.kind(dev)) / MBPS,
        });
    }
    for (dev, coeffs) in olt_load {
        rows.push(Row {
            name: format!("olt_{}", dev_name(dev)),
            kind: RowKind::OltThroughput,
            coeffs,
            sense: Sense::Le,
            rhs: p.olt_rate_bps / MBPS,
        });
    }
    for (dev, coeffs) in util {
        rows.push(Row {
            name: format!("util_{}", dev_name(dev)),
            kind: RowKind::Utilization,
            coeffs,
            sense: Sense::Le,
            rhs: 1.0,
        });
    }
    for ((dev, di), mut coeffs) in coupling {
        coeffs.push((activate_var[&dev], -1.0));
        rows.push(Row {
            name: format!("use_{}_{}", dev_name(dev), di),
            kind: RowKind::DemandCoupling,
            coeffs,
            sense: Sense::Le,
            rhs: 0.0,
        });
    }
    for (dev, mut coeffs) in through {
        coeffs.push((activate_var[&dev], -p.big_m));
        rows.push(Row {
            name: format!("bigm_{}", dev_name(dev)),
            kind: RowKind::BigM,
            coeffs,
            sense: Sense::Le,
            rhs: 0.0,
        });
    }

    Ok(MilpInstance {
        topology: t.clone(),
        params: p.clone(),
        hop_limit,
        demands,
        paths,
        select_var,
        activate_var,
        vars,
        rows,
    })
}

impl MilpInstance {
    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn selection_var_count(&self) -> usize {
        self.select_var.iter().map(Vec::len).sum()
    }

    /// Variable values implied by choosing path `choice[d]` for each demand:
    /// selections are 0/1 and a device is active iff it is used or forced on.
    pub fn values_for(&self, choice: &[usize]) -> Vec<f64> {
        let mut v = vec![0.0; self.vars.len()];
        for (di, &qi) in choice.iter().enumerate() {
            v[self.select_var[di][qi]] = 1.0;
            let path = &self.paths[di][qi];
            let (roles, olts) = path_roles(&self.topology, path);
            for dev in roles.iter().map(|r| r.0).chain(olts) {
                v[self.activate_var[&dev]] = 1.0;
            }
        }
        for (j, var) in self.vars.iter().enumerate() {
            if var.lower > v[j] {
                v[j] = var.lower;
            }
        }
        v
    }

    pub fn objective(&self, values: &[f64]) -> f64 {
        self.vars.iter().zip(values).map(|(var, x)| var.cost * x).sum()
    }

    /// First violated row for an assignment, if any.
    pub fn violated_row(&self, choice: &[usize]) -> Option<&Row> {
        let v = self.values_for(choice);
        self.rows.iter().find(|r| !r.satisfied(&v, 1e-9))
    }

    pub fn is_feasible(&self, choice: &[usize]) -> bool {
        self.violated_row(choice).is_none()
    }

    pub fn assignment_cost(&self, choice: &[usize]) -> f64 {
        self.objective(&self.values_for(choice))
    }
}
