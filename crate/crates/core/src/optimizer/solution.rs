use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{path_roles, MilpInstance, ModelParams, Role};
use crate::topology::{DeviceId, DeviceKind, LinkId, Path, Topology};
use crate::traffic::Demand;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    Exact,
    Heuristic,
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub method: SolverMethod,
    /// Proven optimal for the model.
    pub optimal: bool,
    /// Relative gap between incumbent and best bound when search stopped
    /// early.
    pub gap: Option<f64>,
    /// Branch-and-bound nodes, or assignments enumerated by brute force.
    pub nodes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub demand: Demand,
    pub path: Path,
}

/// Traffic a set of routes puts on devices and links.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Loads {
    pub egress_bps: BTreeMap<DeviceId, f64>,
    pub ingress_bps: BTreeMap<DeviceId, f64>,
    pub olt_bps: BTreeMap<DeviceId, f64>,
    /// Keyed by link and the device the traffic leaves from.
    pub link_bps: BTreeMap<(LinkId, DeviceId), f64>,
    pub transmitted: BTreeMap<DeviceId, usize>,
    pub received: BTreeMap<DeviceId, usize>,
    pub forwarded: BTreeMap<DeviceId, usize>,
}

impl Loads {
    pub fn from_routes<'a>(t: &Topology, routes: impl IntoIterator<Item = &'a Route>) -> Loads {
        let mut l = Loads::default();
        for r in routes {
            let rate = r.demand.rate_bps;
            // Every device but the destination sends the demand onward.
            for (i, &dev) in r.path.devices.iter().enumerate() {
                if i + 1 < r.path.devices.len() {
                    *l.egress_bps.entry(dev).or_default() += rate;
                }
                if i > 0 {
                    *l.ingress_bps.entry(dev).or_default() += rate;
                }
            }
            for h in &r.path.hops {
                *l.link_bps.entry((h.link, h.from)).or_default() += rate;
            }
            let (roles, olts) = path_roles(t, &r.path);
            for (dev, role) in roles {
                let counter = match role {
                    Role::Transmit => &mut l.transmitted,
                    Role::Receive => &mut l.received,
                    Role::Forward => &mut l.forwarded,
                };
                *counter.entry(dev).or_default() += 1;
            }
            for olt in olts {
                *l.olt_bps.entry(olt).or_default() += rate;
            }
        }
        l
    }

    /// Processing utilisation of a server or special server.
    pub fn utilization(&self, dev: DeviceId, p: &ModelParams) -> f64 {
        let n = |m: &BTreeMap<DeviceId, usize>| m.get(&dev).copied().unwrap_or(0) as f64;
        n(&self.transmitted) * p.transmit_fraction
            + n(&self.received) * p.receive_fraction
            + n(&self.forwarded) * p.forward_fraction
    }

    /// Servers and special servers touched by any route.
    pub fn active_elements(&self) -> BTreeSet<DeviceId> {
        self.transmitted.keys().chain(self.received.keys()).chain(self.forwarded.keys()).copied().collect()
    }
}

/// A routing decision with the quantities downstream analysis needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingSolution {
    /// One route per demand, in demand order.
    pub routes: Vec<Route>,
    /// Devices switched on.
    pub active: BTreeSet<DeviceId>,
    /// Model objective: linearised power in watts.
    pub objective_w: f64,
    /// Processing utilisation of active servers and special servers, and
    /// load fraction of active OLT ports.
    pub utilization: BTreeMap<DeviceId, f64>,
    /// Carried traffic per link, both directions summed.
    pub link_load_bps: BTreeMap<LinkId, f64>,
    pub meta: SolverMeta,
}

impl RoutingSolution {
    pub fn from_choice(i: &MilpInstance, choice: &[usize], meta: SolverMeta) -> RoutingSolution {
        let t = &i.topology;
        let routes: Vec<Route> = choice
            .iter()
            .enumerate()
            .map(|(d, &q)| Route { demand: i.demands[d], path: i.paths[d][q].clone() })
            .collect();
        let values = i.values_for(choice);
        let active: BTreeSet<DeviceId> =
            i.activate_var.iter().filter(|(_, &j)| values[j] > 0.5).map(|(&d, _)| d).collect();
        let loads = Loads::from_routes(t, &routes);
        let utilization = active
            .iter()
            .map(|&d| {
                let u = match t.kind(d) {
                    DeviceKind::OltPort => loads.olt_bps.get(&d).copied().unwrap_or(0.0) / i.params.olt_rate_bps,
                    _ => loads.utilization(d, &i.params),
                };
                (d, u)
            })
            .collect();
        let mut link_load_bps = BTreeMap::new();
        for (&(l, _), &bps) in &loads.link_bps {
            *link_load_bps.entry(l).or_default() += bps;
        }
        RoutingSolution { routes, active, objective_w: i.objective(&values), utilization, link_load_bps, meta }
    }

    pub fn loads(&self, t: &Topology) -> Loads {
        Loads::from_routes(t, &self.routes)
    }
}

/// Replays a solution against `t` without any solver state: every route
/// must be a valid path for its demand, every used element active, and no
/// capacity or utilisation limit exceeded.
pub fn verify_solution(t: &Topology, sol: &RoutingSolution, p: &ModelParams, hop_limit: usize) -> Result<(), String> {
    const TOL: f64 = 1e-6;
    for r in &sol.routes {
        if r.path.src != r.demand.src || r.path.dst != r.demand.dst {
            return Err(format!("route for {} -> {} has wrong endpoints", t.name(r.demand.src), t.name(r.demand.dst)));
        }
        t.check_path(&r.path, hop_limit)?;
    }
    let loads = sol.loads(t);
    for dev in loads.active_elements().into_iter().chain(loads.olt_bps.keys().copied()) {
        if !sol.active.contains(&dev) {
            return Err(format!("{} carries traffic but is not active", t.name(dev)));
        }
    }
    for (&(link, from), &bps) in &loads.link_bps {
        let cap = t.link(link).ok_or_else(|| format!("unknown link {link}"))?.capacity_bps;
        if bps > cap * (1.0 + TOL) {
            return Err(format!("link {link} from {} carries {bps} bps over {cap}", t.name(from)));
        }
    }
    for (dir, map) in [("egress", &loads.egress_bps), ("ingress", &loads.ingress_bps)] {
        for (&dev, &bps) in map {
            let kind = t.kind(dev);
            if !kind.is_active_element() {
                continue;
            }
            let cap = p.device_rate_bps(kind);
            if bps > cap * (1.0 + TOL) {
                return Err(format!("{dir} of {} is {bps} bps over {cap}", t.name(dev)));
            }
        }
    }
    for (&dev, &bps) in &loads.olt_bps {
        if bps > p.olt_rate_bps * (1.0 + TOL) {
            return Err(format!("{} carries {bps} bps over {}", t.name(dev), p.olt_rate_bps));
        }
    }
    for dev in loads.active_elements() {
        let u = loads.utilization(dev, p);
        if u > 1.0 + TOL {
            return Err(format!("{} utilisation {u} exceeds 1", t.name(dev)));
        }
    }
    Ok(())
}
