//! Power and queuing-delay evaluation of a routing solution.
//!
//! Power follows the linear idle-to-peak server model: an active server
//! draws `PSI + (PSM - PSI) * u`, special servers add their ONU, and OLT
//! ports scale with their load. Delay treats each device a demand leaves
//! from as an independent M/M/1 output queue.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizer::{ModelParams, RoutingSolution};
use crate::topology::{DeviceId, DeviceKind, Topology};

/// Mean packet size, 1500 bytes.
pub const DEFAULT_PACKET_BITS: f64 = 12_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerfError {
    #[error("utilisation {0} outside [0,1]")]
    UtilizationRange(f64),
    #[error("{device} is overloaded: utilisation {utilization}")]
    Overload { device: String, utilization: f64 },
    #[error("queue at {device} is unstable: arrivals {arrival_pps} pkt/s >= service {service_pps} pkt/s")]
    Unstable { device: String, arrival_pps: f64, service_pps: f64 },
    #[error("packet size must be positive, got {0}")]
    PacketBits(f64),
    #[error("baseline {0} is not positive")]
    ZeroBaseline(&'static str),
}

/// Power of one server. Inactive servers draw nothing.
pub fn server_power(p: &ModelParams, active: bool, u: f64) -> Result<f64, PerfError> {
    if !(0.0..=1.0).contains(&u) {
        return Err(PerfError::UtilizationRange(u));
    }
    Ok(if active { p.server_idle_w + p.server_slope_w() * u } else { 0.0 })
}

/// Processing utilisation of a server or special server under `sol`.
pub fn utilization(t: &Topology, v: DeviceId, sol: &RoutingSolution, p: &ModelParams) -> Result<f64, PerfError> {
    let u = sol.loads(t).utilization(v, p);
    check_overload(t, v, u)
}

fn check_overload(t: &Topology, v: DeviceId, u: f64) -> Result<f64, PerfError> {
    if u > 1.0 + 1e-12 {
        return Err(PerfError::Overload { device: t.name(v).to_string(), utilization: u });
    }
    Ok(u)
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub total_W: f64,
    pub servers_W: f64,
    pub special_servers_W: f64,
    pub onu_W: f64,
    pub olt_W: f64,
    /// Utilisation of every active server and special server, and load
    /// fraction of every active OLT port, keyed by device name.
    pub utilization: BTreeMap<String, f64>,
    /// Power drawn by each active device (special servers include their
    /// ONU), keyed by device name.
    pub device_W: BTreeMap<String, f64>,
}

/// Power drawn by the devices `sol` keeps on.
pub fn power(t: &Topology, sol: &RoutingSolution, p: &ModelParams) -> Result<PowerReport, PerfError> {
    let loads = sol.loads(t);
    let (mut servers, mut special, mut onu, mut olt) = (0.0, 0.0, 0.0, 0.0);
    let mut utilization = BTreeMap::new();
    let mut device_w = BTreeMap::new();
    for &v in &sol.active {
        let name = t.name(v).to_string();
        match t.kind(v) {
            DeviceKind::Server => {
                let u = check_overload(t, v, loads.utilization(v, p))?;
                let w = server_power(p, true, u)?;
                servers += w;
                utilization.insert(name.clone(), u);
                device_w.insert(name, w);
            }
            DeviceKind::SpecialServer => {
                let u = check_overload(t, v, loads.utilization(v, p))?;
                let w = server_power(p, true, u)?;
                special += w;
                onu += p.onu_power_w;
                utilization.insert(name.clone(), u);
                device_w.insert(name, w + p.onu_power_w);
            }
            DeviceKind::OltPort => {
                let share = loads.olt_bps.get(&v).copied().unwrap_or(0.0) / p.olt_rate_bps;
                let share = check_overload(t, v, share)?;
                let w = p.olt_idle_w + p.olt_slope_w() * share;
                olt += w;
                utilization.insert(name.clone(), share);
                device_w.insert(name, w);
            }
            _ => {}
        }
    }
    Ok(PowerReport {
        total_W: servers + special + onu + olt,
        servers_W: servers,
        special_servers_W: special,
        onu_W: onu,
        olt_W: olt,
        utilization,
        device_W: device_w,
    })
}

/// Mean waiting time of an M/M/1 queue with arrival rate `lambda` and
/// service rate `mu`, both in packets per second.
pub fn mm1_wait(lambda: f64, mu: f64) -> f64 {
    lambda / (mu * (mu - lambda))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandDelay {
    pub src: String,
    pub dst: String,
    pub delay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    pub mean_queuing_delay_s: f64,
    pub per_demand: Vec<DemandDelay>,
    /// Waiting time at every device that queues traffic, keyed by name.
    pub per_device_wait_s: BTreeMap<String, f64>,
}

/// Queuing delay of `sol`. Each device is an output queue fed by the
/// traffic it sends on (`lambda = egress / packet_bits`) and drained at its
/// rate: the server rate, the ONU rate for special servers, the OLT rate
/// for OLT ports, and the link capacity for passive devices. A demand
/// waits at every device it leaves from, so the destination adds nothing.
pub fn delay(t: &Topology, sol: &RoutingSolution, packet_bits: f64, p: &ModelParams) -> Result<DelayReport, PerfError> {
    if !(packet_bits > 0.0) {
        return Err(PerfError::PacketBits(packet_bits));
    }
    let loads = sol.loads(t);
    let mut queues: BTreeMap<DeviceId, f64> = loads.egress_bps.clone();
    for (&olt, &bps) in &loads.olt_bps {
        *queues.entry(olt).or_default() += bps;
    }
    let mut wait: BTreeMap<DeviceId, f64> = BTreeMap::new();
    for (&v, &bps) in &queues {
        let lambda = bps / packet_bits;
        let mu = p.device_rate_bps(t.kind(v)) / packet_bits;
        if lambda >= mu {
            return Err(PerfError::Unstable { device: t.name(v).to_string(), arrival_pps: lambda, service_pps: mu });
        }
        wait.insert(v, mm1_wait(lambda, mu));
    }
    let per_demand: Vec<DemandDelay> = sol
        .routes
        .iter()
        .map(|r| {
            let devices = &r.path.devices[..r.path.devices.len() - 1];
            let olts = r.path.hops.iter().filter_map(|h| t.olt_for(h.link));
            let delay_s = devices.iter().copied().chain(olts).map(|v| wait[&v]).sum();
            DemandDelay { src: t.name(r.demand.src).to_string(), dst: t.name(r.demand.dst).to_string(), delay_s }
        })
        .collect();
    let mean = if per_demand.is_empty() {
        0.0
    } else {
        per_demand.iter().map(|d| d.delay_s).sum::<f64>() / per_demand.len() as f64
    };
    let per_device_wait_s = wait.into_iter().map(|(v, w)| (t.name(v).to_string(), w)).collect();
    Ok(DelayReport { mean_queuing_delay_s: mean, per_demand, per_device_wait_s })
}

/// Power and delay of one evaluated state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub id: String,
    pub power: PowerReport,
    pub delay: DelayReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub baseline_id: String,
    pub scenario_id: String,
    pub power_delta_pct: f64,
    pub delay_delta_pct: f64,
}

/// Percentage change from `baseline` to `value`.
pub fn delta_pct(baseline: f64, value: f64) -> f64 {
    100.0 * (value - baseline) / baseline
}

pub fn compare(baseline: &Evaluation, scenario: &Evaluation) -> Result<DeltaReport, PerfError> {
    if !(baseline.power.total_W > 0.0) {
        return Err(PerfError::ZeroBaseline("power"));
    }
    if !(baseline.delay.mean_queuing_delay_s > 0.0) {
        return Err(PerfError::ZeroBaseline("delay"));
    }
    Ok(DeltaReport {
        baseline_id: baseline.id.clone(),
        scenario_id: scenario.id.clone(),
        power_delta_pct: delta_pct(baseline.power.total_W, scenario.power.total_W),
        delay_delta_pct: delta_pct(baseline.delay.mean_queuing_delay_s, scenario.delay.mean_queuing_delay_s),
    })
}
