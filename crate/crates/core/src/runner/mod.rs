//! Experiment orchestration: configuration, scenario sweeps and output.

mod config;
mod report;

use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::failures::{self, FailureSpec, ScenarioClass};
use crate::optimizer::{self, build_milp, MilpInstance, OptimizerError, RoutingSolution};
use crate::performance::{self, delta_pct, Evaluation, PerfError};
use crate::topology::{build_cell, LinkId, Topology};
use crate::traffic::{generate, TrafficMatrix, TrafficParams};

pub use config::{
    parse_config, parse_config_str, ConfigError, Format, RunConfig, ScenarioSelection, Seeds, SolverChoice,
    TargetSelection,
};
pub use report::{
    emit, published_reference, render_comparison, render_survivability, summarize, survivability_table, write_records,
    PublishedFigures, ScenarioSummary, SurvivabilityRow,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot build the cell: {0}")]
    Topology(#[from] crate::topology::TopologyError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot encode output: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Exact,
    Heuristic,
}

impl Solver {
    pub fn as_str(self) -> &'static str {
        match self {
            Solver::Exact => "exact",
            Solver::Heuristic => "heuristic",
        }
    }
}

/// One row of sweep output. The no-failure baseline uses scenario `NF`
/// and an empty target.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub target_link: String,
    pub seed: u64,
    pub solver: String,
    pub total_power_W: Option<f64>,
    pub power_delta_pct: Option<f64>,
    pub mean_delay_s: Option<f64>,
    pub delay_delta_pct: Option<f64>,
    /// Only filled when timing is requested, to keep output reproducible.
    pub solve_time_s: Option<f64>,
    pub optimal: bool,
    pub status: String,
}

impl RunRecord {
    pub fn is_baseline(&self) -> bool {
        self.scenario == BASELINE
    }

    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }

    fn scenario_rank(&self) -> usize {
        if self.is_baseline() {
            0
        } else {
            self.scenario.parse::<ScenarioClass>().map_or(usize::MAX, |s| s.index() + 1)
        }
    }
}

pub const BASELINE: &str = "NF";
pub const STATUS_OK: &str = "ok";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub records: Vec<RunRecord>,
    /// Seeds whose baseline could not be generated or solved, with the
    /// reason.
    pub failed_baselines: Vec<(u64, String)>,
}

impl SweepOutcome {
    /// Process exit code: 0 all good, 2 some baseline infeasible, 3 some
    /// scenario run failed.
    pub fn exit_code(&self) -> i32 {
        if !self.failed_baselines.is_empty() {
            2
        } else if self.records.iter().any(|r| !r.is_ok()) {
            3
        } else {
            0
        }
    }
}

fn status_of(e: &OptimizerError) -> &'static str {
    match e {
        OptimizerError::InfeasibleAtBuild { .. } => "infeasible-at-build",
        OptimizerError::InfeasibleAtSolve => "infeasible",
        OptimizerError::DeadEnd { .. } => "dead-end",
        OptimizerError::NoIncumbent => "no-incumbent",
        OptimizerError::TooLarge { .. } | OptimizerError::Unbounded | OptimizerError::InvalidParams(_) => "error",
        OptimizerError::Topology(_) => "error",
    }
}

fn perf_status(e: &PerfError) -> &'static str {
    match e {
        PerfError::Unstable { .. } => "unstable",
        PerfError::Overload { .. } => "overload",
        _ => "error",
    }
}

struct Solved {
    solution: RoutingSolution,
    seconds: f64,
}

fn solve(cfg: &RunConfig, inst: &MilpInstance, solver: Solver) -> Result<Solved, OptimizerError> {
    let start = Instant::now();
    let solution = match solver {
        Solver::Exact => optimizer::solve_exact(inst, &cfg.limits)?,
        Solver::Heuristic => optimizer::solve_heuristic(inst)?,
    };
    Ok(Solved { solution, seconds: start.elapsed().as_secs_f64() })
}

enum StateResult {
    Ok { eval: Evaluation, optimal: bool, seconds: f64 },
    Failed { status: &'static str, detail: String },
}

fn evaluate_state(cfg: &RunConfig, t: &Topology, traffic: &TrafficMatrix, solver: Solver, id: &str) -> StateResult {
    let inst = match build_milp(t, traffic, &cfg.model, cfg.hop_limit) {
        Ok(i) => i,
        Err(e) => return StateResult::Failed { status: status_of(&e), detail: e.to_string() },
    };
    let solved = match solve(cfg, &inst, solver) {
        Ok(s) => s,
        Err(e) => return StateResult::Failed { status: status_of(&e), detail: e.to_string() },
    };
    let sol = &solved.solution;
    let power = match performance::power(t, sol, &cfg.model) {
        Ok(p) => p,
        Err(e) => return StateResult::Failed { status: perf_status(&e), detail: e.to_string() },
    };
    let delay = match performance::delay(t, sol, cfg.packet_bits, &cfg.model) {
        Ok(d) => d,
        Err(e) => return StateResult::Failed { status: perf_status(&e), detail: e.to_string() },
    };
    StateResult::Ok {
        eval: Evaluation { id: id.to_string(), power, delay },
        optimal: sol.meta.optimal,
        seconds: solved.seconds,
    }
}

fn record(scenario: &str, target: Option<LinkId>, seed: u64, solver: Solver) -> RunRecord {
    RunRecord {
        scenario: scenario.to_string(),
        target_link: target.map(|l| l.to_string()).unwrap_or_default(),
        seed,
        solver: solver.as_str().to_string(),
        total_power_W: None,
        power_delta_pct: None,
        mean_delay_s: None,
        delay_delta_pct: None,
        solve_time_s: None,
        optimal: false,
        status: STATUS_OK.to_string(),
    }
}

/// Failure instances a sweep visits, in scenario then link order.
pub fn sweep_targets(cfg: &RunConfig, t: &Topology) -> Vec<FailureSpec> {
    let mut specs = Vec::new();
    for &s in &cfg.scenario_list() {
        let targets = failures::enumerate_targets(t, s);
        let chosen: Vec<LinkId> = match cfg.target {
            TargetSelection::First => targets.into_iter().take(1).collect(),
            TargetSelection::All => targets,
        };
        specs.extend(chosen.into_iter().map(|target| FailureSpec { scenario: s, target }));
    }
    specs
}

fn run_seed(cfg: &RunConfig, t: &Topology, specs: &[FailureSpec], seed: u64) -> (Vec<RunRecord>, Option<String>) {
    let params = TrafficParams { server_rate_bps: cfg.model.server_rate_bps, ..cfg.traffic.params() };
    let traffic = match generate(t, &params, seed) {
        Ok(m) => m,
        Err(e) => return (Vec::new(), Some(format!("seed {seed}: traffic generation failed: {e}"))),
    };
    let mut out = Vec::new();
    let mut failure = None;
    for solver in cfg.solver.solvers() {
        let mut base = record(BASELINE, None, seed, solver);
        let baseline = match evaluate_state(cfg, t, &traffic, solver, BASELINE) {
            StateResult::Ok { eval, optimal, seconds } => {
                base.total_power_W = Some(eval.power.total_W);
                base.mean_delay_s = Some(eval.delay.mean_queuing_delay_s);
                base.power_delta_pct = Some(0.0);
                base.delay_delta_pct = Some(0.0);
                base.optimal = optimal;
                base.solve_time_s = cfg.output.timing.then_some(seconds);
                out.push(base);
                eval
            }
            StateResult::Failed { status, detail } => {
                warn!("seed {seed} {}: baseline failed: {detail}", solver.as_str());
                base.status = status.to_string();
                out.push(base);
                failure = Some(format!("seed {seed} ({}): baseline {status}: {detail}", solver.as_str()));
                continue;
            }
        };
        for spec in specs {
            let name = spec.scenario.to_string();
            let mut rec = record(&name, Some(spec.target), seed, solver);
            let degraded = failures::apply(t, spec).expect("targets enumerated from the same topology");
            match evaluate_state(cfg, &degraded, &traffic, solver, &name) {
                StateResult::Ok { eval, optimal, seconds } => {
                    rec.total_power_W = Some(eval.power.total_W);
                    rec.mean_delay_s = Some(eval.delay.mean_queuing_delay_s);
                    rec.power_delta_pct = Some(delta_pct(baseline.power.total_W, eval.power.total_W));
                    rec.delay_delta_pct = (baseline.delay.mean_queuing_delay_s > 0.0)
                        .then(|| delta_pct(baseline.delay.mean_queuing_delay_s, eval.delay.mean_queuing_delay_s));
                    rec.optimal = optimal;
                    rec.solve_time_s = cfg.output.timing.then_some(seconds);
                }
                StateResult::Failed { status, detail } => {
                    info!("seed {seed} {} {name} {}: {detail}", solver.as_str(), spec.target);
                    rec.status = status.to_string();
                }
            }
            out.push(rec);
        }
    }
    (out, failure)
}

/// Runs the no-failure baseline and every selected failure for each seed
/// and solver. Seeds run in parallel; the result is sorted canonically by
/// scenario, seed, target and solver, so it does not depend on scheduling.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutcome, RunError> {
    let t = build_cell(&cfg.cell_params())?;
    let specs = sweep_targets(cfg, &t);
    let seeds = cfg.traffic.seeds.list();
    let per_seed: Vec<(Vec<RunRecord>, Option<String>)> =
        seeds.par_iter().map(|&seed| run_seed(cfg, &t, &specs, seed)).collect();
    let mut records = Vec::new();
    let mut failed_baselines = Vec::new();
    for (&seed, (recs, failure)) in seeds.iter().zip(per_seed) {
        records.extend(recs);
        if let Some(f) = failure {
            failed_baselines.push((seed, f));
        }
    }
    records.sort_by(|a, b| {
        a.scenario_rank()
            .cmp(&b.scenario_rank())
            .then(a.seed.cmp(&b.seed))
            .then(a.target_link.cmp(&b.target_link))
            .then(a.solver.cmp(&b.solver))
    });
    Ok(SweepOutcome { records, failed_baselines })
}
