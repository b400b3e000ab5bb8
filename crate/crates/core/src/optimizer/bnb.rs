use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::heuristic::greedy_choice;
use super::simplex::{LinearProgram, LpStatus};
use super::{MilpInstance, OptimizerError, RoutingSolution, Sense, SolverMeta, SolverMethod, VarRole};

const INT_TOL: f64 = 1e-6;
const PRUNE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveLimits {
    /// Nodes processed before giving up on proving optimality.
    pub max_nodes: u64,
    /// Wall-clock cap in seconds; `None` disables it. Results stay
    /// deterministic only while the cap is not reached.
    pub time_limit_s: Option<f64>,
    /// Seed the search with the greedy solution.
    pub warm_start: bool,
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits { max_nodes: 50_000, time_limit_s: None, warm_start: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeOutcome {
    Infeasible,
    /// Bound no better than the incumbent.
    Pruned,
    Integral,
    Branched,
    /// The LP hit its iteration limit; the subtree is abandoned.
    Unsolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u64,
    pub parent: Option<u64>,
    pub depth: usize,
    pub lp_bound: Option<f64>,
    pub incumbent_before: Option<f64>,
    pub outcome: NodeOutcome,
}

struct Node {
    id: u64,
    parent: Option<u64>,
    depth: usize,
    priority: f64,
    fixings: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap: the smallest bound pops first; equal bounds go deepest
    // first, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other.priority.total_cmp(&self.priority).then(self.depth.cmp(&other.depth)).then(other.id.cmp(&self.id))
    }
}

enum NodeLp {
    Infeasible,
    Ready { lp: LinearProgram, cols: Vec<usize>, constant: f64 },
}

/// Relaxation of the node with fixed variables substituted out and rows
/// that cannot bind dropped.
fn node_lp(inst: &MilpInstance, lo: &[f64], hi: &[f64]) -> NodeLp {
    let nv = inst.vars.len();
    let mut col_of = vec![usize::MAX; nv];
    let mut cols = Vec::new();
    let mut fixed = vec![0.0; nv];
    let mut constant = 0.0;
    for j in 0..nv {
        if hi[j] - lo[j] < 0.5 {
            fixed[j] = lo[j];
            constant += inst.vars[j].cost * lo[j];
        } else {
            col_of[j] = cols.len();
            cols.push(j);
        }
    }
    let mut lp = LinearProgram::new(cols.len());
    for (c, &j) in cols.iter().enumerate() {
        lp.cost[c] = inst.vars[j].cost;
    }
    for row in &inst.rows {
        let mut rhs = row.rhs;
        let mut coeffs = Vec::new();
        for &(j, c) in &row.coeffs {
            if col_of[j] == usize::MAX {
                rhs -= c * fixed[j];
            } else {
                coeffs.push((col_of[j], c));
            }
        }
        let max_act: f64 = coeffs.iter().map(|&(_, c)| c.max(0.0)).sum();
        let min_act: f64 = coeffs.iter().map(|&(_, c)| c.min(0.0)).sum();
        let tol = 1e-9 * (1.0 + rhs.abs());
        let impossible = match row.sense {
            Sense::Le => min_act > rhs + tol,
            Sense::Ge => max_act < rhs - tol,
            Sense::Eq => min_act > rhs + tol || max_act < rhs - tol,
        };
        if impossible {
            return NodeLp::Infeasible;
        }
        let slack = match row.sense {
            Sense::Le => max_act <= rhs + tol,
            Sense::Ge => min_act >= rhs - tol,
            Sense::Eq => coeffs.is_empty(),
        };
        if !slack {
            lp.add_row(coeffs, row.sense, rhs);
        }
    }
    for (c, &j) in cols.iter().enumerate() {
        if matches!(inst.vars[j].role, VarRole::Activate { .. }) {
            lp.add_row(vec![(c, 1.0)], Sense::Le, 1.0);
        }
    }
    NodeLp::Ready { lp, cols, constant }
}

fn fractionality(v: f64) -> f64 {
    (v - v.floor()).min(v.ceil() - v)
}

/// Variable to branch on: the most fractional activation, else the most
/// fractional selection; ties go to the lowest index. Activations go first
/// because a handful of them fix the structure of the whole routing.
fn branch_var(inst: &MilpInstance, values: &[(usize, f64)]) -> Option<usize> {
    let pick = |select: bool| {
        let mut best: Option<(usize, f64)> = None;
        for &(j, v) in values {
            if matches!(inst.vars[j].role, VarRole::Select { .. }) != select {
                continue;
            }
            let f = fractionality(v);
            if f > INT_TOL && best.is_none_or(|(_, bf)| f > bf + 1e-12) {
                best = Some((j, f));
            }
        }
        best.map(|b| b.0)
    };
    pick(false).or_else(|| pick(true))
}

/// Rounds by LP diving: repeatedly fixes the largest fractional variable
/// to one and re-solves, until the LP solution is integral. Gives up when a
/// fixing makes the LP infeasible.
fn dive(inst: &MilpInstance, lo: &[f64], hi: &[f64], values: &[(usize, f64)]) -> Option<Vec<usize>> {
    let mut lo = lo.to_vec();
    let mut hi = hi.to_vec();
    let mut values = values.to_vec();
    for _ in 0..=inst.vars.len() {
        let mut x = lo.clone();
        for &(j, v) in &values {
            x[j] = v;
        }
        if branch_var(inst, &values).is_none() {
            let choice = choice_from(inst, &x);
            return inst.is_feasible(&choice).then_some(choice);
        }
        let (j, _) = values
            .iter()
            .filter(|&&(j, v)| matches!(inst.vars[j].role, VarRole::Select { .. }) && fractionality(v) > INT_TOL)
            .fold(None::<(usize, f64)>, |best, &(j, v)| match best {
                Some((_, bv)) if bv >= v - 1e-12 => best,
                _ => Some((j, v)),
            })
            .or_else(|| values.iter().copied().find(|&(_, v)| fractionality(v) > INT_TOL))?;
        lo[j] = 1.0;
        hi[j] = 1.0;
        let NodeLp::Ready { lp, cols, .. } = node_lp(inst, &lo, &hi) else { return None };
        let sol = lp.solve();
        if sol.status != LpStatus::Optimal {
            return None;
        }
        values = cols.iter().copied().zip(sol.x).collect();
    }
    None
}

fn choice_from(inst: &MilpInstance, x: &[f64]) -> Vec<usize> {
    inst.select_var
        .iter()
        .map(|vars| {
            vars.iter()
                .enumerate()
                .max_by(|a, b| x[*a.1].total_cmp(&x[*b.1]).then(b.0.cmp(&a.0)))
                .map(|(q, _)| q)
                .expect("every demand has a candidate")
        })
        .collect()
}

/// Branch-and-bound on the LP relaxation, best bound first. The root also
/// tries an LP dive for an early incumbent.
pub fn solve_exact(inst: &MilpInstance, limits: &SolveLimits) -> Result<RoutingSolution, OptimizerError> {
    solve_exact_traced(inst, limits).map(|(s, _)| s)
}

/// As [`solve_exact`], also returning one record per processed node.
pub fn solve_exact_traced(
    inst: &MilpInstance,
    limits: &SolveLimits,
) -> Result<(RoutingSolution, Vec<NodeRecord>), OptimizerError> {
    let start = Instant::now();
    let deadline = limits.time_limit_s.map(|s| start + Duration::from_secs_f64(s));
    let base_lo: Vec<f64> = inst.vars.iter().map(|v| v.lower).collect();
    let base_hi: Vec<f64> = inst.vars.iter().map(|v| v.upper).collect();

    let mut incumbent: Option<(Vec<usize>, f64)> = None;
    if limits.warm_start {
        if let Ok(c) = greedy_choice(inst) {
            let cost = inst.assignment_cost(&c);
            incumbent = Some((c, cost));
        }
    }

    let mut trace = Vec::new();
    let mut heap = BinaryHeap::new();
    heap.push(Node { id: 0, parent: None, depth: 0, priority: f64::NEG_INFINITY, fixings: Vec::new() });
    let mut next_id = 1u64;
    let mut complete = true;
    let mut processed = 0u64;

    while let Some(node) = heap.pop() {
        let limit_hit = processed >= limits.max_nodes || deadline.is_some_and(|d| Instant::now() >= d);
        if limit_hit {
            heap.push(node);
            complete = false;
            break;
        }
        processed += 1;
        let inc_val = incumbent.as_ref().map(|i| i.1);
        let mut record = NodeRecord {
            id: node.id,
            parent: node.parent,
            depth: node.depth,
            lp_bound: None,
            incumbent_before: inc_val,
            outcome: NodeOutcome::Infeasible,
        };
        if inc_val.is_some_and(|v| node.priority >= v - PRUNE_TOL) {
            record.outcome = NodeOutcome::Pruned;
            trace.push(record);
            continue;
        }
        let mut lo = base_lo.clone();
        let mut hi = base_hi.clone();
        for &(j, v) in &node.fixings {
            lo[j] = v;
            hi[j] = v;
        }
        let NodeLp::Ready { lp, cols, constant } = node_lp(inst, &lo, &hi) else {
            trace.push(record);
            continue;
        };
        let sol = lp.solve();
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                trace.push(record);
                continue;
            }
            LpStatus::Unbounded => return Err(OptimizerError::Unbounded),
            LpStatus::IterationLimit => {
                record.outcome = NodeOutcome::Unsolved;
                complete = false;
                trace.push(record);
                continue;
            }
        }
        let bound = constant + sol.value;
        record.lp_bound = Some(bound);
        if inc_val.is_some_and(|v| bound >= v - PRUNE_TOL) {
            record.outcome = NodeOutcome::Pruned;
            trace.push(record);
            continue;
        }
        let mut x = lo.clone();
        let values: Vec<(usize, f64)> = cols.iter().zip(&sol.x).map(|(&j, &v)| (j, v)).collect();
        if node.parent.is_none() {
            if let Some(choice) = dive(inst, &lo, &hi, &values) {
                let cost = inst.assignment_cost(&choice);
                if inc_val.is_none_or(|v| cost < v - PRUNE_TOL) {
                    incumbent = Some((choice, cost));
                }
            }
        }
        let inc_val = incumbent.as_ref().map(|i| i.1);
        for &(j, v) in &values {
            x[j] = v;
        }
        match branch_var(inst, &values) {
            None => {
                let choice = choice_from(inst, &x);
                if inst.is_feasible(&choice) {
                    let cost = inst.assignment_cost(&choice);
                    if inc_val.is_none_or(|v| cost < v - PRUNE_TOL) {
                        incumbent = Some((choice, cost));
                    }
                    record.outcome = NodeOutcome::Integral;
                } else {
                    record.outcome = NodeOutcome::Unsolved;
                    complete = false;
                }
            }
            Some(j) => {
                record.outcome = NodeOutcome::Branched;
                for v in [1.0, 0.0] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((j, v));
                    heap.push(Node {
                        id: next_id,
                        parent: Some(node.id),
                        depth: node.depth + 1,
                        priority: bound,
                        fixings,
                    });
                    next_id += 1;
                }
            }
        }
        trace.push(record);
    }

    let Some((choice, value)) = incumbent else {
        return Err(if complete { OptimizerError::InfeasibleAtSolve } else { OptimizerError::NoIncumbent });
    };
    let open_bound = heap.iter().map(|n| n.priority).fold(f64::INFINITY, f64::min);
    let best_bound = open_bound.min(value);
    let gap = if complete { 0.0 } else { ((value - best_bound) / value.abs().max(1e-12)).max(0.0) };
    let meta = SolverMeta { method: SolverMethod::Exact, optimal: complete, gap: Some(gap), nodes: processed };
    Ok((RoutingSolution::from_choice(inst, &choice, meta), trace))
}
