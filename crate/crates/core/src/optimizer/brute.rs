use super::{MilpInstance, OptimizerError, RoutingSolution, SolverMeta, SolverMethod};

/// Largest assignment space [`brute_force`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u64 = 1_000_000;

/// Enumerates every path assignment and returns the cheapest feasible one.
/// Ties keep the lexicographically first assignment. `meta.nodes` is the
/// number of assignments evaluated.
pub fn brute_force(inst: &MilpInstance) -> Result<RoutingSolution, OptimizerError> {
    let count: f64 = inst.paths.iter().map(|p| p.len() as f64).product();
    if count > BRUTE_FORCE_LIMIT as f64 {
        return Err(OptimizerError::TooLarge { count, limit: BRUTE_FORCE_LIMIT });
    }
    let n = inst.demands.len();
    let mut choice = vec![0usize; n];
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut evaluated = 0u64;
    loop {
        evaluated += 1;
        if inst.is_feasible(&choice) {
            let cost = inst.assignment_cost(&choice);
            if best.as_ref().is_none_or(|(_, b)| cost < b - 1e-9) {
                best = Some((choice.clone(), cost));
            }
        }
        // Odometer step, last demand fastest.
        let mut k = n;
        loop {
            if k == 0 {
                let (choice, _) = best.ok_or(OptimizerError::InfeasibleAtSolve)?;
                let meta =
                    SolverMeta { method: SolverMethod::BruteForce, optimal: true, gap: Some(0.0), nodes: evaluated };
                return Ok(RoutingSolution::from_choice(inst, &choice, meta));
            }
            k -= 1;
            choice[k] += 1;
            if choice[k] < inst.paths[k].len() {
                break;
            }
            choice[k] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{build_milp, ModelParams};
    use crate::topology::{build_cell, CellParams, DEFAULT_HOP_LIMIT};
    use crate::traffic::{Demand, TrafficMatrix};

    #[test]
    fn single_demand_evaluates_each_path_once() {
        let t = build_cell(&CellParams::default()).unwrap();
        let m = TrafficMatrix::new(vec![Demand {
            src: t.device_by_name("srv-r0-g0-q0-n0").unwrap(),
            dst: t.device_by_name("srv-r1-g1-q1-n1").unwrap(),
            rate_bps: 4e8,
        }]);
        let i = build_milp(&t, &m, &ModelParams::default(), DEFAULT_HOP_LIMIT).unwrap();
        let k = i.paths[0].len();
        assert!(k > 1);
        let s = brute_force(&i).unwrap();
        assert_eq!(s.meta.nodes, k as u64);
    }

    #[test]
    fn refuses_huge_spaces() {
        let t = build_cell(&CellParams::default()).unwrap();
        let servers = t.servers();
        let r1: Vec<_> = servers.iter().copied().filter(|&s| t.device(s).locus.rack == 1).collect();
        let demands = servers
            .iter()
            .filter(|&&s| t.device(s).locus.rack == 0)
            .zip(&r1)
            .map(|(&src, &dst)| Demand { src, dst, rate_bps: 1e8 })
            .collect();
        let i = build_milp(&t, &TrafficMatrix::new(demands), &ModelParams::default(), DEFAULT_HOP_LIMIT).unwrap();
        assert!(matches!(brute_force(&i), Err(OptimizerError::TooLarge { .. })));
    }
}
