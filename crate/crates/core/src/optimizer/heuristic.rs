use super::{MilpInstance, OptimizerError, RoutingSolution, RowKind, Sense, SolverMeta, SolverMethod};

/// Row activities of a partial assignment, updated one path at a time.
///
/// Each unrouted demand reserves the load it puts on a row whichever
/// candidate it ends up on (for example its source's send rate), so a
/// relay choice cannot starve a later demand of its own endpoints.
pub(super) struct PartialAssignment<'a> {
    inst: &'a MilpInstance,
    col_rows: Vec<Vec<(usize, f64)>>,
    activity: Vec<f64>,
    reserved: Vec<f64>,
    reserve: Vec<Vec<(usize, f64)>>,
    values: Vec<f64>,
}

impl<'a> PartialAssignment<'a> {
    pub(super) fn new(inst: &'a MilpInstance) -> Self {
        let mut col_rows = vec![Vec::new(); inst.vars.len()];
        for (r, row) in inst.rows.iter().enumerate() {
            for &(j, c) in &row.coeffs {
                col_rows[j].push((r, c));
            }
        }
        let values: Vec<f64> = inst.vars.iter().map(|v| v.lower).collect();
        let mut activity = vec![0.0; inst.rows.len()];
        for (j, &v) in values.iter().enumerate() {
            if v != 0.0 {
                for &(r, c) in &col_rows[j] {
                    activity[r] += c * v;
                }
            }
        }
        let mut reserve = vec![Vec::new(); inst.demands.len()];
        let mut reserved = vec![0.0; inst.rows.len()];
        for (r, row) in inst.rows.iter().enumerate() {
            if row.sense != Sense::Le {
                continue;
            }
            for (d, vars) in inst.select_var.iter().enumerate() {
                if values[vars[0]] > 0.5 {
                    continue;
                }
                let mut least = f64::INFINITY;
                for &j in vars {
                    let c = row.coeffs.iter().find(|e| e.0 == j).map_or(0.0, |e| e.1);
                    least = least.min(c);
                }
                if least > 0.0 {
                    reserve[d].push((r, least));
                    reserved[r] += least;
                }
            }
        }
        PartialAssignment { inst, col_rows, activity, reserved, reserve, values }
    }

    /// Columns set to one by routing demand `d` on path `q`: the selection
    /// variable plus any activation variable, unless already on. Variables
    /// fixed at one by the model start on, so forced routes are loaded
    /// before any choice is made.
    fn columns(&self, d: usize, q: usize) -> Vec<usize> {
        let mut cols = Vec::new();
        let x = self.inst.select_var[d][q];
        if self.values[x] < 0.5 {
            cols.push(x);
        }
        let (roles, olts) = super::path_roles(&self.inst.topology, &self.inst.paths[d][q]);
        for dev in roles.iter().map(|r| r.0).chain(olts) {
            let j = self.inst.activate_var[&dev];
            if self.values[j] < 0.5 && !cols.contains(&j) {
                cols.push(j);
            }
        }
        cols
    }

    /// Added objective if `(d, q)` were chosen and the highest fill ratio
    /// it leaves on a capacity or utilisation row, or `None` if any row
    /// would break.
    pub(super) fn increment(&self, d: usize, q: usize) -> Option<(f64, f64)> {
        let cols = self.columns(d, q);
        let mut delta: Vec<(usize, f64)> = Vec::new();
        for &j in &cols {
            for &(r, c) in &self.col_rows[j] {
                match delta.iter_mut().find(|(rr, _)| *rr == r) {
                    Some(e) => e.1 += c,
                    None => delta.push((r, c)),
                }
            }
        }
        for &(r, c) in &self.reserve[d] {
            match delta.iter_mut().find(|(rr, _)| *rr == r) {
                Some(e) => e.1 -= c,
                None => delta.push((r, -c)),
            }
        }
        let mut fill: f64 = 0.0;
        for (r, dv) in delta {
            let row = &self.inst.rows[r];
            if row.kind == RowKind::OnePath || row.sense != Sense::Le {
                continue;
            }
            let after = self.activity[r] + self.reserved[r] + dv;
            if after > row.rhs + 1e-9 {
                return None;
            }
            if row.rhs > 0.0 {
                fill = fill.max(after / row.rhs);
            }
        }
        Some((cols.iter().map(|&j| self.inst.vars[j].cost).sum(), fill))
    }

    pub(super) fn commit(&mut self, d: usize, q: usize) {
        for &(r, c) in &self.reserve[d] {
            self.reserved[r] -= c;
        }
        for j in self.columns(d, q) {
            self.values[j] = 1.0;
            for &(r, c) in &self.col_rows[j] {
                self.activity[r] += c;
            }
        }
    }
}

/// Greedy routing: demands in descending rate order (ties by index), each
/// placed on the feasible candidate with the smallest added power. Equal
/// power goes to the candidate leaving the lowest peak fill on the rows it
/// touches, then to path order.
pub fn solve_heuristic(inst: &MilpInstance) -> Result<RoutingSolution, OptimizerError> {
    let choice = greedy_choice(inst)?;
    let meta = SolverMeta { method: SolverMethod::Heuristic, optimal: false, gap: None, nodes: 0 };
    Ok(RoutingSolution::from_choice(inst, &choice, meta))
}

pub(super) fn greedy_choice(inst: &MilpInstance) -> Result<Vec<usize>, OptimizerError> {
    let mut order: Vec<usize> = (0..inst.demands.len()).collect();
    order.sort_by(|&a, &b| inst.demands[b].rate_bps.total_cmp(&inst.demands[a].rate_bps).then(a.cmp(&b)));
    let mut state = PartialAssignment::new(inst);
    let mut choice = vec![usize::MAX; inst.demands.len()];
    for d in order {
        let mut best: Option<(usize, f64, f64)> = None;
        for q in 0..inst.paths[d].len() {
            if let Some((inc, fill)) = state.increment(d, q) {
                let better = best.is_none_or(|(_, b, bf)| inc < b - 1e-9 || (inc <= b + 1e-9 && fill < bf - 1e-12));
                if better {
                    best = Some((q, inc, fill));
                }
            }
        }
        let Some((q, _, _)) = best else {
            let dem = &inst.demands[d];
            return Err(OptimizerError::DeadEnd {
                src: inst.topology.name(dem.src).to_string(),
                dst: inst.topology.name(dem.dst).to_string(),
            });
        };
        state.commit(d, q);
        choice[d] = q;
    }
    Ok(choice)
}
