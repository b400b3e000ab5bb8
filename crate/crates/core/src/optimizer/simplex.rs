//! Dense two-phase primal simplex for small LPs of the form
//! `min c.x  s.t.  A x {<=,=,>=} b,  x >= 0`.
//!
//! Dantzig pricing; after a run of degenerate pivots the solve switches to
//! Bland's rule for good, which rules out cycling.

use super::Sense;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub rows: Vec<LpRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn new(n: usize) -> Self {
        LinearProgram { cost: vec![0.0; n], rows: Vec::new() }
    }

    pub fn var_count(&self) -> usize {
        self.cost.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(LpRow { coeffs, sense, rhs });
    }

    pub fn solve(&self) -> LpSolution {
        Tableau::build(self).run(self)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

struct Tableau {
    m: usize,
    width: usize,
    /// Row-major, `width + 1` entries per row; the last holds the rhs.
    t: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    kinds: Vec<ColKind>,
    n: usize,
    iterations: usize,
    limit: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Tableau {
        let n = lp.var_count();
        let m = lp.rows.len();
        let mut kinds = vec![ColKind::Structural; n];
        // (sign flip, slack coefficient, needs artificial)
        let mut plan = Vec::with_capacity(m);
        for r in &lp.rows {
            let flip = r.rhs < 0.0;
            let sense = match (r.sense, flip) {
                (Sense::Le, true) => Sense::Ge,
                (Sense::Ge, true) => Sense::Le,
                (s, _) => s,
            };
            let (slack, art) = match sense {
                Sense::Le => (Some(1.0), false),
                Sense::Ge => (Some(-1.0), true),
                Sense::Eq => (None, true),
            };
            plan.push((flip, slack, art));
        }
        let slack_cols: Vec<Option<usize>> = plan
            .iter()
            .map(|&(_, s, _)| {
                s.map(|_| {
                    kinds.push(ColKind::Slack);
                    kinds.len() - 1
                })
            })
            .collect();
        let art_cols: Vec<Option<usize>> = plan
            .iter()
            .map(|&(_, _, a)| {
                a.then(|| {
                    kinds.push(ColKind::Artificial);
                    kinds.len() - 1
                })
            })
            .collect();
        let width = kinds.len();
        let stride = width + 1;
        let mut t = vec![0.0; m * stride];
        let mut basis = vec![0; m];
        for (i, r) in lp.rows.iter().enumerate() {
            let (flip, slack, _) = plan[i];
            let sign = if flip { -1.0 } else { 1.0 };
            let row = &mut t[i * stride..(i + 1) * stride];
            for &(j, c) in &r.coeffs {
                row[j] += sign * c;
            }
            row[width] = sign * r.rhs;
            if let (Some(col), Some(c)) = (slack_cols[i], slack) {
                row[col] = c;
            }
            if let Some(col) = art_cols[i] {
                row[col] = 1.0;
                basis[i] = col;
            } else {
                basis[i] = slack_cols[i].expect("rows without artificial have a slack");
            }
        }
        let limit = 50 * (m + width) + 1000;
        Tableau { m, width, t, obj: vec![0.0; stride], basis, kinds, n, iterations: 0, limit }
    }

    fn stride(&self) -> usize {
        self.width + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.stride() + j]
    }

    /// Sets the objective row to reduced costs of `cost` for the current basis.
    fn price(&mut self, cost: &[f64]) {
        let stride = self.stride();
        self.obj.iter_mut().for_each(|v| *v = 0.0);
        self.obj[..cost.len()].copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * stride..(i + 1) * stride];
                for (o, v) in self.obj.iter_mut().zip(row) {
                    *o -= cb * v;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let stride = self.stride();
        let p = self.at(r, c);
        {
            let row = &mut self.t[r * stride..(r + 1) * stride];
            row.iter_mut().for_each(|v| *v /= p);
        }
        let prow: Vec<f64> = self.t[r * stride..(r + 1) * stride].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * stride + c];
            if f != 0.0 {
                let row = &mut self.t[i * stride..(i + 1) * stride];
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                    if v.abs() < 1e-12 {
                        *v = 0.0;
                    }
                }
                row[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
        self.iterations += 1;
    }

    /// Runs simplex iterations on the current objective row. Columns for
    /// which `allowed` is false never enter.
    fn optimise(&mut self, allowed: &dyn Fn(usize) -> bool) -> LpStatus {
        let mut degenerate = 0;
        let mut bland = false;
        loop {
            if self.iterations >= self.limit {
                return LpStatus::IterationLimit;
            }
            bland |= degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = -COST_TOL;
            for j in 0..self.width {
                if !allowed(j) {
                    continue;
                }
                let d = self.obj[j];
                if d < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = enter else { return LpStatus::Optimal };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a > PIVOT_TOL {
                    // Round-off can leave a basic value slightly negative.
                    let ratio = self.at(i, self.width).max(0.0) / a;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else { return LpStatus::Unbounded };
            degenerate = if ratio.abs() <= 1e-9 { degenerate + 1 } else { 0 };
            self.pivot(r, c);
        }
    }

    fn run(mut self, lp: &LinearProgram) -> LpSolution {
        let fail = |status, iterations| LpSolution { status, x: Vec::new(), value: f64::NAN, iterations };
        let has_art = self.kinds.contains(&ColKind::Artificial);
        if has_art {
            let phase1: Vec<f64> =
                self.kinds.iter().map(|&k| if k == ColKind::Artificial { 1.0 } else { 0.0 }).collect();
            self.price(&phase1);
            match self.optimise(&|_| true) {
                LpStatus::Optimal => {}
                LpStatus::Unbounded => unreachable!("phase one is bounded below by zero"),
                s => return fail(s, self.iterations),
            }
            if -self.obj[self.width] > FEAS_TOL {
                return fail(LpStatus::Infeasible, self.iterations);
            }
            // Drive zero-level artificials out of the basis where possible.
            for i in 0..self.m {
                if self.kinds[self.basis[i]] != ColKind::Artificial {
                    continue;
                }
                let col = (0..self.width)
                    .filter(|&j| self.kinds[j] != ColKind::Artificial)
                    .max_by(|&a, &b| self.at(i, a).abs().total_cmp(&self.at(i, b).abs()))
                    .filter(|&j| self.at(i, j).abs() > PIVOT_TOL);
                if let Some(j) = col {
                    self.pivot(i, j);
                }
            }
        }
        let mut cost = lp.cost.clone();
        cost.resize(self.width, 0.0);
        self.price(&cost);
        let kinds = self.kinds.clone();
        match self.optimise(&|j| kinds[j] != ColKind::Artificial) {
            LpStatus::Optimal => {}
            s => return fail(s, self.iterations),
        }
        let mut x = vec![0.0; self.n];
        for i in 0..self.m {
            let b = self.basis[i];
            if b < self.n {
                x[b] = self.at(i, self.width).max(0.0);
            }
        }
        let value = lp.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpSolution { status: LpStatus::Optimal, x, value, iterations: self.iterations }
    }
}
