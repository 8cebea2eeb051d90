//! Dense bounded-variable simplex.
//!
//! Every row gets a slack so the slack basis is always available. A dual
//! simplex pass with zero costs restores primal feasibility (phase 1), then
//! the primal simplex optimizes. Bound changes on an optimal tableau keep
//! it dual feasible, so branch-and-bound children re-optimize with the dual
//! simplex from a copy of an earlier tableau.
//!
//! Columns are scaled to unit upper bounds and rows to unit max-norm before
//! the tableau is built; values are unscaled on extraction.

use std::collections::BTreeMap;

use crate::formulation::{Milp, Sense};

/// Primal feasibility tolerance in scaled units.
pub const FEASIBILITY_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-13;
/// Consecutive degenerate steps before switching to Bland's rule.
const DEGENERATE_LIMIT: usize = 40;

/// Branching decisions keyed by `(element, device)`.
pub type Fixings = BTreeMap<(usize, usize), bool>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    /// The pivot budget ran out; the values are not trustworthy.
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: f64,
    pub primal: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Tableau {
    m: usize,
    n: usize,
    width: usize,
    /// Row-major `B⁻¹ [A | I]`.
    t: Vec<f64>,
    /// Scaled structural columns, for recomputing basic values.
    a_cols: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    value: Vec<f64>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
    basis: Vec<usize>,
    /// Row of each basic column.
    row_of: Vec<Option<usize>>,
    col_scale: Vec<f64>,
    pub(crate) pivots: usize,
}

impl Tableau {
    /// Builds the slack-basis tableau of `milp` with the given bound overrides.
    pub(crate) fn new(milp: &Milp) -> Self {
        let n = milp.variables.len();
        let m = milp.constraints.len();
        let width = n + m;

        let col_scale: Vec<f64> = milp
            .variables
            .iter()
            .map(|v| if v.upper.is_finite() && v.upper > 0.0 { v.upper } else { 1.0 })
            .collect();

        let mut t = vec![0.0; m * width];
        let mut a_cols = vec![Vec::new(); n];
        let mut rhs = vec![0.0; m];
        let mut lower = vec![0.0; width];
        let mut upper = vec![0.0; width];
        for (i, row) in milp.constraints.iter().enumerate() {
            let norm = row
                .coeffs
                .iter()
                .map(|&(j, c)| (c * col_scale[j]).abs())
                .fold(0.0, f64::max);
            let rs = if norm > 0.0 { 1.0 / norm } else { 1.0 };
            for &(j, c) in &row.coeffs {
                let v = c * col_scale[j] * rs;
                t[i * width + j] += v;
                a_cols[j].push((i, v));
            }
            t[i * width + n + i] = 1.0;
            rhs[i] = row.rhs * rs;
            let (lo, hi) = match row.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lower[n + i] = lo;
            upper[n + i] = hi;
        }
        for (j, v) in milp.variables.iter().enumerate() {
            lower[j] = v.lower / col_scale[j];
            upper[j] = v.upper / col_scale[j];
        }
        let mut cost = vec![0.0; width];
        for j in 0..n {
            cost[j] = milp.objective[j] * col_scale[j];
        }

        let mut tab = Self {
            m,
            n,
            width,
            t,
            a_cols,
            rhs,
            lower,
            upper,
            value: vec![0.0; width],
            cost,
            reduced: vec![0.0; width],
            basis: (n..width).collect(),
            row_of: (0..width).map(|j| j.checked_sub(n)).collect(),
            col_scale,
            pivots: 0,
        };
        for j in 0..n {
            tab.value[j] = if tab.lower[j].is_finite() { tab.lower[j] } else { tab.upper[j] };
        }
        for i in 0..m {
            let s = n + i;
            tab.value[s] = if tab.lower[s].is_finite() { tab.lower[s] } else { tab.upper[s] };
        }
        tab.refresh();
        tab
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.t[i * self.width..(i + 1) * self.width]
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.upper[j] - self.lower[j] <= 0.0
    }

    fn at_upper(&self, j: usize) -> bool {
        self.upper[j].is_finite() && self.value[j] >= self.upper[j] && !self.is_fixed(j)
    }

    /// Recomputes basic values and reduced costs from scratch.
    fn refresh(&mut self) {
        let (n, m) = (self.n, self.m);
        let mut r = self.rhs.clone();
        for j in 0..n {
            if self.row_of[j].is_none() && self.value[j] != 0.0 {
                for &(i, a) in &self.a_cols[j] {
                    r[i] -= a * self.value[j];
                }
            }
        }
        for i in 0..m {
            let s = n + i;
            if self.row_of[s].is_none() && self.value[s] != 0.0 {
                r[i] -= self.value[s];
            }
        }
        for i in 0..m {
            let row = self.row(i);
            let v: f64 = (0..m).map(|k| row[n + k] * r[k]).sum();
            let b = self.basis[i];
            self.value[b] = v;
        }
        self.reduced.copy_from_slice(&self.cost);
        for i in 0..m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.width..(i + 1) * self.width];
                for (d, &a) in self.reduced.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
        for &b in &self.basis {
            self.reduced[b] = 0.0;
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let w = self.width;
        let p = self.at(r, j);
        {
            let row = &mut self.t[r * w..(r + 1) * w];
            for v in row.iter_mut() {
                *v /= p;
            }
            row[j] = 1.0;
        }
        let nz: Vec<usize> = (0..w).filter(|&k| self.t[r * w + k] != 0.0).collect();
        let prow: Vec<f64> = nz.iter().map(|&k| self.t[r * w + k]).collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + j];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * w..(i + 1) * w];
            for (&k, &pv) in nz.iter().zip(&prow) {
                let v = row[k] - f * pv;
                row[k] = if v.abs() < DROP_TOL { 0.0 } else { v };
            }
            row[j] = 0.0;
        }
        let dj = self.reduced[j];
        if dj != 0.0 {
            for (&k, &pv) in nz.iter().zip(&prow) {
                self.reduced[k] -= dj * pv;
            }
            self.reduced[j] = 0.0;
        }
        let leaving = self.basis[r];
        self.row_of[leaving] = None;
        self.row_of[j] = Some(r);
        self.basis[r] = j;
        self.pivots += 1;
    }

    /// Moves nonbasic `j` by `delta`, updating basic values.
    fn shift(&mut self, j: usize, delta: f64) {
        if delta == 0.0 {
            return;
        }
        for i in 0..self.m {
            let a = self.at(i, j);
            if a != 0.0 {
                let b = self.basis[i];
                self.value[b] -= a * delta;
            }
        }
        self.value[j] += delta;
    }

    /// Changes the bounds of structural column `j` (unscaled values).
    pub(crate) fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        let (lo, hi) = (lower / self.col_scale[j], upper / self.col_scale[j]);
        self.lower[j] = lo;
        self.upper[j] = hi;
        if self.row_of[j].is_none() {
            let target = self.value[j].clamp(lo, hi);
            self.shift(j, target - self.value[j]);
            self.value[j] = target;
        }
    }

    fn infeasibility(&self, b: usize) -> f64 {
        let v = self.value[b];
        if v < self.lower[b] - FEASIBILITY_TOL {
            self.lower[b] - v
        } else if v > self.upper[b] + FEASIBILITY_TOL {
            v - self.upper[b]
        } else {
            0.0
        }
    }

    /// Dual simplex. Assumes dual feasibility of the current basis.
    pub(crate) fn dual(&mut self, max_iter: usize) -> LpStatus {
        let mut bland = false;
        let mut stalls = 0;
        for iter in 0..max_iter {
            if iter > 0 && iter % 200 == 0 {
                self.refresh();
            }
            let pick = if bland {
                (0..self.m)
                    .filter(|&i| self.infeasibility(self.basis[i]) > 0.0)
                    .min_by_key(|&i| self.basis[i])
            } else {
                (0..self.m)
                    .map(|i| (i, self.infeasibility(self.basis[i])))
                    .filter(|&(_, v)| v > 0.0)
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
            };
            let Some(r) = pick else {
                self.refresh();
                if (0..self.m).all(|i| self.infeasibility(self.basis[i]) == 0.0) {
                    return LpStatus::Optimal;
                }
                continue;
            };
            let b = self.basis[r];
            let increase = self.value[b] < self.lower[b];
            let target = if increase { self.lower[b] } else { self.upper[b] };

            let mut best: Option<(usize, f64, f64)> = None;
            for j in 0..self.width {
                if self.row_of[j].is_some() || self.is_fixed(j) {
                    continue;
                }
                let a = self.at(r, j);
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let up = !self.at_upper(j);
                // x_b moves by -a·Δx_j; Δx_j ≥ 0 at lower, ≤ 0 at upper.
                let helps = if increase { (a < 0.0) == up } else { (a > 0.0) == up };
                if !helps {
                    continue;
                }
                let ratio = self.reduced[j].abs() / a.abs();
                let better = match best {
                    None => true,
                    Some((bj, br, ba)) => {
                        if bland {
                            ratio < br - DUAL_TOL || (ratio <= br + DUAL_TOL && j < bj)
                        } else {
                            ratio < br - DUAL_TOL || (ratio <= br + DUAL_TOL && a.abs() > ba)
                        }
                    }
                };
                if better {
                    best = Some((j, ratio, a.abs()));
                }
            }
            let Some((j, ratio, _)) = best else {
                return LpStatus::Infeasible;
            };
            if ratio <= DUAL_TOL {
                stalls += 1;
                if stalls > DEGENERATE_LIMIT {
                    bland = true;
                }
            } else {
                stalls = 0;
                bland = false;
            }
            let a = self.at(r, j);
            let delta = (self.value[b] - target) / a;
            self.shift(j, delta);
            self.value[b] = target;
            self.pivot(r, j);
        }
        LpStatus::IterationLimit
    }

    /// Primal simplex. Assumes primal feasibility.
    pub(crate) fn primal(&mut self, max_iter: usize) -> LpStatus {
        let mut bland = false;
        let mut stalls = 0;
        for iter in 0..max_iter {
            if iter > 0 && iter % 200 == 0 {
                self.refresh();
            }
            let mut enter: Option<(usize, f64)> = None;
            for j in 0..self.width {
                if self.row_of[j].is_some() || self.is_fixed(j) {
                    continue;
                }
                let d = self.reduced[j];
                let can_up = self.value[j] < self.upper[j];
                let can_down = self.value[j] > self.lower[j];
                let gain = if d > DUAL_TOL && can_up {
                    d
                } else if d < -DUAL_TOL && can_down {
                    -d
                } else {
                    continue;
                };
                if bland {
                    enter = Some((j, gain));
                    break;
                }
                if enter.is_none_or(|(_, g)| gain > g) {
                    enter = Some((j, gain));
                }
            }
            let Some((j, _)) = enter else {
                self.refresh();
                let still = (0..self.width).any(|j| {
                    self.row_of[j].is_none()
                        && !self.is_fixed(j)
                        && ((self.reduced[j] > DUAL_TOL && self.value[j] < self.upper[j])
                            || (self.reduced[j] < -DUAL_TOL && self.value[j] > self.lower[j]))
                });
                if still {
                    continue;
                }
                return LpStatus::Optimal;
            };
            let dir = if self.reduced[j] > 0.0 { 1.0 } else { -1.0 };

            let mut step = self.upper[j] - self.lower[j];
            let mut leave: Option<(usize, f64, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, j) * dir;
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let (limit, bound) = if a > 0.0 {
                    if !self.lower[b].is_finite() {
                        continue;
                    }
                    (((self.value[b] - self.lower[b]) / a).max(0.0), self.lower[b])
                } else {
                    if !self.upper[b].is_finite() {
                        continue;
                    }
                    (((self.upper[b] - self.value[b]) / -a).max(0.0), self.upper[b])
                };
                let better = match leave {
                    None => limit < step,
                    Some((bi, bl, _)) => {
                        if limit < bl - 1e-12 {
                            true
                        } else if limit <= bl + 1e-12 {
                            if bland {
                                b < self.basis[bi]
                            } else {
                                a.abs() > self.at(bi, j).abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some((i, limit, bound));
                }
            }
            match leave {
                None if step.is_infinite() => return LpStatus::IterationLimit,
                None => {
                    // bound flip
                    self.shift(j, dir * step);
                    self.value[j] = if dir > 0.0 { self.upper[j] } else { self.lower[j] };
                    stalls = 0;
                }
                Some((r, limit, bound)) => {
                    if limit <= 1e-12 {
                        stalls += 1;
                        if stalls > DEGENERATE_LIMIT {
                            bland = true;
                        }
                    } else {
                        stalls = 0;
                        bland = false;
                    }
                    step = limit;
                    let b = self.basis[r];
                    self.shift(j, dir * step);
                    self.value[b] = bound;
                    self.pivot(r, j);
                }
            }
        }
        LpStatus::IterationLimit
    }

    /// Phase 1 (dual with zero costs) then phase 2 (primal).
    pub(crate) fn optimize(&mut self, max_iter: usize) -> LpStatus {
        let cost = std::mem::replace(&mut self.cost, vec![0.0; self.width]);
        self.refresh();
        let st = self.dual(max_iter);
        self.cost = cost;
        self.refresh();
        if st != LpStatus::Optimal {
            return st;
        }
        self.primal(max_iter)
    }

    /// Re-optimizes after bound changes, starting from a dual feasible basis.
    pub(crate) fn reoptimize(&mut self, max_iter: usize) -> LpStatus {
        match self.dual(max_iter) {
            LpStatus::Optimal => self.primal(max_iter),
            other => other,
        }
    }

    /// Structural values in model units.
    pub(crate) fn primal_values(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.value[j] * self.col_scale[j]).collect()
    }

    pub(crate) fn iteration_budget(&self) -> usize {
        20_000 + 50 * (self.m + self.n)
    }
}

/// Applies fixings to the tableau's assignment columns.
pub(crate) fn apply_fixings(tab: &mut Tableau, milp: &Milp, fixings: &Fixings) {
    for (&(e, d), &on) in fixings {
        if let Some(k) = milp.pair_index[e][d] {
            let v = if on { 1.0 } else { 0.0 };
            tab.set_bounds(milp.pairs[k].assign_var, v, v);
        }
    }
}

fn finish(tab: &Tableau, milp: &Milp, status: LpStatus) -> LpSolution {
    match status {
        LpStatus::Optimal => {
            let primal = tab.primal_values();
            LpSolution {
                status,
                value: milp.objective_value(&primal),
                primal,
            }
        }
        _ => LpSolution {
            status,
            value: f64::NEG_INFINITY,
            primal: Vec::new(),
        },
    }
}

/// Solves the linear relaxation of `milp` with the given assignment
/// variables fixed.
///
/// A fixing on a pair that the model already excluded is contradictory
/// when it asks for 1, and is ignored when it asks for 0.
pub fn solve_lp(milp: &Milp, fixings: &Fixings) -> LpSolution {
    if fixings.iter().any(|(&(e, d), &on)| on && milp.pair_index[e][d].is_none()) {
        return LpSolution {
            status: LpStatus::Infeasible,
            value: f64::NEG_INFINITY,
            primal: Vec::new(),
        };
    }
    let mut tab = Tableau::new(milp);
    apply_fixings(&mut tab, milp, fixings);
    let budget = tab.iteration_budget();
    let st = tab.optimize(budget);
    finish(&tab, milp, st)
}

/// Root tableau kept for warm-started node solves.
#[derive(Debug, Clone)]
pub(crate) struct Relaxation {
    root: Tableau,
}

impl Relaxation {
    pub(crate) fn solve_root(milp: &Milp) -> (Self, LpSolution) {
        let mut tab = Tableau::new(milp);
        let budget = tab.iteration_budget();
        let st = tab.optimize(budget);
        let sol = finish(&tab, milp, st);
        (Self { root: tab }, sol)
    }

    /// Solves a node by bound changes on a copy of the root optimum,
    /// falling back to a cold solve if the warm start stalls.
    pub(crate) fn solve_node(&self, milp: &Milp, fixings: &Fixings) -> (LpSolution, usize) {
        let mut tab = self.root.clone();
        tab.pivots = 0;
        apply_fixings(&mut tab, milp, fixings);
        let budget = tab.iteration_budget();
        let st = tab.reoptimize(budget);
        if st != LpStatus::IterationLimit {
            return (finish(&tab, milp, st), tab.pivots);
        }
        let cold = solve_lp(milp, fixings);
        (cold, tab.pivots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulation::{Constraint, DerivedCoefficients, Shape, VarKind, Variable};
    use crate::model::Weights;

    /// Wraps a plain LP in a `Milp` shell (no pairs).
    fn plain(obj: Vec<f64>, bounds: Vec<(f64, f64)>, rows: Vec<(Vec<(usize, f64)>, Sense, f64)>) -> Milp {
        let variables = bounds
            .into_iter()
            .map(|(lower, upper)| Variable { kind: VarKind::MinCompleteness, lower, upper, binary: false })
            .collect();
        Milp {
            variables,
            objective: obj,
            constraints: rows
                .into_iter()
                .enumerate()
                .map(|(i, (coeffs, sense, rhs))| Constraint { name: format!("r{i}"), coeffs, sense, rhs })
                .collect(),
            pairs: vec![],
            pair_index: vec![],
            availability: vec![],
            min_completeness_var: 0,
            weights: Weights::default(),
            coefficients: DerivedCoefficients {
                compatibility: vec![],
                mean_importance: vec![],
                pair_cap: vec![],
                fixed_zero: Default::default(),
                forced_one: Default::default(),
                q_upper: 0.0,
                c_upper: 1.0,
            },
            shape: Shape {
                element_ids: vec![],
                device_ids: vec![],
                user_ids: vec![],
                device_area: vec![],
                access: vec![],
                permitted: vec![],
                permitted_count: vec![],
            },
        }
    }

    #[test]
    fn textbook_lp() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let milp = plain(
            vec![3.0, 5.0],
            vec![(0.0, 100.0), (0.0, 100.0)],
            vec![
                (vec![(0, 1.0)], Sense::Le, 4.0),
                (vec![(1, 2.0)], Sense::Le, 12.0),
                (vec![(0, 3.0), (1, 2.0)], Sense::Le, 18.0),
            ],
        );
        let sol = solve_lp(&milp, &Fixings::new());
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.value - 36.0).abs() < 1e-9);
        assert!((sol.primal[0] - 2.0).abs() < 1e-9 && (sol.primal[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn phase_one_handles_ge_and_eq_rows() {
        // max -x - y, x + y ≥ 3, x - y = 1 → (2, 1), -3
        let milp = plain(
            vec![-1.0, -1.0],
            vec![(0.0, 10.0), (0.0, 10.0)],
            vec![(vec![(0, 1.0), (1, 1.0)], Sense::Ge, 3.0), (vec![(0, 1.0), (1, -1.0)], Sense::Eq, 1.0)],
        );
        let sol = solve_lp(&milp, &Fixings::new());
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.value + 3.0).abs() < 1e-9, "{}", sol.value);
    }

    #[test]
    fn detects_infeasibility() {
        let milp = plain(
            vec![1.0],
            vec![(0.0, 1.0)],
            vec![(vec![(0, 1.0)], Sense::Ge, 2.0)],
        );
        assert_eq!(solve_lp(&milp, &Fixings::new()).status, LpStatus::Infeasible);
    }

    #[test]
    fn zero_objective_gives_zero() {
        let milp = plain(vec![0.0, 0.0], vec![(0.0, 1.0), (0.0, 1.0)], vec![(vec![(0, 1.0), (1, 1.0)], Sense::Le, 1.0)]);
        let sol = solve_lp(&milp, &Fixings::new());
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.value, 0.0);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's cycling example (as maximization of the negated objective).
        let milp = plain(
            vec![0.75, -150.0, 0.02, -6.0],
            vec![(0.0, 1e6), (0.0, 1e6), (0.0, 1e6), (0.0, 1e6)],
            vec![
                (vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Sense::Le, 0.0),
                (vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Sense::Le, 0.0),
                (vec![(2, 1.0)], Sense::Le, 1.0),
            ],
        );
        let sol = solve_lp(&milp, &Fixings::new());
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.value - 0.05).abs() < 1e-7, "{}", sol.value);
    }
}
