//! Branch and bound over the assignment binaries.
//!
//! Nodes are explored best-first by LP bound (ties: deeper first, then
//! creation order). The branching variable is the most fractional
//! assignment, ties broken by pair order, and the `x = 1` child is created
//! first. Node relaxations are re-optimized with the dual simplex from the
//! root tableau.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::FormulationError;
use crate::formulation::{formulate, Evaluation, Milp};
use crate::lp::{Fixings, LpSolution, LpStatus, Relaxation};
use crate::model::ProblemInstance;

/// Distance from 0/1 below which an assignment value counts as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Nodes whose bound does not beat the incumbent by more than this are pruned.
pub const PRUNE_TOL: f64 = 1e-9;
/// Run the rounding heuristic every this many nodes.
const HEURISTIC_PERIOD: u64 = 25;

/// Cooperative cancellation flag, checked between nodes.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, AtomicOrdering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(AtomicOrdering::SeqCst)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Relative gap at which to stop; 0 proves optimality.
    pub gap_tolerance: f64,
    pub time_limit_millis: Option<u64>,
    /// Assignment matrix `[element][device]` to seed the incumbent with.
    #[serde(default)]
    pub warm_start: Option<Vec<Vec<u8>>>,
    /// Reserved for randomized strategies; the current search is fully
    /// deterministic and does not read it.
    #[serde(default)]
    pub deterministic_seed: u64,
    #[serde(skip)]
    pub cancel: Option<CancelToken>,
}

impl SolveOptions {
    pub fn with_gap(gap_tolerance: f64) -> Self {
        Self {
            gap_tolerance,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    GapReached,
    TimeLimit,
    Infeasible,
    Cancelled,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::GapReached => "gap_reached",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Cancelled => "cancelled",
        }
    }
}

/// Result of a solve. Matrices are `[element][device]` and
/// `[element][user]`; they are empty when no assignment was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub assignment: Vec<Vec<u8>>,
    pub sizes: Vec<Vec<u64>>,
    pub availability: Vec<Vec<u8>>,
    pub r_min: f64,
    pub per_user_completeness: Vec<f64>,
    pub objective: f64,
    /// Normalized quality and completeness terms behind `objective`.
    pub quality: f64,
    pub completeness: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub solve_millis: u64,
    pub status: SolveStatus,
    pub nodes: u64,
}

impl Solution {
    fn empty(status: SolveStatus, millis: u64, nodes: u64) -> Self {
        Self {
            assignment: Vec::new(),
            sizes: Vec::new(),
            availability: Vec::new(),
            r_min: 0.0,
            per_user_completeness: Vec::new(),
            objective: 0.0,
            quality: 0.0,
            completeness: 0.0,
            best_bound: 0.0,
            gap: 0.0,
            solve_millis: millis,
            status,
            nodes,
        }
    }

    fn from_evaluation(x: Vec<Vec<u8>>, ev: Evaluation, bound: f64, status: SolveStatus, millis: u64, nodes: u64) -> Self {
        let bound = bound.max(ev.objective);
        Self {
            assignment: x,
            gap: relative_gap(bound, ev.objective),
            best_bound: bound,
            sizes: ev.sizes,
            availability: ev.availability,
            r_min: ev.r_min,
            per_user_completeness: ev.per_user_completeness,
            objective: ev.objective,
            quality: ev.quality,
            completeness: ev.completeness,
            solve_millis: millis,
            status,
            nodes,
        }
    }
}

fn relative_gap(bound: f64, incumbent: f64) -> f64 {
    ((bound - incumbent) / incumbent.abs().max(1e-9)).max(0.0)
}

/// One line of the incumbent log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncumbentLog {
    pub elapsed_millis: u64,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
}

/// Whether `assignment` extends to a feasible solution, and if so the
/// objective-maximal sizes and resulting objective.
pub fn check_feasible(milp: &Milp, assignment: &[Vec<u8>]) -> Option<Evaluation> {
    milp.evaluate(assignment)
}

/// Formulates and solves an instance.
pub fn solve_instance(instance: &ProblemInstance, options: &SolveOptions) -> Result<Solution, FormulationError> {
    formulate(instance).map(|m| solve(&m, options))
}

pub fn solve(milp: &Milp, options: &SolveOptions) -> Solution {
    solve_with_log(milp, options, &mut |_| {})
}

struct Node {
    fixings: Fixings,
    bound: f64,
    depth: usize,
    id: u64,
    primal: Vec<f64>,
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
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

struct Incumbent {
    x: Vec<Vec<u8>>,
    eval: Evaluation,
}

struct Search<'a> {
    milp: &'a Milp,
    start: Instant,
    incumbent: Option<Incumbent>,
    log: &'a mut dyn FnMut(&IncumbentLog),
}

impl Search<'_> {
    fn offer(&mut self, x: Vec<Vec<u8>>, bound: f64) {
        let Some(eval) = self.milp.evaluate(&x) else {
            return;
        };
        if self
            .incumbent
            .as_ref()
            .is_some_and(|inc| eval.objective <= inc.eval.objective + 1e-12)
        {
            return;
        }
        let bound = bound.max(eval.objective);
        (self.log)(&IncumbentLog {
            elapsed_millis: self.start.elapsed().as_millis() as u64,
            objective: eval.objective,
            bound,
            gap: relative_gap(bound, eval.objective),
        });
        self.incumbent = Some(Incumbent { x, eval });
    }

    fn value(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::NEG_INFINITY, |i| i.eval.objective)
    }

    fn base_assignment(&self) -> Vec<Vec<u8>> {
        let shape = &self.milp.shape;
        let mut x = vec![vec![0u8; shape.n_devices()]; shape.n_elements()];
        for &(e, d) in &self.milp.coefficients.forced_one {
            x[e][d] = 1;
        }
        x
    }

    /// Rounds an LP point, repairs overfull devices, then greedily adds
    /// pairs while the objective improves.
    fn round_and_improve(&mut self, primal: &[f64], fixings: &Fixings, bound: f64) {
        let milp = self.milp;
        let mut x = self.base_assignment();
        let value = |k: usize| primal.get(milp.pairs[k].assign_var).copied().unwrap_or(0.0);
        for (k, p) in milp.pairs.iter().enumerate() {
            if value(k) > 0.5 || fixings.get(&(p.element, p.device)) == Some(&true) {
                x[p.element][p.device] = 1;
            }
        }
        for (&(e, d), &on) in fixings {
            if !on {
                x[e][d] = 0;
            }
        }
        let locked = |e: usize, d: usize| {
            milp.coefficients.forced_one.contains(&(e, d)) || fixings.get(&(e, d)) == Some(&true)
        };
        for d in 0..milp.shape.n_devices() {
            loop {
                let on: Vec<usize> = (0..milp.pairs.len())
                    .filter(|&k| milp.pairs[k].device == d && x[milp.pairs[k].element][d] == 1)
                    .collect();
                let used: u64 = on.iter().map(|&k| milp.pairs[k].min_area).sum();
                if used <= milp.shape.device_area[d] {
                    break;
                }
                let drop = on
                    .iter()
                    .copied()
                    .filter(|&k| !locked(milp.pairs[k].element, d))
                    .min_by(|&a, &b| value(a).total_cmp(&value(b)).then(milp.pairs[a].score.total_cmp(&milp.pairs[b].score)));
                match drop {
                    Some(k) => x[milp.pairs[k].element][d] = 0,
                    None => return,
                }
            }
        }
        let Some(mut best) = milp.evaluate(&x).map(|e| e.objective) else {
            return;
        };
        let mut candidates: Vec<usize> = (0..milp.pairs.len())
            .filter(|&k| {
                let p = &milp.pairs[k];
                x[p.element][p.device] == 0 && !fixings.contains_key(&(p.element, p.device))
            })
            .collect();
        candidates.sort_by(|&a, &b| value(b).total_cmp(&value(a)).then(milp.pairs[b].score.total_cmp(&milp.pairs[a].score)));
        for k in candidates {
            let p = &milp.pairs[k];
            x[p.element][p.device] = 1;
            match milp.evaluate(&x) {
                Some(ev) if ev.objective > best + 1e-12 => best = ev.objective,
                _ => x[p.element][p.device] = 0,
            }
        }
        self.offer(x, bound);
    }

    fn integral_assignment(&self, primal: &[f64]) -> Option<Vec<Vec<u8>>> {
        let mut x = self.base_assignment();
        for p in &self.milp.pairs {
            let v = primal[p.assign_var];
            if v > 1.0 - INTEGRALITY_TOL {
                x[p.element][p.device] = 1;
            } else if v >= INTEGRALITY_TOL {
                return None;
            }
        }
        Some(x)
    }

    fn branch_pair(&self, node: &Node) -> Option<(usize, usize)> {
        let mut best: Option<(usize, f64)> = None;
        for (k, p) in self.milp.pairs.iter().enumerate() {
            if node.fixings.contains_key(&(p.element, p.device)) {
                continue;
            }
            let v = node.primal.get(p.assign_var).copied().unwrap_or(0.5);
            let frac = (v - v.round()).abs();
            if frac >= INTEGRALITY_TOL && best.is_none_or(|(_, f)| frac > f + 1e-12) {
                best = Some((k, frac));
            }
        }
        if best.is_none() && node.primal.is_empty() {
            // No usable LP point: branch on the first free pair.
            return self
                .milp
                .pairs
                .iter()
                .find(|p| !node.fixings.contains_key(&(p.element, p.device)))
                .map(|p| (p.element, p.device));
        }
        best.map(|(k, _)| (self.milp.pairs[k].element, self.milp.pairs[k].device))
    }
}

/// Solves `milp`, reporting every new incumbent to `log`.
pub fn solve_with_log(milp: &Milp, options: &SolveOptions, log: &mut dyn FnMut(&IncumbentLog)) -> Solution {
    let start = Instant::now();
    let elapsed = |s: &Instant| s.elapsed().as_millis() as u64;
    let deadline = options.time_limit_millis;
    let stop_reason = || {
        if options.cancel.as_ref().is_some_and(CancelToken::is_cancelled) {
            Some(SolveStatus::Cancelled)
        } else if deadline.is_some_and(|ms| elapsed(&start) >= ms) {
            Some(SolveStatus::TimeLimit)
        } else {
            None
        }
    };

    let mut search = Search {
        milp,
        start,
        incumbent: None,
        log,
    };

    let (relax, root) = Relaxation::solve_root(milp);
    // The normalized objective never exceeds w_q + w_c = 1.
    let ceiling = milp.weights.quality + milp.weights.completeness + 1e-9;
    let root_bound = match root.status {
        LpStatus::Optimal => root.value.min(ceiling),
        LpStatus::Infeasible => {
            return Solution::empty(SolveStatus::Infeasible, elapsed(&start), 1);
        }
        LpStatus::IterationLimit => ceiling,
    };

    let base = search.base_assignment();
    search.offer(base, root_bound);
    if let Some(ws) = &options.warm_start {
        search.offer(ws.clone(), root_bound);
    }
    if root.status == LpStatus::Optimal {
        if let Some(x) = search.integral_assignment(&root.primal) {
            search.offer(x, root_bound);
        }
        search.round_and_improve(&root.primal, &Fixings::new(), root_bound);
    }

    let mut queue = BinaryHeap::new();
    let mut next_id = 1u64;
    let mut nodes = 1u64;
    queue.push(Node {
        fixings: Fixings::new(),
        bound: root_bound,
        depth: 0,
        id: 0,
        primal: root.primal,
    });

    let mut status = SolveStatus::Optimal;
    loop {
        let Some(top_bound) = queue.peek().map(|n| n.bound) else {
            break;
        };
        let inc = search.value();
        if top_bound <= inc + PRUNE_TOL {
            queue.clear();
            break;
        }
        if search.incumbent.is_some() && relative_gap(top_bound, inc) <= options.gap_tolerance {
            status = SolveStatus::GapReached;
            break;
        }
        if let Some(reason) = stop_reason() {
            status = reason;
            break;
        }
        let node = queue.pop().expect("peeked");

        let Some((e, d)) = search.branch_pair(&node) else {
            // Integral LP point; nothing left to branch on.
            if let Some(x) = search.integral_assignment(&node.primal) {
                search.offer(x, node.bound);
            }
            continue;
        };
        if nodes % HEURISTIC_PERIOD == 0 && !node.primal.is_empty() {
            search.round_and_improve(&node.primal, &node.fixings, top_bound);
        }

        for on in [true, false] {
            let mut fixings = node.fixings.clone();
            fixings.insert((e, d), on);
            let (lp, _) = relax.solve_node(milp, &fixings);
            nodes += 1;
            let child = match lp.status {
                LpStatus::Infeasible => continue,
                LpStatus::Optimal => {
                    debug_assert!(
                        lp.value <= node.bound + 1e-6,
                        "child bound {} exceeds parent {}",
                        lp.value,
                        node.bound
                    );
                    child_from(lp, &node, fixings, next_id)
                }
                LpStatus::IterationLimit => Node {
                    fixings,
                    bound: node.bound,
                    depth: node.depth + 1,
                    id: next_id,
                    primal: Vec::new(),
                },
            };
            next_id += 1;
            if !child.primal.is_empty() {
                if let Some(x) = search.integral_assignment(&child.primal) {
                    search.offer(x, child.bound);
                    continue;
                }
            }
            if child.bound > search.value() + PRUNE_TOL {
                queue.push(child);
            }
        }
    }

    let millis = elapsed(&start);
    let open_bound = queue.iter().map(|n| n.bound).fold(f64::NEG_INFINITY, f64::max);
    match search.incumbent.take() {
        Some(inc) => {
            let bound = open_bound.max(inc.eval.objective);
            Solution::from_evaluation(inc.x, inc.eval, bound, status, millis, nodes)
        }
        None if status == SolveStatus::Optimal => Solution::empty(SolveStatus::Infeasible, millis, nodes),
        None => Solution::empty(status, millis, nodes),
    }
}

fn child_from(lp: LpSolution, parent: &Node, fixings: Fixings, id: u64) -> Node {
    Node {
        fixings,
        bound: lp.value.min(parent.bound),
        depth: parent.depth + 1,
        id,
        primal: lp.primal,
    }
}
