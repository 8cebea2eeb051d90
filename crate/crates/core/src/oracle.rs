//! Brute-force reference solver for small scenarios.
//!
//! Enumerates every assignment over the pairs that survive the exclusion
//! rules, completes each one with the greedy per-device size fill and
//! evaluates the normalized objective exactly. Everything here is computed
//! from the scenario directly; nothing is shared with the model builder or
//! the branch-and-bound code.

use crate::error::OracleError;
use crate::model::ProblemInstance;

/// Largest number of free pairs the oracle will enumerate (2^22 assignments).
pub const ENUMERATION_LIMIT: usize = 22;
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// `-inf` when no assignment is feasible.
    pub best_objective: f64,
    /// Every assignment within `1e-9` of the best, in enumeration order.
    pub best_assignments: Vec<Vec<Vec<u8>>>,
    pub enumerated: u64,
}

impl OracleResult {
    pub fn is_feasible(&self) -> bool {
        !self.best_assignments.is_empty()
    }
}

struct Candidate {
    element: usize,
    device: usize,
    score: f64,
    min_area: u64,
    cap: u64,
}

struct Prepared {
    candidates: Vec<Candidate>,
    forced: Vec<(usize, usize)>,
    forced_ok: bool,
    reach: Vec<Vec<bool>>,
    permitted: Vec<Vec<bool>>,
    q_upper: f64,
    c_upper: f64,
}

fn allowed(inst: &ProblemInstance, e: usize, d: usize) -> Option<Candidate> {
    let dev = &inst.devices[d];
    let el = &inst.elements[e];
    if !dev.enabled {
        return None;
    }
    let users: Vec<usize> = (0..inst.users.len())
        .filter(|&u| inst.users[u].present && inst.access[u][d] == 1)
        .collect();
    if users.is_empty() || users.iter().any(|&u| inst.permission[e][u] == 0) {
        return None;
    }
    let (a, b) = (dev.characteristics.to_array(), el.requirements.to_array());
    let c: f64 = (0..4).map(|k| a[k] * b[k]).sum();
    let i = users.iter().map(|&u| inst.importance[e][u]).sum::<f64>() / users.len() as f64;
    if c == 0.0 || i == 0.0 || el.min_width > dev.width || el.min_height > dev.height {
        return None;
    }
    let pinned_off = inst
        .pins
        .iter()
        .any(|p| !p.forced && p.element == el.id && p.device == dev.id);
    if pinned_off {
        return None;
    }
    Some(Candidate {
        element: e,
        device: d,
        score: c * i,
        min_area: el.min_area(),
        cap: el.max_area().min(dev.area()),
    })
}

fn prepare(inst: &ProblemInstance) -> Prepared {
    let (ne, nd, nu) = (inst.elements.len(), inst.devices.len(), inst.users.len());
    let mut all = Vec::new();
    for e in 0..ne {
        for d in 0..nd {
            if let Some(c) = allowed(inst, e, d) {
                all.push(c);
            }
        }
    }
    let mut forced = Vec::new();
    let mut forced_ok = true;
    for p in inst.pins.iter().filter(|p| p.forced) {
        let (Some(e), Some(d)) = (inst.element_index(&p.element), inst.device_index(&p.device)) else {
            continue;
        };
        if all.iter().any(|c| c.element == e && c.device == d) {
            forced.push((e, d));
        } else {
            forced_ok = false;
        }
    }

    // Quality bound: per device, best scores fill the screen fractionally.
    let mut q_upper = 0.0;
    for d in 0..nd {
        let mut items: Vec<(f64, u64)> = all.iter().filter(|c| c.device == d).map(|c| (c.score, c.cap)).collect();
        items.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut left = inst.devices[d].area();
        for (score, cap) in items {
            let take = cap.min(left);
            q_upper += score * take as f64;
            left -= take;
        }
    }

    let reach = (0..nu)
        .map(|u| (0..nd).map(|d| inst.users[u].present && inst.devices[d].enabled && inst.access[u][d] == 1).collect())
        .collect();
    let permitted: Vec<Vec<bool>> = (0..ne)
        .map(|e| (0..nu).map(|u| inst.users[u].present && inst.permission[e][u] == 1).collect())
        .collect();
    let c_upper = permitted.iter().flatten().filter(|&&p| p).count() as f64 + 1.0;

    let candidates = all.into_iter().filter(|c| !forced.contains(&(c.element, c.device))).collect();
    Prepared {
        candidates,
        forced,
        forced_ok,
        reach,
        permitted,
        q_upper,
        c_upper,
    }
}

/// Number of pairs the oracle would enumerate over.
pub fn free_pairs(instance: &ProblemInstance) -> usize {
    prepare(instance).candidates.len()
}

/// Exact objective of an assignment, or `None` when a device cannot hold
/// its elements at minimum size.
fn score(inst: &ProblemInstance, prep: &Prepared, x: &[Vec<u8>], lookup: &[Vec<Option<(f64, u64, u64)>>]) -> Option<f64> {
    let (ne, nd, nu) = (inst.elements.len(), inst.devices.len(), inst.users.len());
    let mut quality = 0.0;
    for d in 0..nd {
        let mut items: Vec<(usize, f64, u64, u64)> = (0..ne)
            .filter(|&e| x[e][d] == 1)
            .map(|e| {
                let (s, lo, hi) = lookup[e][d].expect("assigned pair is a candidate");
                (e, s, lo, hi)
            })
            .collect();
        let need: u64 = items.iter().map(|t| t.2).sum();
        let area = inst.devices[d].area();
        if need > area {
            return None;
        }
        let mut spare = area - need;
        items.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for (_, s, lo, hi) in items {
            let extra = (hi - lo).min(spare);
            spare -= extra;
            quality += s * (lo + extra) as f64;
        }
    }
    let mut avail = 0usize;
    let mut r_min: Option<f64> = None;
    for u in 0..nu {
        let mut need = 0usize;
        let mut have = 0usize;
        for e in 0..ne {
            if !prep.permitted[e][u] {
                continue;
            }
            need += 1;
            if (0..nd).any(|d| x[e][d] == 1 && prep.reach[u][d]) {
                have += 1;
            }
        }
        avail += have;
        if need > 0 {
            let r = have as f64 / need as f64;
            r_min = Some(r_min.map_or(r, |m| m.min(r)));
        }
    }
    let q_hat = if prep.q_upper > 0.0 { quality / prep.q_upper } else { 0.0 };
    let c_hat = (avail as f64 + r_min.unwrap_or(0.0)) / prep.c_upper;
    Some(inst.weights.quality * q_hat + inst.weights.completeness * c_hat)
}

/// Enumerates all assignments of `instance` and returns the optimum.
pub fn enumerate(instance: &ProblemInstance) -> Result<OracleResult, OracleError> {
    let prep = prepare(instance);
    let n = prep.candidates.len();
    if n > ENUMERATION_LIMIT {
        return Err(OracleError::TooLarge {
            pairs: n,
            limit: ENUMERATION_LIMIT,
        });
    }
    let (ne, nd) = (instance.elements.len(), instance.devices.len());
    let mut result = OracleResult {
        best_objective: f64::NEG_INFINITY,
        best_assignments: Vec::new(),
        enumerated: 0,
    };
    if !prep.forced_ok {
        return Ok(result);
    }
    let mut lookup = vec![vec![None; nd]; ne];
    for c in &prep.candidates {
        lookup[c.element][c.device] = Some((c.score, c.min_area, c.cap));
    }
    for &(e, d) in &prep.forced {
        let c = allowed(instance, e, d).expect("forced pair is allowed");
        lookup[e][d] = Some((c.score, c.min_area, c.cap));
    }

    let mut x = vec![vec![0u8; nd]; ne];
    for &(e, d) in &prep.forced {
        x[e][d] = 1;
    }
    for mask in 0u64..(1u64 << n) {
        for (k, c) in prep.candidates.iter().enumerate() {
            x[c.element][c.device] = ((mask >> k) & 1) as u8;
        }
        result.enumerated += 1;
        let Some(v) = score(instance, &prep, &x, &lookup) else {
            continue;
        };
        if v > result.best_objective + TIE_TOL {
            result.best_objective = v;
            result.best_assignments.clear();
            result.best_assignments.push(x.clone());
        } else if (v - result.best_objective).abs() <= TIE_TOL {
            result.best_assignments.push(x.clone());
        }
    }
    Ok(result)
}

/// Objective of one assignment as the oracle sees it.
pub fn objective_of(instance: &ProblemInstance, assignment: &[Vec<u8>]) -> Option<f64> {
    let prep = prepare(instance);
    if !prep.forced_ok || prep.forced.iter().any(|&(e, d)| assignment[e][d] != 1) {
        return None;
    }
    let (ne, nd) = (instance.elements.len(), instance.devices.len());
    let mut lookup = vec![vec![None; nd]; ne];
    for e in 0..ne {
        for d in 0..nd {
            if assignment[e][d] == 1 {
                let c = allowed(instance, e, d)?;
                lookup[e][d] = Some((c.score, c.min_area, c.cap));
            }
        }
    }
    score(instance, &prep, assignment, &lookup)
}
