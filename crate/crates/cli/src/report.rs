//! JSON written by `solve` and `oracle`, keyed by ids rather than indices.

use std::collections::BTreeMap;

use duiopt::oracle::OracleResult;
use duiopt::{ProblemInstance, Solution};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct Placement {
    pub element: String,
    pub device: String,
    /// Pixels granted to the element on that device.
    pub area: u64,
}

/// The solver's output plus the same assignment spelled out with ids.
#[derive(Debug, Serialize)]
pub struct SolveReport<'a> {
    #[serde(flatten)]
    pub solution: &'a Solution,
    pub placements: Vec<Placement>,
    pub completeness_by_user: BTreeMap<String, f64>,
}

impl<'a> SolveReport<'a> {
    pub fn new(inst: &ProblemInstance, solution: &'a Solution) -> Self {
        Self {
            solution,
            placements: placements(inst, &solution.assignment, Some(&solution.sizes)),
            completeness_by_user: inst
                .users
                .iter()
                .zip(&solution.per_user_completeness)
                .filter(|(u, _)| u.present)
                .map(|(u, r)| (u.id.clone(), *r))
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct OracleReport {
    pub objective: f64,
    pub enumerated: u64,
    pub optima: usize,
    /// The first optimum in enumeration order.
    pub placements: Vec<Placement>,
    pub assignment: Vec<Vec<u8>>,
}

impl OracleReport {
    pub fn new(inst: &ProblemInstance, result: &OracleResult) -> Self {
        let first = &result.best_assignments[0];
        Self {
            objective: result.best_objective,
            enumerated: result.enumerated,
            optima: result.best_assignments.len(),
            placements: placements(inst, first, None),
            assignment: first.clone(),
        }
    }
}

fn placements(inst: &ProblemInstance, x: &[Vec<u8>], sizes: Option<&[Vec<u64>]>) -> Vec<Placement> {
    let mut out = Vec::new();
    for (e, row) in x.iter().enumerate() {
        for (d, &on) in row.iter().enumerate() {
            if on == 1 {
                out.push(Placement {
                    element: inst.elements[e].id.clone(),
                    device: inst.devices[d].id.clone(),
                    area: sizes.map_or(0, |s| s[e][d]),
                });
            }
        }
    }
    out
}
