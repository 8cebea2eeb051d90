//! Constraint checker that works straight from the scenario, without the
//! model built by [`crate::formulation`]. Used to audit solver output.

use std::fmt;

use crate::model::ProblemInstance;
use crate::solver::Solution;

#[derive(Debug, Clone, PartialEq)]
pub enum Breach {
    Shape(String),
    /// Unassigned pair with nonzero size, or assigned pair outside its size range.
    Size { element: usize, device: usize, size: u64 },
    Capacity { device: usize, used: u64, area: u64 },
    Dimensions { element: usize, device: usize },
    Permission { element: usize, device: usize, user: usize },
    Inaccessible { element: usize, device: usize },
    ZeroScore { element: usize, device: usize },
    Pin { element: usize, device: usize },
    Availability { element: usize, user: usize },
    Completeness { user: usize, reported: f64, actual: f64 },
}

impl fmt::Display for Breach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

fn dot(a: [f64; 4], b: [f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Lists every constraint the solution breaks on `instance`.
pub fn check_solution(instance: &ProblemInstance, solution: &Solution) -> Vec<Breach> {
    let mut out = Vec::new();
    let ne = instance.elements.len();
    let nd = instance.devices.len();
    let nu = instance.users.len();
    let x = &solution.assignment;
    let s = &solution.sizes;
    if x.len() != ne || s.len() != ne || x.iter().any(|r| r.len() != nd) || s.iter().any(|r| r.len() != nd) {
        out.push(Breach::Shape("assignment/sizes do not match element × device".into()));
        return out;
    }

    let present = |u: usize| instance.users[u].present;
    for (d, dev) in instance.devices.iter().enumerate() {
        let mut used = 0;
        for (e, el) in instance.elements.iter().enumerate() {
            let size = s[e][d];
            used += size;
            if x[e][d] == 0 {
                if size != 0 {
                    out.push(Breach::Size { element: e, device: d, size });
                }
                continue;
            }
            let cap = el.max_area().min(dev.area());
            if size < el.min_area() || size > cap {
                out.push(Breach::Size { element: e, device: d, size });
            }
            if el.min_width > dev.width || el.min_height > dev.height {
                out.push(Breach::Dimensions { element: e, device: d });
            }
            let accessing: Vec<usize> = (0..nu).filter(|&u| present(u) && instance.access[u][d] == 1).collect();
            if !dev.enabled || accessing.is_empty() {
                out.push(Breach::Inaccessible { element: e, device: d });
            }
            for &u in &accessing {
                if instance.permission[e][u] == 0 {
                    out.push(Breach::Permission { element: e, device: d, user: u });
                }
            }
            let c = dot(dev.characteristics.to_array(), el.requirements.to_array());
            let i = if accessing.is_empty() {
                0.0
            } else {
                accessing.iter().map(|&u| instance.importance[e][u]).sum::<f64>() / accessing.len() as f64
            };
            if c == 0.0 || i == 0.0 {
                out.push(Breach::ZeroScore { element: e, device: d });
            }
        }
        if used > dev.area() {
            out.push(Breach::Capacity { device: d, used, area: dev.area() });
        }
    }

    for pin in &instance.pins {
        let (Some(e), Some(d)) = (instance.element_index(&pin.element), instance.device_index(&pin.device)) else {
            continue;
        };
        if (x[e][d] == 1) != pin.forced {
            out.push(Breach::Pin { element: e, device: d });
        }
    }

    if solution.availability.len() == ne {
        for e in 0..ne {
            for u in 0..nu {
                let reach = present(u)
                    && (0..nd).any(|d| x[e][d] == 1 && instance.devices[d].enabled && instance.access[u][d] == 1);
                if solution.availability[e].get(u).copied() != Some(u8::from(reach)) {
                    out.push(Breach::Availability { element: e, user: u });
                }
            }
        }
        for u in 0..nu {
            let permitted: Vec<usize> = (0..ne).filter(|&e| present(u) && instance.permission[e][u] == 1).collect();
            let actual = if permitted.is_empty() {
                1.0
            } else {
                permitted.iter().filter(|&&e| solution.availability[e][u] == 1).count() as f64 / permitted.len() as f64
            };
            let reported = solution.per_user_completeness.get(u).copied().unwrap_or(f64::NAN);
            if (reported - actual).abs() > 1e-12 {
                out.push(Breach::Completeness { user: u, reported, actual });
            }
        }
    } else if ne > 0 {
        out.push(Breach::Shape("availability rows do not match element count".into()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Capabilities, DeviceSpec, ElementSpec, UserSpec};
    use crate::solver::{solve_instance, SolveOptions};

    #[test]
    fn flags_tampered_solutions() {
        let mut inst = ProblemInstance::with_entities(
            vec![ElementSpec::new("e", Capabilities::splat(1.0), (10, 10), (50, 50))],
            vec![DeviceSpec::new("d", Capabilities::splat(1.0), 100, 100)],
            vec![UserSpec::new("u"), UserSpec::new("v")],
        );
        inst.access = vec![vec![1], vec![0]];
        inst.permission = vec![vec![1, 0]];
        inst.importance = vec![vec![1.0, 1.0]];
        let sol = solve_instance(&inst, &SolveOptions::default()).unwrap();
        assert!(check_solution(&inst, &sol).is_empty());

        let mut bad = sol.clone();
        bad.sizes[0][0] = 10_001;
        assert!(check_solution(&inst, &bad).iter().any(|b| matches!(b, Breach::Size { .. })));

        let mut inst2 = inst.clone();
        inst2.access[1][0] = 1;
        assert!(check_solution(&inst2, &sol).iter().any(|b| matches!(b, Breach::Permission { user: 1, .. })));

        let mut bad = sol.clone();
        bad.availability[0][0] = 0;
        assert!(check_solution(&inst, &bad).iter().any(|b| matches!(b, Breach::Availability { .. })));
    }
}
