//! Random scenarios and benchmark sweeps.
//!
//! All randomness comes from `ChaCha8Rng` seeded with `seed_from_u64`, so a
//! seed names the same instance on every platform.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::formulation::formulate;
use crate::model::{Capabilities, DeviceSpec, ElementSpec, ProblemInstance, UserSpec};
use crate::solver::{solve, SolveOptions};

/// Elements in a realistic scenario.
pub const REALISTIC_ELEMENTS: usize = 20;

fn grid(rng: &mut ChaCha8Rng, lo: u32, hi: u32) -> u32 {
    lo + 10 * rng.gen_range(0..=(hi - lo) / 10)
}

fn caps(rng: &mut ChaCha8Rng) -> Capabilities {
    Capabilities::new(rng.gen(), rng.gen(), rng.gen(), rng.gen())
}

fn random_element(rng: &mut ChaCha8Rng, id: String) -> ElementSpec {
    let min_w = grid(rng, 100, 1600);
    let min_h = grid(rng, 100, 1600);
    let max_w = grid(rng, min_w, 1600);
    let max_h = grid(rng, min_h, 1600);
    ElementSpec::new(id, caps(rng), (min_w, min_h), (max_w, max_h))
}

fn random_device(rng: &mut ChaCha8Rng, id: String) -> DeviceSpec {
    let w = grid(rng, 200, 1200);
    let h = grid(rng, 200, 1200);
    DeviceSpec::new(id, caps(rng), w, h)
}

/// Uniformly random scenario in which everyone may access every device and
/// use every element.
pub fn random_instance(n_elements: usize, n_devices: usize, n_users: usize, seed: u64) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let elements = (0..n_elements).map(|k| random_element(&mut rng, format!("e{k}"))).collect();
    let devices = (0..n_devices).map(|k| random_device(&mut rng, format!("d{k}"))).collect();
    let users = (0..n_users).map(|k| UserSpec::new(format!("u{k}"))).collect();
    let mut inst = ProblemInstance::with_entities(elements, devices, users);
    inst.access = vec![vec![1; n_devices]; n_users];
    inst.permission = vec![vec![1; n_users]; n_elements];
    inst.importance = (0..n_elements).map(|_| (0..n_users).map(|_| rng.gen()).collect()).collect();
    inst
}

/// Scenario with two personal devices per user and one shared device per
/// five users (rounded up), over [`REALISTIC_ELEMENTS`] elements.
pub fn realistic_instance(n_users: usize, seed: u64) -> ProblemInstance {
    let shared = n_users.div_ceil(5);
    let n_devices = 2 * n_users + shared;
    let mut inst = random_instance(REALISTIC_ELEMENTS, n_devices, n_users, seed);
    for (u, row) in inst.access.iter_mut().enumerate() {
        for (d, a) in row.iter_mut().enumerate() {
            let personal_owner = (d < 2 * n_users).then_some(d / 2);
            *a = u8::from(personal_owner.is_none_or(|owner| owner == u));
        }
    }
    for (d, dev) in inst.devices.iter_mut().enumerate() {
        dev.id = if d < 2 * n_users {
            format!("p{}_{}", d / 2, d % 2)
        } else {
            format!("shared{}", d - 2 * n_users)
        };
    }
    inst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Elements,
    Devices,
    Users,
    /// Realistic scenarios; the point is the user count.
    UsersAndDevices,
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "elements" => Ok(Axis::Elements),
            "devices" => Ok(Axis::Devices),
            "users" => Ok(Axis::Users),
            "users_and_devices" | "realistic" => Ok(Axis::UsersAndDevices),
            other => Err(format!("unknown axis {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: Axis,
    /// Counts used for the axes that are not swept.
    pub elements: usize,
    pub devices: usize,
    pub users: usize,
    pub points: Vec<usize>,
    pub seeds: u64,
    pub options: SolveOptions,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.seeds == 0 {
            return Err("seeds must be at least 1".into());
        }
        if self.points.windows(2).any(|w| w[0] >= w[1]) {
            return Err("points must be strictly increasing".into());
        }
        Ok(())
    }

    pub fn instance(&self, point: usize, seed: u64) -> ProblemInstance {
        match self.axis {
            Axis::Elements => random_instance(point, self.devices, self.users, seed),
            Axis::Devices => random_instance(self.elements, point, self.users, seed),
            Axis::Users => random_instance(self.elements, self.devices, point, seed),
            Axis::UsersAndDevices => realistic_instance(point.max(1), seed),
        }
    }
}

/// One CSV row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub axis_value: usize,
    pub seed: u64,
    pub n_elements: usize,
    pub n_devices: usize,
    pub n_users: usize,
    pub n_binaries: usize,
    pub status: String,
    pub objective: f64,
    pub gap: f64,
    pub wall_ms: u64,
    pub nodes: u64,
}

/// Solves every point × seed of the sweep, in order.
pub fn run_sweep(spec: &SweepSpec, mut on_row: impl FnMut(&BenchRow)) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    for &point in &spec.points {
        for seed in 0..spec.seeds {
            let inst = spec.instance(point, seed);
            let started = Instant::now();
            let row = match formulate(&inst) {
                Ok(milp) => {
                    let sol = solve(&milp, &spec.options);
                    BenchRow {
                        axis_value: point,
                        seed,
                        n_elements: inst.elements.len(),
                        n_devices: inst.devices.len(),
                        n_users: inst.users.len(),
                        n_binaries: milp.n_binaries(),
                        status: sol.status.as_str().into(),
                        objective: sol.objective,
                        gap: sol.gap,
                        wall_ms: started.elapsed().as_millis() as u64,
                        nodes: sol.nodes,
                    }
                }
                Err(e) => {
                    log::warn!("point {point} seed {seed}: {e}");
                    BenchRow {
                        axis_value: point,
                        seed,
                        n_elements: inst.elements.len(),
                        n_devices: inst.devices.len(),
                        n_users: inst.users.len(),
                        n_binaries: 0,
                        status: "infeasible".into(),
                        objective: 0.0,
                        gap: 0.0,
                        wall_ms: started.elapsed().as_millis() as u64,
                        nodes: 0,
                    }
                }
            };
            on_row(&row);
            rows.push(row);
        }
    }
    rows
}

/// Writes rows as CSV with a header line.
pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn same_seed_same_instance() {
        assert_eq!(random_instance(4, 3, 2, 7), random_instance(4, 3, 2, 7));
        assert_ne!(random_instance(4, 3, 2, 7), random_instance(4, 3, 2, 8));
    }

    #[test]
    fn realistic_device_counts() {
        assert_eq!(realistic_instance(100, 0).devices.len(), 220);
        assert_eq!(realistic_instance(1, 0).devices.len(), 3);
        assert_eq!(realistic_instance(5, 0).devices.len(), 11);
        let inst = realistic_instance(5, 3);
        assert_eq!(inst.elements.len(), 20);
        // personal devices belong to one user, shared ones to all
        for d in 0..inst.devices.len() {
            let owners = (0..5).filter(|&u| inst.access[u][d] == 1).count();
            assert_eq!(owners, if d < 10 { 1 } else { 5 });
        }
        assert!(inst.validate().is_empty());
    }

    #[test]
    fn no_users_means_empty_assignment() {
        let inst = random_instance(3, 3, 0, 1);
        let milp = formulate(&inst).unwrap();
        assert_eq!(milp.n_binaries(), 0);
        let sol = solve(&milp, &SolveOptions::default());
        assert!(sol.assignment.iter().flatten().all(|&x| x == 0));
    }

    #[test]
    fn tiny_sweep_has_one_row() {
        let spec = SweepSpec {
            axis: Axis::Users,
            elements: 2,
            devices: 2,
            users: 2,
            points: vec![2],
            seeds: 1,
            options: SolveOptions::default(),
        };
        let rows = run_sweep(&spec, |_| {});
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].status, "optimal");
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("axis_value,seed,n_elements,n_devices,n_users,n_binaries,status,objective,gap,wall_ms,nodes\n"));
    }

    proptest! {
        #[test]
        fn generated_dimensions_respect_ranges(seed in any::<u64>(), ne in 0usize..6, nd in 0usize..6, nu in 0usize..4) {
            let inst = random_instance(ne, nd, nu, seed);
            prop_assert!(inst.validate().is_empty());
            for d in &inst.devices {
                prop_assert!(d.width % 10 == 0 && (200..=1200).contains(&d.width));
                prop_assert!(d.height % 10 == 0 && (200..=1200).contains(&d.height));
            }
            for e in &inst.elements {
                prop_assert!(e.min_width % 10 == 0 && e.min_width >= 100 && e.max_width <= 1600);
                prop_assert!(e.max_height % 10 == 0 && e.min_height <= e.max_height);
            }
        }
    }
}
