//! Scenario builders shared by the integration tests.
#![allow(dead_code)]

use duiopt::generator::random_instance;
use duiopt::{Pin, ProblemInstance, Weights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small scenario with mixed access, permissions, presence, disabled
/// devices, pins and weights, sized so that several elements share a
/// device. Element and device counts are drawn from `1..=max`.
pub fn varied_instance(seed: u64, max_elements: usize, max_devices: usize, max_users: usize) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_7e57);
    let ne = rng.gen_range(max_elements.div_ceil(2)..=max_elements);
    let nd = rng.gen_range(max_devices.div_ceil(2)..=max_devices);
    let nu = rng.gen_range(1..=max_users);
    let mut inst = random_instance(ne, nd, nu, seed);
    for el in &mut inst.elements {
        el.min_width = 10 * rng.gen_range(10..=50);
        el.min_height = 10 * rng.gen_range(10..=50);
        el.max_width = el.min_width + 10 * rng.gen_range(0..=80);
        el.max_height = el.min_height + 10 * rng.gen_range(0..=80);
    }
    for row in inst.access.iter_mut() {
        for a in row.iter_mut() {
            *a = u8::from(rng.gen_bool(0.85));
        }
    }
    for row in inst.permission.iter_mut() {
        for p in row.iter_mut() {
            *p = u8::from(rng.gen_bool(0.93));
        }
    }
    for row in inst.importance.iter_mut() {
        for i in row.iter_mut() {
            if rng.gen_bool(0.1) {
                *i = 0.0;
            }
        }
    }
    for u in &mut inst.users {
        u.present = rng.gen_bool(0.95);
    }
    for d in &mut inst.devices {
        d.enabled = rng.gen_bool(0.95);
    }
    if rng.gen_bool(0.2) {
        let e = rng.gen_range(0..ne);
        let d = rng.gen_range(0..nd);
        inst.pins.push(Pin {
            element: inst.elements[e].id.clone(),
            device: inst.devices[d].id.clone(),
            forced: rng.gen_bool(0.5),
        });
    }
    let wq = [1.0, 0.8, 0.5, 0.2, 0.0][rng.gen_range(0..5)];
    inst.weights = Weights { quality: wq, completeness: 1.0 - wq };
    inst
}
