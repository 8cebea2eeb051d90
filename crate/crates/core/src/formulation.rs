//! Turns a [`ProblemInstance`] into the mixed-integer program that the
//! solver works on.
//!
//! The hard exclusion rules (permission, accessibility, zero
//! compatibility/importance, minimum dimensions, pins) are applied up front
//! as variable fixings so the model only carries pairs that can actually be
//! assigned. The remaining model is
//!
//! ```text
//! max  w_q/Q* · Σ c_ed i_ed s_ed  +  w_c/C* · (Σ o_eu + r_min)
//! s.t. s_ed ≤ cap_ed · x_ed,   s_ed ≥ smin_e · x_ed          per free pair
//!      Σ_e s_ed ≤ w_d h_d                                    per device
//!      o_eu ≤ Σ_d a_ud x_ed                                  per permitted (e, u)
//!      P_u · r_min ≤ Σ_e o_eu                                per user with P_u > 0
//! ```
//!
//! where `Q*` and `C*` are upper bounds on the raw quality and completeness
//! sums, so both normalized terms stay in `[0, 1]`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::FormulationError;
use crate::model::{Capabilities, ProblemInstance, Weights};

/// Dot product of a device's characteristics and an element's requirements.
pub fn compatibility(device: &Capabilities, element: &Capabilities) -> f64 {
    device
        .to_array()
        .iter()
        .zip(element.to_array())
        .map(|(a, b)| a * b)
        .sum()
}

/// Mean importance of `element` over the present users who can reach
/// `device`; 0 when nobody can.
pub fn mean_importance(instance: &ProblemInstance, element: usize, device: usize) -> f64 {
    let (sum, count) = (0..instance.users.len())
        .filter(|&u| instance.users[u].present && instance.has_access(u, device))
        .fold((0.0, 0usize), |(s, n), u| (s + instance.importance[element][u], n + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Why a pair was excluded before solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixReason {
    DeviceDisabled,
    NoAccess,
    /// An accessing user lacks permission for the element.
    Permission { user: usize },
    ZeroCompatibility,
    ZeroImportance,
    /// The element's minimum width or height exceeds the screen.
    Dimensions,
    Pinned,
}

impl fmt::Display for FixReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FixReason::DeviceDisabled => f.write_str("device is disabled"),
            FixReason::NoAccess => f.write_str("no present user can access the device"),
            FixReason::Permission { user } => write!(f, "user #{user} can access the device without permission"),
            FixReason::ZeroCompatibility => f.write_str("compatibility is zero"),
            FixReason::ZeroImportance => f.write_str("importance is zero"),
            FixReason::Dimensions => f.write_str("minimum element size exceeds the screen"),
            FixReason::Pinned => f.write_str("pinned off"),
        }
    }
}

/// Per-pair coefficients and fixings derived from an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedCoefficients {
    /// `compatibility[e][d]`
    pub compatibility: Vec<Vec<f64>>,
    /// `mean_importance[e][d]`
    pub mean_importance: Vec<Vec<f64>>,
    /// Largest area the element may take on the device, `min(smax_e, w_d h_d)`.
    pub pair_cap: Vec<Vec<u64>>,
    pub fixed_zero: BTreeMap<(usize, usize), FixReason>,
    pub forced_one: BTreeSet<(usize, usize)>,
    pub q_upper: f64,
    pub c_upper: f64,
}

impl DerivedCoefficients {
    pub fn is_fixed_zero(&self, element: usize, device: usize) -> bool {
        self.fixed_zero.contains_key(&(element, device))
    }

    /// Objective weight per pixel² of the pair, `c_ed · i_ed`.
    pub fn score(&self, element: usize, device: usize) -> f64 {
        self.compatibility[element][device] * self.mean_importance[element][device]
    }
}

/// Upper bound on the quality sum of one device: fill its area with the
/// best-scoring elements, each up to its cap.
fn device_quality_bound(area: u64, mut items: Vec<(f64, u64)>) -> f64 {
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut left = area;
    let mut total = 0.0;
    for (score, cap) in items {
        let take = cap.min(left);
        total += score * take as f64;
        left -= take;
        if left == 0 {
            break;
        }
    }
    total
}

/// Applies the exclusion rules and computes the objective coefficients.
pub fn preprocess(instance: &ProblemInstance) -> Result<DerivedCoefficients, FormulationError> {
    let ne = instance.elements.len();
    let nd = instance.devices.len();
    let nu = instance.users.len();

    let mut compatibility = vec![vec![0.0; nd]; ne];
    let mut importance = vec![vec![0.0; nd]; ne];
    let mut pair_cap = vec![vec![0u64; nd]; ne];
    let mut fixed_zero = BTreeMap::new();

    for (e, el) in instance.elements.iter().enumerate() {
        for (d, dev) in instance.devices.iter().enumerate() {
            compatibility[e][d] = compatibility_of(dev, el);
            importance[e][d] = mean_importance(instance, e, d);
            pair_cap[e][d] = el.max_area().min(dev.area());

            let accessing: Vec<usize> = (0..nu)
                .filter(|&u| instance.users[u].present && instance.has_access(u, d))
                .collect();
            let reason = if !dev.enabled {
                Some(FixReason::DeviceDisabled)
            } else if accessing.is_empty() {
                Some(FixReason::NoAccess)
            } else if let Some(&u) = accessing.iter().find(|&&u| !instance.is_permitted(e, u)) {
                Some(FixReason::Permission { user: u })
            } else if compatibility[e][d] == 0.0 {
                Some(FixReason::ZeroCompatibility)
            } else if importance[e][d] == 0.0 {
                Some(FixReason::ZeroImportance)
            } else if el.min_width > dev.width || el.min_height > dev.height {
                Some(FixReason::Dimensions)
            } else {
                None
            };
            if let Some(r) = reason {
                fixed_zero.insert((e, d), r);
            }
        }
    }

    let resolve = |element: &str, device: &str| Some((instance.element_index(element)?, instance.device_index(device)?));
    for pin in instance.pins.iter().filter(|p| !p.forced) {
        if let Some(pair) = resolve(&pin.element, &pin.device) {
            fixed_zero.entry(pair).or_insert(FixReason::Pinned);
        }
    }
    let mut forced_one = BTreeSet::new();
    for pin in instance.pins.iter().filter(|p| p.forced) {
        if let Some(pair) = resolve(&pin.element, &pin.device) {
            if let Some(&reason) = fixed_zero.get(&pair) {
                return Err(FormulationError::PinInfeasible {
                    element: pin.element.clone(),
                    device: pin.device.clone(),
                    reason,
                });
            }
            forced_one.insert(pair);
        }
    }

    let q_upper = (0..nd)
        .map(|d| {
            let items = (0..ne)
                .filter(|&e| !fixed_zero.contains_key(&(e, d)))
                .map(|e| (compatibility[e][d] * importance[e][d], pair_cap[e][d]))
                .collect();
            device_quality_bound(instance.devices[d].area(), items)
        })
        .sum();
    let permitted: usize = (0..nu)
        .filter(|&u| instance.users[u].present)
        .map(|u| (0..ne).filter(|&e| instance.is_permitted(e, u)).count())
        .sum();

    Ok(DerivedCoefficients {
        compatibility,
        mean_importance: importance,
        pair_cap,
        fixed_zero,
        forced_one,
        q_upper,
        c_upper: permitted as f64 + 1.0,
    })
}

fn compatibility_of(dev: &crate::model::DeviceSpec, el: &crate::model::ElementSpec) -> f64 {
    compatibility(&dev.characteristics, &el.requirements)
}

/// What a model variable stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarKind {
    Assign { element: usize, device: usize },
    Size { element: usize, device: usize },
    Avail { element: usize, user: usize },
    MinCompleteness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub binary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

/// A sparse linear row `Σ coeff·var (sense) rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A free (not fixed-zero) element/device pair and its two variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub element: usize,
    pub device: usize,
    pub assign_var: usize,
    pub size_var: usize,
    pub score: f64,
    pub min_area: u64,
    pub cap: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvailVar {
    pub element: usize,
    pub user: usize,
    pub var: usize,
}

/// Instance data needed to evaluate assignments without the instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    pub element_ids: Vec<String>,
    pub device_ids: Vec<String>,
    pub user_ids: Vec<String>,
    pub device_area: Vec<u64>,
    /// Access restricted to present users and enabled devices, `[user][device]`.
    pub access: Vec<Vec<bool>>,
    /// Permission restricted to present users, `[element][user]`.
    pub permitted: Vec<Vec<bool>>,
    /// Permitted element count per user (0 for absent users).
    pub permitted_count: Vec<usize>,
}

impl Shape {
    pub fn n_elements(&self) -> usize {
        self.element_ids.len()
    }

    pub fn n_devices(&self) -> usize {
        self.device_ids.len()
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }
}

/// The normalized mixed-integer model (maximization).
#[derive(Debug, Clone, PartialEq)]
pub struct Milp {
    pub variables: Vec<Variable>,
    /// Dense objective, one coefficient per variable.
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub pairs: Vec<Pair>,
    /// `pair_index[e][d]` locates the pair in `pairs` when it is free.
    pub pair_index: Vec<Vec<Option<usize>>>,
    pub availability: Vec<AvailVar>,
    pub min_completeness_var: usize,
    pub weights: Weights,
    pub coefficients: DerivedCoefficients,
    pub shape: Shape,
}

/// Builds the model from an instance and its preprocessed coefficients.
pub fn build(instance: &ProblemInstance, coeffs: DerivedCoefficients) -> Milp {
    let ne = instance.elements.len();
    let nd = instance.devices.len();
    let nu = instance.users.len();
    let w = instance.weights;

    let quality_scale = if coeffs.q_upper > 0.0 { w.quality / coeffs.q_upper } else { 0.0 };
    let completeness_scale = w.completeness / coeffs.c_upper;

    let mut variables = Vec::new();
    let mut objective = Vec::new();
    let mut push = |kind, lower, upper, binary, obj| {
        variables.push(Variable { kind, lower, upper, binary });
        objective.push(obj);
        variables.len() - 1
    };

    let free: Vec<(usize, usize)> = (0..ne)
        .flat_map(|e| (0..nd).map(move |d| (e, d)))
        .filter(|&(e, d)| !coeffs.is_fixed_zero(e, d))
        .collect();

    let mut pair_index = vec![vec![None; nd]; ne];
    let mut pairs = Vec::with_capacity(free.len());
    for (k, &(e, d)) in free.iter().enumerate() {
        let lower = if coeffs.forced_one.contains(&(e, d)) { 1.0 } else { 0.0 };
        let assign_var = push(VarKind::Assign { element: e, device: d }, lower, 1.0, true, 0.0);
        pair_index[e][d] = Some(k);
        pairs.push(Pair {
            element: e,
            device: d,
            assign_var,
            size_var: usize::MAX,
            score: coeffs.score(e, d),
            min_area: instance.elements[e].min_area(),
            cap: coeffs.pair_cap[e][d],
        });
    }
    for p in pairs.iter_mut() {
        p.size_var = push(
            VarKind::Size { element: p.element, device: p.device },
            0.0,
            p.cap as f64,
            false,
            quality_scale * p.score,
        );
    }

    let access: Vec<Vec<bool>> = (0..nu)
        .map(|u| {
            (0..nd)
                .map(|d| instance.users[u].present && instance.devices[d].enabled && instance.has_access(u, d))
                .collect()
        })
        .collect();
    let permitted: Vec<Vec<bool>> = (0..ne)
        .map(|e| (0..nu).map(|u| instance.users[u].present && instance.is_permitted(e, u)).collect())
        .collect();
    let permitted_count: Vec<usize> = (0..nu).map(|u| (0..ne).filter(|&e| permitted[e][u]).count()).collect();

    let mut availability = Vec::new();
    for (e, row) in permitted.iter().enumerate() {
        for (u, &ok) in row.iter().enumerate() {
            if ok {
                let var = push(VarKind::Avail { element: e, user: u }, 0.0, 1.0, false, completeness_scale);
                availability.push(AvailVar { element: e, user: u, var });
            }
        }
    }
    let constrained_users = permitted_count.iter().any(|&p| p > 0);
    let min_completeness_var = push(
        VarKind::MinCompleteness,
        0.0,
        if constrained_users { 1.0 } else { 0.0 },
        false,
        completeness_scale,
    );

    let mut constraints = Vec::new();
    for p in &pairs {
        let tag = format!("{}_{}", instance.elements[p.element].id, instance.devices[p.device].id);
        constraints.push(Constraint {
            name: format!("cap_{tag}"),
            coeffs: vec![(p.size_var, 1.0), (p.assign_var, -(p.cap as f64))],
            sense: Sense::Le,
            rhs: 0.0,
        });
        constraints.push(Constraint {
            name: format!("min_{tag}"),
            coeffs: vec![(p.size_var, 1.0), (p.assign_var, -(p.min_area as f64))],
            sense: Sense::Ge,
            rhs: 0.0,
        });
    }
    for d in 0..nd {
        let on_device: Vec<&Pair> = pairs.iter().filter(|p| p.device == d).collect();
        let area = instance.devices[d].area();
        // The row cannot bind when every element fits at its cap at once.
        if on_device.iter().map(|p| p.cap).sum::<u64>() <= area {
            continue;
        }
        constraints.push(Constraint {
            name: format!("area_{}", instance.devices[d].id),
            coeffs: on_device.iter().map(|p| (p.size_var, 1.0)).collect(),
            sense: Sense::Le,
            rhs: area as f64,
        });
    }
    for a in &availability {
        let mut coeffs = vec![(a.var, 1.0)];
        coeffs.extend(
            (0..nd)
                .filter(|&d| access[a.user][d])
                .filter_map(|d| pair_index[a.element][d])
                .map(|k| (pairs[k].assign_var, -1.0)),
        );
        constraints.push(Constraint {
            name: format!("avail_{}_{}", instance.elements[a.element].id, instance.users[a.user].id),
            coeffs,
            sense: Sense::Le,
            rhs: 0.0,
        });
    }
    for u in 0..nu {
        if permitted_count[u] == 0 {
            continue;
        }
        let mut coeffs = vec![(min_completeness_var, permitted_count[u] as f64)];
        coeffs.extend(availability.iter().filter(|a| a.user == u).map(|a| (a.var, -1.0)));
        constraints.push(Constraint {
            name: format!("rmin_{}", instance.users[u].id),
            coeffs,
            sense: Sense::Le,
            rhs: 0.0,
        });
    }

    let shape = Shape {
        element_ids: instance.elements.iter().map(|e| e.id.clone()).collect(),
        device_ids: instance.devices.iter().map(|d| d.id.clone()).collect(),
        user_ids: instance.users.iter().map(|u| u.id.clone()).collect(),
        device_area: instance.devices.iter().map(|d| d.area()).collect(),
        access,
        permitted,
        permitted_count,
    };

    Milp {
        variables,
        objective,
        constraints,
        pairs,
        pair_index,
        availability,
        min_completeness_var,
        weights: w,
        coefficients: coeffs,
        shape,
    }
}

/// [`preprocess`] followed by [`build`].
pub fn formulate(instance: &ProblemInstance) -> Result<Milp, FormulationError> {
    preprocess(instance).map(|c| build(instance, c))
}

/// Exact objective value and derived quantities of one integral assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub sizes: Vec<Vec<u64>>,
    pub availability: Vec<Vec<u8>>,
    pub per_user_completeness: Vec<f64>,
    pub r_min: f64,
    /// Normalized quality term in `[0, 1]`.
    pub quality: f64,
    /// Normalized completeness term in `[0, 1]`.
    pub completeness: f64,
    pub objective: f64,
}

impl Milp {
    pub fn n_binaries(&self) -> usize {
        self.pairs.len()
    }

    /// Objective value of a primal vector in model space.
    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, v)| c * v).sum()
    }

    /// Completes an integral assignment with the best sizes and evaluates
    /// it. Returns `None` if the assignment violates a fixing or overfills
    /// a device at minimum sizes.
    ///
    /// Sizes come from a per-device greedy fill: every assigned element
    /// starts at its minimum area, then the leftover area goes to elements
    /// in descending score order (ties by element index) up to their caps.
    pub fn evaluate(&self, assignment: &[Vec<u8>]) -> Option<Evaluation> {
        let (ne, nd, nu) = (self.shape.n_elements(), self.shape.n_devices(), self.shape.n_users());
        if assignment.len() != ne || assignment.iter().any(|r| r.len() != nd) {
            return None;
        }
        for &(e, d) in &self.coefficients.forced_one {
            if assignment[e][d] != 1 {
                return None;
            }
        }
        let mut by_device: Vec<Vec<&Pair>> = vec![Vec::new(); nd];
        for (e, row) in assignment.iter().enumerate() {
            for (d, &x) in row.iter().enumerate() {
                match (x, self.pair_index[e][d]) {
                    (0, _) => {}
                    (1, Some(k)) => by_device[d].push(&self.pairs[k]),
                    _ => return None,
                }
            }
        }

        let mut sizes = vec![vec![0u64; nd]; ne];
        let mut raw_quality = 0.0;
        for (d, mut items) in by_device.into_iter().enumerate() {
            let used: u64 = items.iter().map(|p| p.min_area).sum();
            if used > self.shape.device_area[d] {
                return None;
            }
            let mut left = self.shape.device_area[d] - used;
            items.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.element.cmp(&b.element)));
            for p in items {
                let extra = (p.cap - p.min_area).min(left);
                left -= extra;
                let s = p.min_area + extra;
                sizes[p.element][d] = s;
                raw_quality += p.score * s as f64;
            }
        }

        let mut availability = vec![vec![0u8; nu]; ne];
        for (e, row) in availability.iter_mut().enumerate() {
            for (u, o) in row.iter_mut().enumerate() {
                let reachable = (0..nd).any(|d| assignment[e][d] == 1 && self.shape.access[u][d]);
                *o = u8::from(reachable);
            }
        }
        let mut per_user = vec![1.0; nu];
        let mut r_min: Option<f64> = None;
        for (u, r) in per_user.iter_mut().enumerate() {
            let p = self.shape.permitted_count[u];
            if p == 0 {
                continue;
            }
            let have = (0..ne).filter(|&e| self.shape.permitted[e][u] && availability[e][u] == 1).count();
            *r = have as f64 / p as f64;
            r_min = Some(r_min.map_or(*r, |m: f64| m.min(*r)));
        }
        // No user with permitted elements: the completeness floor is moot.
        let r_min = r_min.unwrap_or(0.0);
        let avail_sum = self
            .availability
            .iter()
            .filter(|a| availability[a.element][a.user] == 1)
            .count() as f64;

        let c = &self.coefficients;
        let quality = if c.q_upper > 0.0 { raw_quality / c.q_upper } else { 0.0 };
        let completeness = (avail_sum + r_min) / c.c_upper;
        Some(Evaluation {
            sizes,
            availability,
            per_user_completeness: per_user,
            r_min,
            quality,
            completeness,
            objective: self.weights.quality * quality + self.weights.completeness * completeness,
        })
    }

    /// Writes the model in CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        let names: Vec<String> = self.variables.iter().map(|v| self.var_name(v.kind)).collect();
        let mut out = String::new();
        let term = |out: &mut String, first: bool, c: f64, name: &str| {
            let sign = if c < 0.0 { "-" } else if first { "" } else { "+" };
            let _ = write!(out, " {sign} {} {name}", c.abs());
        };
        out.push_str("\\ element-to-device assignment model\nMaximize\n obj:");
        let mut first = true;
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                term(&mut out, first, c, &names[j]);
                first = false;
            }
        }
        if first {
            out.push_str(" 0 r_min");
        }
        out.push_str("\nSubject To\n");
        for row in &self.constraints {
            let _ = write!(out, " {}:", sanitize(&row.name));
            for (i, &(j, c)) in row.coeffs.iter().enumerate() {
                term(&mut out, i == 0, c, &names[j]);
            }
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", row.rhs);
        }
        out.push_str("Bounds\n");
        for (v, name) in self.variables.iter().zip(&names) {
            let _ = writeln!(out, " {} <= {name} <= {}", v.lower, v.upper);
        }
        out.push_str("Binaries\n");
        for (v, name) in self.variables.iter().zip(&names) {
            if v.binary {
                let _ = writeln!(out, " {name}");
            }
        }
        out.push_str("End\n");
        out
    }

    fn var_name(&self, kind: VarKind) -> String {
        let s = &self.shape;
        match kind {
            VarKind::Assign { element, device } => {
                format!("x_{}_{}", sanitize(&s.element_ids[element]), sanitize(&s.device_ids[device]))
            }
            VarKind::Size { element, device } => {
                format!("s_{}_{}", sanitize(&s.element_ids[element]), sanitize(&s.device_ids[device]))
            }
            VarKind::Avail { element, user } => {
                format!("o_{}_{}", sanitize(&s.element_ids[element]), sanitize(&s.user_ids[user]))
            }
            VarKind::MinCompleteness => "r_min".into(),
        }
    }
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DeviceSpec, ElementSpec, Pin, UserSpec};

    fn one_by_one() -> ProblemInstance {
        let mut inst = ProblemInstance::with_entities(
            vec![ElementSpec::new("e", Capabilities::splat(1.0), (10, 10), (100, 100))],
            vec![DeviceSpec::new("d", Capabilities::new(0.25, 0.0, 0.0, 0.0), 100, 100)],
            vec![UserSpec::new("u")],
        );
        inst.access = vec![vec![1]];
        inst.permission = vec![vec![1]];
        inst.importance = vec![vec![1.0]];
        inst
    }

    #[test]
    fn compatibility_examples() {
        let laptop = Capabilities::from_array([0.6, 1.0, 0.6, 0.0]);
        let presentation = Capabilities::from_array([1.0, 0.0, 0.0, 0.0]);
        assert!((compatibility(&laptop, &presentation) - 0.6).abs() < 1e-15);
        let a = Capabilities::from_array([0.2, 0.0, 0.0, 0.4]);
        let b = Capabilities::from_array([0.0, 0.0, 1.0, 0.6]);
        assert!((compatibility(&a, &b) - 0.24).abs() < 1e-15);
        assert_eq!(compatibility(&laptop, &Capabilities::default()), 0.0);
    }

    #[test]
    fn mean_importance_examples() {
        let mut inst = one_by_one();
        inst.users.push(UserSpec::new("v"));
        inst.access = vec![vec![1], vec![1]];
        inst.permission = vec![vec![1, 1]];
        inst.importance = vec![vec![0.4, 0.8]];
        assert!((mean_importance(&inst, 0, 0) - 0.6).abs() < 1e-15);
        inst.access[1][0] = 0;
        inst.importance[0][0] = 0.37;
        assert_eq!(mean_importance(&inst, 0, 0), 0.37);
        inst.access[0][0] = 0;
        assert_eq!(mean_importance(&inst, 0, 0), 0.0);
        inst.access = vec![vec![1], vec![1]];
        inst.users[1].present = false;
        assert_eq!(mean_importance(&inst, 0, 0), 0.37);
    }

    #[test]
    fn single_pair_model_counts() {
        let milp = formulate(&one_by_one()).unwrap();
        assert_eq!(milp.variables.iter().filter(|v| v.binary).count(), 1);
        assert_eq!(milp.variables.iter().filter(|v| !v.binary).count(), 3);
        assert_eq!(milp.constraints.len(), 4);
        assert_eq!(milp.coefficients.c_upper, 2.0);
        // score 0.25 * 1.0 at the full 100x100 screen
        assert!((milp.coefficients.q_upper - 2500.0).abs() < 1e-9);
    }

    #[test]
    fn empty_instance_has_zero_objective() {
        let milp = formulate(&ProblemInstance::default()).unwrap();
        assert!(milp.pairs.is_empty());
        assert_eq!(milp.variables[milp.min_completeness_var].upper, 0.0);
        let ev = milp.evaluate(&[]).unwrap();
        assert_eq!(ev.objective, 0.0);
    }

    #[test]
    fn zero_compatibility_leaves_well_formed_model() {
        let mut inst = one_by_one();
        inst.devices[0].characteristics = Capabilities::default();
        let milp = formulate(&inst).unwrap();
        assert_eq!(milp.coefficients.q_upper, 0.0);
        assert!(milp.objective.iter().all(|c| c.is_finite()));
        assert_eq!(milp.coefficients.fixed_zero[&(0, 0)], FixReason::ZeroCompatibility);
        assert!(milp.pairs.is_empty());
    }

    #[test]
    fn inaccessible_device_is_fixed() {
        let mut inst = one_by_one();
        inst.devices.push(DeviceSpec::new("lonely", Capabilities::splat(1.0), 100, 100));
        inst.access[0].push(0);
        let c = preprocess(&inst).unwrap();
        assert_eq!(c.fixed_zero.get(&(0, 1)), Some(&FixReason::NoAccess));
        assert!(!c.is_fixed_zero(0, 0));
    }

    #[test]
    fn dimension_guard_excludes_wide_element_on_phone() {
        let mut inst = one_by_one();
        inst.elements[0].min_width = 900;
        inst.elements[0].max_width = 1000;
        inst.devices[0].width = 400;
        inst.devices[0].height = 800;
        let c = preprocess(&inst).unwrap();
        assert_eq!(c.fixed_zero.get(&(0, 0)), Some(&FixReason::Dimensions));
        // Oracle: with x = 1 the width row w_min·x ≤ w_d fails.
        assert!(inst.elements[0].min_width > inst.devices[0].width);
    }

    #[test]
    fn forced_pin_on_excluded_pair_is_an_error() {
        let mut inst = one_by_one();
        inst.permission[0][0] = 0;
        inst.pins.push(Pin { element: "e".into(), device: "d".into(), forced: true });
        match preprocess(&inst) {
            Err(FormulationError::PinInfeasible { reason, .. }) => assert_eq!(reason, FixReason::Permission { user: 0 }),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn forced_pin_fixes_lower_bound() {
        let mut inst = one_by_one();
        inst.pins.push(Pin { element: "e".into(), device: "d".into(), forced: true });
        let milp = formulate(&inst).unwrap();
        assert_eq!(milp.variables[milp.pairs[0].assign_var].lower, 1.0);
        assert!(milp.evaluate(&[vec![0]]).is_none());
        assert!(milp.evaluate(&[vec![1]]).is_some());
    }

    #[test]
    fn lp_dump_lists_sections() {
        let lp = formulate(&one_by_one()).unwrap().to_lp_format();
        for section in ["Maximize", "Subject To", "Bounds", "Binaries", "End"] {
            assert!(lp.contains(section), "{section} missing");
        }
        assert!(lp.contains(" x_e_d\n"));
        assert!(lp.contains("cap_e_d:"));
    }

    #[test]
    fn evaluation_fills_best_scores_first() {
        let mut inst = one_by_one();
        inst.elements.push(ElementSpec::new("f", Capabilities::splat(1.0), (10, 10), (100, 100)));
        inst.permission.push(vec![1]);
        inst.importance.push(vec![0.5]);
        let milp = formulate(&inst).unwrap();
        let ev = milp.evaluate(&[vec![1], vec![1]]).unwrap();
        assert_eq!(ev.sizes, vec![vec![9900], vec![100]]);
        assert_eq!(ev.per_user_completeness, vec![1.0]);
        assert_eq!(ev.r_min, 1.0);
        assert!(ev.quality <= 1.0 && ev.completeness <= 1.0);
        assert!((ev.completeness - 1.0).abs() < 1e-12);
    }
}
