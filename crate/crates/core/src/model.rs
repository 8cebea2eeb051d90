//! Scenario data model: elements, devices, users and the parameter matrices
//! that relate them.
//!
//! All capability scores live on the unit interval. Scenario files written
//! on the 0–5 scale can be brought in with [`import_raw_scale`], and
//! importance values above 1 are rescaled at load time (see
//! [`ProblemInstance::from_json`]).

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Four capability scores on `[0, 1]`.
///
/// Used both for what a device offers and what an element needs; the
/// compatibility of a pair is the dot product of the two.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Capabilities {
    pub visual: f64,
    pub text: f64,
    pub touch: f64,
    pub mouse: f64,
}

impl Capabilities {
    pub const fn new(visual: f64, text: f64, touch: f64, mouse: f64) -> Self {
        Self {
            visual,
            text,
            touch,
            mouse,
        }
    }

    pub const fn splat(v: f64) -> Self {
        Self::new(v, v, v, v)
    }

    /// Components in `(visual, text, touch, mouse)` order.
    pub fn to_array(self) -> [f64; 4] {
        [self.visual, self.text, self.touch, self.mouse]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// Builds a vector from 0–5 scores, e.g. `Capabilities::from_raw([3., 5., 0., 3.])`.
    pub fn from_raw(raw: [f64; 4]) -> Result<Self, ModelError> {
        import_raw_scale(raw).map(Self::from_array)
    }
}

/// Converts a capability vector from the 0–5 rating scale to `[0, 1]`.
pub fn import_raw_scale(raw: [f64; 4]) -> Result<[f64; 4], ModelError> {
    let mut out = [0.0; 4];
    for (k, (&v, o)) in raw.iter().zip(out.iter_mut()).enumerate() {
        if !(0.0..=5.0).contains(&v) {
            return Err(ModelError::RawScaleRange {
                component: k,
                value: v,
            });
        }
        *o = v / 5.0;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementSpec {
    pub id: String,
    pub requirements: Capabilities,
    pub min_width: u32,
    pub min_height: u32,
    pub max_width: u32,
    pub max_height: u32,
}

impl ElementSpec {
    pub fn new(id: impl Into<String>, requirements: Capabilities, min: (u32, u32), max: (u32, u32)) -> Self {
        Self {
            id: id.into(),
            requirements,
            min_width: min.0,
            min_height: min.1,
            max_width: max.0,
            max_height: max.1,
        }
    }

    /// Smallest area the element may occupy, in pixels².
    pub fn min_area(&self) -> u64 {
        u64::from(self.min_width) * u64::from(self.min_height)
    }

    pub fn max_area(&self) -> u64 {
        u64::from(self.max_width) * u64::from(self.max_height)
    }
}

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub id: String,
    pub characteristics: Capabilities,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub enabled: bool,
}

impl DeviceSpec {
    pub fn new(id: impl Into<String>, characteristics: Capabilities, width: u32, height: u32) -> Self {
        Self {
            id: id.into(),
            characteristics,
            width,
            height,
            enabled: true,
        }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub id: String,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub present: bool,
}

impl UserSpec {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            present: true,
        }
    }
}

/// A hard user-imposed decision for one element/device pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pin {
    pub element: String,
    pub device: String,
    /// `true` forces the element onto the device, `false` keeps it off.
    pub forced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub quality: f64,
    pub completeness: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            quality: 0.8,
            completeness: 0.2,
        }
    }
}

fn unit_scale(v: &f64) -> bool {
    *v == 1.0
}

fn default_scale() -> f64 {
    1.0
}

/// A complete scenario.
///
/// Matrix layout: `access[user][device]`, `permission[element][user]` and
/// `importance[element][user]`. Disabled devices and absent users stay in
/// the lists but take no part in the optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub users: Vec<UserSpec>,
    pub devices: Vec<DeviceSpec>,
    pub elements: Vec<ElementSpec>,
    pub access: Vec<Vec<u8>>,
    pub permission: Vec<Vec<u8>>,
    pub importance: Vec<Vec<f64>>,
    #[serde(default)]
    pub pins: Vec<Pin>,
    #[serde(default)]
    pub weights: Weights,
    /// Factor the importance values were divided by at load time.
    #[serde(default = "default_scale", skip_serializing_if = "unit_scale")]
    pub importance_scale: f64,
}

impl Default for ProblemInstance {
    fn default() -> Self {
        Self {
            users: Vec::new(),
            devices: Vec::new(),
            elements: Vec::new(),
            access: Vec::new(),
            permission: Vec::new(),
            importance: Vec::new(),
            pins: Vec::new(),
            weights: Weights::default(),
            importance_scale: 1.0,
        }
    }
}

impl ProblemInstance {
    /// Creates an instance with all matrices sized and zeroed.
    pub fn with_entities(elements: Vec<ElementSpec>, devices: Vec<DeviceSpec>, users: Vec<UserSpec>) -> Self {
        let (ne, nd, nu) = (elements.len(), devices.len(), users.len());
        Self {
            access: vec![vec![0; nd]; nu],
            permission: vec![vec![0; nu]; ne],
            importance: vec![vec![0.0; nu]; ne],
            users,
            devices,
            elements,
            ..Self::default()
        }
    }

    /// Parses a scenario document.
    ///
    /// When any importance value exceeds 1, every value is divided by the
    /// largest one and the divisor is kept in `importance_scale`.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let mut inst: ProblemInstance = serde_json::from_str(text)?;
        inst.normalize_importance();
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    fn normalize_importance(&mut self) {
        let max = self
            .importance
            .iter()
            .flatten()
            .copied()
            .filter(|v| v.is_finite())
            .fold(0.0_f64, f64::max);
        if max > 1.0 {
            for v in self.importance.iter_mut().flatten() {
                *v /= max;
            }
            self.importance_scale *= max;
        }
    }

    pub fn element_index(&self, id: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.id == id)
    }

    pub fn device_index(&self, id: &str) -> Option<usize> {
        self.devices.iter().position(|d| d.id == id)
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.users.iter().position(|u| u.id == id)
    }

    pub fn has_access(&self, user: usize, device: usize) -> bool {
        self.access[user][device] == 1
    }

    pub fn is_permitted(&self, element: usize, user: usize) -> bool {
        self.permission[element][user] == 1
    }

    /// Copy of the instance with disabled devices and absent users removed.
    pub fn without_inactive(&self) -> ProblemInstance {
        let dev: Vec<usize> = (0..self.devices.len()).filter(|&d| self.devices[d].enabled).collect();
        let usr: Vec<usize> = (0..self.users.len()).filter(|&u| self.users[u].present).collect();
        let pins = self
            .pins
            .iter()
            .filter(|p| self.device_index(&p.device).is_some_and(|d| self.devices[d].enabled))
            .cloned()
            .collect();
        ProblemInstance {
            users: usr.iter().map(|&u| self.users[u].clone()).collect(),
            devices: dev.iter().map(|&d| self.devices[d].clone()).collect(),
            elements: self.elements.clone(),
            access: usr.iter().map(|&u| dev.iter().map(|&d| self.access[u][d]).collect()).collect(),
            permission: self.permission.iter().map(|row| usr.iter().map(|&u| row[u]).collect()).collect(),
            importance: self.importance.iter().map(|row| usr.iter().map(|&u| row[u]).collect()).collect(),
            pins,
            weights: self.weights,
            importance_scale: self.importance_scale,
        }
    }

    /// Checks every structural invariant. An empty result means the
    /// instance is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }
}

/// One broken invariant, naming the offending field and index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn check_unique<'a>(out: &mut Vec<Violation>, kind: &str, ids: impl Iterator<Item = &'a str>) {
    let mut seen = HashSet::new();
    for (i, id) in ids.enumerate() {
        if !seen.insert(id) {
            out.push(Violation::new(format!("{kind}[{i}].id"), format!("duplicate id {id:?}")));
        }
    }
}

fn check_caps(out: &mut Vec<Violation>, field: String, caps: &Capabilities) {
    const NAMES: [&str; 4] = ["visual", "text", "touch", "mouse"];
    for (name, v) in NAMES.iter().zip(caps.to_array()) {
        if !(0.0..=1.0).contains(&v) {
            out.push(Violation::new(format!("{field}.{name}"), format!("value {v} outside [0, 1]")));
        }
    }
}

fn check_binary(out: &mut Vec<Violation>, name: &str, m: &[Vec<u8>], rows: usize, cols: usize) {
    if m.len() != rows {
        out.push(Violation::new(name, format!("expected {rows} rows, found {}", m.len())));
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != cols {
            out.push(Violation::new(format!("{name}[{i}]"), format!("expected {cols} columns, found {}", row.len())));
        }
        for (j, &v) in row.iter().enumerate() {
            if v > 1 {
                out.push(Violation::new(format!("{name}[{i}][{j}]"), format!("value {v} is not binary")));
            }
        }
    }
}

/// Free-function form of [`ProblemInstance::validate`].
pub fn validate(inst: &ProblemInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    let (ne, nd, nu) = (inst.elements.len(), inst.devices.len(), inst.users.len());

    check_unique(&mut out, "elements", inst.elements.iter().map(|e| e.id.as_str()));
    check_unique(&mut out, "devices", inst.devices.iter().map(|d| d.id.as_str()));
    check_unique(&mut out, "users", inst.users.iter().map(|u| u.id.as_str()));

    for (i, e) in inst.elements.iter().enumerate() {
        check_caps(&mut out, format!("elements[{i}].requirements"), &e.requirements);
        for (name, v) in [
            ("min_width", e.min_width),
            ("min_height", e.min_height),
            ("max_width", e.max_width),
            ("max_height", e.max_height),
        ] {
            if v == 0 {
                out.push(Violation::new(format!("elements[{i}].{name}"), "must be positive"));
            }
        }
        if e.min_width > e.max_width {
            out.push(Violation::new(format!("elements[{i}].min_width"), "exceeds max_width"));
        }
        if e.min_height > e.max_height {
            out.push(Violation::new(format!("elements[{i}].min_height"), "exceeds max_height"));
        }
    }
    for (i, d) in inst.devices.iter().enumerate() {
        check_caps(&mut out, format!("devices[{i}].characteristics"), &d.characteristics);
        if d.width == 0 || d.height == 0 {
            out.push(Violation::new(format!("devices[{i}]"), "width and height must be positive"));
        }
    }

    check_binary(&mut out, "access", &inst.access, nu, nd);
    check_binary(&mut out, "permission", &inst.permission, ne, nu);

    if inst.importance.len() != ne {
        out.push(Violation::new("importance", format!("expected {ne} rows, found {}", inst.importance.len())));
    }
    for (e, row) in inst.importance.iter().enumerate() {
        if row.len() != nu {
            out.push(Violation::new(format!("importance[{e}]"), format!("expected {nu} columns, found {}", row.len())));
        }
        for (u, &v) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                out.push(Violation::new(format!("importance[{e}][{u}]"), format!("value {v} outside [0, 1]")));
            }
        }
    }

    for (i, p) in inst.pins.iter().enumerate() {
        if inst.element_index(&p.element).is_none() {
            out.push(Violation::new(format!("pins[{i}].element"), format!("unknown element {:?}", p.element)));
        }
        if inst.device_index(&p.device).is_none() {
            out.push(Violation::new(format!("pins[{i}].device"), format!("unknown device {:?}", p.device)));
        }
    }

    let w = inst.weights;
    if !(w.quality >= 0.0 && w.completeness >= 0.0) {
        out.push(Violation::new("weights", "weights must be nonnegative"));
    }
    if !((w.quality + w.completeness) - 1.0).abs().le(&1e-9) {
        out.push(Violation::new("weights", "weights must sum to 1"));
    }
    out
}
