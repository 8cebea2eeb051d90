//! A mutable scenario that absorbs dynamic events and re-solves.
//!
//! [`Session`] is synchronous: [`Session::apply`] mutates the scenario and
//! [`Session::resolve`] runs the solver. [`crate::live::LiveSession`] wraps it
//! in a thread with debouncing and preemption.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::FormulationError;
use crate::formulation::formulate;
use crate::model::{Capabilities, DeviceSpec, Pin, ProblemInstance, UserSpec, Violation, Weights};
use crate::solver::{check_feasible, solve, CancelToken, Solution, SolveOptions, SolveStatus};

/// Importance given to every element for a joining user who brings none.
pub const DEFAULT_JOIN_IMPORTANCE: f64 = 0.5;

/// A dynamic change to the scenario.
///
/// Join events carry full specs. Joining with an id that already exists
/// re-activates that entity and keeps its stored parameters, except for the
/// optional matrices given in the event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionEvent {
    UserJoin {
        user: UserSpec,
        /// One flag per device. New users reach no device by default.
        #[serde(default)]
        access: Option<Vec<u8>>,
        /// One flag per element. New users may use every element by default.
        #[serde(default)]
        permission: Option<Vec<u8>>,
        /// One value per element, defaulting to [`DEFAULT_JOIN_IMPORTANCE`].
        #[serde(default)]
        importance: Option<Vec<f64>>,
    },
    UserLeave {
        user: String,
    },
    DeviceJoin {
        device: DeviceSpec,
        /// One flag per user. New devices are reachable by nobody by default.
        #[serde(default)]
        access: Option<Vec<u8>>,
    },
    DeviceLeave {
        device: String,
    },
    SetImportance {
        element: String,
        user: String,
        value: f64,
    },
    SetPermission {
        element: String,
        user: String,
        value: bool,
    },
    SetAccess {
        user: String,
        device: String,
        value: bool,
    },
    /// `forced: None` removes any pin on the pair.
    SetPin {
        element: String,
        device: String,
        #[serde(default)]
        forced: Option<bool>,
    },
    SetWeights {
        quality: f64,
        completeness: f64,
    },
    SetElementParams {
        element: String,
        #[serde(default)]
        requirements: Option<Capabilities>,
        #[serde(default)]
        min_width: Option<u32>,
        #[serde(default)]
        min_height: Option<u32>,
        #[serde(default)]
        max_width: Option<u32>,
        #[serde(default)]
        max_height: Option<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("unknown {kind} {id:?}")]
    UnknownId { kind: &'static str, id: String },
    #[error("{0}")]
    Invalid(ViolationList),
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error("no assignment satisfies the pins")]
    Infeasible,
    #[error("session is closed")]
    Closed,
}

/// Violations that made an event unacceptable.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationList(pub Vec<Violation>);

impl fmt::Display for ViolationList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Outcome of an accepted event.
#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub seq: u64,
    pub warnings: Vec<String>,
}

/// Change between two consecutive solutions, keyed by ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssignmentDiff {
    /// `(element, device, size)`
    pub added: Vec<(String, String, u64)>,
    pub removed: Vec<(String, String)>,
    /// `(element, device, old_size, new_size)`
    pub resized: Vec<(String, String, u64, u64)>,
    pub seq: u64,
    pub stale: bool,
}

/// Assigned pairs with their sizes, keyed by `(element id, device id)`.
pub type AssignmentMap = BTreeMap<(String, String), u64>;

impl AssignmentDiff {
    pub fn between(old: &AssignmentMap, new: &AssignmentMap, seq: u64, stale: bool) -> Self {
        let mut diff = AssignmentDiff { seq, stale, ..Default::default() };
        for ((e, d), &size) in new {
            match old.get(&(e.clone(), d.clone())) {
                None => diff.added.push((e.clone(), d.clone(), size)),
                Some(&before) if before != size => diff.resized.push((e.clone(), d.clone(), before, size)),
                Some(_) => {}
            }
        }
        for (e, d) in old.keys() {
            if !new.contains_key(&(e.clone(), d.clone())) {
                diff.removed.push((e.clone(), d.clone()));
            }
        }
        diff
    }

    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.resized.is_empty()
    }

    pub fn apply_to(&self, old: &AssignmentMap) -> AssignmentMap {
        let mut out = old.clone();
        for key in &self.removed {
            out.remove(key);
        }
        for (e, d, size) in &self.added {
            out.insert((e.clone(), d.clone()), *size);
        }
        for (e, d, _, size) in &self.resized {
            out.insert((e.clone(), d.clone()), *size);
        }
        out
    }
}

/// Reads the assigned pairs of a solution against the instance it solved.
pub fn assignment_map(instance: &ProblemInstance, solution: &Solution) -> AssignmentMap {
    let mut out = AssignmentMap::new();
    for (e, row) in solution.assignment.iter().enumerate() {
        for (d, &x) in row.iter().enumerate() {
            if x == 1 {
                out.insert((instance.elements[e].id.clone(), instance.devices[d].id.clone()), solution.sizes[e][d]);
            }
        }
    }
    out
}

/// Everything a solve needs, detached from the session so it can run on
/// another thread.
#[derive(Debug, Clone)]
pub struct SolveJob {
    pub seq: u64,
    pub instance: ProblemInstance,
    pub options: SolveOptions,
}

/// Result of running a [`SolveJob`].
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub seq: u64,
    pub instance: ProblemInstance,
    pub result: Result<Solution, FormulationError>,
}

impl SolveJob {
    pub fn run(self, cancel: Option<CancelToken>) -> SolveOutcome {
        let mut options = self.options;
        options.cancel = cancel;
        let result = formulate(&self.instance).map(|milp| {
            if let Some(mut ws) = options.warm_start.take() {
                // Pairs the new scenario excludes are dropped before the check.
                for (e, row) in ws.iter_mut().enumerate() {
                    for (d, x) in row.iter_mut().enumerate() {
                        if milp.coefficients.is_fixed_zero(e, d) {
                            *x = 0;
                        }
                    }
                }
                if check_feasible(&milp, &ws).is_some() {
                    options.warm_start = Some(ws);
                }
            }
            solve(&milp, &options)
        });
        SolveOutcome { seq: self.seq, instance: self.instance, result }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    instance: ProblemInstance,
    seq: u64,
    options: SolveOptions,
    last: Option<(Solution, AssignmentMap)>,
    /// Feasible incumbent salvaged from a cancelled solve.
    seed: Option<AssignmentMap>,
}

fn find(ids: impl Iterator<Item = String>, id: &str) -> Option<usize> {
    ids.into_iter().position(|x| x == id)
}

impl Session {
    pub fn new(instance: ProblemInstance, options: SolveOptions) -> Self {
        Self { instance, seq: 0, options, last: None, seed: None }
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.instance
    }

    /// Seq of the last accepted event; 0 before any event.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn last_solution(&self) -> Option<&Solution> {
        self.last.as_ref().map(|(s, _)| s)
    }

    pub fn options(&self) -> &SolveOptions {
        &self.options
    }

    fn element(&self, id: &str) -> Result<usize, SessionError> {
        self.instance.element_index(id).ok_or_else(|| SessionError::UnknownId { kind: "element", id: id.into() })
    }

    fn device(&self, id: &str) -> Result<usize, SessionError> {
        self.instance.device_index(id).ok_or_else(|| SessionError::UnknownId { kind: "device", id: id.into() })
    }

    fn user(&self, id: &str) -> Result<usize, SessionError> {
        self.instance.user_index(id).ok_or_else(|| SessionError::UnknownId { kind: "user", id: id.into() })
    }

    /// Applies one event. Rejected events leave the scenario untouched and
    /// do not consume a seq.
    pub fn apply(&mut self, event: SessionEvent) -> Result<Applied, SessionError> {
        let before = self.instance.clone();
        let mut warnings = Vec::new();
        if let Err(e) = self.mutate(event, &mut warnings) {
            self.instance = before;
            return Err(e);
        }
        let violations = self.instance.validate();
        if !violations.is_empty() {
            self.instance = before;
            return Err(SessionError::Invalid(ViolationList(violations)));
        }
        self.seq += 1;
        Ok(Applied { seq: self.seq, warnings })
    }

    fn mutate(&mut self, event: SessionEvent, warnings: &mut Vec<String>) -> Result<(), SessionError> {
        let inst = &mut self.instance;
        let (ne, nd) = (inst.elements.len(), inst.devices.len());
        match event {
            SessionEvent::UserJoin { user, access, permission, importance } => {
                let u = match find(inst.users.iter().map(|u| u.id.clone()), &user.id) {
                    Some(u) => {
                        inst.users[u].present = true;
                        u
                    }
                    None => {
                        inst.users.push(UserSpec { present: true, ..user });
                        inst.access.push(vec![0; nd]);
                        for e in 0..ne {
                            inst.permission[e].push(1);
                            inst.importance[e].push(DEFAULT_JOIN_IMPORTANCE);
                        }
                        inst.users.len() - 1
                    }
                };
                if let Some(row) = access {
                    inst.access[u] = row;
                }
                if let Some(col) = permission {
                    if col.len() != ne {
                        return Err(shape_error("permission", ne, col.len()));
                    }
                    for (e, p) in col.into_iter().enumerate() {
                        inst.permission[e][u] = p;
                    }
                }
                if let Some(col) = importance {
                    if col.len() != ne {
                        return Err(shape_error("importance", ne, col.len()));
                    }
                    for (e, i) in col.into_iter().enumerate() {
                        inst.importance[e][u] = i;
                    }
                }
            }
            SessionEvent::UserLeave { user } => {
                let u = self.user(&user)?;
                self.instance.users[u].present = false;
            }
            SessionEvent::DeviceJoin { device, access } => {
                let nu = inst.users.len();
                let d = match find(inst.devices.iter().map(|d| d.id.clone()), &device.id) {
                    Some(d) => {
                        inst.devices[d].enabled = true;
                        d
                    }
                    None => {
                        inst.devices.push(DeviceSpec { enabled: true, ..device });
                        for row in inst.access.iter_mut() {
                            row.push(0);
                        }
                        inst.devices.len() - 1
                    }
                };
                if let Some(col) = access {
                    if col.len() != nu {
                        return Err(shape_error("access", nu, col.len()));
                    }
                    for (u, a) in col.into_iter().enumerate() {
                        inst.access[u][d] = a;
                    }
                }
            }
            SessionEvent::DeviceLeave { device } => {
                let d = self.device(&device)?;
                let inst = &mut self.instance;
                inst.devices[d].enabled = false;
                let id = inst.devices[d].id.clone();
                inst.pins.retain(|p| {
                    let keep = p.device != id;
                    if !keep {
                        warnings.push(format!("dropped pin of {:?} on departed device {:?}", p.element, p.device));
                    }
                    keep
                });
            }
            SessionEvent::SetImportance { element, user, value } => {
                let (e, u) = (self.element(&element)?, self.user(&user)?);
                self.instance.importance[e][u] = value;
            }
            SessionEvent::SetPermission { element, user, value } => {
                let (e, u) = (self.element(&element)?, self.user(&user)?);
                self.instance.permission[e][u] = u8::from(value);
            }
            SessionEvent::SetAccess { user, device, value } => {
                let (u, d) = (self.user(&user)?, self.device(&device)?);
                self.instance.access[u][d] = u8::from(value);
            }
            SessionEvent::SetPin { element, device, forced } => {
                self.element(&element)?;
                self.device(&device)?;
                let pins = &mut self.instance.pins;
                pins.retain(|p| !(p.element == element && p.device == device));
                if let Some(forced) = forced {
                    pins.push(Pin { element, device, forced });
                }
            }
            SessionEvent::SetWeights { quality, completeness } => {
                inst.weights = Weights { quality, completeness };
            }
            SessionEvent::SetElementParams { element, requirements, min_width, min_height, max_width, max_height } => {
                let e = self.element(&element)?;
                let el = &mut self.instance.elements[e];
                if let Some(r) = requirements {
                    el.requirements = r;
                }
                el.min_width = min_width.unwrap_or(el.min_width);
                el.min_height = min_height.unwrap_or(el.min_height);
                el.max_width = max_width.unwrap_or(el.max_width);
                el.max_height = max_height.unwrap_or(el.max_height);
            }
        }
        Ok(())
    }

    /// Snapshot for a solve, warm-started from the last delivered solution
    /// (or a salvaged incumbent) mapped onto the current ids.
    pub fn prepare_solve(&self) -> SolveJob {
        let mut options = self.options.clone();
        options.cancel = None;
        let source = self.seed.as_ref().or(self.last.as_ref().map(|(_, m)| m));
        options.warm_start = source.map(|m| self.matrix_from(m));
        SolveJob { seq: self.seq, instance: self.instance.clone(), options }
    }

    fn matrix_from(&self, map: &AssignmentMap) -> Vec<Vec<u8>> {
        let inst = &self.instance;
        let mut x = vec![vec![0u8; inst.devices.len()]; inst.elements.len()];
        for (e, d) in map.keys() {
            if let (Some(e), Some(d)) = (inst.element_index(e), inst.device_index(d)) {
                x[e][d] = 1;
            }
        }
        for pin in &inst.pins {
            if let (Some(e), Some(d)) = (inst.element_index(&pin.element), inst.device_index(&pin.device)) {
                x[e][d] = u8::from(pin.forced);
            }
        }
        x
    }

    /// Records a finished solve. Returns the delivered solution and its diff,
    /// or `None` for a cancelled solve, whose incumbent is kept as the next
    /// warm start when it exists.
    pub fn complete_solve(&mut self, outcome: SolveOutcome) -> Result<Option<(Solution, AssignmentDiff)>, SessionError> {
        let solution = outcome.result?;
        if solution.status == SolveStatus::Cancelled {
            if !solution.assignment.is_empty() {
                self.seed = Some(assignment_map(&outcome.instance, &solution));
            }
            return Ok(None);
        }
        if solution.status == SolveStatus::Infeasible {
            return Err(SessionError::Infeasible);
        }
        let map = assignment_map(&outcome.instance, &solution);
        let empty = AssignmentMap::new();
        let old = self.last.as_ref().map_or(&empty, |(_, m)| m);
        let diff = AssignmentDiff::between(old, &map, outcome.seq, outcome.seq < self.seq);
        self.seed = None;
        self.last = Some((solution.clone(), map));
        Ok(Some((solution, diff)))
    }

    /// Solves the current scenario to completion.
    pub fn resolve(&mut self) -> Result<(Solution, AssignmentDiff), SessionError> {
        let outcome = self.prepare_solve().run(None);
        match self.complete_solve(outcome)? {
            Some(done) => Ok(done),
            None => Err(SessionError::Closed),
        }
    }

    /// Assigned pairs of the last delivered solution.
    pub fn current_assignment(&self) -> AssignmentMap {
        self.last.as_ref().map(|(_, m)| m.clone()).unwrap_or_default()
    }
}

fn shape_error(field: &str, expected: usize, got: usize) -> SessionError {
    SessionError::Invalid(ViolationList(vec![Violation {
        field: field.into(),
        message: format!("expected {expected} entries, got {got}"),
    }]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ElementSpec;

    fn desk() -> ProblemInstance {
        let mut inst = ProblemInstance::with_entities(
            vec![
                ElementSpec::new("video", Capabilities::new(1.0, 0.0, 0.0, 0.0), (100, 100), (400, 400)),
                ElementSpec::new("chat", Capabilities::new(0.2, 1.0, 0.5, 0.5), (100, 100), (300, 300)),
            ],
            vec![
                DeviceSpec::new("laptop", Capabilities::new(0.8, 1.0, 0.0, 1.0), 400, 300),
                DeviceSpec::new("tablet", Capabilities::new(0.8, 0.4, 1.0, 0.0), 300, 300),
            ],
            vec![UserSpec::new("ann")],
        );
        inst.access = vec![vec![1, 1]];
        inst.permission = vec![vec![1], vec![1]];
        inst.importance = vec![vec![1.0], vec![0.6]];
        inst
    }

    #[test]
    fn unknown_ids_are_rejected_without_side_effects() {
        let mut s = Session::new(desk(), SolveOptions::default());
        let before = s.instance().clone();
        let err = s.apply(SessionEvent::DeviceLeave { device: "phone".into() }).unwrap_err();
        assert_eq!(err, SessionError::UnknownId { kind: "device", id: "phone".into() });
        let err = s
            .apply(SessionEvent::SetImportance { element: "video".into(), user: "ann".into(), value: 1.5 })
            .unwrap_err();
        assert!(matches!(err, SessionError::Invalid(_)));
        assert_eq!(s.instance(), &before);
        assert_eq!(s.seq(), 0);
    }

    #[test]
    fn diffs_replay_exactly() {
        let mut s = Session::new(desk(), SolveOptions::default());
        let mut held = AssignmentMap::new();
        let events = vec![
            SessionEvent::DeviceLeave { device: "laptop".into() },
            SessionEvent::DeviceJoin { device: DeviceSpec::new("laptop", Capabilities::splat(0.0), 1, 1), access: None },
            SessionEvent::SetImportance { element: "chat".into(), user: "ann".into(), value: 0.0 },
        ];
        let (_, diff) = s.resolve().unwrap();
        held = diff.apply_to(&held);
        assert_eq!(held, s.current_assignment());
        for ev in events {
            s.apply(ev).unwrap();
            let (_, diff) = s.resolve().unwrap();
            held = diff.apply_to(&held);
            assert_eq!(held, s.current_assignment());
            assert!(diff.added.iter().all(|(e, d, _)| !diff.removed.contains(&(e.clone(), d.clone()))));
        }
        // re-joining keeps the stored spec rather than the event's
        assert_eq!(s.instance().devices[0].width, 400);
    }

    #[test]
    fn noop_event_gives_empty_diff() {
        let mut s = Session::new(desk(), SolveOptions::default());
        s.resolve().unwrap();
        s.apply(SessionEvent::SetImportance { element: "video".into(), user: "ann".into(), value: 1.0 }).unwrap();
        let (_, diff) = s.resolve().unwrap();
        assert!(diff.is_empty());
        assert_eq!(diff.seq, 1);
    }

    #[test]
    fn device_nobody_reaches_changes_nothing() {
        let mut s = Session::new(desk(), SolveOptions::default());
        s.resolve().unwrap();
        let tv = DeviceSpec::new("tv", Capabilities::splat(1.0), 1920, 1080);
        s.apply(SessionEvent::DeviceJoin { device: tv, access: None }).unwrap();
        let (_, diff) = s.resolve().unwrap();
        assert!(diff.is_empty());
    }

    #[test]
    fn departed_device_drops_its_pins() {
        let mut s = Session::new(desk(), SolveOptions::default());
        s.apply(SessionEvent::SetPin { element: "chat".into(), device: "laptop".into(), forced: Some(true) }).unwrap();
        let applied = s.apply(SessionEvent::DeviceLeave { device: "laptop".into() }).unwrap();
        assert_eq!(applied.warnings.len(), 1);
        assert!(s.instance().pins.is_empty());
    }

    #[test]
    fn contradictory_pin_is_a_session_error_that_keeps_state() {
        let mut s = Session::new(desk(), SolveOptions::default());
        let (first, _) = s.resolve().unwrap();
        s.apply(SessionEvent::SetElementParams {
            element: "video".into(),
            requirements: None,
            min_width: Some(300),
            min_height: Some(300),
            max_width: None,
            max_height: None,
        })
        .unwrap();
        s.apply(SessionEvent::SetPin { element: "video".into(), device: "tablet".into(), forced: Some(true) }).unwrap();
        s.apply(SessionEvent::SetPin { element: "chat".into(), device: "tablet".into(), forced: Some(true) }).unwrap();
        assert_eq!(s.resolve().unwrap_err(), SessionError::Infeasible);
        assert_eq!(s.last_solution(), Some(&first));
    }

    #[test]
    fn new_user_gets_default_rows() {
        let mut s = Session::new(desk(), SolveOptions::default());
        s.apply(SessionEvent::UserJoin { user: UserSpec::new("bob"), access: Some(vec![0, 1]), permission: None, importance: None })
            .unwrap();
        let inst = s.instance();
        assert_eq!(inst.access[1], vec![0, 1]);
        assert_eq!(inst.permission, vec![vec![1, 1], vec![1, 1]]);
        assert_eq!(inst.importance[0][1], DEFAULT_JOIN_IMPORTANCE);
    }

    #[test]
    fn events_round_trip_through_json() {
        let ev = SessionEvent::SetPin { element: "a".into(), device: "b".into(), forced: None };
        let text = serde_json::to_string(&ev).unwrap();
        assert_eq!(text, r#"{"kind":"set_pin","element":"a","device":"b","forced":null}"#);
        let back: SessionEvent = serde_json::from_str(r#"{"kind":"set_pin","element":"a","device":"b"}"#).unwrap();
        assert_eq!(back, ev);
    }
}
