//! Threaded session: events from any thread, debounced re-solves, one solve
//! in flight, and updates pushed to subscribers.
//!
//! Events are applied immediately in arrival order. The first event after a
//! quiet period opens a batch window of [`DEBOUNCE`]; when it closes, a solve
//! starts for everything applied so far. A solve still running when a newer
//! window closes is cancelled. Its incumbent is never delivered but seeds the
//! next warm start. A solve that finishes while newer events are waiting is
//! delivered with `stale = true`.
//!
//! Subscriber callbacks run on the session thread and must return quickly.
//! A callback returning `false` is unsubscribed.

use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{after, bounded, never, select, unbounded, Receiver, Sender};

use crate::model::ProblemInstance;
use crate::session::{AssignmentDiff, Session, SessionError, SessionEvent, SolveOutcome};
use crate::solver::{CancelToken, Solution};

/// Length of the batching window.
pub const DEBOUNCE: Duration = Duration::from_millis(50);

#[derive(Debug, Clone)]
pub enum SessionUpdate {
    /// Scenario after the event with this seq.
    State { seq: u64, instance: Arc<ProblemInstance> },
    Solution { solution: Arc<Solution>, diff: Arc<AssignmentDiff> },
    Warning { seq: u64, message: String },
    /// A solve failed; the previous solution stays current.
    Error { seq: u64, error: SessionError },
}

pub type Subscriber = Box<dyn FnMut(&SessionUpdate) -> bool + Send>;

enum Command {
    Submit(SessionEvent, Sender<Result<u64, SessionError>>),
    Subscribe(Subscriber, bool),
    Snapshot(Sender<(u64, ProblemInstance, Option<Solution>)>),
    Shutdown,
}

/// Handle to a session running on its own thread. Cloning is cheap; the
/// session stops on [`LiveSession::shutdown`] or when the last handle drops.
#[derive(Clone)]
pub struct LiveSession {
    commands: Sender<Command>,
    worker: Arc<std::sync::Mutex<Option<JoinHandle<()>>>>,
}

impl LiveSession {
    /// Starts the session thread and an initial solve.
    pub fn start(session: Session) -> Self {
        let (tx, rx) = unbounded();
        let handle = thread::Builder::new()
            .name("duiopt-session".into())
            .spawn(move || Runner::new(session).run(rx))
            .expect("spawn session thread");
        Self { commands: tx, worker: Arc::new(std::sync::Mutex::new(Some(handle))) }
    }

    /// Applies an event and returns its seq, or the rejection.
    pub fn submit(&self, event: SessionEvent) -> Result<u64, SessionError> {
        let (tx, rx) = bounded(1);
        self.commands.send(Command::Submit(event, tx)).map_err(|_| SessionError::Closed)?;
        rx.recv().map_err(|_| SessionError::Closed)?
    }

    pub fn subscribe(&self, subscriber: Subscriber) -> Result<(), SessionError> {
        self.commands.send(Command::Subscribe(subscriber, false)).map_err(|_| SessionError::Closed)
    }

    /// Subscribes and first hands the subscriber the current state followed
    /// by the latest solution, if there is one, before any later update.
    pub fn subscribe_with_snapshot(&self, subscriber: Subscriber) -> Result<(), SessionError> {
        self.commands.send(Command::Subscribe(subscriber, true)).map_err(|_| SessionError::Closed)
    }

    /// Current seq, scenario and latest delivered solution.
    pub fn snapshot(&self) -> Result<(u64, ProblemInstance, Option<Solution>), SessionError> {
        let (tx, rx) = bounded(1);
        self.commands.send(Command::Snapshot(tx)).map_err(|_| SessionError::Closed)?;
        rx.recv().map_err(|_| SessionError::Closed)
    }

    /// Stops the session, cancelling any running solve, and waits for the
    /// thread to exit.
    pub fn shutdown(&self) {
        let _ = self.commands.send(Command::Shutdown);
        let handle = self.worker.lock().ok().and_then(|mut h| h.take());
        if let Some(h) = handle {
            let _ = h.join();
        }
    }
}

struct InFlight {
    cancel: CancelToken,
    handle: JoinHandle<()>,
}

struct Runner {
    session: Session,
    subscribers: Vec<Subscriber>,
    window_closes: Option<Instant>,
    in_flight: Option<InFlight>,
    solve_wanted: bool,
    done_tx: Sender<SolveOutcome>,
    done_rx: Receiver<SolveOutcome>,
    last_delivered: Option<(Arc<Solution>, Arc<AssignmentDiff>)>,
}

impl Runner {
    fn new(session: Session) -> Self {
        let (done_tx, done_rx) = unbounded();
        Self {
            session,
            subscribers: Vec::new(),
            window_closes: None,
            in_flight: None,
            solve_wanted: false,
            done_tx,
            done_rx,
            last_delivered: None,
        }
    }

    fn broadcast(&mut self, update: SessionUpdate) {
        self.subscribers.retain_mut(|s| s(&update));
    }

    fn state_update(&self) -> SessionUpdate {
        SessionUpdate::State { seq: self.session.seq(), instance: Arc::new(self.session.instance().clone()) }
    }

    fn start_solve(&mut self) {
        self.solve_wanted = false;
        let job = self.session.prepare_solve();
        let cancel = CancelToken::new();
        let token = cancel.clone();
        let done = self.done_tx.clone();
        let handle = thread::spawn(move || {
            let _ = done.send(job.run(Some(token)));
        });
        self.in_flight = Some(InFlight { cancel, handle });
    }

    fn run(mut self, commands: Receiver<Command>) {
        self.start_solve();
        loop {
            let tick = self
                .window_closes
                .map(|t| after(t.saturating_duration_since(Instant::now())))
                .unwrap_or_else(never);
            select! {
                recv(commands) -> cmd => match cmd {
                    Ok(Command::Submit(event, reply)) => self.on_event(event, reply),
                    Ok(Command::Subscribe(mut sub, with_snapshot)) => {
                        let mut keep = true;
                        if with_snapshot {
                            keep = sub(&self.state_update());
                            if let (true, Some((solution, diff))) = (keep, &self.last_delivered) {
                                keep = sub(&SessionUpdate::Solution { solution: solution.clone(), diff: diff.clone() });
                            }
                        }
                        if keep {
                            self.subscribers.push(sub);
                        }
                    }
                    Ok(Command::Snapshot(reply)) => {
                        let sol = self.session.last_solution().cloned();
                        let _ = reply.send((self.session.seq(), self.session.instance().clone(), sol));
                    }
                    Ok(Command::Shutdown) | Err(_) => break,
                },
                recv(self.done_rx) -> outcome => {
                    if let Ok(outcome) = outcome {
                        self.on_solved(outcome);
                    }
                }
                recv(tick) -> _ => self.on_window_closed(),
            }
        }
        if let Some(f) = self.in_flight.take() {
            f.cancel.cancel();
            let _ = f.handle.join();
        }
    }

    fn on_event(&mut self, event: SessionEvent, reply: Sender<Result<u64, SessionError>>) {
        match self.session.apply(event) {
            Ok(applied) => {
                let _ = reply.send(Ok(applied.seq));
                let update = self.state_update();
                self.broadcast(update);
                for message in applied.warnings {
                    log::warn!("{message}");
                    self.broadcast(SessionUpdate::Warning { seq: applied.seq, message });
                }
                if self.window_closes.is_none() {
                    self.window_closes = Some(Instant::now() + DEBOUNCE);
                }
            }
            Err(e) => {
                let _ = reply.send(Err(e));
            }
        }
    }

    fn on_window_closed(&mut self) {
        self.window_closes = None;
        match &self.in_flight {
            Some(f) => {
                f.cancel.cancel();
                self.solve_wanted = true;
            }
            None => self.start_solve(),
        }
    }

    fn on_solved(&mut self, outcome: SolveOutcome) {
        if let Some(f) = self.in_flight.take() {
            let _ = f.handle.join();
        }
        let seq = outcome.seq;
        match self.session.complete_solve(outcome) {
            Ok(Some((solution, diff))) => {
                let solution = Arc::new(solution);
                let diff = Arc::new(diff);
                self.last_delivered = Some((solution.clone(), diff.clone()));
                self.broadcast(SessionUpdate::Solution { solution, diff });
            }
            Ok(None) => {}
            Err(error) => {
                log::warn!("solve for seq {seq} failed: {error}");
                self.broadcast(SessionUpdate::Error { seq, error });
            }
        }
        if self.solve_wanted {
            self.start_solve();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Capabilities, DeviceSpec, ElementSpec, UserSpec};
    use crate::solver::SolveOptions;
    use std::sync::Mutex;

    fn small() -> ProblemInstance {
        let mut inst = ProblemInstance::with_entities(
            vec![ElementSpec::new("a", Capabilities::splat(1.0), (10, 10), (100, 100))],
            vec![DeviceSpec::new("d", Capabilities::splat(1.0), 100, 100)],
            vec![UserSpec::new("u")],
        );
        inst.access = vec![vec![1]];
        inst.permission = vec![vec![1]];
        inst.importance = vec![vec![0.5]];
        inst
    }

    fn collect(live: &LiveSession) -> Arc<Mutex<Vec<SessionUpdate>>> {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let sink = seen.clone();
        live.subscribe_with_snapshot(Box::new(move |u| {
            sink.lock().unwrap().push(u.clone());
            true
        }))
        .unwrap();
        seen
    }

    fn solutions(seen: &Mutex<Vec<SessionUpdate>>) -> Vec<u64> {
        seen.lock()
            .unwrap()
            .iter()
            .filter_map(|u| match u {
                SessionUpdate::Solution { diff, .. } => Some(diff.seq),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn burst_of_events_is_solved_once() {
        let live = LiveSession::start(Session::new(small(), SolveOptions::default()));
        thread::sleep(Duration::from_millis(100));
        let seen = collect(&live);
        for k in 0..5 {
            let ev = SessionEvent::SetImportance { element: "a".into(), user: "u".into(), value: 0.1 * k as f64 };
            assert_eq!(live.submit(ev).unwrap(), k + 1);
        }
        thread::sleep(Duration::from_millis(300));
        // the snapshot solution (seq 0) then one solution for the batch
        assert_eq!(solutions(&seen), vec![0, 5]);
        live.shutdown();
    }

    #[test]
    fn rejected_events_report_and_keep_running() {
        let live = LiveSession::start(Session::new(small(), SolveOptions::default()));
        let err = live.submit(SessionEvent::UserLeave { user: "zed".into() }).unwrap_err();
        assert!(matches!(err, SessionError::UnknownId { .. }));
        assert_eq!(live.submit(SessionEvent::UserLeave { user: "u".into() }).unwrap(), 1);
        let (seq, inst, _) = live.snapshot().unwrap();
        assert_eq!(seq, 1);
        assert!(!inst.users[0].present);
        live.shutdown();
        assert_eq!(live.submit(SessionEvent::UserLeave { user: "u".into() }), Err(SessionError::Closed));
    }

    #[test]
    fn snapshot_subscription_starts_with_state() {
        let live = LiveSession::start(Session::new(small(), SolveOptions::default()));
        thread::sleep(Duration::from_millis(100));
        let seen = collect(&live);
        thread::sleep(Duration::from_millis(20));
        let seen = seen.lock().unwrap();
        assert!(matches!(seen[0], SessionUpdate::State { seq: 0, .. }));
        assert!(matches!(seen[1], SessionUpdate::Solution { .. }));
        drop(seen);
        live.shutdown();
    }
}
