//! The session tick loop.
//!
//! One tick, in order: consume the latest hand input per device, move the
//! traps, advance the world, latch trap loss at the new pose, render
//! feedback from the step's optical wrench, compute metrics, check the end
//! conditions, and record/broadcast on 60 Hz boundaries.

use std::thread;
use std::time::{Duration, Instant};

use super::log::{
    EndReason, Event, LogHeader, LogRecord, Outcome, PerDevice, TimedEvent, TrialLog,
};
use super::protocol::{
    ClientMessage, ControlAction, ElementGeometry, Geometry, GoalGeometry, ServerMessage,
    TrapGeometry,
};
use super::scenario::Scenario;
use crate::dynamics::World;
use crate::force_model::Trap;
use crate::geometry::{is_finite, Vec3};
use crate::rng::RngState;
use crate::teleop::{Device, HapticOutput, TeleopPipeline, TrapLossDetector};
use crate::{Error, Result};

/// Leading Brownian deviates kept per session for pairing checks.
pub const KICK_TAPE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Lobby,
    Running,
    Ended,
}

/// Live state of one trial.
#[derive(Debug, Clone)]
pub struct Session {
    scenario: Scenario,
    world: World,
    traps: Vec<Trap>,
    trap_devices: Vec<Device>,
    pipeline: TeleopPipeline,
    rng: RngState,
    phase: Phase,
    header: LogHeader,
    records: Vec<LogRecord>,
    pending: Vec<TimedEvent>,
    mailbox: [Option<([f64; 3], f64)>; 2],
    warned: [bool; 2],
    lost_reported: Vec<bool>,
    outcome: Option<Outcome>,
    timeout_ticks: u64,
}

impl Session {
    pub fn new(scenario: Scenario) -> Result<Self> {
        Self::with_condition(scenario, None)
    }

    /// `condition` is copied into the log header (used by batch studies).
    pub fn with_condition(scenario: Scenario, condition: Option<String>) -> Result<Self> {
        scenario.validate()?;
        let mut world = World::new(
            scenario.robot.clone(),
            scenario.cells.clone(),
            scenario.obstacles.clone(),
        );
        world.robot.pose.position = scenario.start;
        let traps = scenario.trap_list();
        world.validate(traps.len())?;
        let tick_rate = scenario.ticks_per_second();
        let header = LogHeader {
            scenario: scenario.name.clone(),
            config_hash: format!("{:016x}", scenario.config_hash()),
            seed: scenario.seed,
            dt: scenario.dt,
            tick_rate,
            broadcast_hz: scenario.broadcast_hz,
            condition,
        };
        Ok(Self {
            world,
            trap_devices: scenario.trap_devices(),
            pipeline: TeleopPipeline::new(scenario.teleop, traps.len()),
            rng: RngState::with_tape(scenario.seed, KICK_TAPE),
            phase: Phase::Lobby,
            header,
            records: Vec::new(),
            pending: Vec::new(),
            mailbox: [None; 2],
            warned: [false; 2],
            lost_reported: vec![false; traps.len()],
            outcome: None,
            timeout_ticks: (scenario.timeout_s * tick_rate as f64).round() as u64,
            traps,
            scenario,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn traps(&self) -> &[Trap] {
        &self.traps
    }

    pub fn trap_devices(&self) -> &[Device] {
        &self.trap_devices
    }

    pub fn pipeline(&self) -> &TeleopPipeline {
        &self.pipeline
    }

    pub fn output(&self, device: Device) -> &HapticOutput {
        &self.pipeline.channel(device).output
    }

    pub fn tick(&self) -> u64 {
        self.world.tick
    }

    pub fn time(&self) -> f64 {
        self.world.time
    }

    pub fn payload_position(&self) -> Vec3 {
        self.world.cells[self.scenario.payload_cell].position
    }

    /// The first [`KICK_TAPE`] unit-normal kick deviates drawn.
    pub fn first_kicks(&self) -> &[f64] {
        self.rng.tape()
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref()
    }

    /// Applies one client message. Hand input is held in a per-device
    /// mailbox (last writer wins) until the next tick consumes it; input
    /// received in the lobby is dropped.
    pub fn handle(&mut self, msg: ClientMessage) {
        match (self.phase, msg) {
            (Phase::Ended, _) => {}
            (
                _,
                ClientMessage::Control {
                    action: ControlAction::Observe,
                    ..
                },
            ) => {}
            (
                Phase::Lobby,
                ClientMessage::Control {
                    action: ControlAction::Start,
                    ..
                },
            ) => {
                self.phase = Phase::Running;
                self.push_event(Event::Start);
            }
            (
                Phase::Running,
                ClientMessage::Control {
                    action: ControlAction::Start,
                    ..
                },
            ) => {}
            (
                _,
                ClientMessage::Control {
                    action: ControlAction::Abort,
                    ..
                },
            ) => {
                self.push_event(Event::Abort);
                self.end(EndReason::Abort);
            }
            (Phase::Lobby, ClientMessage::HandInput { .. }) => {}
            (Phase::Running, ClientMessage::HandInput { device, vel, t }) => {
                if is_finite(&Vec3::from(vel)) {
                    self.mailbox[device.index()] = Some((vel, t));
                }
            }
        }
    }

    /// The operator's input stream closed.
    pub fn disconnect(&mut self) {
        if self.phase != Phase::Ended {
            self.push_event(Event::Disconnect);
            self.end(EndReason::Disconnect);
        }
    }

    /// Ends a lobby that never started.
    pub fn expire_lobby(&mut self) {
        if self.phase == Phase::Lobby {
            self.end(EndReason::Timeout);
        }
    }

    fn push_event(&mut self, event: Event) {
        self.pending.push(TimedEvent {
            tick: self.world.tick,
            event,
        });
    }

    fn end(&mut self, reason: EndReason) {
        self.phase = Phase::Ended;
        self.outcome = Some(Outcome {
            success: reason == EndReason::GoalReached,
            reason,
            duration: self.world.time,
            events: std::mem::take(&mut self.pending),
        });
    }

    /// Runs one physics tick. Returns the record when this tick is logged.
    /// Does nothing unless the session is running.
    pub fn step(&mut self) -> Option<&LogRecord> {
        if self.phase != Phase::Running {
            return None;
        }
        for dev in Device::ALL {
            if let Some((vel, t)) = self.mailbox[dev.index()].take() {
                self.pipeline.set_hand_velocity(dev, Vec3::from(vel));
                self.push_event(Event::Input {
                    device: dev,
                    vel,
                    t,
                });
            }
        }
        let sc = &self.scenario;
        let stepped = self
            .pipeline
            .drive_traps(&mut self.traps, &self.trap_devices, sc.dt, &sc.workspace)
            .and_then(|_| {
                self.world.advance(
                    &self.traps,
                    &sc.force_params,
                    &sc.medium,
                    sc.dt,
                    &mut self.rng,
                )
            });
        let info = match stepped {
            Ok(info) => info,
            Err(_) => {
                self.end(EndReason::SimulationError);
                return None;
            }
        };

        let elements = &self.world.robot.elements;
        let centers = self.world.robot.element_centers();
        let d_loss = sc.teleop.loss_distance(&sc.force_params);
        let status = self
            .pipeline
            .loss
            .detect(&self.traps, elements, &centers, d_loss);
        for (i, &lost) in status.lost.iter().enumerate() {
            if lost && !self.lost_reported[i] {
                self.lost_reported[i] = true;
                self.pending.push(TimedEvent {
                    tick: self.world.tick,
                    event: Event::TrapLost { trap: i },
                });
            }
        }
        self.pipeline
            .render(&info.optical, elements, &self.trap_devices, status.any_lost);
        for dev in Device::ALL {
            let w = self.pipeline.channel(dev).output.warning;
            if w && !self.warned[dev.index()] {
                self.pending.push(TimedEvent {
                    tick: self.world.tick,
                    event: Event::Warning { device: dev },
                });
            }
            self.warned[dev.index()] = w;
        }

        let contact = self.world.contacts().max_cell_force;
        let distance = min_trap_distance(&self.traps, elements, &centers);
        let payload = self.payload_position();
        let k = self.world.tick;

        let reason = if status.any_lost {
            Some(EndReason::TrapLost)
        } else if (payload - sc.goal.center).norm() <= sc.goal.radius {
            Some(EndReason::GoalReached)
        } else if k >= self.timeout_ticks {
            Some(EndReason::Timeout)
        } else {
            None
        };

        let tps = self.header.tick_rate;
        let hz = self.header.broadcast_hz as u64;
        let boundary = (k * hz) / tps != ((k - 1) * hz) / tps;
        let mut recorded = false;
        if boundary || reason.is_some() {
            let out = |d: Device| self.pipeline.channel(d).output;
            let record = LogRecord {
                tick: k,
                t: self.world.time,
                pose: self.world.robot.pose,
                traps: self.traps.iter().map(|t| t.position).collect(),
                payload,
                contact_force_metric: contact,
                trap_center_distance: distance,
                f_hand: PerDevice::from_fn(|d| out(d).f_hand),
                f_raw: PerDevice::from_fn(|d| out(d).f_raw),
                warning: Device::ALL.iter().any(|&d| out(d).warning),
                trap_lost: status.any_lost,
                events: std::mem::take(&mut self.pending),
            };
            self.records.push(record);
            recorded = true;
        }
        if let Some(r) = reason {
            self.end(r);
        }
        if recorded {
            self.records.last()
        } else {
            None
        }
    }

    /// Scene description for clients.
    pub fn geometry(&self) -> Geometry {
        let sc = &self.scenario;
        Geometry {
            elements: self
                .world
                .robot
                .elements
                .iter()
                .map(|e| ElementGeometry {
                    center: self.world.robot.pose.transform(&e.offset_body),
                    radius: e.radius,
                })
                .collect(),
            traps: self
                .traps
                .iter()
                .zip(&self.trap_devices)
                .map(|(t, &device)| TrapGeometry {
                    position: t.position,
                    power_weight: t.power_weight,
                    device,
                })
                .collect(),
            cells: self.world.cells.clone(),
            obstacles: self.world.obstacles.clone(),
            goal: GoalGeometry {
                center: sc.goal.center,
                radius: sc.goal.radius,
            },
            payload_cell: sc.payload_cell,
            workspace: sc.workspace,
        }
    }

    /// Consumes an ended session into its log.
    pub fn into_log(self) -> Option<TrialLog> {
        let outcome = self.outcome?;
        Some(TrialLog {
            header: self.header,
            records: self.records,
            outcome,
        })
    }
}

/// Min distance over trap–element assignments; 0 when nothing is assigned.
pub fn min_trap_distance(
    traps: &[Trap],
    elements: &[crate::force_model::SphereElement],
    centers: &[Vec3],
) -> f64 {
    TrapLossDetector::trap_distances(traps, elements, centers)
        .into_iter()
        .flatten()
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))))
        .unwrap_or(0.0)
}

/// Source of client messages. Called once per tick while running and
/// repeatedly while in the lobby. `None` means the stream closed.
pub trait Operator {
    fn poll(&mut self, session: &Session) -> Option<Vec<ClientMessage>>;
}

impl<F> Operator for F
where
    F: FnMut(&Session) -> Option<Vec<ClientMessage>>,
{
    fn poll(&mut self, session: &Session) -> Option<Vec<ClientMessage>> {
        self(session)
    }
}

/// Paces the tick loop.
pub trait Clock {
    /// Called after tick `tick` completes.
    fn tick_done(&mut self, tick: u64, dt: f64);
    /// Called after a lobby poll that did not start the session.
    fn idle(&mut self) {}
}

/// Runs as fast as possible.
#[derive(Debug, Clone, Copy, Default)]
pub struct VirtualClock;

impl Clock for VirtualClock {
    fn tick_done(&mut self, _tick: u64, _dt: f64) {}
}

/// Paces ticks to real time.
#[derive(Debug, Clone, Default)]
pub struct WallClock {
    origin: Option<(Instant, u64)>,
}

impl Clock for WallClock {
    fn tick_done(&mut self, tick: u64, dt: f64) {
        let (t0, k0) = *self.origin.get_or_insert((Instant::now(), tick));
        let due = t0 + Duration::from_secs_f64((tick - k0) as f64 * dt);
        let now = Instant::now();
        if due > now {
            thread::sleep(due - now);
        }
    }

    fn idle(&mut self) {
        thread::sleep(Duration::from_millis(1));
    }
}

/// Runs a whole trial.
pub fn run_session(
    scenario: Scenario,
    operator: &mut dyn Operator,
    clock: &mut dyn Clock,
) -> Result<TrialLog> {
    run_session_with(Session::new(scenario)?, operator, clock, &mut |_| {})
}

/// Runs a prepared session, passing every state and the final result to
/// `sink`. States are only produced while running.
pub fn run_session_with(
    mut session: Session,
    operator: &mut dyn Operator,
    clock: &mut dyn Clock,
    sink: &mut dyn FnMut(&ServerMessage),
) -> Result<TrialLog> {
    drive(&mut session, operator, clock, sink);
    Ok(session.into_log().expect("ended session has an outcome"))
}

/// Runs `session` until it ends, leaving it available for inspection.
pub fn drive(
    session: &mut Session,
    operator: &mut dyn Operator,
    clock: &mut dyn Clock,
    sink: &mut dyn FnMut(&ServerMessage),
) {
    let lobby_limit = session.timeout_ticks.max(1);
    let mut lobby_polls = 0u64;
    while session.phase() != Phase::Ended {
        match operator.poll(session) {
            None => session.disconnect(),
            Some(msgs) => {
                for m in msgs {
                    session.handle(m);
                }
            }
        }
        match session.phase() {
            Phase::Lobby => {
                lobby_polls += 1;
                if lobby_polls >= lobby_limit {
                    session.expire_lobby();
                } else {
                    clock.idle();
                }
            }
            Phase::Running => {
                if let Some(rec) = session.step() {
                    let msg = ServerMessage::State {
                        record: rec.clone(),
                        geometry: session.geometry(),
                    };
                    sink(&msg);
                }
                clock.tick_done(session.tick(), session.scenario.dt);
            }
            Phase::Ended => {}
        }
    }
    let outcome = session
        .outcome()
        .expect("ended session has an outcome")
        .clone();
    sink(&ServerMessage::Result { outcome });
}

/// Sends `start` from the lobby, then each message at its tick.
#[derive(Debug, Clone, Default)]
pub struct ScriptedOperator {
    steps: Vec<(u64, ClientMessage)>,
    next: usize,
    disconnect_at: Option<u64>,
}

impl ScriptedOperator {
    /// `steps` are (tick, message) pairs; they are sorted by tick, keeping
    /// the given order within a tick.
    pub fn new(mut steps: Vec<(u64, ClientMessage)>) -> Self {
        steps.sort_by_key(|s| s.0);
        Self {
            steps,
            next: 0,
            disconnect_at: None,
        }
    }

    pub fn disconnect_at(mut self, tick: u64) -> Self {
        self.disconnect_at = Some(tick);
        self
    }
}

impl Operator for ScriptedOperator {
    fn poll(&mut self, s: &Session) -> Option<Vec<ClientMessage>> {
        if s.phase() == Phase::Lobby {
            return Some(vec![ClientMessage::start()]);
        }
        let k = s.tick();
        if self.disconnect_at.is_some_and(|d| k >= d) {
            return None;
        }
        let mut out = Vec::new();
        while self.next < self.steps.len() && self.steps[self.next].0 <= k {
            out.push(self.steps[self.next].1.clone());
            self.next += 1;
        }
        Some(out)
    }
}

/// Re-issues the client-originated events of a recorded log.
#[derive(Debug, Clone)]
pub struct ReplayOperator {
    events: Vec<TimedEvent>,
    next: usize,
}

impl ReplayOperator {
    pub fn new(log: &TrialLog) -> Self {
        let events = log
            .events()
            .filter(|e| {
                matches!(
                    e.event,
                    Event::Start | Event::Input { .. } | Event::Abort | Event::Disconnect
                )
            })
            .cloned()
            .collect();
        Self { events, next: 0 }
    }
}

impl Operator for ReplayOperator {
    fn poll(&mut self, s: &Session) -> Option<Vec<ClientMessage>> {
        let k = s.tick();
        let mut out = Vec::new();
        while let Some(e) = self.events.get(self.next) {
            if e.tick != k {
                break;
            }
            self.next += 1;
            match &e.event {
                Event::Start => out.push(ClientMessage::start()),
                Event::Abort => out.push(ClientMessage::abort()),
                Event::Input { device, vel, t } => out.push(ClientMessage::HandInput {
                    device: *device,
                    vel: *vel,
                    t: *t,
                }),
                Event::Disconnect => return None,
                _ => {}
            }
            if s.phase() == Phase::Lobby && !out.is_empty() {
                break;
            }
        }
        Some(out)
    }
}

/// Re-runs a log's inputs against `scenario` with the virtual clock.
pub fn replay(log: &TrialLog, scenario: &Scenario) -> Result<TrialLog> {
    let hash = format!("{:016x}", scenario.config_hash());
    if hash != log.header.config_hash {
        return Err(Error::HashMismatch {
            log: log.header.config_hash.clone(),
            scenario: hash,
        });
    }
    let session = Session::with_condition(scenario.clone(), log.header.condition.clone())?;
    let mut op = ReplayOperator::new(log);
    run_session_with(session, &mut op, &mut VirtualClock, &mut |_| {})
}
