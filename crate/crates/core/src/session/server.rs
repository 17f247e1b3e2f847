//! TCP service: one thread per connection, one session per operator.
//!
//! A connection's first meaningful message decides its role. `start` makes
//! it the operator of a new session (optionally naming the scenario);
//! `observe` attaches it read-only to the most recently started session.
//! Malformed lines are ignored.
//!
//! Headless mode runs in lockstep with the client: a hand input stamped `t`
//! is applied at tick `round(t/dt)`, and the session never simulates past
//! the newest timestamp it has received. Wall mode paces ticks in real time
//! and applies inputs as they arrive.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread;

use super::engine::{run_session_with, Operator, Phase, Session, VirtualClock, WallClock};
use super::log::TrialLog;
use super::protocol::{ClientMessage, ControlAction, ServerMessage};
use super::scenario::{load_scenario_file, Scenario};
use crate::{Error, Result};

pub const PORT_ENV: &str = "OPTWIN_PORT";
pub const DEFAULT_PORT: u16 = 7878;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Hosted scenarios; the first is the default.
    pub scenarios: Vec<Scenario>,
    pub headless: bool,
    pub log_dir: Option<PathBuf>,
}

/// Loads one scenario file, or every `*.json` in a directory sorted by
/// file name.
pub fn load_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Empty("scenario directory"));
        }
        files.iter().map(|f| load_scenario_file(f)).collect()
    } else {
        Ok(vec![load_scenario_file(path)?])
    }
}

type Observers = Arc<Mutex<Vec<Sender<String>>>>;

struct Shared {
    cfg: ServerConfig,
    current: Mutex<Option<Observers>>,
    trials: AtomicUsize,
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, cfg: ServerConfig) -> Result<Self> {
        if cfg.scenarios.is_empty() {
            return Err(Error::Empty("scenarios"));
        }
        if let Some(dir) = &cfg.log_dir {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            shared: Arc::new(Shared {
                cfg,
                current: Mutex::new(None),
                trials: AtomicUsize::new(0),
            }),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts connections forever.
    pub fn serve(self) -> Result<()> {
        for stream in self.listener.incoming() {
            let Ok(stream) = stream else { continue };
            let shared = Arc::clone(&self.shared);
            thread::spawn(move || {
                let _ = handle_connection(stream, &shared);
            });
        }
        Ok(())
    }

    /// Serves on a background thread.
    pub fn spawn(self) -> Result<SocketAddr> {
        let addr = self.local_addr()?;
        thread::spawn(move || self.serve());
        Ok(addr)
    }
}

fn spawn_reader(stream: TcpStream) -> Receiver<ClientMessage> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(stream).lines() {
            let Ok(line) = line else { break };
            if let Ok(msg) = ClientMessage::parse(&line) {
                if tx.send(msg).is_err() {
                    break;
                }
            }
        }
    });
    rx
}

fn handle_connection(stream: TcpStream, shared: &Shared) -> Result<()> {
    stream.set_nodelay(true)?;
    let rx = spawn_reader(stream.try_clone()?);
    let mut out = BufWriter::new(stream);
    // Lobby: wait for a role.
    let (start, name) = loop {
        match rx.recv() {
            Err(_) => return Ok(()),
            Ok(ClientMessage::Control {
                action: ControlAction::Observe,
                ..
            }) => return observe(shared, &mut out),
            Ok(
                m @ ClientMessage::Control {
                    action: ControlAction::Start,
                    ..
                },
            ) => {
                let name = match &m {
                    ClientMessage::Control { scenario, .. } => scenario.clone(),
                    _ => None,
                };
                break (m, name);
            }
            Ok(_) => {}
        }
    };
    let scenario = match &name {
        None => shared.cfg.scenarios[0].clone(),
        Some(n) => match shared.cfg.scenarios.iter().find(|s| &s.name == n) {
            Some(s) => s.clone(),
            None => return Ok(()),
        },
    };

    let observers: Observers = Arc::default();
    *shared.current.lock().expect("observer registry") = Some(Arc::clone(&observers));
    let session = Session::new(scenario)?;
    let mut sink = |m: &ServerMessage| {
        let line = m.to_line();
        let _ = out.write_all(line.as_bytes()).and_then(|_| out.flush());
        observers
            .lock()
            .expect("observers")
            .retain(|o| o.send(line.clone()).is_ok());
    };
    let log = if shared.cfg.headless {
        let mut op = LockstepOperator::new(rx, start);
        run_session_with(session, &mut op, &mut VirtualClock, &mut sink)?
    } else {
        let mut op = LiveOperator::new(rx, start);
        run_session_with(session, &mut op, &mut WallClock::default(), &mut sink)?
    };
    observers.lock().expect("observers").clear();
    if let Some(dir) = &shared.cfg.log_dir {
        write_log(dir, shared.trials.fetch_add(1, Ordering::SeqCst), &log)?;
    }
    Ok(())
}

fn observe(shared: &Shared, out: &mut impl Write) -> Result<()> {
    let (tx, rx) = mpsc::channel();
    match &*shared.current.lock().expect("observer registry") {
        Some(obs) => obs.lock().expect("observers").push(tx),
        None => return Ok(()),
    }
    for line in rx {
        if out
            .write_all(line.as_bytes())
            .and_then(|_| out.flush())
            .is_err()
        {
            break;
        }
    }
    Ok(())
}

/// Writes `<dir>/<scenario>-<nnnn>.jsonl`.
pub fn write_log(dir: &Path, index: usize, log: &TrialLog) -> Result<PathBuf> {
    let safe: String = log
        .header
        .scenario
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    let path = dir.join(format!("{safe}-{index:04}.jsonl"));
    let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    log.write_jsonl(BufWriter::new(f))?;
    Ok(path)
}

/// Applies whatever has arrived since the last tick.
struct LiveOperator {
    rx: Receiver<ClientMessage>,
    start: Option<ClientMessage>,
}

impl LiveOperator {
    fn new(rx: Receiver<ClientMessage>, start: ClientMessage) -> Self {
        Self {
            rx,
            start: Some(start),
        }
    }
}

impl Operator for LiveOperator {
    fn poll(&mut self, _: &Session) -> Option<Vec<ClientMessage>> {
        if let Some(s) = self.start.take() {
            return Some(vec![s]);
        }
        let mut out = Vec::new();
        loop {
            match self.rx.try_recv() {
                Ok(m) => out.push(m),
                Err(TryRecvError::Empty) => return Some(out),
                Err(TryRecvError::Disconnected) if out.is_empty() => return None,
                Err(TryRecvError::Disconnected) => return Some(out),
            }
        }
    }
}

/// Releases each message at the tick its timestamp names and blocks while
/// the client has not yet spoken about the current tick.
pub struct LockstepOperator {
    rx: Receiver<ClientMessage>,
    start: Option<ClientMessage>,
    held: Option<ClientMessage>,
}

impl LockstepOperator {
    pub fn new(rx: Receiver<ClientMessage>, start: ClientMessage) -> Self {
        Self {
            rx,
            start: Some(start),
            held: None,
        }
    }

    fn due_tick(msg: &ClientMessage, dt: f64) -> u64 {
        match msg {
            ClientMessage::HandInput { t, .. } if *t > 0.0 => (t / dt).round() as u64,
            _ => 0,
        }
    }
}

impl Operator for LockstepOperator {
    fn poll(&mut self, s: &Session) -> Option<Vec<ClientMessage>> {
        if let Some(m) = self.start.take() {
            return Some(vec![m]);
        }
        if s.phase() != Phase::Running {
            return Some(vec![]);
        }
        let k = s.tick();
        let dt = s.scenario().dt;
        let mut out = Vec::new();
        loop {
            let m = match self.held.take() {
                Some(m) => m,
                None => match self.rx.recv() {
                    Ok(m) => m,
                    Err(_) if out.is_empty() => return None,
                    Err(_) => return Some(out),
                },
            };
            if Self::due_tick(&m, dt) > k {
                self.held = Some(m);
                return Some(out);
            }
            let ends = matches!(
                m,
                ClientMessage::Control {
                    action: ControlAction::Abort,
                    ..
                }
            );
            out.push(m);
            if ends {
                return Some(out);
            }
        }
    }
}

/// Drives the lockstep operator from an in-memory message list (no
/// sockets); returns every server message in order.
pub fn run_headless(
    scenario: Scenario,
    messages: Vec<ClientMessage>,
) -> Result<(Vec<ServerMessage>, TrialLog)> {
    let (tx, rx) = mpsc::channel();
    let mut iter = messages.into_iter();
    let start = iter
        .by_ref()
        .find(|m| {
            matches!(
                m,
                ClientMessage::Control {
                    action: ControlAction::Start,
                    ..
                }
            )
        })
        .ok_or(Error::Empty("start message"))?;
    for m in iter {
        let _ = tx.send(m);
    }
    drop(tx);
    let mut op = LockstepOperator::new(rx, start);
    let mut sent = Vec::new();
    let log = run_session_with(
        Session::new(scenario)?,
        &mut op,
        &mut VirtualClock,
        &mut |m| sent.push(m.clone()),
    )?;
    Ok((sent, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::session::scenario::load_scenario;
    use crate::session::EndReason;
    use crate::teleop::Device;

    const DOC: &str = r#"{
        "version": 1,
        "name": "srv",
        "robot": {"elements": [{"offset": [0,0,0], "radius": 1.5, "trap": 0}]},
        "traps": [{"position": [0,0,0], "device": "left"}],
        "cells": [{"position": [20,0,0], "radius": 3}],
        "goal": {"center": [60,0,0], "radius": 2},
        "timeout_s": 0.2,
        "seed": 5
    }"#;

    fn scenario() -> Scenario {
        load_scenario(DOC, None).unwrap()
    }

    #[test]
    fn lockstep_applies_at_stamped_tick() {
        let msgs = vec![
            ClientMessage::start(),
            ClientMessage::hand(Device::Left, Vec3::new(0.01, 0.0, 0.0), 0.010),
            ClientMessage::hand(Device::Left, Vec3::new(0.0, 0.01, 0.0), 0.0504),
            ClientMessage::hand(Device::Left, Vec3::zeros(), 0.2),
        ];
        let (sent, log) = run_headless(scenario(), msgs).unwrap();
        let ticks: Vec<u64> = log
            .events()
            .filter(|e| matches!(e.event, crate::session::Event::Input { .. }))
            .map(|e| e.tick)
            .collect();
        assert_eq!(ticks, [10, 50]);
        assert_eq!(log.outcome.reason, EndReason::Timeout);
        assert!(matches!(sent.last(), Some(ServerMessage::Result { .. })));
        assert_eq!(sent.len(), log.records.len() + 1);
    }

    #[test]
    fn lockstep_close_is_disconnect() {
        let msgs = vec![
            ClientMessage::start(),
            ClientMessage::hand(Device::Left, Vec3::new(0.01, 0.0, 0.0), 0.05),
        ];
        let (_, log) = run_headless(scenario(), msgs).unwrap();
        assert_eq!(log.outcome.reason, EndReason::Disconnect);
        assert_eq!(log.outcome.events.last().unwrap().tick, 51);
    }

    #[test]
    fn tcp_session_with_observer() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ServerConfig {
            scenarios: vec![scenario()],
            headless: true,
            log_dir: Some(dir.path().to_path_buf()),
        };
        let addr = Server::bind("127.0.0.1:0", cfg).unwrap().spawn().unwrap();
        let mut op = TcpStream::connect(addr).unwrap();
        op.write_all(b"garbage\n").unwrap();
        op.write_all(ClientMessage::start().to_line().as_bytes())
            .unwrap();
        op.write_all(
            ClientMessage::hand(Device::Left, Vec3::new(0.0, 0.01, 0.0), 0.02)
                .to_line()
                .as_bytes(),
        )
        .unwrap();
        op.write_all(
            ClientMessage::hand(Device::Left, Vec3::zeros(), 0.3)
                .to_line()
                .as_bytes(),
        )
        .unwrap();
        let lines: Vec<String> = BufReader::new(op.try_clone().unwrap())
            .lines()
            .map(|l| l.unwrap())
            .take_while(|l| !l.contains("\"type\":\"result\""))
            .collect();
        assert_eq!(lines.len(), 12);
        assert!(lines.iter().all(|l| l.starts_with("{\"type\":\"state\"")));
        drop(op);
        // The log lands after the result is sent.
        let mut found = None;
        for _ in 0..200 {
            found = fs::read_dir(dir.path())
                .unwrap()
                .filter_map(|e| e.ok())
                .next();
            if found.is_some() {
                break;
            }
            thread::sleep(std::time::Duration::from_millis(10));
        }
        assert!(found
            .unwrap()
            .file_name()
            .to_string_lossy()
            .starts_with("srv-0000"));
    }

    #[test]
    fn scenario_directory_loading() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.json"), DOC.replace("\"srv\"", "\"b\"")).unwrap();
        fs::write(dir.path().join("a.json"), DOC.replace("\"srv\"", "\"a\"")).unwrap();
        fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let names: Vec<String> = load_scenarios(dir.path())
            .unwrap()
            .into_iter()
            .map(|s| s.name)
            .collect();
        assert_eq!(names, ["a", "b"]);
        let empty = tempfile::tempdir().unwrap();
        assert!(load_scenarios(empty.path()).is_err());
    }
}
