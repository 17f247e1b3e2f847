//! Helpers shared by the integration and acceptance targets.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::PathBuf;

use optwin::experiments::default_delivery_scenario;
use optwin::rng::RngState;
use optwin::session::server::{Server, ServerConfig};
use optwin::session::{ClientMessage, Scenario};
use optwin::teleop::Device;
use optwin::Vec3;

pub const GOLDEN_FILE: &str = "delivery_abort.jsonl";

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

/// Client side of the recorded session: push, veer, then abort at 0.3 s.
pub fn golden_script() -> Vec<ClientMessage> {
    let push = Vec3::new(0.5, 0.0, 0.0);
    vec![
        ClientMessage::start(),
        ClientMessage::hand(Device::Left, push, 0.0),
        ClientMessage::hand(Device::Right, push, 0.0),
        ClientMessage::hand(Device::Left, Vec3::new(0.5, 0.1, 0.0), 0.15),
        ClientMessage::hand(Device::Right, Vec3::new(0.5, 0.1, 0.0), 0.15),
        ClientMessage::hand(Device::Left, Vec3::zeros(), 0.3),
        ClientMessage::abort(),
    ]
}

/// Runs the golden script against a headless TCP server and returns every
/// line the server sent.
pub fn record_golden_stream() -> String {
    let cfg = ServerConfig {
        scenarios: vec![default_delivery_scenario()],
        headless: true,
        log_dir: None,
    };
    let addr = Server::bind("127.0.0.1:0", cfg).unwrap().spawn().unwrap();
    let stream = TcpStream::connect(addr).unwrap();
    let mut w = stream.try_clone().unwrap();
    for m in golden_script() {
        w.write_all(m.to_line().as_bytes()).unwrap();
    }
    let mut out = String::new();
    for line in BufReader::new(stream).lines() {
        let line = line.unwrap();
        let last = line.starts_with("{\"type\":\"result\"");
        out.push_str(&line);
        out.push('\n');
        if last {
            break;
        }
    }
    out
}

/// Compares against the checked-in golden; `UPDATE_GOLDENS=1` rewrites it.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDENS").is_some() {
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected =
        std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        return Ok(());
    }
    let first = expected
        .lines()
        .zip(actual.lines())
        .position(|(a, b)| a != b)
        .unwrap_or(expected.lines().count().min(actual.lines().count()));
    Err(format!(
        "{} differs from the golden at line {} ({} vs {} lines)",
        name,
        first + 1,
        actual.lines().count(),
        expected.lines().count()
    ))
}

/// Short delivery scenario with the given seed.
pub fn short_scenario(seed: u64, timeout_s: f64) -> Scenario {
    let mut sc = default_delivery_scenario();
    sc.seed = seed;
    sc.timeout_s = timeout_s;
    sc
}

/// Random script: hand inputs at random ticks, sometimes an abort.
pub fn random_script(rng: &mut RngState, ticks: u64) -> Vec<(u64, ClientMessage)> {
    let n = 1 + (rng.uniform() * 12.0) as usize;
    let mut steps = Vec::with_capacity(n + 1);
    for _ in 0..n {
        let k = (rng.uniform() * ticks as f64) as u64;
        let device = if rng.uniform() < 0.5 {
            Device::Left
        } else {
            Device::Right
        };
        let v = Vec3::new(rng.normal(), rng.normal(), 0.2 * rng.normal()) * 0.3;
        steps.push((k, ClientMessage::hand(device, v, k as f64 * 1e-3)));
    }
    if rng.uniform() < 0.3 {
        steps.push((
            (rng.uniform() * ticks as f64) as u64,
            ClientMessage::abort(),
        ));
    }
    steps
}
