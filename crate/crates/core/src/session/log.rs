//! Trial logs: JSON lines, header first, outcome last.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec3};
use crate::teleop::Device;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub scenario: String,
    /// Hex FNV-1a 64 of the resolved scenario.
    pub config_hash: String,
    pub seed: u64,
    pub dt: f64,
    /// Physics ticks per second.
    pub tick_rate: u64,
    pub broadcast_hz: u32,
    /// Experiment condition label, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
}

/// Something that happened between two physics ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Start,
    /// Hand input consumed at the start of the tick.
    Input {
        device: Device,
        vel: [f64; 3],
        t: f64,
    },
    Abort,
    /// Rising edge of the force warning on a device.
    Warning {
        device: Device,
    },
    TrapLost {
        trap: usize,
    },
    Disconnect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    /// Index of the physics tick the event belongs to.
    pub tick: u64,
    #[serde(flatten)]
    pub event: Event,
}

/// Per-device pair, serialized as `{"left":..,"right":..}`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerDevice<T> {
    pub left: T,
    pub right: T,
}

impl<T: Copy> PerDevice<T> {
    pub fn get(&self, d: Device) -> T {
        match d {
            Device::Left => self.left,
            Device::Right => self.right,
        }
    }

    pub fn from_fn(mut f: impl FnMut(Device) -> T) -> Self {
        Self {
            left: f(Device::Left),
            right: f(Device::Right),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    /// Physics ticks completed.
    pub tick: u64,
    /// Simulated seconds since start.
    pub t: f64,
    pub pose: Pose,
    pub traps: Vec<Vec3>,
    pub payload: Vec3,
    /// Largest contact-pair force involving a cell, pN.
    pub contact_force_metric: f64,
    /// Min over assigned trap–element pairs, µm.
    pub trap_center_distance: f64,
    pub f_hand: PerDevice<Vec3>,
    /// Raw model force per device, pN.
    pub f_raw: PerDevice<Vec3>,
    pub warning: bool,
    pub trap_lost: bool,
    pub events: Vec<TimedEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    GoalReached,
    TrapLost,
    Abort,
    Timeout,
    Disconnect,
    /// The integrator rejected a step.
    SimulationError,
}

impl EndReason {
    pub fn as_str(self) -> &'static str {
        match self {
            EndReason::GoalReached => "goal_reached",
            EndReason::TrapLost => "trap_lost",
            EndReason::Abort => "abort",
            EndReason::Timeout => "timeout",
            EndReason::Disconnect => "disconnect",
            EndReason::SimulationError => "simulation_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub success: bool,
    pub reason: EndReason,
    /// Simulated seconds from start to end.
    pub duration: f64,
    /// Events not covered by any record (e.g. a disconnect in the lobby).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<TimedEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine {
    Header(LogHeader),
    Record(LogRecord),
    Outcome(Outcome),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub header: LogHeader,
    pub records: Vec<LogRecord>,
    pub outcome: Outcome,
}

impl TrialLog {
    /// All events in tick order.
    pub fn events(&self) -> impl Iterator<Item = &TimedEvent> {
        self.records
            .iter()
            .flat_map(|r| &r.events)
            .chain(&self.outcome.events)
    }

    pub fn ever_lost(&self) -> bool {
        self.records.iter().any(|r| r.trap_lost)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let mut line = |l: &LogLine| -> Result<()> {
            serde_json::to_writer(&mut w, l)?;
            w.write_all(b"\n")?;
            Ok(())
        };
        line(&LogLine::Header(self.header.clone()))?;
        for r in &self.records {
            line(&LogLine::Record(r.clone()))?;
        }
        line(&LogLine::Outcome(self.outcome.clone()))?;
        w.flush()?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Parses and checks the structural invariants: header first, outcome
    /// exactly once and last, strictly increasing `t`.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut header = None;
        let mut records: Vec<LogRecord> = Vec::new();
        let mut outcome = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if outcome.is_some() {
                return Err(Error::MalformedLog(format!(
                    "line {}: content after outcome",
                    i + 1
                )));
            }
            let parsed: LogLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                column: e.column(),
                message: e.to_string(),
            })?;
            match parsed {
                LogLine::Header(h) if header.is_none() && i == 0 => header = Some(h),
                LogLine::Header(_) => {
                    return Err(Error::MalformedLog(format!(
                        "line {}: unexpected header",
                        i + 1
                    )))
                }
                _ if header.is_none() => {
                    return Err(Error::MalformedLog("first line must be the header".into()))
                }
                LogLine::Record(rec) => {
                    if records.last().is_some_and(|p| !(rec.t > p.t)) {
                        return Err(Error::MalformedLog(format!(
                            "line {}: t not increasing",
                            i + 1
                        )));
                    }
                    records.push(rec);
                }
                LogLine::Outcome(o) => outcome = Some(o),
            }
        }
        Ok(TrialLog {
            header: header.ok_or(Error::Empty("trial log"))?,
            records,
            outcome: outcome.ok_or_else(|| Error::MalformedLog("missing outcome".into()))?,
        })
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        Self::read_jsonl(text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: f64) -> LogRecord {
        LogRecord {
            tick: (t * 1000.0) as u64,
            t,
            pose: Pose::default(),
            traps: vec![Vec3::new(1.0, 0.1, 0.0)],
            payload: Vec3::new(3.0, 0.0, 0.0),
            contact_force_metric: 0.25,
            trap_center_distance: 0.1,
            f_hand: PerDevice::default(),
            f_raw: PerDevice::default(),
            warning: false,
            trap_lost: false,
            events: vec![TimedEvent {
                tick: 3,
                event: Event::Input {
                    device: Device::Left,
                    vel: [0.1, 0.0, 0.0],
                    t: 0.003,
                },
            }],
        }
    }

    fn log() -> TrialLog {
        TrialLog {
            header: LogHeader {
                scenario: "s".into(),
                config_hash: "00ff".into(),
                seed: 7,
                dt: 1e-3,
                tick_rate: 1000,
                broadcast_hz: 60,
                condition: None,
            },
            records: vec![record(0.017), record(0.034)],
            outcome: Outcome {
                success: false,
                reason: EndReason::Timeout,
                duration: 0.034,
                events: vec![],
            },
        }
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let l = log();
        let text = l.to_jsonl();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("{\"kind\":\"header\""));
        assert!(text
            .lines()
            .last()
            .unwrap()
            .starts_with("{\"kind\":\"outcome\""));
        let back = TrialLog::from_jsonl(&text).unwrap();
        assert_eq!(back, l);
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn structural_violations_rejected() {
        let text = log().to_jsonl();
        let lines: Vec<&str> = text.lines().collect();
        let no_outcome = lines[..3].join("\n");
        assert!(matches!(
            TrialLog::from_jsonl(&no_outcome),
            Err(Error::MalformedLog(_))
        ));
        let no_header = lines[1..].join("\n");
        assert!(matches!(
            TrialLog::from_jsonl(&no_header),
            Err(Error::MalformedLog(_))
        ));
        let swapped = [lines[0], lines[2], lines[1], lines[3]].join("\n");
        assert!(matches!(
            TrialLog::from_jsonl(&swapped),
            Err(Error::MalformedLog(_))
        ));
        let twice = [lines[0], lines[1], lines[3], lines[3]].join("\n");
        assert!(matches!(
            TrialLog::from_jsonl(&twice),
            Err(Error::MalformedLog(_))
        ));
        assert!(matches!(TrialLog::from_jsonl(""), Err(Error::Empty(_))));
    }

    #[test]
    fn event_wire_shape() {
        let e = TimedEvent {
            tick: 12,
            event: Event::Warning {
                device: Device::Right,
            },
        };
        assert_eq!(
            serde_json::to_string(&e).unwrap(),
            r#"{"tick":12,"event":"warning","device":"right"}"#
        );
    }
}
