//! Newline-delimited JSON wire messages.
//!
//! Client → server:
//!
//! ```text
//! {"type":"hand_input","device":"left","vel":[vx,vy,vz],"t":0.25}
//! {"type":"control","action":"start"}
//! {"type":"control","action":"abort"}
//! {"type":"control","action":"start","scenario":"delivery"}
//! {"type":"control","action":"observe"}
//! ```
//!
//! Server → client: `{"type":"state",...}` at the broadcast rate while a
//! trial runs, then exactly one `{"type":"result",...}`.

use serde::{Deserialize, Serialize};

use super::log::{LogRecord, Outcome};
use crate::dynamics::{Cell, Obstacle};
use crate::geometry::{Aabb, Vec3};
use crate::teleop::Device;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlAction {
    Start,
    Abort,
    /// Attach as a read-only observer of the running session.
    Observe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    HandInput {
        device: Device,
        vel: [f64; 3],
        /// Sender's clock, seconds since trial start.
        #[serde(default)]
        t: f64,
    },
    Control {
        action: ControlAction,
        /// Scenario name to run when the server hosts several.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scenario: Option<String>,
    },
}

impl ClientMessage {
    pub fn hand(device: Device, vel: Vec3, t: f64) -> Self {
        ClientMessage::HandInput {
            device,
            vel: [vel.x, vel.y, vel.z],
            t,
        }
    }

    pub fn start() -> Self {
        ClientMessage::Control {
            action: ControlAction::Start,
            scenario: None,
        }
    }

    pub fn start_scenario(name: &str) -> Self {
        ClientMessage::Control {
            action: ControlAction::Start,
            scenario: Some(name.into()),
        }
    }

    pub fn observe() -> Self {
        ClientMessage::Control {
            action: ControlAction::Observe,
            scenario: None,
        }
    }

    pub fn abort() -> Self {
        ClientMessage::Control {
            action: ControlAction::Abort,
            scenario: None,
        }
    }

    /// Parses one line; trailing whitespace is ignored.
    pub fn parse(line: &str) -> serde_json::Result<Self> {
        serde_json::from_str(line.trim_end())
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("message serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementGeometry {
    pub center: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapGeometry {
    pub position: Vec3,
    pub power_weight: f64,
    pub device: Device,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalGeometry {
    pub center: Vec3,
    pub radius: f64,
}

/// Everything a client needs to draw the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub elements: Vec<ElementGeometry>,
    pub traps: Vec<TrapGeometry>,
    pub cells: Vec<Cell>,
    pub obstacles: Vec<Obstacle>,
    pub goal: GoalGeometry,
    pub payload_cell: usize,
    pub workspace: Aabb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum ServerMessage {
    State {
        #[serde(flatten)]
        record: LogRecord,
        geometry: Geometry,
    },
    Result {
        #[serde(flatten)]
        outcome: Outcome,
    },
}

impl ServerMessage {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("message serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_match_documented_shape() {
        let m = ClientMessage::parse(
            r#"{"type":"hand_input","device":"left","vel":[1,0,-0.5],"t":0.25}"#,
        )
        .unwrap();
        assert_eq!(
            m,
            ClientMessage::hand(Device::Left, Vec3::new(1.0, 0.0, -0.5), 0.25)
        );
        assert_eq!(
            ClientMessage::parse(r#"{"type":"control","action":"start"}"#).unwrap(),
            ClientMessage::start()
        );
        assert_eq!(
            ClientMessage::abort().to_line(),
            "{\"type\":\"control\",\"action\":\"abort\"}\n"
        );
        assert_eq!(
            ClientMessage::hand(Device::Right, Vec3::new(0.5, 0.0, 0.0), 1.0).to_line(),
            "{\"type\":\"hand_input\",\"device\":\"right\",\"vel\":[0.5,0.0,0.0],\"t\":1.0}\n"
        );
    }

    #[test]
    fn malformed_messages_rejected() {
        for bad in [
            r#"{"type":"hand_input","device":"middle","vel":[0,0,0],"t":0}"#,
            r#"{"type":"hand_input","device":"left","vel":[0,0],"t":0}"#,
            r#"{"type":"control","action":"explode"}"#,
            r#"{"type":"teleport"}"#,
            "not json",
        ] {
            assert!(ClientMessage::parse(bad).is_err(), "{bad}");
        }
    }
}
