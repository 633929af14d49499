//! Messages exchanged with operator consoles.
//!
//! Every message is one JSON object with a `"type"` field, written as a
//! single line. A transport frame may carry several newline-separated
//! messages. Unknown fields are ignored.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::controller::ControlMode;
use crate::gestures::{Approach, Pair, Permission, TrafficSignal};
use crate::kinematics::{JointId, PoseFrame};
use crate::scenario::ScenarioConfig;
use crate::sim::MetricsReport;

pub const PROTOCOL_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleView {
    pub id: u64,
    pub approach: Approach,
    pub position: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub seq: u64,
    pub clock: f64,
    pub mode: ControlMode,
    pub vehicles: Vec<VehicleView>,
    pub permissions: BTreeMap<Approach, Permission>,
    pub effective_permissions: BTreeMap<Approach, Permission>,
    pub robot_pose: BTreeMap<JointId, f64>,
    pub fk_points: PoseFrame,
    pub queues: BTreeMap<Approach, u32>,
    pub current_signal: Option<TrafficSignal>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    Hello {
        version: String,
        scenario: ScenarioConfig,
    },
    State(Box<StateSnapshot>),
    Command {
        signal: TrafficSignal,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grant: Option<Pair>,
    },
    SetMode {
        mode: ControlMode,
    },
    Metrics {
        report: MetricsReport,
    },
    Error {
        code: String,
        text: String,
    },
}

impl WireMessage {
    pub fn error(code: &str, text: impl Into<String>) -> Self {
        WireMessage::Error {
            code: code.to_string(),
            text: text.into(),
        }
    }

    /// One line of JSON terminated by `\n`.
    pub fn encode(&self) -> String {
        let mut s = serde_json::to_string(self).expect("wire messages always serialize");
        s.push('\n');
        s
    }

    /// Every non-blank line of `frame` as a message.
    pub fn decode_frame(frame: &str) -> Result<Vec<WireMessage>, serde_json::Error> {
        frame
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect()
    }
}
