//! Messages exchanged with a browser console.
//!
//! Every message is one JSON object with a `type` tag. The server sends a
//! `hello` with the static scene once per session, then one `snapshot` per
//! tick, `error` for rejected client messages and `end` when a stream stops.
//! Clients send `input`, `start`, `pause`, `reset` and `set_policy`. Server
//! messages carry `"v": 1`; clients may include it and must match.

use serde::{Deserialize, Serialize};

use crate::control::{AuthorityPair, PolicySpec};
use crate::geometry::Vec2;
use crate::metrics::RunningMetrics;
use crate::phantom::{OccupancyGrid, SafetySnapshot};
use crate::planner::ArmPair;
use crate::sim::{Endpoint, Event, OperatorInput, RobotState, TerminalStatus, TickRecord, TrialHeader};

pub const WIRE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Idle,
    Running,
    Paused,
    Reached,
    Timeout,
    Aborted,
}

impl From<TerminalStatus> for SessionStatus {
    fn from(s: TerminalStatus) -> Self {
        match s {
            TerminalStatus::Reached => SessionStatus::Reached,
            TerminalStatus::Timeout => SessionStatus::Timeout,
            TerminalStatus::Aborted => SessionStatus::Aborted,
        }
    }
}

/// State of the running trial at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub v: u32,
    /// Increments on every reset.
    pub session: u32,
    pub tick: u64,
    pub time: f64,
    pub status: SessionStatus,
    pub policy: String,
    pub robot: RobotState,
    /// Left and right manipulator tips.
    pub tips: [Vec2; 2],
    pub alpha: AuthorityPair,
    /// Haptic force per arm (N).
    pub forces: ArmPair,
    pub safety: SafetySnapshot,
    pub intent: [f64; 2],
    pub u_human: ArmPair,
    pub u_robot: ArmPair,
    pub u_blended: ArmPair,
    /// Endpoints that touched a wall on this tick.
    pub contacts: Vec<Endpoint>,
    pub goal_dist: f64,
    pub metrics: RunningMetrics,
    /// Identifies the plan overlay sent in `hello`.
    pub plan_id: String,
}

impl Snapshot {
    pub fn from_record(
        header: &TrialHeader,
        policy: &str,
        record: &TickRecord,
        metrics: RunningMetrics,
        status: SessionStatus,
        session: u32,
    ) -> Self {
        Self {
            v: WIRE_VERSION,
            session,
            tick: record.t,
            time: record.time,
            status,
            policy: policy.to_string(),
            robot: record.robot,
            tips: record.tips,
            alpha: record.alpha,
            forces: record.forces,
            safety: record.safety,
            intent: record.intent,
            u_human: record.u_human,
            u_robot: record.u_robot,
            u_blended: record.u_blended,
            contacts: record.contact_endpoints().collect(),
            goal_dist: record.robot.head.distance(header.goal),
            metrics,
            plan_id: header.config_hash.clone(),
        }
    }

    /// Pose before the first tick.
    pub fn initial(header: &TrialHeader, robot: RobotState, tips: [Vec2; 2], session: u32) -> Self {
        Self {
            v: WIRE_VERSION,
            session,
            tick: 0,
            time: 0.0,
            status: SessionStatus::Idle,
            policy: header.policy.clone(),
            robot,
            tips,
            alpha: AuthorityPair::default(),
            forces: ArmPair::ZERO,
            safety: SafetySnapshot::default(),
            intent: [0.0; 2],
            u_human: ArmPair::ZERO,
            u_robot: ArmPair::ZERO,
            u_blended: ArmPair::ZERO,
            contacts: Vec::new(),
            goal_dist: robot.head.distance(header.goal),
            metrics: RunningMetrics::default(),
            plan_id: header.config_hash.clone(),
        }
    }
}

/// Policy name after the events of a record.
pub fn policy_after(current: &str, record: &TickRecord) -> String {
    record
        .events
        .iter()
        .rev()
        .find_map(|e| match e {
            Event::PolicyChanged { policy } => Some(policy.clone()),
            _ => None,
        })
        .unwrap_or_else(|| current.to_string())
}

/// Occupancy mask as rows of `0` (free) and `1` (wall).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub rows: Vec<String>,
}

impl Mask {
    pub fn from_grid(grid: &OccupancyGrid) -> Self {
        let rows = (0..grid.height())
            .map(|y| {
                (0..grid.width())
                    .map(|x| if grid.is_occupied((x, y)) { '1' } else { '0' })
                    .collect()
            })
            .collect();
        Self {
            width: grid.width(),
            height: grid.height(),
            resolution: grid.resolution(),
            rows,
        }
    }
}

/// Static scene of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub v: u32,
    pub plan_id: String,
    pub dt: f64,
    pub start: Vec2,
    pub goal: Vec2,
    pub goal_radius: f64,
    pub path: Vec<Vec2>,
    pub head_waypoints: Vec<Vec2>,
    pub tail_waypoints: Vec<Vec2>,
    /// Grip calibration for the console's force slider (N).
    pub f_baseline: f64,
    pub f_override: f64,
    pub max_speed: f64,
    pub staleness_ticks: u64,
    pub occupancy: Option<Mask>,
}

impl Hello {
    pub fn new(header: &TrialHeader, grid: Option<&OccupancyGrid>, calibration: (f64, f64), max_speed: f64, staleness_ticks: u64) -> Self {
        Self {
            v: WIRE_VERSION,
            plan_id: header.config_hash.clone(),
            dt: header.dt,
            start: header.start,
            goal: header.goal,
            goal_radius: header.goal_radius,
            path: header.path.clone(),
            head_waypoints: header.plan.head.clone(),
            tail_waypoints: header.plan.tail.clone(),
            f_baseline: calibration.0,
            f_override: calibration.1,
            max_speed,
            staleness_ticks,
            occupancy: grid.map(Mask::from_grid),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    Hello(Box<Hello>),
    Snapshot(Box<Snapshot>),
    Error { v: u32, message: String },
    End { v: u32, reason: String },
}

impl ServerFrame {
    pub fn error(message: impl Into<String>) -> Self {
        ServerFrame::Error {
            v: WIRE_VERSION,
            message: message.into(),
        }
    }

    pub fn end(reason: impl Into<String>) -> Self {
        ServerFrame::End {
            v: WIRE_VERSION,
            reason: reason.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

/// Policy named by id or given in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicyRef {
    Name(String),
    Spec(PolicySpec),
}

impl PolicyRef {
    pub fn resolve(&self) -> Result<PolicySpec, String> {
        match self {
            PolicyRef::Name(n) => PolicySpec::from_name(n).ok_or_else(|| format!("unknown policy {n:?}")),
            PolicyRef::Spec(s) => Ok(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientFrame {
    Input {
        v_left: Vec2,
        v_right: Vec2,
        fsr_left: f64,
        fsr_right: f64,
    },
    Start,
    Pause,
    Reset,
    SetPolicy {
        policy: PolicyRef,
    },
}

impl ClientFrame {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| format!("malformed JSON: {e}"))?;
        let obj = value.as_object_mut().ok_or("frame must be a JSON object")?;
        if let Some(v) = obj.remove("v") {
            if v.as_u64() != Some(WIRE_VERSION as u64) {
                return Err(format!("unsupported protocol version {v}, expected {WIRE_VERSION}"));
            }
        }
        let kind = obj.get("type").and_then(|t| t.as_str()).unwrap_or_default();
        if matches!(kind, "start" | "pause" | "reset") {
            if let Some(k) = obj.keys().find(|k| *k != "type") {
                return Err(format!("invalid frame: unknown field `{k}` for {kind}"));
            }
        }
        let frame: ClientFrame = serde_json::from_value(value).map_err(|e| format!("invalid frame: {e}"))?;
        if let ClientFrame::Input {
            v_left,
            v_right,
            fsr_left,
            fsr_right,
        } = &frame
        {
            if !(v_left.is_finite() && v_right.is_finite() && fsr_left.is_finite() && fsr_right.is_finite()) {
                return Err("input values must be finite".into());
            }
        }
        Ok(frame)
    }

    pub fn input(i: OperatorInput) -> Self {
        ClientFrame::Input {
            v_left: i.v_left,
            v_right: i.v_right,
            fsr_left: i.fsr_left,
            fsr_right: i.fsr_right,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_frames_parse() {
        let f = ClientFrame::parse(r#"{"type":"input","v_left":[1,2],"v_right":[0,0],"fsr_left":0.5,"fsr_right":5}"#).unwrap();
        assert_eq!(
            f,
            ClientFrame::Input {
                v_left: Vec2::new(1.0, 2.0),
                v_right: Vec2::ZERO,
                fsr_left: 0.5,
                fsr_right: 5.0
            }
        );
        assert_eq!(ClientFrame::parse(r#"{"type":"start","v":1}"#).unwrap(), ClientFrame::Start);
        let p = ClientFrame::parse(r#"{"type":"set_policy","policy":"discrete"}"#).unwrap();
        assert_eq!(
            p,
            ClientFrame::SetPolicy {
                policy: PolicyRef::Name("discrete".into())
            }
        );
        let p = ClientFrame::parse(r#"{"type":"set_policy","policy":{"kind":"context","bias":-2}}"#).unwrap();
        assert!(matches!(p, ClientFrame::SetPolicy { policy: PolicyRef::Spec(PolicySpec::Context(c)) } if c.bias == -2.0));
        for bad in [
            "nope",
            "[1]",
            r#"{"type":"fly"}"#,
            r#"{"type":"start","v":2}"#,
            r#"{"type":"input","v_left":[1,2]}"#,
            r#"{"type":"pause","extra":1}"#,
        ] {
            assert!(ClientFrame::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn frames_round_trip() {
        let f = ClientFrame::input(OperatorInput {
            v_left: Vec2::new(0.5, -1.0),
            v_right: Vec2::new(2.0, 0.0),
            fsr_left: 1.0,
            fsr_right: 0.5,
        });
        assert_eq!(ClientFrame::parse(&f.to_json()).unwrap(), f);
        let e = ServerFrame::error("bad");
        let back: ServerFrame = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(back, e);
        let v: serde_json::Value = serde_json::from_str(&ServerFrame::end("done").to_json()).unwrap();
        assert_eq!(v["type"], "end");
        assert_eq!(v["v"], 1);
    }

    #[test]
    fn mask_rows() {
        let g = OccupancyGrid::open(4, 3, 0.5).unwrap();
        let m = Mask::from_grid(&g);
        assert_eq!(m.rows, vec!["1111", "1001", "1111"]);
    }
}
