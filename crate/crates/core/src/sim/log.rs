//! Trial logs as JSON Lines: one header line, one line per tick, one footer.
//!
//! ```text
//! {"type":"header","v":1,"config_hash":"…",…}
//! {"type":"tick","t":0,"time":0.0,"robot":{…},…}
//! …
//! {"type":"footer","status":"reached","ticks":412,"reason":null}
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Endpoint, RobotState};
use crate::control::AuthorityPair;
use crate::geometry::Vec2;
use crate::phantom::SafetySnapshot;
use crate::planner::{ArmPair, DualArmPlan};

pub const LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Reached,
    Timeout,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Contact { endpoint: Endpoint },
    Warning { message: String },
    PolicyChanged { policy: String },
    Replanned { waypoints: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialHeader {
    pub v: u32,
    pub config_hash: String,
    pub seed: u64,
    pub policy: String,
    pub dt: f64,
    pub goal_radius: f64,
    pub debounce_window: u64,
    pub start: Vec2,
    pub goal: Vec2,
    /// Planned centerline.
    pub path: Vec<Vec2>,
    pub plan: DualArmPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: u64,
    /// Seconds since the trial start.
    pub time: f64,
    pub robot: RobotState,
    /// Left and right manipulator tips.
    pub tips: [Vec2; 2],
    pub alpha: AuthorityPair,
    pub u_human: ArmPair,
    pub u_robot: ArmPair,
    pub u_blended: ArmPair,
    /// Grip forces (N), left and right.
    pub fsr: [f64; 2],
    /// Smoothed intent, left and right.
    pub intent: [f64; 2],
    pub safety: SafetySnapshot,
    /// Rendered haptic force per hand (N).
    pub forces: ArmPair,
    pub events: Vec<Event>,
}

impl TickRecord {
    pub fn contact_endpoints(&self) -> impl Iterator<Item = Endpoint> + '_ {
        self.events.iter().filter_map(|e| match e {
            Event::Contact { endpoint } => Some(*endpoint),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFooter {
    pub status: TerminalStatus,
    pub ticks: u64,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Header(TrialHeader),
    Tick(TickRecord),
    Footer(TrialFooter),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub header: TrialHeader,
    pub records: Vec<TickRecord>,
    /// Absent when the log was cut short.
    pub footer: Option<TrialFooter>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log schema v{found}, expected v{expected}")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("log has no header")]
    MissingHeader,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TrialLog {
    pub fn status(&self) -> Option<TerminalStatus> {
        self.footer.as_ref().map(|f| f.status)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut line = |l: &LogLine| -> std::io::Result<()> {
            serde_json::to_writer(&mut w, l)?;
            w.write_all(b"\n")
        };
        line(&LogLine::Header(self.header.clone()))?;
        for r in &self.records {
            line(&LogLine::Tick(r.clone()))?;
        }
        if let Some(f) = &self.footer {
            line(&LogLine::Footer(f.clone()))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_jsonl(&mut out).expect("writing to memory");
        out
    }

    /// Parse a log. A truncated tail (partial last line, no footer) yields
    /// the complete records read so far and no footer.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, LogError> {
        let mut header = None;
        let mut records = Vec::new();
        let mut footer = None;
        let lines: Vec<String> = r.lines().collect::<Result<_, _>>()?;
        let n = lines.len();
        for (i, text) in lines.into_iter().enumerate() {
            if text.trim().is_empty() {
                continue;
            }
            if i == 0 {
                check_version(&text)?;
            }
            let parsed: LogLine = match serde_json::from_str(&text) {
                Ok(l) => l,
                // a cut-off final line
                Err(_) if i + 1 == n && header.is_some() => break,
                Err(e) => {
                    return Err(LogError::Parse {
                        line: i + 1,
                        message: e.to_string(),
                    })
                }
            };
            match parsed {
                LogLine::Header(h) => header = Some(h),
                LogLine::Tick(t) => records.push(t),
                LogLine::Footer(f) => footer = Some(f),
            }
        }
        Ok(Self {
            header: header.ok_or(LogError::MissingHeader)?,
            records,
            footer,
        })
    }
}

fn check_version(first_line: &str) -> Result<(), LogError> {
    #[derive(Deserialize)]
    struct Probe {
        v: Option<u32>,
    }
    if let Ok(Probe { v: Some(v) }) = serde_json::from_str::<Probe>(first_line) {
        if v != LOG_SCHEMA_VERSION {
            return Err(LogError::SchemaVersionMismatch {
                found: v,
                expected: LOG_SCHEMA_VERSION,
            });
        }
    }
    Ok(())
}
