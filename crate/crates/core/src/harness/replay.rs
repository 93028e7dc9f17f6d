use std::time::{Duration, Instant};

use super::wire::{policy_after, Hello, ServerFrame, SessionStatus, Snapshot};
use crate::metrics::MetricsTracker;
use crate::sim::TrialLog;

/// Snapshots a live session would have broadcast while recording `log`.
pub fn replay_snapshots(log: &TrialLog) -> Vec<Snapshot> {
    let mut tracker = MetricsTracker::new(log.header.debounce_window);
    let mut policy = log.header.policy.clone();
    let n = log.records.len();
    log.records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            policy = policy_after(&policy, r);
            let metrics = tracker.update(r);
            let status = match (i + 1 == n, log.status()) {
                (true, Some(s)) => s.into(),
                _ => SessionStatus::Running,
            };
            Snapshot::from_record(&log.header, &policy, r, metrics, status, 0)
        })
        .collect()
}

/// `hello`, every snapshot, then `end`.
pub fn replay_frames(log: &TrialLog) -> Vec<ServerFrame> {
    let hello = Hello::new(&log.header, None, (0.0, 0.0), 0.0, 0);
    let mut frames = vec![ServerFrame::Hello(Box::new(hello))];
    frames.extend(replay_snapshots(log).into_iter().map(|s| ServerFrame::Snapshot(Box::new(s))));
    let reason = match log.status() {
        Some(s) => format!("end of log: {}", SessionStatus::from(s).name()),
        None => "end of log: truncated".to_string(),
    };
    frames.push(ServerFrame::end(reason));
    frames
}

impl SessionStatus {
    pub fn name(self) -> &'static str {
        match self {
            SessionStatus::Idle => "idle",
            SessionStatus::Running => "running",
            SessionStatus::Paused => "paused",
            SessionStatus::Reached => "reached",
            SessionStatus::Timeout => "timeout",
            SessionStatus::Aborted => "aborted",
        }
    }
}

/// Send the replay frames to `sink` paced at `speed` times the recorded
/// rate. Stops early when `sink` returns false. Returns the frames sent.
pub fn replay_paced(log: &TrialLog, speed: f64, mut sink: impl FnMut(&ServerFrame) -> bool) -> usize {
    let period = if speed > 0.0 && speed.is_finite() {
        Duration::from_secs_f64(log.header.dt / speed)
    } else {
        Duration::ZERO
    };
    let frames = replay_frames(log);
    let start = Instant::now();
    let mut sent = 0;
    let mut k = 0u32;
    for f in &frames {
        if let ServerFrame::Snapshot(_) = f {
            let due = start + period * k;
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
            k += 1;
        }
        if !sink(f) {
            break;
        }
        sent += 1;
    }
    sent
}
