use std::collections::VecDeque;

use super::config::LiveConfig;
use super::wire::{policy_after, ClientFrame, Hello, ServerFrame, SessionStatus, Snapshot};
use crate::metrics::MetricsTracker;
use crate::sim::{OperatorInput, SimError, TickRecord, TrialEngine, TrialLog, TrialSetup};

/// One teleoperation session driven by client input frames.
///
/// The owner calls [`LiveSession::handle_text`] for every incoming message
/// and [`LiveSession::step`] once per tick. Input frames are coalesced: each
/// tick uses the newest one. When no input has arrived for more than
/// `staleness_ticks` ticks the commanded velocity is zero.
pub struct LiveSession {
    setup: TrialSetup,
    live: LiveConfig,
    engine: TrialEngine,
    status: SessionStatus,
    session: u32,
    policy: String,
    tracker: MetricsTracker,
    records: Vec<TickRecord>,
    inbox: VecDeque<OperatorInput>,
    held: OperatorInput,
    since_input: Option<u64>,
    last: Snapshot,
    finished: Vec<TrialLog>,
    logged: bool,
}

impl LiveSession {
    pub fn new(setup: TrialSetup, live: LiveConfig) -> Result<Self, SimError> {
        let engine = TrialEngine::new(setup.clone())?;
        let last = Snapshot::initial(engine.header(), *engine.robot(), [engine.tips().left, engine.tips().right], 0);
        Ok(Self {
            tracker: MetricsTracker::new(setup.params.debounce_window),
            policy: engine.header().policy.clone(),
            setup,
            live,
            engine,
            status: SessionStatus::Idle,
            session: 0,
            records: Vec::new(),
            inbox: VecDeque::new(),
            held: OperatorInput::default(),
            since_input: None,
            last,
            finished: Vec::new(),
            logged: false,
        })
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn dt(&self) -> f64 {
        self.setup.params.dt
    }

    pub fn engine(&self) -> &TrialEngine {
        &self.engine
    }

    pub fn hello(&self) -> ServerFrame {
        let i = &self.setup.params.intent;
        ServerFrame::Hello(Box::new(Hello::new(
            self.engine.header(),
            Some(&self.setup.env.grid),
            (i.f_baseline, i.f_override),
            self.live.max_speed,
            self.live.staleness_ticks,
        )))
    }

    pub fn last_snapshot(&self) -> &Snapshot {
        &self.last
    }

    /// Apply one client message; malformed or rejected ones produce an
    /// error frame and leave the session unchanged.
    pub fn handle_text(&mut self, text: &str) -> Option<ServerFrame> {
        match ClientFrame::parse(text).and_then(|f| self.handle(f)) {
            Ok(()) => None,
            Err(message) => Some(ServerFrame::error(message)),
        }
    }

    pub fn handle(&mut self, frame: ClientFrame) -> Result<(), String> {
        match frame {
            ClientFrame::Input {
                v_left,
                v_right,
                fsr_left,
                fsr_right,
            } => {
                let cap = self.live.max_speed;
                if self.inbox.len() == self.live.input_queue {
                    self.inbox.pop_front();
                }
                self.inbox.push_back(OperatorInput {
                    v_left: v_left.clamp_norm(cap),
                    v_right: v_right.clamp_norm(cap),
                    fsr_left,
                    fsr_right,
                });
            }
            ClientFrame::Start => match self.status {
                SessionStatus::Idle | SessionStatus::Paused => self.status = SessionStatus::Running,
                SessionStatus::Running => {}
                _ => return Err("trial has ended; send reset first".into()),
            },
            ClientFrame::Pause => {
                if self.status == SessionStatus::Running {
                    self.status = SessionStatus::Paused;
                }
            }
            ClientFrame::Reset => self.reset().map_err(|e| e.to_string())?,
            ClientFrame::SetPolicy { policy } => {
                let spec = policy.resolve()?;
                if self.engine.is_finished() {
                    return Err("trial has ended; send reset first".into());
                }
                self.engine.set_policy(spec).map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }

    fn reset(&mut self) -> Result<(), SimError> {
        let engine = TrialEngine::new(self.setup.clone())?;
        if !self.records.is_empty() {
            self.engine.abort("reset");
            self.store_log();
        }
        self.engine = engine;
        self.session += 1;
        self.status = SessionStatus::Idle;
        self.policy = self.engine.header().policy.clone();
        self.tracker = MetricsTracker::new(self.setup.params.debounce_window);
        self.records.clear();
        self.inbox.clear();
        self.held = OperatorInput::default();
        self.since_input = None;
        self.logged = false;
        self.last = Snapshot::initial(
            self.engine.header(),
            *self.engine.robot(),
            [self.engine.tips().left, self.engine.tips().right],
            self.session,
        );
        Ok(())
    }

    fn store_log(&mut self) {
        if self.logged {
            return;
        }
        self.logged = true;
        self.finished.push(TrialLog {
            header: self.engine.header().clone(),
            records: self.records.clone(),
            footer: self.engine.footer(),
        });
    }

    /// Logs of trials that ended or were reset since the last call.
    pub fn take_finished_logs(&mut self) -> Vec<TrialLog> {
        std::mem::take(&mut self.finished)
    }

    /// Log of the current trial so far.
    pub fn current_log(&self) -> TrialLog {
        TrialLog {
            header: self.engine.header().clone(),
            records: self.records.clone(),
            footer: self.engine.footer(),
        }
    }

    /// Command used on the coming tick.
    fn next_input(&mut self) -> OperatorInput {
        if let Some(newest) = self.inbox.drain(..).last() {
            self.held = newest;
            self.since_input = Some(0);
        } else if let Some(n) = self.since_input.as_mut() {
            *n += 1;
        }
        match self.since_input {
            Some(n) if n <= self.live.staleness_ticks => self.held,
            _ => OperatorInput {
                v_left: Default::default(),
                v_right: Default::default(),
                ..self.held
            },
        }
    }

    /// Advance one tick if running and return the frame to broadcast.
    pub fn step(&mut self) -> Snapshot {
        if self.status != SessionStatus::Running {
            let mut s = self.last.clone();
            if self.status == SessionStatus::Paused {
                s.status = SessionStatus::Paused;
            }
            return s;
        }
        let input = self.next_input();
        let Some(record) = self.engine.tick(input) else {
            self.status = self.engine.status().map(Into::into).unwrap_or(SessionStatus::Aborted);
            return self.last.clone();
        };
        self.policy = policy_after(&self.policy, &record);
        let metrics = self.tracker.update(&record);
        let status = match self.engine.status() {
            Some(s) => s.into(),
            None => SessionStatus::Running,
        };
        self.last = Snapshot::from_record(self.engine.header(), &self.policy, &record, metrics, status, self.session);
        self.records.push(record);
        if status != SessionStatus::Running {
            self.status = status;
            self.store_log();
        }
        self.last.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::PolicySpec;
    use crate::harness::config::{RunConfig, Tier};

    fn session(policy: PolicySpec) -> LiveSession {
        let cfg = RunConfig::default();
        let p = cfg.load_phantom().unwrap();
        let setup = cfg.setup(&p, Tier::Easy, &policy, 0).unwrap();
        LiveSession::new(setup, cfg.live).unwrap()
    }

    fn input(v: f64) -> String {
        format!(r#"{{"type":"input","v_left":[{v},0],"v_right":[{v},0],"fsr_left":0.5,"fsr_right":0.5}}"#)
    }

    #[test]
    fn idle_until_started() {
        let mut s = session(PolicySpec::Fixed);
        assert_eq!(s.step().status, SessionStatus::Idle);
        assert_eq!(s.engine().current_tick(), 0);
        assert!(s.handle_text(r#"{"type":"start"}"#).is_none());
        let snap = s.step();
        assert_eq!(snap.status, SessionStatus::Running);
        assert_eq!(snap.tick, 0);
        assert_eq!(s.step().tick, 1);
        s.handle_text(r#"{"type":"pause"}"#);
        let a = s.step();
        let b = s.step();
        assert_eq!((a.status, a.tick, b.tick), (SessionStatus::Paused, 1, 1));
    }

    #[test]
    fn latest_input_wins_and_goes_stale() {
        let mut s = session(PolicySpec::Manual);
        s.handle_text(r#"{"type":"start"}"#);
        s.handle_text(&input(1.0));
        s.handle_text(&input(2.0));
        assert_eq!(s.step().u_human.left.x, 2.0);
        // held for the staleness window, zeroed after
        for _ in 0..5 {
            assert_eq!(s.step().u_human.left.x, 2.0);
        }
        assert_eq!(s.step().u_human.left.x, 0.0);
        s.handle_text(&input(9.0));
        assert_eq!(s.step().u_human.left.x, 5.5);
    }

    #[test]
    fn malformed_frames_answered() {
        let mut s = session(PolicySpec::Fixed);
        for bad in ["{", r#"{"type":"warp"}"#, r#"{"type":"set_policy","policy":"psychic"}"#] {
            assert!(matches!(s.handle_text(bad), Some(ServerFrame::Error { .. })), "{bad}");
        }
        s.handle_text(r#"{"type":"start"}"#);
        assert_eq!(s.step().status, SessionStatus::Running);
    }

    #[test]
    fn policy_switch_mid_session() {
        let mut s = session(PolicySpec::Fixed);
        s.handle_text(r#"{"type":"start"}"#);
        let before: Vec<Snapshot> = (0..10).map(|_| s.step()).collect();
        assert!(before.iter().all(|x| x.alpha.left == 0.5 && x.policy == "fixed"));
        s.handle_text(r#"{"type":"set_policy","policy":"discrete"}"#);
        let after = s.step();
        assert_eq!(after.tick, 10);
        assert_eq!((after.alpha.left, after.alpha.right), (0.7, 0.7));
        assert_eq!(after.policy, "discrete");
    }

    #[test]
    fn reset_starts_new_session_and_keeps_log() {
        let mut s = session(PolicySpec::Fixed);
        s.handle_text(r#"{"type":"start"}"#);
        for _ in 0..5 {
            s.step();
        }
        s.handle_text(r#"{"type":"reset"}"#);
        let logs = s.take_finished_logs();
        assert_eq!(logs.len(), 1);
        assert_eq!(logs[0].records.len(), 5);
        assert_eq!(logs[0].status(), Some(crate::sim::TerminalStatus::Aborted));
        let snap = s.step();
        assert_eq!((snap.session, snap.tick, snap.status), (1, 0, SessionStatus::Idle));
    }
}
