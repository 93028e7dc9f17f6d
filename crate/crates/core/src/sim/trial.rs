use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::log::{Event, TerminalStatus, TickRecord, TrialFooter, TrialHeader, TrialLog, LOG_SCHEMA_VERSION};
use super::{
    step, ContactCounter, ContactEvent, ManipulatorState, OperatorInput, OperatorModel, RobotState, SimError,
    SimParams, SyntheticOperator, DEFAULT_DEBOUNCE_TICKS,
};
use crate::control::{
    aggregate_chunks, blend_commands, build_policy, exponential_weights, AuthorityPair, AuthorityPolicy, ChunkBuffer,
    IntentFilter, IntentParams, PolicyInput, PolicySpec,
};
use crate::geometry::Vec2;
use crate::haptics::{render_force, HapticParams};
use crate::phantom::{
    build_costmap, distance_transform, safety_snapshot, CostMap, CostParams, DistanceField, Disk, OccupancyGrid,
    SafetyParams, SafetySnapshot,
};
use crate::planner::{
    derive_tip_waypoints, plan_centerline, ArmPair, DualArmPlan, FollowParams, Path, PathFollower, PlanError,
};

/// Grid plus its derived navigation fields, shared read-only across trials.
#[derive(Debug, Clone)]
pub struct Environment {
    pub grid: OccupancyGrid,
    pub field: DistanceField,
    pub costmap: CostMap,
    digest: String,
}

impl Environment {
    pub fn new(grid: OccupancyGrid, cost: CostParams) -> Result<Self, SimError> {
        let field = distance_transform(&grid);
        let costmap = build_costmap(&field, cost)?;
        let mut h = Sha256::new();
        h.update((grid.width() as u64).to_le_bytes());
        h.update((grid.height() as u64).to_le_bytes());
        h.update(grid.resolution().to_le_bytes());
        h.update(grid.cells().iter().map(|&c| c as u8).collect::<Vec<u8>>());
        h.update(serde_json::to_vec(&cost).expect("plain struct"));
        Ok(Self {
            grid,
            field,
            costmap,
            digest: hex::encode(h.finalize()),
        })
    }

    /// SHA-256 of the grid and cost parameters.
    pub fn digest(&self) -> &str {
        &self.digest
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialParams {
    /// Tick length (s).
    pub dt: f64,
    pub timeout_s: f64,
    /// Head-to-goal distance that ends the trial (mm).
    pub goal_radius_mm: f64,
    /// Authority chunk horizon C.
    pub chunk_size: usize,
    /// Decay of the chunk aggregation weights (ticks).
    pub omega_tau: f64,
    pub debounce_window: u64,
    /// Head sample spacing along the plan (mm); grid resolution when unset.
    pub plan_step_mm: Option<f64>,
    /// Radius of the manipulator tip disks (mm).
    pub tip_radius_mm: f64,
    /// Replan when the head strays this far from the centerline (mm).
    pub replan_deviation_mm: Option<f64>,
    pub sim: SimParams,
    pub follow: FollowParams,
    pub haptics: HapticParams,
    pub intent: IntentParams,
    pub safety: SafetyParams,
}

impl Default for TrialParams {
    fn default() -> Self {
        Self {
            dt: 1.0 / 30.0,
            timeout_s: 120.0,
            goal_radius_mm: 1.0,
            chunk_size: 5,
            omega_tau: 2.0,
            debounce_window: DEFAULT_DEBOUNCE_TICKS,
            plan_step_mm: None,
            tip_radius_mm: 1.5,
            replan_deviation_mm: None,
            sim: SimParams::default(),
            follow: FollowParams::default(),
            haptics: HapticParams::default(),
            intent: IntentParams::default(),
            safety: SafetyParams::default(),
        }
    }
}

impl TrialParams {
    pub fn max_ticks(&self) -> u64 {
        (self.timeout_s / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidDt(self.dt));
        }
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SimError::InvalidParams(format!("{name} must be positive, got {v}")))
            }
        };
        pos("timeout_s", self.timeout_s)?;
        pos("goal_radius_mm", self.goal_radius_mm)?;
        pos("omega_tau", self.omega_tau)?;
        pos("follow.gain", self.follow.gain)?;
        pos("follow.v_max", self.follow.v_max)?;
        if !(self.tip_radius_mm >= 0.0) {
            return Err(SimError::InvalidParams("tip_radius_mm must be non-negative".into()));
        }
        if let Some(s) = self.plan_step_mm {
            pos("plan_step_mm", s)?;
        }
        if let Some(d) = self.replan_deviation_mm {
            pos("replan_deviation_mm", d)?;
        }
        if self.chunk_size == 0 {
            return Err(SimError::InvalidParams("chunk_size must be at least 1".into()));
        }
        self.sim.validate()?;
        self.haptics.validate().map_err(|e| SimError::InvalidParams(e.to_string()))?;
        self.intent.validate()?;
        Ok(())
    }
}

/// Everything one trial needs.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub env: Arc<Environment>,
    pub start: Vec2,
    pub goal: Vec2,
    pub policy: PolicySpec,
    pub operator: OperatorModel,
    pub params: TrialParams,
    /// Seeds the synthetic operator.
    pub seed: u64,
}

#[derive(Serialize)]
struct SetupView<'a> {
    environment: &'a str,
    start: Vec2,
    goal: Vec2,
    policy: &'a PolicySpec,
    operator: &'a OperatorModel,
    params: &'a TrialParams,
    seed: u64,
}

impl TrialSetup {
    /// SHA-256 over the canonical JSON of the trial inputs.
    pub fn config_hash(&self) -> String {
        let view = SetupView {
            environment: self.env.digest(),
            start: self.start,
            goal: self.goal,
            policy: &self.policy,
            operator: &self.operator,
            params: &self.params,
            seed: self.seed,
        };
        let value = serde_json::to_value(&view).expect("serializable");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}

fn plan_route(env: &Environment, from: Vec2, goal: Vec2, params: &TrialParams) -> Result<(Path, DualArmPlan), PlanError> {
    let path = plan_centerline(&env.costmap, from, goal)?;
    let step = params.plan_step_mm.unwrap_or(env.grid.resolution());
    let plan = derive_tip_waypoints(&path, params.sim.rod_length, step, &env.grid)?;
    Ok((path, plan))
}

/// Rod of length `l` with its head at `head`, pointing along the first
/// direction whose tail segment is free.
fn place_rod(grid: &OccupancyGrid, head: Vec2, l: f64) -> Option<RobotState> {
    (0..72).find_map(|i| {
        let dir = Vec2::from_angle(-std::f64::consts::FRAC_PI_2 + i as f64 * std::f64::consts::TAU / 72.0);
        let tail = head - dir * l;
        super::segment_is_free(grid, head, tail).then_some(RobotState {
            head,
            tail,
            rod_length: l,
        })
    })
}

/// Tick-driven shared-control loop for one trial.
///
/// Each call to [`TrialEngine::tick`] takes one operator command, computes
/// intent, authority, the autonomous command, the blend and haptic forces at
/// the current pose, logs them and advances the simulation.
pub struct TrialEngine {
    setup: TrialSetup,
    header: TrialHeader,
    path: Path,
    plan: DualArmPlan,
    policy: Box<dyn AuthorityPolicy>,
    buffer: ChunkBuffer,
    omega: Vec<f64>,
    intent: [IntentFilter; 2],
    follower: PathFollower,
    robot: RobotState,
    tips: ManipulatorState,
    contacts: ContactCounter,
    tick: u64,
    pending_events: Vec<Event>,
    status: Option<TerminalStatus>,
    reason: Option<String>,
}

impl TrialEngine {
    pub fn new(setup: TrialSetup) -> Result<Self, SimError> {
        setup.params.validate()?;
        setup.operator.validate()?;
        let p = &setup.params;
        let env = &setup.env;
        for (what, pt) in [("start", setup.start), ("goal", setup.goal)] {
            if !env.grid.is_free_at(pt) {
                return Err(SimError::InfeasibleTrial(format!("{what} {pt:?} is not in free space")));
            }
        }
        let l = p.sim.rod_length;
        let (path, plan, robot) = if setup.start.distance(setup.goal) <= p.goal_radius_mm {
            let robot = place_rod(&env.grid, setup.start, l)
                .ok_or_else(|| SimError::InfeasibleTrial("no room for the rod at the start".into()))?;
            let path = Path {
                waypoints: vec![setup.start],
                branch: vec![false],
                length_mm: 0.0,
                cost_units: 0,
            };
            (path, DualArmPlan::default(), robot)
        } else {
            let (path, plan) = plan_route(env, setup.start, setup.goal, p).map_err(|e| match e {
                PlanError::NoPath | PlanError::BlockedEndpoint(_) => SimError::InfeasibleTrial(e.to_string()),
                other => SimError::Plan(other),
            })?;
            let robot = RobotState {
                head: plan.head[0],
                tail: plan.tail[0],
                rod_length: l,
            };
            (path, plan, robot)
        };
        let center = env.grid.extent() * 0.5;
        let tips = ManipulatorState::new(robot.head, robot.tail, center, p.sim.workspace_half_range);
        let policy = build_policy(&setup.policy, p.chunk_size)?;
        let header = TrialHeader {
            v: LOG_SCHEMA_VERSION,
            config_hash: setup.config_hash(),
            seed: setup.seed,
            policy: setup.policy.name().to_string(),
            dt: p.dt,
            goal_radius: p.goal_radius_mm,
            debounce_window: p.debounce_window,
            start: setup.start,
            goal: setup.goal,
            path: path.waypoints.clone(),
            plan: plan.clone(),
        };
        Ok(Self {
            buffer: ChunkBuffer::new(p.chunk_size)?,
            omega: exponential_weights(p.chunk_size, p.omega_tau)?,
            intent: [IntentFilter::new(p.intent)?, IntentFilter::new(p.intent)?],
            follower: PathFollower::new(),
            contacts: ContactCounter::new(p.debounce_window),
            tick: 0,
            pending_events: Vec::new(),
            status: None,
            reason: None,
            header,
            path,
            plan,
            policy,
            robot,
            tips,
            setup,
        })
    }

    pub fn setup(&self) -> &TrialSetup {
        &self.setup
    }

    pub fn header(&self) -> &TrialHeader {
        &self.header
    }

    pub fn plan(&self) -> &DualArmPlan {
        &self.plan
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn robot(&self) -> &RobotState {
        &self.robot
    }

    pub fn tips(&self) -> &ManipulatorState {
        &self.tips
    }

    /// Index of the next tick to run.
    pub fn current_tick(&self) -> u64 {
        self.tick
    }

    pub fn status(&self) -> Option<TerminalStatus> {
        self.status
    }

    pub fn is_finished(&self) -> bool {
        self.status.is_some()
    }

    pub fn contact_count(&self) -> usize {
        self.contacts.count
    }

    pub fn goal_distance(&self) -> f64 {
        self.robot.head.distance(self.setup.goal)
    }

    pub fn policy_name(&self) -> &'static str {
        self.policy.name()
    }

    /// Swap the authority policy; chunks of the old policy are dropped.
    pub fn set_policy(&mut self, spec: PolicySpec) -> Result<(), SimError> {
        self.policy = build_policy(&spec, self.setup.params.chunk_size)?;
        self.buffer.clear();
        self.pending_events.push(Event::PolicyChanged {
            policy: spec.name().to_string(),
        });
        self.setup.policy = spec;
        Ok(())
    }

    /// End the trial as aborted.
    pub fn abort(&mut self, reason: impl Into<String>) {
        if self.status.is_none() {
            self.status = Some(TerminalStatus::Aborted);
            self.reason = Some(reason.into());
        }
    }

    pub fn footer(&self) -> Option<TrialFooter> {
        self.status.map(|status| TrialFooter {
            status,
            ticks: self.tick,
            reason: self.reason.clone(),
        })
    }

    fn safety(&self) -> Result<SafetySnapshot, SimError> {
        let r = self.setup.params.tip_radius_mm;
        let occluders = [
            Disk {
                center: self.tips.left,
                radius: r,
            },
            Disk {
                center: self.tips.right,
                radius: r,
            },
        ];
        Ok(safety_snapshot(
            &self.setup.env.field,
            &self.robot,
            &self.plan,
            &occluders,
            &self.setup.params.safety,
        )?)
    }

    fn maybe_replan(&mut self) {
        let Some(limit) = self.setup.params.replan_deviation_mm else {
            return;
        };
        if self.plan.is_empty() {
            return;
        }
        let dev = crate::haptics::nearest_path_deviation(&self.path.waypoints, self.robot.head)
            .map(|e| e.norm())
            .unwrap_or(0.0);
        if dev <= limit {
            return;
        }
        match plan_route(&self.setup.env, self.robot.tail, self.setup.goal, &self.setup.params) {
            Ok((path, plan)) => {
                self.pending_events.push(Event::Replanned {
                    waypoints: path.waypoints.len(),
                });
                self.path = path;
                self.plan = plan;
                self.follower = PathFollower::new();
            }
            Err(e) => self.pending_events.push(Event::Warning {
                message: format!("replanning failed: {e}"),
            }),
        }
    }

    /// Run one tick with the given operator command. Returns `None` once the
    /// trial has ended.
    pub fn tick(&mut self, human: OperatorInput) -> Option<TickRecord> {
        if self.status.is_some() {
            return None;
        }
        let p = self.setup.params.clone();
        let t = self.tick;
        let human = if human.is_finite() { human } else { OperatorInput::default() };
        let mut events = std::mem::take(&mut self.pending_events);

        let intent = [
            self.intent[0].update(human.fsr_left, p.dt),
            self.intent[1].update(human.fsr_right, p.dt),
        ];
        let safety = match self.safety() {
            Ok(s) => s,
            Err(e) => {
                self.abort(e.to_string());
                SafetySnapshot::default()
            }
        };
        let goal_dist = self.goal_distance();
        let chunk = self.policy.step(&PolicyInput {
            tick: t,
            safety,
            intent,
            goal_dist,
        });
        events.extend(self.policy.take_warnings().into_iter().map(|message| Event::Warning { message }));
        let alpha = match self.buffer.push(chunk).and_then(|_| aggregate_chunks(&self.buffer, &self.omega)) {
            Ok(a) => a,
            Err(e) => {
                events.push(Event::Warning {
                    message: format!("authority aggregation failed: {e}"),
                });
                AuthorityPair::default()
            }
        };
        let u_robot = self.follower.command(&self.plan, self.tips.left, self.tips.right, &p.follow);
        let u_human = human.velocities();
        let u_blended = blend_commands(alpha, u_robot, u_human).unwrap_or(u_human);

        let force = |pos: Vec2, a: f64| {
            render_force(&self.setup.env.field, &self.path.waypoints, pos, a, &p.haptics).unwrap_or(Vec2::ZERO)
        };
        let forces = ArmPair::new(force(self.robot.head, alpha.left), force(self.robot.tail, alpha.right));

        let mut record = TickRecord {
            t,
            time: t as f64 * p.dt,
            robot: self.robot,
            tips: [self.tips.left, self.tips.right],
            alpha,
            u_human,
            u_robot,
            u_blended,
            fsr: [human.fsr_left, human.fsr_right],
            intent: [intent[0].smoothed, intent[1].smoothed],
            safety,
            forces,
            events,
        };

        if self.status.is_some() {
            // aborted while computing this tick
        } else if goal_dist <= p.goal_radius_mm {
            self.status = Some(TerminalStatus::Reached);
        } else if t >= p.max_ticks() {
            self.status = Some(TerminalStatus::Timeout);
        } else {
            let env = &self.setup.env;
            match step(&self.robot, &self.tips, u_blended, p.dt, &env.grid, &env.field, &p.sim) {
                Ok(out) => {
                    for endpoint in out.contacts {
                        self.contacts.record(ContactEvent { tick: t, endpoint });
                        record.events.push(Event::Contact { endpoint });
                    }
                    self.robot = out.robot;
                    self.tips = out.tips;
                    self.maybe_replan();
                }
                Err(e) => self.abort(e.to_string()),
            }
        }
        self.tick = t + 1;
        Some(record)
    }
}

/// Run a full trial with the synthetic operator.
pub fn run_trial(setup: &TrialSetup) -> Result<TrialLog, SimError> {
    let mut engine = TrialEngine::new(setup.clone())?;
    let mut operator = SyntheticOperator::new(setup.operator, setup.params.dt, setup.seed);
    let mut records = Vec::new();
    while !engine.is_finished() {
        let input = operator.input(&engine.plan, engine.tips.left, engine.tips.right, engine.goal_distance());
        match engine.tick(input) {
            Some(r) => records.push(r),
            None => break,
        }
    }
    Ok(TrialLog {
        header: engine.header.clone(),
        records,
        footer: engine.footer(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_tree_phantom, TreeSpec};

    fn setup(policy: PolicySpec) -> TrialSetup {
        let tree = generate_tree_phantom(&TreeSpec::default(), 1).unwrap();
        let env = Environment::new(tree.grid.clone(), CostParams::default()).unwrap();
        TrialSetup {
            env: Arc::new(env),
            start: tree.start,
            goal: tree.easy_target().position,
            policy,
            operator: OperatorModel::default(),
            params: TrialParams::default(),
            seed: 3,
        }
    }

    #[test]
    fn goal_at_start_finishes_immediately() {
        let mut s = setup(PolicySpec::Fixed);
        s.goal = s.start;
        let log = run_trial(&s).unwrap();
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.status(), Some(TerminalStatus::Reached));
        assert_eq!(log.records[0].time, 0.0);
    }

    #[test]
    fn disconnected_goal_is_infeasible() {
        let mut s = setup(PolicySpec::Fixed);
        s.goal = Vec2::new(1.0, 1.0);
        assert!(matches!(run_trial(&s), Err(SimError::InfeasibleTrial(_))));
    }

    #[test]
    fn deterministic_logs() {
        let s = setup(PolicySpec::Context(Default::default()));
        let a = run_trial(&s).unwrap().to_jsonl();
        let b = run_trial(&s).unwrap().to_jsonl();
        assert_eq!(a, b);
    }

    #[test]
    fn reaches_easy_target_with_fixed_authority() {
        let log = run_trial(&setup(PolicySpec::Fixed)).unwrap();
        assert_eq!(log.status(), Some(TerminalStatus::Reached));
        for r in &log.records {
            assert!((r.robot.chord() - 4.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn hash_tracks_seed() {
        let a = setup(PolicySpec::Fixed);
        let mut b = a.clone();
        b.seed += 1;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash(), a.clone().config_hash());
    }
}
