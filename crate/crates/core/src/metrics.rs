//! Trial scoring: completion time, path length, speed, wall contacts and a
//! normalized-jerk smoothness score, plus condition-level reports.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::sim::{detect_wall_contact, ContactCounter, ContactEvent, TerminalStatus, TickRecord, TrialLog};

/// Lower clamp of the normalized jerk before taking logs.
pub const PHI_FLOOR: f64 = 1e-12;
/// Most wall contacts a successful trial may have.
pub const MAX_SUCCESS_CONTACTS: usize = 5;
pub const DEFAULT_SEGMENT_TICKS: usize = 30;
/// Report column order.
pub const COLUMNS: [&str; 5] = ["CT", "PL", "Va", "S", "CC"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("log has no terminal status")]
    IncompleteLog,
    #[error("trajectory has {0} samples, at least 4 are needed")]
    TooShort(usize),
    #[error("condition {0:?} has no trials")]
    EmptyGroup(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasicMetrics {
    /// Completion time (s).
    pub ct: f64,
    /// Path length of the rod midpoint (cm).
    pub pl: f64,
    /// Average speed (cm/s).
    pub va: f64,
    /// Debounced wall contacts.
    pub cc: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub condition: String,
    pub seed: u64,
    pub status: TerminalStatus,
    pub ct: f64,
    pub pl: f64,
    pub va: f64,
    pub cc: usize,
    /// Median log10 normalized jerk; lower is smoother.
    pub s_raw: f64,
    /// Min-max normalized smoothness in `[0, 1]`; higher is smoother.
    pub s: f64,
    pub success: bool,
}

/// Midpoint trajectory of the rod, one sample per tick.
pub fn midpoints(log: &TrialLog) -> Vec<Vec2> {
    log.records.iter().map(|r| r.robot.midpoint()).collect()
}

pub fn contact_events(log: &TrialLog) -> Vec<ContactEvent> {
    log.records
        .iter()
        .flat_map(|r| r.contact_endpoints().map(move |endpoint| ContactEvent { tick: r.t, endpoint }))
        .collect()
}

pub fn compute_basic_metrics(log: &TrialLog) -> Result<BasicMetrics, MetricsError> {
    let footer = log.footer.as_ref().ok_or(MetricsError::IncompleteLog)?;
    let (first, last) = match (log.records.first(), log.records.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(MetricsError::IncompleteLog),
    };
    let ct = last.time - first.time;
    let mids = midpoints(log);
    let pl = mids.windows(2).map(|w| w[0].distance(w[1])).sum::<f64>() / 10.0;
    let va = if ct > 0.0 { pl / ct } else { 0.0 };
    let cc = detect_wall_contact(&contact_events(log), log.header.debounce_window);
    Ok(BasicMetrics {
        ct,
        pl,
        va,
        cc,
        success: footer.status == TerminalStatus::Reached && cc <= MAX_SUCCESS_CONTACTS,
    })
}

/// Third derivative at every sample, second-order accurate throughout:
/// five-point central differences inside, one-sided stencils at the ends.
/// Windows under six samples get the mean plain third difference.
fn jerk_samples(p: &[Vec2], h: f64) -> Vec<Vec2> {
    let n = p.len();
    let h3 = h * h * h;
    if n < 6 {
        let d: Vec2 = p
            .windows(4)
            .fold(Vec2::ZERO, |acc, w| acc + (w[3] - w[2] * 3.0 + w[1] * 3.0 - w[0]));
        return vec![d / ((n - 3) as f64 * h3); n];
    }
    let fwd = |i: usize| (p[i] * -5.0 + p[i + 1] * 18.0 - p[i + 2] * 24.0 + p[i + 3] * 14.0 - p[i + 4] * 3.0) / (2.0 * h3);
    let bwd = |i: usize| (p[i] * 5.0 - p[i - 1] * 18.0 + p[i - 2] * 24.0 - p[i - 3] * 14.0 + p[i - 4] * 3.0) / (2.0 * h3);
    let mid = |i: usize| (p[i + 2] - p[i + 1] * 2.0 + p[i - 1] * 2.0 - p[i - 2]) / (2.0 * h3);
    (0..n)
        .map(|i| {
            if i < 2 {
                fwd(i)
            } else if i + 2 >= n {
                bwd(i)
            } else {
                mid(i)
            }
        })
        .collect()
}

/// Dimensionless normalized jerk `sqrt(½·∫|j|²dt·D⁵/ℓ²)` of a uniformly
/// sampled trajectory. Motionless or jerk-free windows give 0.
pub fn normalized_jerk(p: &[Vec2], dt: f64) -> Result<f64, MetricsError> {
    let n = p.len();
    if n < 4 {
        return Err(MetricsError::TooShort(n));
    }
    if !(dt > 0.0) {
        return Err(MetricsError::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    let duration = (n - 1) as f64 * dt;
    let length: f64 = p.windows(2).map(|w| w[0].distance(w[1])).sum();
    if length == 0.0 {
        return Ok(0.0);
    }
    // below this the differences are rounding noise of the coordinates
    let scale = p.iter().map(|q| q.x.abs().max(q.y.abs())).fold(0.0, f64::max);
    let noise = 64.0 * f64::EPSILON * scale / (dt * dt * dt);
    let sq: Vec<f64> = jerk_samples(p, dt)
        .into_iter()
        .map(|j| if j.norm() <= noise { 0.0 } else { j.norm_squared() })
        .collect();
    let integral = dt * (sq.iter().sum::<f64>() - 0.5 * (sq[0] + sq[n - 1]));
    Ok((0.5 * integral * duration.powi(5) / (length * length)).sqrt())
}

/// Sample ranges `[start, end]` (inclusive) of consecutive windows of
/// `segment_len` ticks sharing endpoints; a remainder under four samples
/// joins the previous window.
pub fn segment_bounds(n: usize, segment_len: usize) -> Vec<(usize, usize)> {
    if n < 4 || segment_len == 0 {
        return Vec::new();
    }
    let seg = segment_len.max(3);
    let mut out = Vec::new();
    let mut start = 0;
    while start + seg <= n - 1 {
        out.push((start, start + seg));
        start += seg;
    }
    if start < n - 1 {
        let remainder = n - start;
        match out.last_mut() {
            Some(last) if remainder < 4 => last.1 = n - 1,
            _ => out.push((start, n - 1)),
        }
    }
    out
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median over windows of `log10(max(φ, 1e-12))` for a sampled trajectory.
/// Motionless windows are skipped; if nothing moves the result is −12.
pub fn smoothness_of(p: &[Vec2], dt: f64, segment_len: usize) -> Result<f64, MetricsError> {
    if segment_len == 0 {
        return Err(MetricsError::InvalidParams("segment length must be positive".into()));
    }
    let bounds = segment_bounds(p.len(), segment_len);
    if bounds.is_empty() {
        return Err(MetricsError::TooShort(p.len()));
    }
    let mut logs = Vec::with_capacity(bounds.len());
    for (a, b) in bounds {
        let w = &p[a..=b];
        // normalized jerk is undefined without motion
        if w.iter().all(|q| *q == w[0]) {
            continue;
        }
        logs.push(normalized_jerk(w, dt)?.max(PHI_FLOOR).log10());
    }
    if logs.is_empty() {
        return Ok(PHI_FLOOR.log10());
    }
    Ok(median(logs))
}

/// Raw smoothness of the rod midpoint over a trial.
pub fn smoothness_raw(log: &TrialLog, segment_len: usize) -> Result<f64, MetricsError> {
    smoothness_of(&midpoints(log), log.header.dt, segment_len)
}

/// Map raw scores to `[0, 1]` with the smoothest at 1. The flag is set when
/// all values are equal, in which case every score is 1.
pub fn normalize_smoothness(values: &[f64]) -> (Vec<f64>, bool) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values.is_empty() || max == min {
        return (vec![1.0; values.len()], true);
    }
    (values.iter().map(|v| (max - v) / (max - min)).collect(), false)
}

/// Score one log; `s` is left at 1 until normalized across a report.
pub fn score_trial(log: &TrialLog, condition: &str, segment_len: usize) -> Result<TrialMetrics, MetricsError> {
    let b = compute_basic_metrics(log)?;
    let s_raw = match smoothness_raw(log, segment_len) {
        Ok(v) => v,
        // too short to measure: treat as perfectly smooth
        Err(MetricsError::TooShort(_)) => PHI_FLOOR.log10(),
        Err(e) => return Err(e),
    };
    Ok(TrialMetrics {
        condition: condition.to_string(),
        seed: log.header.seed,
        status: log.status().ok_or(MetricsError::IncompleteLog)?,
        ct: b.ct,
        pl: b.pl,
        va: b.va,
        cc: b.cc,
        s_raw,
        s: 1.0,
        success: b.success,
    })
}

/// Metrics of a trial in progress.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunningMetrics {
    pub ct: f64,
    pub pl: f64,
    pub va: f64,
    pub cc: usize,
}

/// Incremental form of [`compute_basic_metrics`]; after the last record it
/// holds the same CT, PL, Va and CC.
#[derive(Debug, Clone)]
pub struct MetricsTracker {
    first_time: Option<f64>,
    last_mid: Option<Vec2>,
    pl_mm: f64,
    contacts: ContactCounter,
    current: RunningMetrics,
}

impl MetricsTracker {
    pub fn new(debounce_window: u64) -> Self {
        Self {
            first_time: None,
            last_mid: None,
            pl_mm: 0.0,
            contacts: ContactCounter::new(debounce_window),
            current: RunningMetrics::default(),
        }
    }

    pub fn current(&self) -> RunningMetrics {
        self.current
    }

    pub fn update(&mut self, record: &TickRecord) -> RunningMetrics {
        let first = *self.first_time.get_or_insert(record.time);
        let mid = record.robot.midpoint();
        if let Some(prev) = self.last_mid.replace(mid) {
            self.pl_mm += prev.distance(mid);
        }
        for endpoint in record.contact_endpoints() {
            self.contacts.record(ContactEvent { tick: record.t, endpoint });
        }
        let ct = record.time - first;
        let pl = self.pl_mm / 10.0;
        self.current = RunningMetrics {
            ct,
            pl,
            va: if ct > 0.0 { pl / ct } else { 0.0 },
            cc: self.contacts.count,
        };
        self.current
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> MeanSd {
    let n = values.len();
    if n == 0 {
        return MeanSd { mean: f64::NAN, sd: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    MeanSd { mean, sd }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub n: usize,
    pub ct: MeanSd,
    pub pl: MeanSd,
    pub va: MeanSd,
    pub s: MeanSd,
    pub cc: MeanSd,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub columns: Vec<String>,
    /// Scope of the smoothness min-max normalization.
    pub smoothness_normalization: String,
    /// All raw smoothness values were equal.
    pub smoothness_degenerate: bool,
    pub segment_ticks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metadata: ReportMetadata,
    pub conditions: Vec<ConditionSummary>,
    pub trials: Vec<TrialMetrics>,
}

/// Normalize smoothness over all trials and summarize each condition, in
/// order of first appearance.
pub fn aggregate_report(mut trials: Vec<TrialMetrics>, segment_ticks: usize) -> Result<Report, MetricsError> {
    let raw: Vec<f64> = trials.iter().map(|t| t.s_raw).collect();
    let (s, degenerate) = normalize_smoothness(&raw);
    if degenerate && !trials.is_empty() {
        log::info!("smoothness range is degenerate; all trials score S = 1");
    }
    for (t, s) in trials.iter_mut().zip(s) {
        t.s = s;
    }
    let mut order: Vec<String> = Vec::new();
    for t in &trials {
        if !order.contains(&t.condition) {
            order.push(t.condition.clone());
        }
    }
    let conditions = order
        .into_iter()
        .map(|name| summarize(&name, &trials))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Report {
        metadata: ReportMetadata {
            columns: COLUMNS.iter().map(|c| c.to_string()).collect(),
            smoothness_normalization: "pooled-per-report".into(),
            smoothness_degenerate: degenerate,
            segment_ticks,
        },
        conditions,
        trials,
    })
}

/// Summary of one condition's trials.
pub fn summarize(condition: &str, trials: &[TrialMetrics]) -> Result<ConditionSummary, MetricsError> {
    let group: Vec<&TrialMetrics> = trials.iter().filter(|t| t.condition == condition).collect();
    if group.is_empty() {
        return Err(MetricsError::EmptyGroup(condition.to_string()));
    }
    let col = |f: fn(&TrialMetrics) -> f64| mean_sd(&group.iter().map(|t| f(t)).collect::<Vec<_>>());
    Ok(ConditionSummary {
        condition: condition.to_string(),
        n: group.len(),
        ct: col(|t| t.ct),
        pl: col(|t| t.pl),
        va: col(|t| t.va),
        s: col(|t| t.s),
        cc: col(|t| t.cc as f64),
        success_rate: group.iter().filter(|t| t.success).count() as f64 / group.len() as f64,
    })
}

impl Report {
    /// One row per condition: mean and SD of CT, PL, Va, S, CC.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,n");
        for c in COLUMNS {
            out.push_str(&format!(",{c}_mean,{c}_sd"));
        }
        out.push_str(",success_rate\n");
        for c in &self.conditions {
            out.push_str(&format!("{},{}", c.condition, c.n));
            for m in [c.ct, c.pl, c.va, c.s, c.cc] {
                out.push_str(&format!(",{},{}", m.mean, m.sd));
            }
            out.push_str(&format!(",{}\n", c.success_rate));
        }
        out
    }

    /// Per-trial table with the same metric columns.
    pub fn trials_csv(&self) -> String {
        let mut out = String::from("condition,seed,status,CT,PL,Va,S,CC,S_raw,success\n");
        for t in &self.trials {
            let status = serde_json::to_value(t.status).expect("enum");
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                t.condition,
                t.seed,
                status.as_str().unwrap_or_default(),
                t.ct,
                t.pl,
                t.va,
                t.s,
                t.cc,
                t.s_raw,
                t.success
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}
