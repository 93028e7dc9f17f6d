use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, Tier};
use super::HarnessError;
use crate::control::PolicySpec;
use crate::metrics::{aggregate_report, score_trial, Report, TrialMetrics};
use crate::phantom::pgm::{encode_pgm, grid_to_pgm, scale_to_u8};
use crate::planner::{derive_tip_waypoints, plan_centerline, DualArmPlan, Path as CenterPath};
use crate::sim::{execute, run_trial, TerminalStatus, TrialLog};

/// Environment variable naming the default output directory.
pub const LOG_DIR_ENV: &str = "MAGSTEER_LOG_DIR";

/// `$MAGSTEER_LOG_DIR`, or `magsteer-out` in the working directory.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(LOG_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("magsteer-out"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn write_log(path: &Path, log: &TrialLog) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let f = fs::File::create(path).map_err(io_err(path))?;
    log.write_jsonl(BufWriter::new(f)).map_err(io_err(path))
}

pub fn log_file_name(label: &str, tier: Tier, seed: u64) -> String {
    format!("{label}_{tier}_seed{seed}.jsonl")
}

#[derive(Debug)]
pub struct RunOutcome {
    pub log: TrialLog,
    pub metrics: TrialMetrics,
    pub log_path: PathBuf,
    pub metrics_path: PathBuf,
}

impl RunOutcome {
    pub fn reached(&self) -> bool {
        self.log.status() == Some(TerminalStatus::Reached)
    }
}

/// One trial of the configured tier, policy and first seed.
pub fn run_config(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome, HarnessError> {
    let phantom = cfg.load_phantom()?;
    let seed = cfg.seeds[0];
    let setup = cfg.setup(&phantom, cfg.tier, &cfg.policy, seed)?;
    let log = run_trial(&setup)?;
    let label = cfg.policy.name();
    let metrics = aggregate_report(vec![score_trial(&log, label, cfg.metrics.segment_ticks)?], cfg.metrics.segment_ticks)?
        .trials
        .remove(0);
    let log_path = out_dir.join(log_file_name(label, cfg.tier, seed));
    let metrics_path = log_path.with_extension("metrics.json");
    write_log(&log_path, &log)?;
    write(&metrics_path, serde_json::to_string_pretty(&metrics).expect("serializable"))?;
    Ok(RunOutcome {
        log,
        metrics,
        log_path,
        metrics_path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedCell {
    pub condition: String,
    pub tier: Tier,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub cells: usize,
    pub completed: usize,
    pub failures: Vec<FailedCell>,
}

#[derive(Debug)]
pub struct BatchOutcome {
    pub report: Report,
    pub manifest: Manifest,
    pub log_paths: Vec<PathBuf>,
}

/// Labels for the batch policies; repeated kinds get a numeric suffix.
pub fn condition_labels(policies: &[PolicySpec]) -> Vec<String> {
    policies
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let name = p.name();
            let dup = policies.iter().filter(|q| q.name() == name).count() > 1;
            if dup {
                let k = policies[..i].iter().filter(|q| q.name() == name).count() + 1;
                format!("{name}{k}")
            } else {
                name.to_string()
            }
        })
        .collect()
}

/// Run the condition grid (policy × tier × seed) and write logs, report
/// and manifest under `out_dir`. Outputs do not depend on `parallelism`.
pub fn run_batch_config(cfg: &RunConfig, out_dir: &Path, parallelism: Option<usize>) -> Result<BatchOutcome, HarnessError> {
    let batch = cfg
        .batch
        .as_ref()
        .ok_or_else(|| super::ConfigError::Invalid("config has no [batch] table".into()))?;
    let phantom = cfg.load_phantom()?;
    let labels = condition_labels(&batch.policies);
    let mut cells = Vec::new();
    for (policy, label) in batch.policies.iter().zip(&labels) {
        for &tier in &batch.tiers {
            for &seed in &cfg.seeds {
                cells.push((label.clone(), tier, seed, policy));
            }
        }
    }
    let seg = cfg.metrics.segment_ticks;
    let logs_dir = out_dir.join("logs");
    let results = execute(&cells, parallelism.unwrap_or(batch.parallelism), |(label, tier, seed, policy)| {
        let condition = format!("{label}/{tier}");
        let setup = cfg.setup(&phantom, *tier, policy, *seed).map_err(|e| e.to_string())?;
        let log = run_trial(&setup).map_err(|e| e.to_string())?;
        let path = logs_dir.join(log_file_name(label, *tier, *seed));
        write_log(&path, &log).map_err(|e| e.to_string())?;
        let m = score_trial(&log, &condition, seg).map_err(|e| e.to_string())?;
        Ok::<_, String>((m, path))
    });

    let mut trials = Vec::new();
    let mut log_paths = Vec::new();
    let mut failures = Vec::new();
    for ((label, tier, seed, _), r) in cells.iter().zip(results) {
        match r {
            Ok((m, p)) => {
                trials.push(m);
                log_paths.push(p);
            }
            Err(error) => failures.push(FailedCell {
                condition: label.clone(),
                tier: *tier,
                seed: *seed,
                error,
            }),
        }
    }
    for f in &failures {
        log::warn!("cell {}/{} seed {} failed: {}", f.condition, f.tier, f.seed, f.error);
    }
    let manifest = Manifest {
        config_hash: cfg.hash(),
        cells: cells.len(),
        completed: trials.len(),
        failures,
    };
    let report = if trials.is_empty() {
        Report {
            metadata: aggregate_report(Vec::new(), seg)?.metadata,
            conditions: Vec::new(),
            trials: Vec::new(),
        }
    } else {
        aggregate_report(trials, seg)?
    };
    write(&out_dir.join("report.csv"), report.to_csv())?;
    write(&out_dir.join("report.json"), report.to_json())?;
    write(&out_dir.join("trials.csv"), report.trials_csv())?;
    write(
        &out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("serializable"),
    )?;
    Ok(BatchOutcome {
        report,
        manifest,
        log_paths,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanExport {
    pub tier: Tier,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub length_mm: f64,
    pub cost: f64,
    pub path: Vec<[f64; 2]>,
    pub branch: Vec<bool>,
    pub plan: DualArmPlan,
}

/// Plan the configured tier and write `plan.json` with the centerline and
/// arm waypoints, plus occupancy, distance and cost heatmaps as PGM.
pub fn export_plan(cfg: &RunConfig, out_dir: &Path) -> Result<PlanExport, HarnessError> {
    let phantom = cfg.load_phantom()?;
    let task = phantom.task(cfg.tier)?;
    let env = &phantom.env;
    let path: CenterPath = plan_centerline(&env.costmap, task.start, task.goal).map_err(crate::sim::SimError::from)?;
    let step = cfg.params.plan_step_mm.unwrap_or(env.grid.resolution());
    let plan = derive_tip_waypoints(&path, cfg.params.sim.rod_length, step, &env.grid).map_err(crate::sim::SimError::from)?;
    let export = PlanExport {
        tier: cfg.tier,
        start: task.start.into(),
        goal: task.goal.into(),
        length_mm: path.length_mm,
        cost: path.cost(),
        path: path.waypoints.iter().map(|&p| p.into()).collect(),
        branch: path.branch.clone(),
        plan,
    };
    let (w, h) = (env.grid.width(), env.grid.height());
    write(&out_dir.join("plan.json"), serde_json::to_string_pretty(&export).expect("serializable"))?;
    write(&out_dir.join("occupancy.pgm"), grid_to_pgm(&env.grid))?;
    write(&out_dir.join("distance.pgm"), encode_pgm(w, h, &scale_to_u8(env.field.values())))?;
    write(&out_dir.join("costmap.pgm"), encode_pgm(w, h, &scale_to_u8(env.costmap.values())))?;
    Ok(export)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_disambiguate() {
        let p = vec![
            PolicySpec::Fixed,
            PolicySpec::Context(Default::default()),
            PolicySpec::Context(Default::default()),
        ];
        assert_eq!(condition_labels(&p), vec!["fixed", "context1", "context2"]);
    }

    #[test]
    fn run_writes_log_and_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_config(&RunConfig::default(), dir.path()).unwrap();
        assert!(out.reached());
        let text = fs::read(&out.log_path).unwrap();
        let log = TrialLog::read_jsonl(&text[..]).unwrap();
        assert_eq!(log, out.log);
        let m: TrialMetrics = serde_json::from_slice(&fs::read(&out.metrics_path).unwrap()).unwrap();
        assert_eq!(m, out.metrics);
    }

    #[test]
    fn plan_export_files() {
        let dir = tempfile::tempdir().unwrap();
        let e = export_plan(&RunConfig::default(), dir.path()).unwrap();
        assert!(e.length_mm > 0.0 && !e.plan.is_empty());
        for f in ["plan.json", "occupancy.pgm", "distance.pgm", "costmap.pgm"] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let pgm = fs::read(dir.path().join("costmap.pgm")).unwrap();
        assert!(crate::phantom::pgm::decode_pgm(&pgm).is_ok());
    }
}
