//! Experiment configuration, batch orchestration, plan export, and the
//! live teleoperation session with its wire protocol.

pub mod config;
mod experiment;
mod live;
mod replay;
pub mod wire;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{
    apply_override, parse_override, BatchConfig, LiveConfig, LoadedPhantom, MetricsConfig, OperatorSpec, PhantomSource,
    RunConfig, Task, Tier,
};
pub use experiment::{
    condition_labels, default_out_dir, export_plan, log_file_name, run_batch_config, run_config, BatchOutcome,
    FailedCell, Manifest, PlanExport, RunOutcome, LOG_DIR_ENV,
};
pub use live::LiveSession;
pub use replay::{replay_frames, replay_paced, replay_snapshots};
pub use wire::{ClientFrame, Hello, PolicyRef, ServerFrame, SessionStatus, Snapshot, WIRE_VERSION};

use crate::metrics::MetricsError;
use crate::sim::{LogError, SimError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("bad override: {0}")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit code: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }
}
