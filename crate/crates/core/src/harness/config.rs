//! Experiment configuration files.
//!
//! A config is a TOML document:
//!
//! ```toml
//! seeds = [1, 2, 3]
//! tier = "easy"                 # easy | medium | hard
//!
//! [phantom]                     # generated tree (default) ...
//! seed = 7
//! [phantom.generator]           # optional generator overrides
//! branch_count = 3
//! # ... or an image: file = "phantom.pgm", resolution_mm = 0.2
//!
//! [tasks.easy]                  # start/goal per tier; required for files
//! start = [12.0, 21.5]
//! goal = [6.0, 9.0]
//!
//! [policy]
//! kind = "context"              # manual | fixed | discrete | context | external
//!
//! [operator]                    # synthetic operator, or: operator = "live"
//! noise_std = 2.0
//!
//! [params]                      # dt, timeout_s, sim, follow, haptics, ...
//! dt = 0.0333
//!
//! [cost]
//! [metrics]
//! [live]
//! [batch]
//! policies = [{ kind = "fixed" }, { kind = "context" }]
//! tiers = ["easy", "hard"]
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::ConfigError;
use crate::control::PolicySpec;
use crate::geometry::Vec2;
use crate::metrics::DEFAULT_SEGMENT_TICKS;
use crate::phantom::{generate_tree_phantom, load_grid, CostParams, TreeSpec};
use crate::sim::{Environment, OperatorModel, TrialParams, TrialSetup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Easy,
    Medium,
    Hard,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Easy, Tier::Medium, Tier::Hard];

    pub fn name(self) -> &'static str {
        match self {
            Tier::Easy => "easy",
            Tier::Medium => "medium",
            Tier::Hard => "hard",
        }
    }
}

impl std::str::FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Tier::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown tier {s:?}, expected easy, medium or hard"))
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSource {
    /// Binary PGM image; dark pixels are walls. Relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Cell size of an image phantom (mm).
    #[serde(default = "default_resolution")]
    pub resolution_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<TreeSpec>,
    /// Generator seed.
    #[serde(default = "default_phantom_seed")]
    pub seed: u64,
}

fn default_resolution() -> f64 {
    0.2
}

fn default_phantom_seed() -> u64 {
    7
}

impl Default for PhantomSource {
    fn default() -> Self {
        Self {
            file: None,
            resolution_mm: default_resolution(),
            generator: None,
            seed: default_phantom_seed(),
        }
    }
}

impl PhantomSource {
    pub fn resolution(&self) -> f64 {
        match (&self.file, &self.generator) {
            (Some(_), _) => self.resolution_mm,
            (None, Some(g)) => g.resolution_mm,
            (None, None) => TreeSpec::default().resolution_mm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub start: Vec2,
    pub goal: Vec2,
}

/// Who produces the human command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorSpec {
    Synthetic(OperatorModel),
    /// Commands arrive from a connected client.
    Live,
}

impl Default for OperatorSpec {
    fn default() -> Self {
        OperatorSpec::Synthetic(OperatorModel::default())
    }
}

impl OperatorSpec {
    /// Model used for offline runs; live configs fall back to the default.
    pub fn model(&self) -> OperatorModel {
        match self {
            OperatorSpec::Synthetic(m) => *m,
            OperatorSpec::Live => OperatorModel::default(),
        }
    }
}

impl Serialize for OperatorSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            OperatorSpec::Synthetic(m) => m.serialize(s),
            OperatorSpec::Live => s.serialize_str("live"),
        }
    }
}

impl<'de> Deserialize<'de> for OperatorSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = OperatorSpec;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"live\" or an operator model table")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<OperatorSpec, E> {
                match v {
                    "live" => Ok(OperatorSpec::Live),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }

            fn visit_map<A: MapAccess<'de>>(self, map: A) -> Result<OperatorSpec, A::Error> {
                OperatorModel::deserialize(de::value::MapAccessDeserializer::new(map)).map(OperatorSpec::Synthetic)
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Smoothness window length (ticks).
    pub segment_ticks: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            segment_ticks: DEFAULT_SEGMENT_TICKS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LiveConfig {
    /// Ticks without input after which the human command is zeroed.
    pub staleness_ticks: u64,
    /// Speed limit applied to client commands (mm/s).
    pub max_speed: f64,
    /// Input frames kept between ticks; older ones are dropped.
    pub input_queue: usize,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            staleness_ticks: 5,
            max_speed: 5.5,
            input_queue: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    pub policies: Vec<PolicySpec>,
    #[serde(default = "all_tiers")]
    pub tiers: Vec<Tier>,
    /// Worker threads; 1 runs sequentially.
    #[serde(default = "one")]
    pub parallelism: usize,
}

fn all_tiers() -> Vec<Tier> {
    Tier::ALL.to_vec()
}

fn one() -> usize {
    1
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_policy() -> PolicySpec {
    PolicySpec::Fixed
}

fn default_tier() -> Tier {
    Tier::Easy
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_tier")]
    pub tier: Tier,
    #[serde(default)]
    pub operator: OperatorSpec,
    #[serde(default)]
    pub phantom: PhantomSource,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tasks: BTreeMap<Tier, Task>,
    #[serde(default = "default_policy")]
    pub policy: PolicySpec,
    #[serde(default)]
    pub params: TrialParams,
    #[serde(default)]
    pub cost: CostParams,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub live: LiveConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: default_seeds(),
            tier: default_tier(),
            operator: OperatorSpec::default(),
            phantom: PhantomSource::default(),
            tasks: BTreeMap::new(),
            policy: default_policy(),
            params: TrialParams::default(),
            cost: CostParams::default(),
            metrics: MetricsConfig::default(),
            live: LiveConfig::default(),
            batch: None,
        }
    }
}

/// Phantom loaded from a config together with its tier tasks.
#[derive(Debug, Clone)]
pub struct LoadedPhantom {
    pub env: Arc<Environment>,
    pub tasks: BTreeMap<Tier, Task>,
}

impl LoadedPhantom {
    pub fn task(&self, tier: Tier) -> Result<Task, ConfigError> {
        self.tasks
            .get(&tier)
            .copied()
            .ok_or_else(|| ConfigError::Invalid(format!("no start/goal for tier {tier}; add [tasks.{tier}]")))
    }
}

/// Set `key` (dotted path) in `table` to `value`, parsed as a TOML value
/// when possible and as a string otherwise.
pub fn apply_override(table: &mut toml::Table, key: &str, value: &str) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(format!("bad key {key:?}")));
    }
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let (last, path) = parts.split_last().expect("non-empty");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(ConfigError::Override(format!("{key}: {p} is not a table"))),
        };
    }
    cur.insert(last.to_string(), parsed);
    Ok(())
}

/// Split `a.b=v` into key and value.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(format!("expected key=value, got {s:?}")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl RunConfig {
    /// Parse TOML text; relative paths stay relative until [`RunConfig::load`].
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Parse with `key=value` overrides applied on top of the file.
    pub fn from_toml_with(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        if overrides.is_empty() {
            return Self::from_toml(text);
        }
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        let merged = toml::to_string(&table).map_err(|e| ConfigError::Parse(e.to_string()))?;
        toml::from_str(&merged).map_err(|e| ConfigError::Parse(format!("after overrides: {e}")))
    }

    /// Read, override, resolve paths against the file's directory and validate.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_with(&text, overrides).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let (Some(file), Some(dir)) = (&cfg.phantom.file, path.parent()) {
            if file.is_relative() {
                cfg.phantom.file = Some(dir.join(file));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// Fastest tip speed any command source can produce (mm/s).
    pub fn max_tip_speed(&self) -> f64 {
        let human = match self.operator {
            OperatorSpec::Synthetic(m) => m.max_speed,
            OperatorSpec::Live => self.live.max_speed,
        };
        human.max(self.params.follow.v_max)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.params.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.policy.validate().map_err(|e| ConfigError::Invalid(format!("policy: {e}")))?;
        if let OperatorSpec::Synthetic(m) = &self.operator {
            m.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.cost.validate().map_err(|e| ConfigError::Invalid(format!("cost: {e}")))?;
        let res = self.phantom.resolution();
        let reach = self.params.dt * self.max_tip_speed();
        if !(reach < res) {
            return bad(format!(
                "dt * v_max = {reach:.4} mm per tick must stay below the cell size {res} mm"
            ));
        }
        if self.phantom.file.is_some() && self.phantom.generator.is_some() {
            return bad("phantom: set either file or generator, not both".into());
        }
        if let Some(file) = &self.phantom.file {
            if !file.is_file() {
                return bad(format!("phantom file {} does not exist", file.display()));
            }
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.metrics.segment_ticks < 3 {
            return bad("metrics.segment_ticks must be at least 3".into());
        }
        if !(self.live.max_speed > 0.0) || self.live.input_queue == 0 {
            return bad("live.max_speed and live.input_queue must be positive".into());
        }
        if let Some(b) = &self.batch {
            if b.policies.is_empty() || b.tiers.is_empty() {
                return bad("batch needs at least one policy and one tier".into());
            }
            for p in &b.policies {
                p.validate().map_err(|e| ConfigError::Invalid(format!("batch policy: {e}")))?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("serializable");
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    /// Build the environment and resolve the tier tasks.
    pub fn load_phantom(&self) -> Result<LoadedPhantom, ConfigError> {
        let phantom_err = |e: crate::phantom::PhantomError| ConfigError::Invalid(format!("phantom: {e}"));
        let sim_err = |e: crate::sim::SimError| ConfigError::Invalid(format!("phantom: {e}"));
        let (grid, mut tasks) = match &self.phantom.file {
            Some(path) => {
                let bytes = std::fs::read(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                (load_grid(&bytes, self.phantom.resolution_mm).map_err(phantom_err)?, BTreeMap::new())
            }
            None => {
                let spec = self.phantom.generator.clone().unwrap_or_default();
                let tree = generate_tree_phantom(&spec, self.phantom.seed).map_err(phantom_err)?;
                let tasks = [
                    (Tier::Easy, tree.easy_target()),
                    (Tier::Medium, tree.medium_target()),
                    (Tier::Hard, tree.hard_target()),
                ]
                .into_iter()
                .map(|(tier, t)| {
                    (
                        tier,
                        Task {
                            start: tree.start,
                            goal: t.position,
                        },
                    )
                })
                .collect();
                (tree.grid, tasks)
            }
        };
        tasks.extend(self.tasks.iter().map(|(k, v)| (*k, *v)));
        let env = Environment::new(grid, self.cost).map_err(sim_err)?;
        Ok(LoadedPhantom {
            env: Arc::new(env),
            tasks,
        })
    }

    /// Trial inputs for one tier, policy and seed.
    pub fn setup(&self, phantom: &LoadedPhantom, tier: Tier, policy: &PolicySpec, seed: u64) -> Result<TrialSetup, ConfigError> {
        let task = phantom.task(tier)?;
        Ok(TrialSetup {
            env: phantom.env.clone(),
            start: task.start,
            goal: task.goal,
            policy: policy.clone(),
            operator: self.operator.model(),
            params: self.params.clone(),
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
seeds = [4, 5]
tier = "medium"

[phantom]
seed = 3

[phantom.generator]
branch_count = 2
turn_angles_deg = [30.0, 50.0]

[tasks.hard]
start = [12.0, 21.0]
goal = [12.0, 15.0]

[policy]
kind = "context"
w_wall = 3.0

[operator]
noise_std = 1.0
grip = { kind = "override_near_target", radius_mm = 2.0 }

[params]
dt = 0.02
plan_step_mm = 0.25

[params.haptics]
k_guide = 0.4

[batch]
policies = [{ kind = "fixed" }, { kind = "context", bias = -2.0 }]
tiers = ["easy", "hard"]
parallelism = 4
"#;

    #[test]
    fn defaults_from_empty() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn round_trip() {
        for text in ["", FULL, "operator = \"live\"\n"] {
            let a = RunConfig::from_toml(text).unwrap();
            let b = RunConfig::from_toml(&a.to_toml()).unwrap();
            assert_eq!(a, b, "{}", a.to_toml());
        }
        let c = RunConfig::from_toml(FULL).unwrap();
        assert_eq!(c.tier, Tier::Medium);
        assert_eq!(c.params.dt, 0.02);
        assert_eq!(c.params.haptics.k_guide, 0.4);
        assert!(matches!(c.operator, OperatorSpec::Synthetic(m) if m.noise_std == 1.0));
        assert_eq!(c.batch.as_ref().unwrap().policies.len(), 2);
    }

    #[test]
    fn unknown_keys_name_the_key() {
        for (text, key) in [
            ("bogus = 1", "bogus"),
            ("[params]\ndtt = 0.1", "dtt"),
            ("[operator]\nnoise = 1", "noise"),
            ("[policy]\nkind = \"context\"\nwall = 1", "wall"),
        ] {
            let msg = RunConfig::from_toml(text).unwrap_err().to_string();
            assert!(msg.contains(key), "{msg}");
        }
        let msg = RunConfig::from_toml("x = 1\n\n[params]\ndtt = 0.1").unwrap_err().to_string();
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn overrides() {
        let o = vec![
            ("params.dt".to_string(), "0.025".to_string()),
            ("policy.kind".to_string(), "discrete".to_string()),
            ("seeds".to_string(), "[9]".to_string()),
            ("operator.noise_std".to_string(), "0".to_string()),
        ];
        let c = RunConfig::from_toml_with("", &o).unwrap();
        assert_eq!(c.params.dt, 0.025);
        assert_eq!(c.policy, PolicySpec::Discrete);
        assert_eq!(c.seeds, vec![9]);
        assert!(matches!(
            RunConfig::from_toml_with("", &[("params.nope".into(), "1".into())]),
            Err(ConfigError::Parse(m)) if m.contains("nope")
        ));
        assert_eq!(parse_override("a.b = 3").unwrap(), ("a.b".into(), "3".into()));
        assert!(parse_override("ab").is_err());
    }

    #[test]
    fn speed_limit_against_cell_size() {
        let mut c = RunConfig::default();
        c.params.dt = 0.05;
        // 0.05 s * 5.5 mm/s = 0.275 mm > 0.2 mm
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(m)) if m.contains("v_max")));
        c.params.dt = 0.03;
        c.validate().unwrap();
    }

    #[test]
    fn missing_file_rejected() {
        let mut c = RunConfig::default();
        c.phantom.file = Some("/nonexistent/phantom.pgm".into());
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(m)) if m.contains("does not exist")));
    }

    #[test]
    fn generated_tiers_resolve() {
        let c = RunConfig::default();
        let p = c.load_phantom().unwrap();
        for t in Tier::ALL {
            let task = p.task(t).unwrap();
            assert!(p.env.grid.is_free_at(task.start) && p.env.grid.is_free_at(task.goal));
        }
        let s = c.setup(&p, Tier::Hard, &PolicySpec::Manual, 3).unwrap();
        assert_eq!(s.seed, 3);
        assert_eq!(c.hash(), c.clone().hash());
    }
}
