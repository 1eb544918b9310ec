//! Launch files: which nodes to start and how to configure them.
//!
//! ```toml
//! nodes = ["robot_control", "world_sim", "perception", "state_estimation", "behavior", "telemetry"]
//! hardware = "dummy"
//! modules = ["fall_protection", "gait", "head", "motion_player"]
//! config = "config.toml"      # relative to the config root
//! clock = "lockstep"
//! seed = 7
//! scenario = "soccer"          # bundled name or scenario file
//! duration = 60.0
//!
//! [overrides.behavior]
//! "/behavior/max_vx" = 0.2
//!
//! [telemetry]
//! gateway = "127.0.0.1:9090"
//! bag = "run.hbag"
//! ```

use crate::config::ConfigServer;
use crate::control::{ClockMode, INTERFACES};
use crate::motion::is_known_module;
use crate::world::{Scenario, ScenarioError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Environment variable naming the directory relative config paths resolve against.
pub const CONFIG_ROOT_ENV: &str = "HUMANOID_CONFIG_ROOT";

pub const NODE_NAMES: [&str; 6] = [
    "robot_control",
    "world_sim",
    "perception",
    "state_estimation",
    "behavior",
    "telemetry",
];

#[derive(Debug, Error)]
pub enum LaunchError {
    #[error("launch file parse error: {0}")]
    Parse(String),
    #[error("unknown launch key `{0}`")]
    UnknownKey(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown motion module `{0}`")]
    UnknownModule(String),
    #[error("unknown hardware interface `{0}`")]
    UnknownHardware(String),
    #[error("overrides name node `{0}` which is not launched")]
    OverrideNode(String),
    #[error("config file {0} does not exist")]
    MissingConfig(PathBuf),
    #[error("file {0} does not exist")]
    MissingFile(PathBuf),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("invalid launch: {0}")]
    Invalid(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("launch io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("node `{node}` failed to initialize: {reason}")]
    Init { node: String, reason: String },
    #[error("node `{node}` failed: {reason}")]
    Runtime { node: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TelemetrySpec {
    /// address to serve the WebSocket gateway on
    pub gateway: Option<String>,
    /// bag file written when the launch stops
    pub bag: Option<PathBuf>,
    /// topics to record; empty records everything but camera images
    pub record: Vec<String>,
    /// plot retention, s
    pub retention: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaunchSpec {
    pub nodes: Vec<String>,
    pub hardware: String,
    pub modules: Vec<String>,
    pub config: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// directory of motion files; the bundled library when absent
    pub motions: Option<PathBuf>,
    /// color lookup table for rendered perception
    pub lut: Option<PathBuf>,
    pub clock: ClockMode,
    pub seed: u64,
    pub scenario: Option<String>,
    /// stop after this many simulated (or wall) seconds; scenario duration if absent
    pub duration: Option<f64>,
    /// per-node parameter overrides, node → parameter path → value
    pub overrides: BTreeMap<String, BTreeMap<String, toml::Value>>,
    pub telemetry: TelemetrySpec,
}

impl Default for LaunchSpec {
    fn default() -> Self {
        Self {
            nodes: NODE_NAMES.iter().map(|s| s.to_string()).collect(),
            hardware: "dummy".into(),
            modules: crate::motion::MODULE_ORDER.iter().map(|s| s.to_string()).collect(),
            config: None,
            model: None,
            motions: None,
            lut: None,
            clock: ClockMode::Lockstep,
            seed: 1,
            scenario: None,
            duration: None,
            overrides: BTreeMap::new(),
            telemetry: TelemetrySpec {
                retention: 30.0,
                ..TelemetrySpec::default()
            },
        }
    }
}

const TOP_KEYS: [&str; 13] = [
    "nodes",
    "hardware",
    "modules",
    "config",
    "model",
    "motions",
    "lut",
    "clock",
    "seed",
    "scenario",
    "duration",
    "overrides",
    "telemetry",
];

/// Directory relative paths in a launch file resolve against: the
/// environment override, else the launch file's directory.
pub fn config_root(launch_file: Option<&Path>) -> PathBuf {
    if let Some(root) = std::env::var_os(CONFIG_ROOT_ENV) {
        return PathBuf::from(root);
    }
    launch_file
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

impl LaunchSpec {
    /// Parses launch text. Unknown top-level keys are errors unless `lenient`,
    /// in which case they are logged and ignored.
    pub fn parse(text: &str, lenient: bool) -> Result<Self, LaunchError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| LaunchError::Parse(e.to_string()))?;
        let unknown: Vec<String> = table
            .keys()
            .filter(|k| !TOP_KEYS.contains(&k.as_str()))
            .cloned()
            .collect();
        for k in unknown {
            if !lenient {
                return Err(LaunchError::UnknownKey(k));
            }
            log::warn!("ignoring unknown launch key `{k}`");
            table.remove(&k);
        }
        let mut spec: LaunchSpec = table
            .try_into()
            .map_err(|e: toml::de::Error| LaunchError::Parse(e.to_string()))?;
        if spec.telemetry.retention <= 0.0 {
            spec.telemetry.retention = 30.0;
        }
        Ok(spec)
    }

    /// Reads, parses and validates a launch file, resolving relative paths.
    pub fn load(file: &Path, lenient: bool) -> Result<Self, LaunchError> {
        let text = std::fs::read_to_string(file)?;
        let mut spec = Self::parse(&text, lenient)?;
        spec.resolve_paths(&config_root(Some(file)));
        spec.validate()?;
        Ok(spec)
    }

    pub fn resolve_paths(&mut self, root: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = root.join(&*path);
                }
            }
        };
        fix(&mut self.config);
        fix(&mut self.model);
        fix(&mut self.motions);
        fix(&mut self.lut);
        fix(&mut self.telemetry.bag);
        if let Some(s) = &mut self.scenario {
            if s.ends_with(".toml") && Path::new(s).is_relative() {
                *s = root.join(&*s).to_string_lossy().into_owned();
            }
        }
    }

    pub fn has_node(&self, name: &str) -> bool {
        self.nodes.iter().any(|n| n == name)
    }

    pub fn validate(&self) -> Result<(), LaunchError> {
        let mut seen = Vec::new();
        for n in &self.nodes {
            if !NODE_NAMES.contains(&n.as_str()) {
                return Err(LaunchError::UnknownNode(n.clone()));
            }
            if seen.contains(&n) {
                return Err(LaunchError::DuplicateNode(n.clone()));
            }
            seen.push(n);
        }
        for m in &self.modules {
            if !is_known_module(m) {
                return Err(LaunchError::UnknownModule(m.clone()));
            }
        }
        if !INTERFACES.contains(&self.hardware.as_str()) {
            return Err(LaunchError::UnknownHardware(self.hardware.clone()));
        }
        for node in self.overrides.keys() {
            if !NODE_NAMES.contains(&node.as_str()) {
                return Err(LaunchError::UnknownNode(node.clone()));
            }
            if !self.has_node(node) {
                return Err(LaunchError::OverrideNode(node.clone()));
            }
        }
        if let Some(c) = &self.config {
            if !c.is_file() {
                return Err(LaunchError::MissingConfig(c.clone()));
            }
        }
        for p in [&self.model, &self.lut].into_iter().flatten() {
            if !p.is_file() {
                return Err(LaunchError::MissingFile(p.clone()));
            }
        }
        if let Some(m) = &self.motions {
            if !m.is_dir() {
                return Err(LaunchError::MissingFile(m.clone()));
            }
        }
        if let Some(d) = self.duration {
            if !(d > 0.0) {
                return Err(LaunchError::Invalid("duration must be positive".into()));
            }
        }
        if let Some(s) = &self.scenario {
            Scenario::resolve(s)?;
        }
        if self.has_node("world_sim") && self.hardware != "dummy" {
            return Err(LaunchError::Invalid(
                "world_sim needs the dummy hardware interface".into(),
            ));
        }
        Ok(())
    }

    /// Applies config file and overrides to a config server.
    pub fn apply_config(&self, config: &ConfigServer) -> Result<(), LaunchError> {
        let err = |e: crate::config::ConfigError| LaunchError::Invalid(e.to_string());
        if let Some(file) = &self.config {
            config.load(file).map_err(err)?;
        }
        for values in self.overrides.values() {
            let mut root = toml::Table::new();
            for (path, value) in values {
                let segs: Vec<&str> = path.trim_start_matches('/').split('/').collect();
                let mut t = &mut root;
                for s in &segs[..segs.len() - 1] {
                    t = t
                        .entry(s.to_string())
                        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                        .as_table_mut()
                        .ok_or_else(|| {
                            LaunchError::Invalid(format!("override `{path}` conflicts with another override"))
                        })?;
                }
                t.insert(segs[segs.len() - 1].to_string(), value.clone());
            }
            let text = toml::to_string(&root).map_err(|e| LaunchError::Invalid(e.to_string()))?;
            config.load_str(&text).map_err(err)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("launch spec serializes")
    }
}
