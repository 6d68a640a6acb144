//! Runtime configuration. Every field has a default, so `{}` is a complete
//! config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::Budgets;
use crate::skills::TrackGains;

/// Environment variable naming the config file; takes precedence over any
/// path given on the command line.
pub const CONFIG_ENV: &str = "AIRSTAR_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub budgets: Budgets,
    pub track: TrackGains,
    pub max_attempts: u32,
    /// Horizontal distance from the user where a return ends.
    pub return_offset: f64,
    /// Cruise speed on the pedestrian map, where someone walks behind.
    pub guide_speed: f64,
    pub geo_tolerance: f64,
    pub object_tolerance: f64,
    pub object_standoff: f64,
    pub object_z_min: f64,
    pub gesture_step: f64,
    /// A gesture session ends after this many ticks without a gesture.
    pub gesture_idle_ticks: u64,
    /// Consecutive blocked ticks before a navigation step fails.
    pub blocked_ticks: u64,
    /// Acknowledge `mission_failed` automatically (headless runs).
    pub auto_acknowledge: bool,
    pub onboard: OnboardConfig,
    pub latency: Latency,
    pub backends: Backends,
    pub knowledge_journal: Option<PathBuf>,
    pub listen: String,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            budgets: Budgets::default(),
            track: TrackGains::default(),
            max_attempts: 3,
            return_offset: 3.0,
            guide_speed: 2.0,
            geo_tolerance: 1.5,
            object_tolerance: 1.0,
            object_standoff: crate::objectnav::DEFAULT_STANDOFF,
            object_z_min: crate::objectnav::DEFAULT_Z_MIN,
            gesture_step: 0.5,
            gesture_idle_ticks: 50,
            blocked_ticks: 10,
            auto_acknowledge: false,
            onboard: OnboardConfig::default(),
            latency: Latency::default(),
            backends: Backends::default(),
            knowledge_journal: None,
            listen: "127.0.0.1:8765".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnboardConfig {
    /// Position-error gain added to the trajectory feed-forward (1/s).
    pub follow_gain: f64,
    /// Position gain for hold and go-to setpoints (1/s).
    pub hold_gain: f64,
    /// Heading gain (1/s).
    pub yaw_gain: f64,
    /// Obstacle look-ahead beyond one tick of travel (m).
    pub avoidance_margin: f64,
}

impl Default for OnboardConfig {
    fn default() -> Self {
        Self { follow_gain: 1.0, hold_gain: 1.0, yaw_gain: 2.0, avoidance_margin: 0.3 }
    }
}

/// Injected station-link latency, applied in each direction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Latency {
    pub mean_ms: f64,
    pub jitter_ms: f64,
}

/// Remote model endpoints; `None` selects the built-in mock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backends {
    pub planner: Option<String>,
    pub grounding: Option<String>,
    pub scorer: Option<String>,
    pub qa: Option<String>,
    pub timeout_s: f64,
}

impl Default for Backends {
    fn default() -> Self {
        Self { planner: None, grounding: None, scorer: None, qa: None, timeout_s: 10.0 }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// `AIRSTAR_CONFIG` if set, else `explicit`.
pub fn resolve_path(explicit: Option<&Path>) -> Option<PathBuf> {
    std::env::var_os(CONFIG_ENV).map(PathBuf::from).or_else(|| explicit.map(Path::to_path_buf))
}

pub fn load(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })
}

/// Loads the resolved config file, or the defaults when there is none.
pub fn load_or_default(explicit: Option<&Path>) -> Result<Config, ConfigError> {
    resolve_path(explicit).map_or_else(|| Ok(Config::default()), |p| load(&p))
}
