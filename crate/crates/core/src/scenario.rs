//! Scenario configuration and its flat `key = value` file format.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Absent
//! keys take their defaults, unknown keys are rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gestures::Approach;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Arrival rate per approach (vehicles/s), indexed by [`Approach`].
    pub arrival_rates: [f64; 4],
    /// m/s
    pub free_speed: f64,
    /// Acceleration and braking magnitude (m/s²).
    pub accel: f64,
    pub vehicle_length: f64,
    pub standstill_gap: f64,
    /// Distance from the spawn point to the stop line (m).
    pub approach_length: f64,
    /// Length of the crossing area each vehicle traverses (m).
    pub box_size: f64,
    pub reaction_delay: f64,
    /// Robot arm speed (rad/s).
    pub joint_speed: f64,
    /// Clearance interval shown with the change sign (s).
    pub interim: f64,
    pub min_green: f64,
    pub max_green: f64,
    /// Standard deviation of queue sensor noise (vehicles).
    pub sensor_noise: f64,
    pub seed: u64,
    pub duration: f64,
    pub dt: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            arrival_rates: [0.1; 4],
            free_speed: 10.0,
            accel: 3.0,
            vehicle_length: 4.5,
            standstill_gap: 2.0,
            approach_length: 150.0,
            box_size: 20.0,
            reaction_delay: 1.0,
            joint_speed: 1.0,
            interim: 3.0,
            min_green: 8.0,
            max_green: 30.0,
            sensor_noise: 0.0,
            seed: 42,
            duration: 600.0,
            dt: 0.05,
        }
    }
}

const RATE_KEYS: [&str; 4] = [
    "lambda_front",
    "lambda_behind",
    "lambda_left",
    "lambda_right",
];

/// Every key accepted in a scenario file, in the order they are written.
pub const KEYS: [&str; 19] = [
    "lambda_front",
    "lambda_behind",
    "lambda_left",
    "lambda_right",
    "free_speed",
    "accel",
    "vehicle_length",
    "standstill_gap",
    "approach_length",
    "box_size",
    "reaction_delay",
    "joint_speed",
    "interim",
    "min_green",
    "max_green",
    "sensor_noise",
    "seed",
    "duration",
    "dt",
];

impl ScenarioConfig {
    pub fn rate(&self, a: Approach) -> f64 {
        self.arrival_rates[a.index()]
    }

    /// Number of whole steps covering `duration`.
    pub fn total_steps(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    /// Time a vehicle needs to cross everything at free speed.
    pub fn free_flow_time(&self) -> f64 {
        (self.approach_length + self.box_size + self.vehicle_length) / self.free_speed
    }

    /// Distance one vehicle occupies in a standing queue.
    pub fn jam_spacing(&self) -> f64 {
        self.vehicle_length + self.standstill_gap
    }

    fn field_mut(&mut self, key: &str) -> Option<&mut f64> {
        if let Some(i) = RATE_KEYS.iter().position(|k| *k == key) {
            return Some(&mut self.arrival_rates[i]);
        }
        Some(match key {
            "free_speed" => &mut self.free_speed,
            "accel" => &mut self.accel,
            "vehicle_length" => &mut self.vehicle_length,
            "standstill_gap" => &mut self.standstill_gap,
            "approach_length" => &mut self.approach_length,
            "box_size" => &mut self.box_size,
            "reaction_delay" => &mut self.reaction_delay,
            "joint_speed" => &mut self.joint_speed,
            "interim" => &mut self.interim,
            "min_green" => &mut self.min_green,
            "max_green" => &mut self.max_green,
            "sensor_noise" => &mut self.sensor_noise,
            "duration" => &mut self.duration,
            "dt" => &mut self.dt,
            _ => return None,
        })
    }

    fn field(&self, key: &str) -> f64 {
        let mut copy = self.clone();
        *copy.field_mut(key).expect("known key")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
            ConfigError::Invalid {
                field,
                reason: reason.into(),
            }
        }
        for (i, key) in RATE_KEYS.iter().enumerate() {
            let rate = self.arrival_rates[i];
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(invalid(key, format!("{rate} is not a non-negative rate")));
            }
            if rate * self.dt > 1.0 {
                return Err(invalid(key, format!("{rate} exceeds one arrival per step")));
            }
        }
        let positive: [(&'static str, f64); 12] = [
            ("free_speed", self.free_speed),
            ("accel", self.accel),
            ("vehicle_length", self.vehicle_length),
            ("standstill_gap", self.standstill_gap),
            ("approach_length", self.approach_length),
            ("box_size", self.box_size),
            ("joint_speed", self.joint_speed),
            ("interim", self.interim),
            ("min_green", self.min_green),
            ("max_green", self.max_green),
            ("duration", self.duration),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("{v} must be positive")));
            }
        }
        for (name, v) in [
            ("reaction_delay", self.reaction_delay),
            ("sensor_noise", self.sensor_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, format!("{v} must be non-negative")));
            }
        }
        if self.dt > 0.1 {
            return Err(invalid("dt", format!("{} exceeds 0.1 s", self.dt)));
        }
        if self.min_green > self.max_green {
            return Err(invalid("min_green", "must not exceed max_green"));
        }
        if self.approach_length < 2.0 * self.jam_spacing() {
            return Err(invalid(
                "approach_length",
                "too short to hold two queued vehicles",
            ));
        }
        Ok(())
    }

    /// Parse scenario text; absent keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: format!("duplicate key `{key}`"),
                });
            }
            if key == "seed" {
                cfg.seed = value.parse().map_err(|e| ConfigError::Parse {
                    line: line_no,
                    message: format!("field `seed`: {e}"),
                })?;
                continue;
            }
            let slot = cfg.field_mut(key).ok_or_else(|| ConfigError::Parse {
                line: line_no,
                message: format!("unknown key `{key}`"),
            })?;
            *slot = value.parse().map_err(|e| ConfigError::Parse {
                line: line_no,
                message: format!("field `{key}`: {e}"),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical file text: every key, one per line, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            if key == "seed" {
                let _ = writeln!(out, "seed = {}", self.seed);
            } else {
                let _ = writeln!(out, "{key} = {}", self.field(key));
            }
        }
        out
    }

    /// SHA-256 of the canonical text, lowercase hex.
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::parse(&text)
}
