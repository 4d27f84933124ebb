//! Run configuration. A TOML file names the map (relative to the file),
//! the seed, step count, spawn probability, agent parameters, light timing
//! and optional fixed placements.

use crate::dynamics::AgentParams;
use crate::grid::{Coord, Heading};
use crate::road_network::MapError;
use crate::traffic_lights::{LightError, LightSettings};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub map: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default = "default_spawn_prob")]
    pub spawn_prob: f64,
    /// Upper bound on concurrent agents; spawns beyond it are skipped.
    #[serde(default)]
    pub max_agents: Option<usize>,
    #[serde(default)]
    pub agent: AgentParams,
    #[serde(default)]
    pub lights: LightSettings,
    #[serde(default)]
    pub placements: Vec<Placement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub row: i32,
    pub col: i32,
    pub heading: Heading,
    #[serde(default)]
    pub v: i32,
    pub goal_row: i32,
    pub goal_col: i32,
    #[serde(default)]
    pub tokens: u32,
}

impl Placement {
    pub fn cell(&self) -> Coord {
        Coord::new(self.row, self.col)
    }

    pub fn goal(&self) -> Coord {
        Coord::new(self.goal_row, self.goal_col)
    }
}

fn default_steps() -> u64 {
    250
}

fn default_spawn_prob() -> f64 {
    0.3
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("map: {0}")]
    Map(#[from] MapError),
    #[error("lights: {0}")]
    Light(#[from] LightError),
    #[error("{0}")]
    Invalid(String),
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: ScenarioConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.spawn_prob) {
            return Err(ConfigError::Invalid(format!("spawn_prob {} outside [0, 1]", self.spawn_prob)));
        }
        self.agent.validate().map_err(ConfigError::Invalid)?;
        for (k, p) in self.placements.iter().enumerate() {
            if p.v < self.agent.v_min || p.v > self.agent.v_max {
                return Err(ConfigError::Invalid(format!("placement {k}: velocity {} out of range", p.v)));
            }
        }
        Ok(())
    }

    /// Reads the config and its map; the map path becomes absolute.
    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = read(path)?;
        let mut c = Self::from_toml(&text)?;
        if c.map.is_relative() {
            c.map = path.parent().unwrap_or(Path::new(".")).join(&c.map);
        }
        let map = read(&c.map)?;
        Ok((c, map))
    }

    /// Config for a bare map with defaults everywhere else.
    pub fn for_map(map: &Path) -> Self {
        ScenarioConfig {
            map: map.to_path_buf(),
            seed: 0,
            steps: default_steps(),
            spawn_prob: default_spawn_prob(),
            max_agents: None,
            agent: AgentParams::default(),
            lights: LightSettings::default(),
            placements: Vec::new(),
        }
    }
}

pub fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
}
