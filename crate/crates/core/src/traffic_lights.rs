//! Fixed-time light controller. Each intersection runs its own cycle:
//! horizontal green, horizontal yellow, all red, vertical green, vertical
//! yellow, all red. Every query is a pure function of time.

use crate::dynamics::AgentParams;
use crate::grid::Axis;
use crate::road_network::{IntersectionId, RoadNetwork};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Yellow,
    Green,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cycle {
    pub green: u32,
    pub yellow: u32,
    pub all_red: u32,
}

impl Cycle {
    pub fn period(&self) -> u32 {
        2 * (self.green + self.yellow + self.all_red)
    }

    /// Length of each red interval seen by one axis.
    pub fn red_length(&self) -> u32 {
        self.green + self.yellow + 2 * self.all_red
    }

    pub fn color(&self, axis: Axis, t: u64) -> Color {
        let half = (self.green + self.yellow + self.all_red) as u64;
        let phase = t % self.period() as u64;
        let local = match axis {
            Axis::Horizontal => phase,
            Axis::Vertical => (phase + half) % self.period() as u64,
        };
        if local < self.green as u64 {
            Color::Green
        } else if local < (self.green + self.yellow) as u64 {
            Color::Yellow
        } else {
            Color::Red
        }
    }

    /// Labelled phase of the whole cycle, for traces.
    pub fn phase_clock(&self, t: u64) -> u32 {
        (t % self.period() as u64) as u32
    }
}

/// Light timing as configured; `all_red` defaults to the cluster width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightSettings {
    #[serde(default = "default_green")]
    pub green_steps: u32,
    #[serde(default = "default_yellow")]
    pub yellow_steps: u32,
    #[serde(default)]
    pub all_red_steps: Option<u32>,
    #[serde(default)]
    pub overrides: Vec<LightOverride>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightOverride {
    pub intersection: IntersectionId,
    pub green_steps: Option<u32>,
    pub yellow_steps: Option<u32>,
    pub all_red_steps: Option<u32>,
}

fn default_green() -> u32 {
    8
}

fn default_yellow() -> u32 {
    2
}

impl Default for LightSettings {
    fn default() -> Self {
        LightSettings { green_steps: default_green(), yellow_steps: default_yellow(), all_red_steps: None, overrides: Vec::new() }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LightError {
    #[error("unknown intersection {0}")]
    UnknownIntersection(IntersectionId),
    #[error("intersection {id}: red interval {red} does not exceed t_min {t_min}")]
    RedTooShort { id: IntersectionId, red: u32, t_min: u32 },
    #[error("intersection {0}: green must last at least one step")]
    NoGreen(IntersectionId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LightController {
    pub cycles: Vec<Cycle>,
}

/// Minimal red duration: worst-case blocker stopping time plus two steps.
pub fn min_red_time(params: &AgentParams) -> u32 {
    params.stopping_steps(params.v_max) as u32 + 2
}

impl LightController {
    pub fn new(net: &RoadNetwork, settings: &LightSettings) -> Result<Self, LightError> {
        for o in &settings.overrides {
            if o.intersection >= net.intersections.len() {
                return Err(LightError::UnknownIntersection(o.intersection));
            }
        }
        let cycles = net
            .intersections
            .iter()
            .map(|x| {
                let mut c = Cycle {
                    green: settings.green_steps,
                    yellow: settings.yellow_steps,
                    all_red: settings.all_red_steps.unwrap_or(x.width() as u32),
                };
                for o in settings.overrides.iter().filter(|o| o.intersection == x.id) {
                    c.green = o.green_steps.unwrap_or(c.green);
                    c.yellow = o.yellow_steps.unwrap_or(c.yellow);
                    c.all_red = o.all_red_steps.unwrap_or(c.all_red);
                }
                c
            })
            .collect();
        Ok(LightController { cycles })
    }

    pub fn validate(&self, params: &AgentParams) -> Result<(), LightError> {
        let t_min = min_red_time(params);
        for (id, c) in self.cycles.iter().enumerate() {
            if c.green == 0 {
                return Err(LightError::NoGreen(id));
            }
            if c.red_length() <= t_min {
                return Err(LightError::RedTooShort { id, red: c.red_length(), t_min });
            }
        }
        Ok(())
    }

    pub fn cycle(&self, id: IntersectionId) -> Result<&Cycle, LightError> {
        self.cycles.get(id).ok_or(LightError::UnknownIntersection(id))
    }

    pub fn light_state(&self, id: IntersectionId, axis: Axis, t: u64) -> Result<Color, LightError> {
        Ok(self.cycle(id)?.color(axis, t))
    }

    /// Entry is permitted on green and yellow.
    pub fn may_enter(&self, id: IntersectionId, axis: Axis, t: u64) -> bool {
        self.cycles[id].color(axis, t) != Color::Red
    }

    /// True while both axes show red.
    pub fn all_red(&self, id: IntersectionId, t: u64) -> bool {
        let c = &self.cycles[id];
        c.color(Axis::Horizontal, t) == Color::Red && c.color(Axis::Vertical, t) == Color::Red
    }

    /// Longest period across intersections; 0 when there are none.
    pub fn max_period(&self) -> u32 {
        self.cycles.iter().map(Cycle::period).max().unwrap_or(0)
    }
}
