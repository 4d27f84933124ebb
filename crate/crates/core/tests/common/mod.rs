//! Scenes and loaders shared by the integration tests.
#![allow(dead_code)]

use rose_core::config::{Placement, ScenarioConfig};
use rose_core::engine::{build_world, RunOptions, Simulation};
use rose_core::grid::Heading;
use rose_core::trace::{Summary, TraceRecord};
use rose_core::world::World;
use std::path::PathBuf;

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Config, map text and world for one of the shipped configs.
pub fn shipped(name: &str) -> (ScenarioConfig, String, World) {
    let (c, m) = ScenarioConfig::load(&root().join("configs").join(format!("{name}.toml"))).unwrap();
    let w = build_world(&c, &m).unwrap();
    (c, m, w)
}

pub fn record(world: &World, config: &ScenarioConfig, map: &str) -> (Vec<TraceRecord>, Summary) {
    let mut sim = Simulation::new(world, config.clone(), RunOptions::default()).unwrap();
    let mut out = Vec::new();
    let s = sim.run(map, &mut out).unwrap();
    (out, s)
}

fn place(row: i32, col: i32, heading: Heading, v: i32, goal: (i32, i32), tokens: u32) -> Placement {
    Placement { row, col, heading, v, goal_row: goal.0, goal_col: goal.1, tokens }
}

/// Every non-intersection cell of the loop ring taken by a stopped agent
/// that wants the exit three sides further on.
pub fn saturated_ring() -> Vec<Placement> {
    let mut out = Vec::new();
    for c in 5..10 {
        out.push(place(4, c, Heading::East, 0, (0, 4), 0));
    }
    for r in 5..10 {
        out.push(place(r, 10, Heading::South, 0, (4, 14), 0));
    }
    for c in (5..10).rev() {
        out.push(place(10, c, Heading::West, 0, (14, 10), 0));
    }
    for r in (5..10).rev() {
        out.push(place(r, 4, Heading::North, 0, (10, 0), 0));
    }
    out
}

pub const TWO_LANES: &str = ">,>,>,>,>,>,>,>,>,>,>,>,>,>,>,>,>,>,>,>\n>,>,>,>,>,>,>,>,>,>,>,>,>,>,>,>,>,>,>,>\n";

/// Agent 1 stands in the left lane one cell before its goal in the right
/// lane; a platoon drives past in the right lane holding more tokens.
pub fn fairness_scene() -> ScenarioConfig {
    let mut c = ScenarioConfig::for_map(&PathBuf::from("two_lanes.csv"));
    c.spawn_prob = 0.0;
    c.steps = 30;
    c.placements = vec![
        place(0, 6, Heading::East, 0, (1, 7), 0),
        place(1, 5, Heading::East, 1, (1, 19), 3),
        place(1, 3, Heading::East, 1, (1, 19), 4),
        place(1, 1, Heading::East, 1, (1, 19), 5),
    ];
    c
}
