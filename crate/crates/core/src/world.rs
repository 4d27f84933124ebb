//! Immutable per-map context shared by every simulation on that map.

use crate::bubble::BubbleTable;
use crate::dynamics::{allowable_maneuvers, braking_sweeps, AgentParams, Pose};
use crate::grid::Coord;
use crate::road_network::RoadNetwork;
use crate::routing::Routing;
use crate::traffic_lights::{LightController, LightError, LightSettings};

#[derive(Debug, Clone)]
pub struct World {
    pub net: RoadNetwork,
    pub params: AgentParams,
    pub lights: LightController,
    pub bubbles: BubbleTable,
    pub routing: Routing,
    /// Agents this close (Chebyshev, to the cluster box) to an intersection
    /// perceive each other across it.
    pub zone_radius: i32,
    /// Farthest any allowable maneuver plus the braking after it reaches
    /// from the agent's cell (Chebyshev), over every pose on the map.
    pub reach_extent: i32,
}

impl World {
    /// Builds routing tables for every sink plus any `extra_goals`.
    pub fn new(net: RoadNetwork, params: AgentParams, lights: &LightSettings, extra_goals: &[Coord]) -> Result<Self, LightError> {
        let lights = LightController::new(&net, lights)?;
        let mut goals = net.sinks.clone();
        goals.extend_from_slice(extra_goals);
        let routing = Routing::new(&net, &params, &goals);
        Ok(World {
            reach_extent: reach_extent(&net, &params),
            bubbles: BubbleTable::new(&params),
            zone_radius: zone_radius(&params),
            net,
            params,
            lights,
            routing,
        })
    }
}

pub fn zone_radius(params: &AgentParams) -> i32 {
    2 * params.v_max + params.stopping_distance(params.v_max) + 1
}

pub fn reach_extent(net: &RoadNetwork, params: &AgentParams) -> i32 {
    let mut e = 0;
    for c in net.cells() {
        for h in net.legal(c).iter() {
            for v in params.v_min..=params.v_max {
                for (_, m) in allowable_maneuvers(net, params, Pose::new(c, h, v)) {
                    let sweeps = braking_sweeps(params, m.end);
                    for x in m.footprint.iter().chain(sweeps.iter().flatten()) {
                        e = e.max((x.row - c.row).abs().max((x.col - c.col).abs()));
                    }
                }
            }
        }
    }
    e
}
