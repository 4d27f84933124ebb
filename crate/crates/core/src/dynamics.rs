//! Agent parameters and state, the discrete transition function, swept
//! occupancy footprints, allowable actions and the backup-plan action.

use crate::grid::{Coord, Heading};
use crate::road_network::{BundleId, RoadNetwork, TurnSide};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type AgentId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentParams {
    pub a_min: i32,
    pub a_max: i32,
    pub v_min: i32,
    pub v_max: i32,
}

impl Default for AgentParams {
    fn default() -> Self {
        AgentParams { a_min: -1, a_max: 1, v_min: 0, v_max: 3 }
    }
}

impl AgentParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.a_min < 0 && self.a_max >= 0) {
            return Err(format!("need a_min < 0 <= a_max, got {} / {}", self.a_min, self.a_max));
        }
        if !(self.v_min == 0 && self.v_max >= self.v_min) {
            return Err(format!("need 0 = v_min <= v_max, got {} / {}", self.v_min, self.v_max));
        }
        Ok(())
    }

    pub fn next_velocity(&self, v: i32, acc: i32) -> i32 {
        (v + acc).clamp(self.v_min, self.v_max)
    }

    /// Steps of maximal braking needed to reach standstill from `v`.
    pub fn stopping_steps(&self, v: i32) -> i32 {
        let d = -self.a_min;
        (v + d - 1) / d
    }

    /// Cells advanced while braking maximally from `v` to standstill.
    pub fn stopping_distance(&self, v: i32) -> i32 {
        let d = -self.a_min;
        (1..=self.stopping_steps(v)).map(|k| (v - k * d).max(0)).sum()
    }
}

/// Steering maneuvers. The declaration order is the tie-break order used
/// when ranking actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Steer {
    Straight,
    RightLaneChange,
    LeftLaneChange,
    RightTurn,
    LeftTurn,
}

impl Steer {
    pub const ALL: [Steer; 5] =
        [Steer::Straight, Steer::RightLaneChange, Steer::LeftLaneChange, Steer::RightTurn, Steer::LeftTurn];

    pub fn is_lane_change(self) -> bool {
        matches!(self, Steer::RightLaneChange | Steer::LeftLaneChange)
    }

    pub fn is_turn(self) -> bool {
        matches!(self, Steer::RightTurn | Steer::LeftTurn)
    }

    /// Velocity gate on the post-update velocity.
    pub fn gate(self, v_next: i32) -> bool {
        match self {
            Steer::Straight => true,
            Steer::RightLaneChange | Steer::LeftLaneChange => v_next >= 1,
            Steer::RightTurn | Steer::LeftTurn => v_next == 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub acc: i32,
    pub steer: Steer,
}

impl Action {
    pub const fn new(acc: i32, steer: Steer) -> Self {
        Action { acc, steer }
    }

    pub fn stay() -> Self {
        Action::new(0, Steer::Straight)
    }
}

/// Kinematic part of an agent state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pose {
    pub cell: Coord,
    pub heading: Heading,
    pub v: i32,
}

impl Pose {
    pub const fn new(cell: Coord, heading: Heading, v: i32) -> Self {
        Pose { cell, heading, v }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    #[serde(flatten)]
    pub pose: Pose,
    pub goal: Coord,
    pub tokens: u32,
    /// Remaining critical cells (maneuver starts) on the planned route, goal last.
    pub plan: Vec<Coord>,
    /// Bundle of the last lane driven on; used inside intersections.
    pub bundle: Option<BundleId>,
    /// Set after standing at an intersection approach while the light was not red.
    pub waited: bool,
}

/// Swept cells of one step and the resulting pose.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Maneuver {
    pub footprint: Vec<Coord>,
    pub end: Pose,
}

/// Geometry of the drivable world an agent moves through.
pub trait Terrain {
    /// Whether an agent may stand at this pose.
    fn valid(&self, p: Pose) -> bool;
    fn maneuver(&self, from: Pose, steer: Steer, v_next: i32) -> Option<Maneuver>;
}

/// Straight and lane-change sweeps for any predicate of legal (cell, heading).
pub fn line_maneuver(allows: impl Fn(Coord, Heading) -> bool, from: Pose, steer: Steer, v_next: i32) -> Option<Maneuver> {
    let h = from.heading;
    match steer {
        Steer::Straight => {
            let mut footprint = vec![from.cell];
            for k in 1..=v_next {
                let c = from.cell.step(h, k);
                if !allows(c, h) {
                    return None;
                }
                footprint.push(c);
            }
            Some(Maneuver { footprint, end: Pose::new(from.cell.step(h, v_next), h, v_next) })
        }
        Steer::RightLaneChange | Steer::LeftLaneChange => {
            let d = if steer == Steer::RightLaneChange { h.right() } else { h.left() };
            let side = from.cell.step(d, 1);
            let mut footprint = Vec::with_capacity(2 * (v_next as usize + 1));
            for base in [from.cell, side] {
                for k in 0..=v_next {
                    let c = base.step(h, k);
                    if (base != from.cell || k > 0) && !allows(c, h) {
                        return None;
                    }
                    footprint.push(c);
                }
            }
            Some(Maneuver { footprint, end: Pose::new(side.step(h, v_next), h, v_next) })
        }
        Steer::RightTurn | Steer::LeftTurn => None,
    }
}

impl Terrain for RoadNetwork {
    fn valid(&self, p: Pose) -> bool {
        self.allows(p.cell, p.heading)
    }

    fn maneuver(&self, from: Pose, steer: Steer, v_next: i32) -> Option<Maneuver> {
        if !steer.gate(v_next) {
            return None;
        }
        match steer {
            Steer::RightTurn | Steer::LeftTurn => {
                let side = if steer == Steer::RightTurn { TurnSide::Right } else { TurnSide::Left };
                let x = self.turn_crossing(from.cell, from.heading, side)?;
                Some(Maneuver { footprint: x.path, end: Pose::new(x.exit, x.exit_heading, v_next) })
            }
            _ => line_maneuver(|c, h| self.allows(c, h), from, steer, v_next),
        }
    }
}

/// Unbounded multi-lane road where every cell carries one heading; lane
/// changes are always available and there are no turns.
#[derive(Debug, Clone, Copy)]
pub struct OpenRoad {
    pub heading: Heading,
}

impl Terrain for OpenRoad {
    fn valid(&self, p: Pose) -> bool {
        p.heading == self.heading
    }

    fn maneuver(&self, from: Pose, steer: Steer, v_next: i32) -> Option<Maneuver> {
        if !steer.gate(v_next) || from.heading != self.heading {
            return None;
        }
        line_maneuver(|_, h| h == self.heading, from, steer, v_next)
    }
}

/// Bounded straight strip: `lanes` parallel lanes of `length` cells, all
/// heading east, rows `0..lanes`, columns `0..length`.
#[derive(Debug, Clone, Copy)]
pub struct Strip {
    pub lanes: i32,
    pub length: i32,
}

impl Strip {
    pub fn contains(&self, c: Coord) -> bool {
        c.row >= 0 && c.row < self.lanes && c.col >= 0 && c.col < self.length
    }
}

impl Terrain for Strip {
    fn valid(&self, p: Pose) -> bool {
        p.heading == Heading::East && self.contains(p.cell)
    }

    fn maneuver(&self, from: Pose, steer: Steer, v_next: i32) -> Option<Maneuver> {
        if !steer.gate(v_next) || from.heading != Heading::East || !self.contains(from.cell) {
            return None;
        }
        line_maneuver(|c, h| h == Heading::East && self.contains(c), from, steer, v_next)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DynamicsError {
    #[error("action {0:?} is not allowable from {1:?}")]
    NotAllowable(Action, Pose),
    #[error("action {0:?} from {1:?} leaves the drivable area")]
    Blocked(Action, Pose),
}

fn checked(params: &AgentParams, from: Pose, a: Action) -> Result<i32, DynamicsError> {
    let raw = from.v + a.acc;
    if a.acc < params.a_min || a.acc > params.a_max || raw < params.v_min || raw > params.v_max {
        return Err(DynamicsError::NotAllowable(a, from));
    }
    let v = params.next_velocity(from.v, a.acc);
    if !a.steer.gate(v) {
        return Err(DynamicsError::NotAllowable(a, from));
    }
    Ok(v)
}

pub fn maneuver<T: Terrain + ?Sized>(t: &T, params: &AgentParams, from: Pose, a: Action) -> Result<Maneuver, DynamicsError> {
    let v = checked(params, from, a)?;
    t.maneuver(from, a.steer, v).ok_or(DynamicsError::Blocked(a, from))
}

pub fn transition<T: Terrain + ?Sized>(t: &T, params: &AgentParams, from: Pose, a: Action) -> Result<Pose, DynamicsError> {
    maneuver(t, params, from, a).map(|m| m.end)
}

pub fn occupancy<T: Terrain + ?Sized>(t: &T, params: &AgentParams, from: Pose, a: Action) -> Result<Vec<Coord>, DynamicsError> {
    maneuver(t, params, from, a).map(|m| m.footprint)
}

/// All actions whose velocity update stays in range without clamping, whose
/// steer gate holds and whose sweep stays on legal cells. Ordered by
/// acceleration, then steer.
pub fn allowable_actions<T: Terrain + ?Sized>(t: &T, params: &AgentParams, from: Pose) -> Vec<Action> {
    allowable_maneuvers(t, params, from).into_iter().map(|(a, _)| a).collect()
}

pub fn allowable_maneuvers<T: Terrain + ?Sized>(t: &T, params: &AgentParams, from: Pose) -> Vec<(Action, Maneuver)> {
    let mut out = Vec::new();
    for acc in params.a_min..=params.a_max {
        let raw = from.v + acc;
        if raw < params.v_min || raw > params.v_max {
            continue;
        }
        for steer in Steer::ALL {
            if let Some(m) = t.maneuver(from, steer, raw) {
                out.push((Action::new(acc, steer), m));
            }
        }
    }
    out
}

/// Maximal deceleration without reversing, wheel straight.
pub fn backup_plan_action(params: &AgentParams, from: Pose) -> Action {
    Action::new(params.a_min.max(-from.v), Steer::Straight)
}

/// Per-step straight braking sweeps from `from` until standstill, computed
/// from geometry alone. The last entry is the stationary cell.
pub fn braking_sweeps(params: &AgentParams, from: Pose) -> Vec<Vec<Coord>> {
    let mut out = Vec::new();
    let mut p = from;
    loop {
        let v = params.next_velocity(p.v, params.a_min.max(-p.v));
        let sweep: Vec<Coord> = (0..=v).map(|k| p.cell.step(p.heading, k)).collect();
        out.push(sweep);
        let was_stopped = p.v == 0;
        p = Pose::new(p.cell.step(p.heading, v), p.heading, v);
        if was_stopped {
            return out;
        }
    }
}

/// Poses visited while braking from `from`, starting with `from` itself and
/// ending at the first stationary pose.
pub fn braking_poses(params: &AgentParams, from: Pose) -> Vec<Pose> {
    let mut out = vec![from];
    let mut p = from;
    while p.v > 0 {
        let v = params.next_velocity(p.v, params.a_min.max(-p.v));
        p = Pose::new(p.cell.step(p.heading, v), p.heading, v);
        out.push(p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: AgentParams = AgentParams { a_min: -1, a_max: 1, v_min: 0, v_max: 3 };

    fn east(c: i32, v: i32) -> Pose {
        Pose::new(Coord::new(1, c), Heading::East, v)
    }

    #[test]
    fn straight_transitions() {
        let road = OpenRoad { heading: Heading::East };
        let s = transition(&road, &P, east(0, 2), Action::new(1, Steer::Straight)).unwrap();
        assert_eq!(s, east(3, 3));
        assert_eq!(transition(&road, &P, east(4, 0), Action::stay()).unwrap(), east(4, 0));
        assert_eq!(transition(&road, &P, east(4, 1), Action::new(-1, Steer::Straight)).unwrap(), east(4, 0));
        assert!(matches!(
            transition(&road, &P, east(0, 3), Action::new(1, Steer::Straight)),
            Err(DynamicsError::NotAllowable(..))
        ));
    }

    #[test]
    fn footprints() {
        let road = OpenRoad { heading: Heading::East };
        assert_eq!(occupancy(&road, &P, east(4, 0), Action::stay()).unwrap(), vec![Coord::new(1, 4)]);
        assert_eq!(
            occupancy(&road, &P, east(4, 1), Action::new(1, Steer::Straight)).unwrap(),
            vec![Coord::new(1, 4), Coord::new(1, 5), Coord::new(1, 6)]
        );
        let mut lc = occupancy(&road, &P, east(4, 0), Action::new(1, Steer::RightLaneChange)).unwrap();
        lc.sort();
        assert_eq!(lc, vec![Coord::new(1, 4), Coord::new(1, 5), Coord::new(2, 4), Coord::new(2, 5)]);
    }

    #[test]
    fn allowable_from_rest_mid_lane() {
        let strip = Strip { lanes: 1, length: 20 };
        let acts = allowable_actions(&strip, &P, Pose::new(Coord::new(0, 5), Heading::East, 0));
        assert_eq!(acts, vec![Action::new(0, Steer::Straight), Action::new(1, Steer::Straight)]);
        let acts = allowable_actions(&strip, &P, Pose::new(Coord::new(0, 5), Heading::East, 3));
        assert!(acts.iter().all(|a| a.acc <= 0));
    }

    #[test]
    fn backup_action_values() {
        assert_eq!(backup_plan_action(&P, east(0, 3)), Action::new(-1, Steer::Straight));
        assert_eq!(backup_plan_action(&P, east(0, 0)), Action::new(0, Steer::Straight));
        let hard = AgentParams { a_min: -2, ..P };
        assert_eq!(backup_plan_action(&hard, east(0, 1)), Action::new(-1, Steer::Straight));
    }

    #[test]
    fn stopping_distance_from_three() {
        assert_eq!(P.stopping_distance(3), 3);
        assert_eq!(P.stopping_steps(3), 3);
        let poses = braking_poses(&P, east(0, 3));
        assert_eq!(poses.last().unwrap(), &east(3, 0));
        assert_eq!(poses.len(), 4);
    }
}
