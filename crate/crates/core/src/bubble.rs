//! Backup-plan node sets, one-step reachable state sets, occupancy
//! preimages and the perception bubble built from them.
//!
//! Bubbles are computed once per velocity in a canonical frame (heading
//! east, anchor at the origin, rows to the right of travel) on an
//! unbounded multi-lane road, then rotated and translated at query time.

use crate::dynamics::{allowable_maneuvers, braking_sweeps, AgentParams, OpenRoad, Pose, Terrain};
use crate::grid::{Coord, Heading};
use std::collections::{BTreeSet, HashSet};

pub type StateSet = BTreeSet<Pose>;

/// Cells swept while braking maximally from `s` to standstill.
pub fn backup_plan_nodes(params: &AgentParams, s: Pose) -> BTreeSet<Coord> {
    braking_sweeps(params, s).into_iter().flatten().collect()
}

pub fn forward_reachable_states<T: Terrain + ?Sized>(t: &T, params: &AgentParams, s: Pose) -> StateSet {
    allowable_maneuvers(t, params, s).into_iter().map(|(_, m)| m.end).collect()
}

/// Valid poses whose cell lies within `radius` (Chebyshev) of `c`.
fn poses_near<T: Terrain + ?Sized>(t: &T, params: &AgentParams, c: Coord, radius: i32) -> Vec<Pose> {
    let mut out = Vec::new();
    for dr in -radius..=radius {
        for dc in -radius..=radius {
            for h in Heading::ALL {
                for v in params.v_min..=params.v_max {
                    let p = Pose::new(c.offset(dr, dc), h, v);
                    if t.valid(p) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// Predecessors of `s`; `radius` bounds how far one step can move an agent.
pub fn backward_reachable_states<T: Terrain + ?Sized>(t: &T, params: &AgentParams, s: Pose, radius: i32) -> StateSet {
    poses_near(t, params, s.cell, radius)
        .into_iter()
        .filter(|&p| allowable_maneuvers(t, params, p).iter().any(|(_, m)| m.end == s))
        .collect()
}

/// States with some allowable action whose footprint covers `cell`.
pub fn occupancy_preimage<T: Terrain + ?Sized>(t: &T, params: &AgentParams, cell: Coord, radius: i32) -> StateSet {
    poses_near(t, params, cell, radius)
        .into_iter()
        .filter(|&p| allowable_maneuvers(t, params, p).iter().any(|(_, m)| m.footprint.contains(&cell)))
        .collect()
}

/// One-step displacement bound on a straight multi-lane road.
pub fn line_radius(params: &AgentParams) -> i32 {
    params.v_max + 1
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bubble {
    pub anchor: Pose,
    /// Next-step footprints and the backup sweeps after them.
    pub z: BTreeSet<Coord>,
    /// Cells of states that can sweep into `z` in one step.
    pub g_r: BTreeSet<Coord>,
    /// Cells of states one step before a state whose backup plan meets `z`.
    pub g_rbp: BTreeSet<Coord>,
    pub cells: BTreeSet<Coord>,
}

impl Bubble {
    /// Extent along the travel direction, in cells.
    pub fn longitudinal_span(&self) -> i32 {
        let h = self.anchor.heading;
        let lo = self.cells.iter().map(|&c| h.along(c)).min().unwrap_or(0);
        let hi = self.cells.iter().map(|&c| h.along(c)).max().unwrap_or(0);
        hi - lo + 1
    }
}

/// Bubble of `s0` on an open road in its own heading.
pub fn compute_bubble(params: &AgentParams, s0: Pose) -> Bubble {
    let road = OpenRoad { heading: s0.heading };
    let r = line_radius(params);
    let mut z = BTreeSet::new();
    for (_, m) in allowable_maneuvers(&road, params, s0) {
        z.extend(m.footprint.iter().copied());
        z.extend(backup_plan_nodes(params, m.end));
    }
    let mut s_r = StateSet::new();
    for &n in &z {
        s_r.extend(occupancy_preimage(&road, params, n, r));
    }
    // States whose braking sweep meets z lie at most one stopping distance
    // behind it and in the same lane.
    let reach = params.stopping_distance(params.v_max) + 1;
    let mut s_bp = StateSet::new();
    for &n in &z {
        for p in poses_near(&road, params, n, reach) {
            if !s_bp.contains(&p) && backup_plan_nodes(params, p).contains(&n) {
                s_bp.insert(p);
            }
        }
    }
    let mut s_rbp = StateSet::new();
    for &s in &s_bp {
        s_rbp.extend(backward_reachable_states(&road, params, s, r));
    }
    let g_r: BTreeSet<Coord> = s_r.iter().map(|p| p.cell).collect();
    let g_rbp: BTreeSet<Coord> = s_rbp.iter().map(|p| p.cell).collect();
    let cells = z.iter().chain(&g_r).chain(&g_rbp).copied().collect();
    Bubble { anchor: s0, z, g_r, g_rbp, cells }
}

/// Canonical bubbles for every velocity, rotated and translated on demand.
#[derive(Debug, Clone)]
pub struct BubbleTable {
    params: AgentParams,
    /// Offsets as (right, ahead) per velocity.
    offsets: Vec<Vec<(i32, i32)>>,
    lookup: Vec<HashSet<(i32, i32)>>,
}

impl BubbleTable {
    pub fn new(params: &AgentParams) -> Self {
        let mut offsets = Vec::new();
        for v in params.v_min..=params.v_max {
            let b = compute_bubble(params, Pose::new(Coord::new(0, 0), Heading::East, v));
            offsets.push(b.cells.iter().map(|c| (c.row, c.col)).collect::<Vec<_>>());
        }
        let lookup = offsets.iter().map(|o| o.iter().copied().collect()).collect();
        BubbleTable { params: *params, offsets, lookup }
    }

    pub fn params(&self) -> &AgentParams {
        &self.params
    }

    pub fn cells(&self, s: Pose) -> impl Iterator<Item = Coord> + '_ {
        let h = s.heading;
        self.offsets[(s.v - self.params.v_min) as usize]
            .iter()
            .map(move |&(right, ahead)| s.cell.step(h, ahead).step(h.right(), right))
    }

    pub fn contains(&self, s: Pose, c: Coord) -> bool {
        let h = s.heading;
        let key = (h.across(c) - h.across(s.cell), h.along(c) - h.along(s.cell));
        self.lookup[(s.v - self.params.v_min) as usize].contains(&key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: AgentParams = AgentParams { a_min: -1, a_max: 1, v_min: 0, v_max: 3 };

    fn east(col: i32, v: i32) -> Pose {
        Pose::new(Coord::new(0, col), Heading::East, v)
    }

    #[test]
    fn backup_nodes() {
        assert_eq!(backup_plan_nodes(&P, east(5, 0)), [Coord::new(0, 5)].into());
        assert_eq!(backup_plan_nodes(&P, east(5, 2)), [Coord::new(0, 5), Coord::new(0, 6)].into());
        assert_eq!(backup_plan_nodes(&P, east(5, 3)).len(), 4);
    }

    #[test]
    fn forward_from_rest() {
        let road = OpenRoad { heading: Heading::East };
        let f = forward_reachable_states(&road, &P, east(0, 0));
        assert_eq!(f, [east(0, 0), east(1, 1), Pose::new(Coord::new(1, 1), Heading::East, 1), Pose::new(Coord::new(-1, 1), Heading::East, 1)].into());
    }

    #[test]
    fn chain_and_rotation() {
        for v in 0..=3 {
            let b = compute_bubble(&P, east(0, v));
            assert!(b.z.is_subset(&b.g_r));
            let table = BubbleTable::new(&P);
            let north = Pose::new(Coord::new(20, 20), Heading::North, v);
            let rotated: BTreeSet<Coord> = table.cells(north).collect();
            assert_eq!(rotated.len(), b.cells.len());
            assert!(rotated.iter().all(|&c| table.contains(north, c)));
        }
    }
}
