//! Goal-directed tables over the road network: maneuver distances, the
//! velocity-aware set of poses from which a goal stays reachable, and
//! critical-point route plans.
//!
//! Distances live on the (cell, heading) maneuver graph where a straight
//! step and a lane change cost 1 and a turn costs the cells it advances.
//!
//! A goal on a sink is reached at any sink of the same bundle: leaving the
//! map through that road counts, whichever lane is used.

use crate::dynamics::{allowable_maneuvers, AgentParams, Pose, Steer, Terrain};
use crate::grid::{Coord, Heading};
use crate::road_network::RoadNetwork;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use thiserror::Error;

pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RouteError {
    #[error("goal {goal} is not reachable from {start}")]
    Unreachable { start: Coord, goal: Coord },
    #[error("no routing table for goal {0}")]
    UnknownGoal(Coord),
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    to: usize,
    cost: u32,
    steer: Steer,
}

#[derive(Debug, Clone)]
pub struct Routing {
    v_min: i32,
    nv: usize,
    nodes: Vec<(Coord, Heading)>,
    /// Dense node index per (cell, heading), `u32::MAX` when absent.
    index: NodeIndex,
    succ: Vec<Vec<Edge>>,
    dist: BTreeMap<Coord, Vec<u32>>,
    reach: BTreeMap<Coord, Vec<bool>>,
    targets: BTreeMap<Coord, Vec<Coord>>,
}

#[derive(Debug, Clone)]
struct NodeIndex {
    rows: i32,
    cols: i32,
    slots: Vec<u32>,
}

impl NodeIndex {
    fn slot(&self, c: Coord, h: Heading) -> Option<usize> {
        (c.row >= 0 && c.col >= 0 && c.row < self.rows && c.col < self.cols)
            .then(|| ((c.row * self.cols + c.col) as usize) * 4 + h as usize)
    }

    fn get(&self, c: Coord, h: Heading) -> Option<usize> {
        let k = self.slots[self.slot(c, h)?];
        (k != u32::MAX).then_some(k as usize)
    }
}

/// Cells that count as arriving at `goal`.
pub fn arrival_cells(net: &RoadNetwork, goal: Coord) -> Vec<Coord> {
    match net.bundle_of(goal) {
        Ok(b) if net.sinks.contains(&goal) => net.sinks.iter().copied().filter(|&s| net.bundle_of(s) == Ok(b)).collect(),
        _ => vec![goal],
    }
}

impl Routing {
    pub fn new(net: &RoadNetwork, params: &AgentParams, goals: &[Coord]) -> Self {
        let mut nodes = Vec::new();
        for c in net.cells() {
            for h in net.legal(c).iter() {
                nodes.push((c, h));
            }
        }
        let mut index = NodeIndex { rows: net.rows, cols: net.cols, slots: vec![u32::MAX; (net.rows * net.cols * 4).max(0) as usize] };
        for (i, &(c, h)) in nodes.iter().enumerate() {
            let k = index.slot(c, h).expect("node inside the grid");
            index.slots[k] = i as u32;
        }
        let succ: Vec<Vec<Edge>> = nodes
            .iter()
            .map(|&(c, h)| {
                Steer::ALL
                    .iter()
                    .filter_map(|&steer| {
                        let m = net.maneuver(Pose::new(c, h, 0), steer, 1)?;
                        let to = index.get(m.end.cell, m.end.heading)?;
                        let cost = if steer.is_turn() { m.footprint.len() as u32 - 1 } else { 1 };
                        Some(Edge { to, cost, steer })
                    })
                    .collect()
            })
            .collect();
        let nv = (params.v_max - params.v_min + 1) as usize;
        let mut r = Routing { v_min: params.v_min, nv, nodes, index, succ, dist: BTreeMap::new(), reach: BTreeMap::new(), targets: BTreeMap::new() };
        let mut pred: Vec<Vec<(usize, u32)>> = vec![Vec::new(); r.nodes.len()];
        for (i, es) in r.succ.iter().enumerate() {
            for e in es {
                pred[e.to].push((i, e.cost));
            }
        }
        let pose_graph = r.pose_graph(net, params);
        for &g in goals {
            if r.dist.contains_key(&g) {
                continue;
            }
            let targets = arrival_cells(net, g);
            let d = r.dijkstra(&pred, &targets);
            r.dist.insert(g, d);
            let reach = r.backward_reach(&pose_graph, &targets);
            r.reach.insert(g, reach);
            r.targets.insert(g, targets);
        }
        r
    }

    fn dijkstra(&self, pred: &[Vec<(usize, u32)>], targets: &[Coord]) -> Vec<u32> {
        let mut d = vec![UNREACHABLE; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        for (i, &(c, _)) in self.nodes.iter().enumerate() {
            if targets.contains(&c) {
                d[i] = 0;
                heap.push(Reverse((0u32, i)));
            }
        }
        while let Some(Reverse((du, u))) = heap.pop() {
            if du > d[u] {
                continue;
            }
            for &(p, w) in &pred[u] {
                let nd = du + w;
                if nd < d[p] {
                    d[p] = nd;
                    heap.push(Reverse((nd, p)));
                }
            }
        }
        d
    }

    fn pose_id(&self, p: Pose) -> Option<usize> {
        let n = self.index.get(p.cell, p.heading)?;
        let v = (p.v - self.v_min) as usize;
        (v < self.nv).then_some(n * self.nv + v)
    }

    /// Reverse edges of the full pose graph with their footprints.
    fn pose_graph(&self, net: &RoadNetwork, params: &AgentParams) -> Vec<Vec<(usize, Vec<Coord>, Coord)>> {
        let mut pred = vec![Vec::new(); self.nodes.len() * self.nv];
        for (n, &(c, h)) in self.nodes.iter().enumerate() {
            for vi in 0..self.nv {
                let p = Pose::new(c, h, self.v_min + vi as i32);
                for (_, m) in allowable_maneuvers(net, params, p) {
                    if let Some(to) = self.pose_id(m.end) {
                        pred[to].push((n * self.nv + vi, m.footprint, m.end.cell));
                    }
                }
            }
        }
        pred
    }

    fn backward_reach(&self, pred: &[Vec<(usize, Vec<Coord>, Coord)>], targets: &[Coord]) -> Vec<bool> {
        let mut ok = vec![false; self.nodes.len() * self.nv];
        let mut q = VecDeque::new();
        for (n, &(c, _)) in self.nodes.iter().enumerate() {
            if targets.contains(&c) {
                for vi in 0..self.nv {
                    ok[n * self.nv + vi] = true;
                    q.push_back(n * self.nv + vi);
                }
            }
        }
        while let Some(u) = q.pop_front() {
            for (p, fp, end) in &pred[u] {
                if ok[*p] || (!targets.contains(end) && fp.iter().any(|c| targets.contains(c))) {
                    continue;
                }
                ok[*p] = true;
                q.push_back(*p);
            }
        }
        ok
    }

    pub fn goals(&self) -> impl Iterator<Item = Coord> + '_ {
        self.dist.keys().copied()
    }

    /// Whether standing on `cell` means the goal has been reached.
    pub fn arrives(&self, goal: Coord, cell: Coord) -> bool {
        match self.targets.get(&goal) {
            Some(t) => t.contains(&cell),
            None => cell == goal,
        }
    }

    /// Whether a sweep drives over an arrival cell.
    pub fn touches(&self, goal: Coord, cells: &[Coord]) -> bool {
        cells.iter().any(|&c| self.arrives(goal, c))
    }

    pub fn has_goal(&self, goal: Coord) -> bool {
        self.dist.contains_key(&goal)
    }

    /// Remaining maneuver distance, `None` when unreachable or unknown.
    pub fn dist(&self, goal: Coord, cell: Coord, heading: Heading) -> Option<u32> {
        let d = self.dist.get(&goal)?[self.index.get(cell, heading)?];
        (d != UNREACHABLE).then_some(d)
    }

    /// Whether the goal can still be reached from `p` by allowable actions
    /// without driving through it.
    pub fn reachable(&self, goal: Coord, p: Pose) -> bool {
        match (self.reach.get(&goal), self.pose_id(p)) {
            (Some(r), Some(i)) => r[i],
            _ => false,
        }
    }

    /// Critical cells along a shortest route: every cell where a lane
    /// change or turn starts, then the goal.
    pub fn plan_route(&self, start: Coord, heading: Heading, goal: Coord) -> Result<Vec<Coord>, RouteError> {
        let d = self.dist.get(&goal).ok_or(RouteError::UnknownGoal(goal))?;
        let unreachable = RouteError::Unreachable { start, goal };
        let mut u = self.index.get(start, heading).ok_or(unreachable.clone())?;
        if d[u] == UNREACHABLE {
            return Err(unreachable);
        }
        let mut plan = Vec::new();
        while d[u] > 0 {
            let e = self.succ[u]
                .iter()
                .filter(|e| d[e.to] != UNREACHABLE && d[e.to] + e.cost == d[u])
                .min_by_key(|e| e.steer)
                .expect("shortest-path successor");
            if e.steer != Steer::Straight {
                plan.push(self.nodes[u].0);
            }
            u = e.to;
        }
        plan.push(self.nodes[u].0);
        Ok(plan)
    }
}
