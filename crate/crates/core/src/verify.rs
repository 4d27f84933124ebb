//! Runtime checks and brute-force oracles: safety assertions P, I and Q,
//! the sparsity condition, deadlock detection over a wait-for graph, and
//! exhaustive bubble enumeration on a bounded strip.

use crate::bubble::backup_plan_nodes;
use crate::conflict::{Clusters, ConflictRequest};
use crate::dynamics::{allowable_maneuvers, maneuver, Action, AgentId, AgentParams, AgentState, Pose, Steer, Strip, Terrain};
use crate::grid::{Coord, Heading};
use crate::oracles::{backup_plan_safe, Candidate, Profile, Scene};
use crate::precedence::{is_polyforest, precedence_bundle, TurnOrderForest};
use crate::road_network::{LoopSize, RoadNetwork};
use crate::world::World;
use petgraph::graphmap::DiGraphMap;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SafetyCheck {
    pub p: bool,
    pub i: bool,
    pub q: bool,
}

/// Index pairs whose footprints share a cell.
pub fn overlapping_pairs(chosen: &[Candidate]) -> Vec<(usize, usize)> {
    let mut owner: HashMap<Coord, usize> = HashMap::new();
    let mut out = BTreeSet::new();
    for (i, x) in chosen.iter().enumerate() {
        for &c in &x.maneuver.footprint {
            if let Some(&j) = owner.get(&c) {
                if j != i {
                    out.insert((j, i));
                }
            } else {
                owner.insert(c, i);
            }
        }
    }
    out.into_iter().collect()
}

/// P: every agent has a safe backup plan before the step. Q: executed
/// footprints are pairwise disjoint. I: Q and every agent still has a safe
/// backup plan afterwards. `after` must list the survivors in ID order.
pub fn check_safety(world: &World, time: u64, before: &[AgentState], actions: &[Action], after: &[AgentState]) -> SafetyCheck {
    let profile = Profile::default();
    let scene = Scene::new(world, time, before);
    let p = (0..before.len()).all(|i| backup_plan_safe(&profile, &scene, i));
    let mut chosen = Vec::new();
    let mut legal = true;
    for (a, &act) in before.iter().zip(actions) {
        match maneuver(&world.net, &world.params, a.pose, act) {
            Ok(m) => chosen.push(Candidate::new(world, a, time, act, m)),
            Err(_) => legal = false,
        }
    }
    let q = legal && overlapping_pairs(&chosen).is_empty();
    let next = Scene::new(world, time + 1, after);
    let i = q && (0..after.len()).all(|k| backup_plan_safe(&profile, &next, k));
    SafetyCheck { p, i, q }
}

/// Sparsity: the agent cap stays below the smallest loop size minus one.
pub fn check_sparsity(max_agents: Option<usize>, net: &RoadNetwork) -> bool {
    match net.smallest_loop_size() {
        LoopSize::NoLoop => true,
        LoopSize::Cells(m) => max_agents.is_some_and(|n| n + 1 < m),
    }
}

pub fn forest_ok(forest: &TurnOrderForest, agents: &[AgentState], net: &RoadNetwork) -> bool {
    if !is_polyforest(forest.classes.len(), &forest.edges) {
        return false;
    }
    let by_id: HashMap<AgentId, &AgentState> = agents.iter().map(|a| (a.id, a)).collect();
    forest.classes.iter().all(|class| {
        let keys: BTreeSet<_> = class
            .iter()
            .map(|id| {
                let a = by_id[id];
                let b = precedence_bundle(net, a);
                (b, b.map(|b| net.bundles[b].heading.along(a.pose.cell)))
            })
            .collect();
        keys.len() == 1
    })
}

/// Every request receiver sits inside the sender's bubble.
pub fn requests_in_bubbles(world: &World, agents: &[AgentState], requests: &[ConflictRequest]) -> bool {
    let by_id: HashMap<AgentId, &AgentState> = agents.iter().map(|a| (a.id, a)).collect();
    requests
        .iter()
        .all(|r| world.bubbles.contains(by_id[&r.sender].pose, by_id[&r.receiver].pose.cell))
}

/// At most one winner in each component and in each agent's own cluster.
pub fn one_winner(clusters: &Clusters, winners: &BTreeMap<AgentId, bool>) -> bool {
    let w = |id: &AgentId| winners.get(id).copied().unwrap_or(false);
    clusters.components.iter().all(|c| c.iter().filter(|id| w(id)).count() <= 1)
        && clusters
            .per_agent
            .iter()
            .all(|(me, others)| others.iter().chain(std::iter::once(me)).filter(|id| w(id)).count() <= 1)
}

/// Steps without progress after which an agent counts as waiting.
pub fn deadlock_window(world: &World) -> u32 {
    match world.lights.max_period() {
        0 => 30,
        p => 3 * p,
    }
}

/// Cells an agent needs next to make progress: the sweeps of unit-speed
/// maneuvers that reduce its distance to goal.
pub fn needed_cells(world: &World, a: &AgentState) -> BTreeSet<Coord> {
    let d0 = world.routing.dist(a.goal, a.pose.cell, a.pose.heading);
    let mut out = BTreeSet::new();
    for steer in Steer::ALL {
        if let Some(m) = world.net.maneuver(a.pose, steer, 1) {
            let d1 = if world.routing.arrives(a.goal, m.end.cell) { Some(0) } else { world.routing.dist(a.goal, m.end.cell, m.end.heading) };
            if matches!((d0, d1), (Some(x), Some(y)) if y < x) {
                out.extend(m.footprint.into_iter().filter(|&c| c != a.pose.cell));
            }
        }
    }
    out
}

/// Agents that have waited at least `window` steps and sit on a cycle of
/// the wait-for graph (an edge points at the agent occupying a needed cell).
pub fn detect_deadlock(world: &World, agents: &[AgentState], window: u32) -> Vec<AgentId> {
    let stuck: Vec<&AgentState> = agents.iter().filter(|a| a.tokens >= window).collect();
    if stuck.is_empty() {
        return Vec::new();
    }
    let at: HashMap<Coord, AgentId> = stuck.iter().map(|a| (a.pose.cell, a.id)).collect();
    let mut g = DiGraphMap::<AgentId, ()>::new();
    for a in &stuck {
        g.add_node(a.id);
        for c in needed_cells(world, a) {
            if let Some(&b) = at.get(&c) {
                g.add_edge(a.id, b, ());
            }
        }
    }
    let mut out: Vec<AgentId> = petgraph::algo::tarjan_scc(&g)
        .into_iter()
        .filter(|scc| scc.len() > 1 || g.contains_edge(scc[0], scc[0]))
        .flatten()
        .collect();
    out.sort_unstable();
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BruteForceError {
    #[error("strip of {lanes}x{length} is too small for the interference set")]
    StripTooSmall { lanes: i32, length: i32 },
}

/// Conservative region of one action: its sweep and the braking after it.
fn region(params: &AgentParams, fp: &[Coord], end: Pose) -> BTreeSet<Coord> {
    let mut r: BTreeSet<Coord> = fp.iter().copied().collect();
    r.extend(backup_plan_nodes(params, end));
    r
}

/// Strip and anchor cell used by the brute force for these parameters.
pub fn default_strip(params: &AgentParams) -> (Strip, Coord) {
    let margin = 2 * params.v_max + params.stopping_distance(params.v_max) + 3;
    (Strip { lanes: 7, length: 2 * margin + 1 }, Coord::new(3, margin))
}

/// Every cell hosting a state `s'` for which some pair of actions makes the
/// regions of `s'` and the anchor meet. Offsets are (right, ahead) of the
/// anchor, which heads east at velocity `v`.
pub fn brute_force_bubble(params: &AgentParams, v: i32) -> Result<BTreeSet<Coord>, BruteForceError> {
    let (strip, anchor) = default_strip(params);
    brute_force_bubble_on(params, v, strip, anchor)
}

pub fn brute_force_bubble_on(params: &AgentParams, v: i32, strip: Strip, anchor: Coord) -> Result<BTreeSet<Coord>, BruteForceError> {
    let s0 = Pose::new(anchor, Heading::East, v);
    let mine: Vec<BTreeSet<Coord>> =
        allowable_maneuvers(&strip, params, s0).into_iter().map(|(_, m)| region(params, &m.footprint, m.end)).collect();
    let mut out = BTreeSet::new();
    for row in 0..strip.lanes {
        for col in 0..strip.length {
            for w in params.v_min..=params.v_max {
                let s1 = Pose::new(Coord::new(row, col), Heading::East, w);
                if !strip.valid(s1) {
                    continue;
                }
                let hit = allowable_maneuvers(&strip, params, s1).into_iter().any(|(_, m)| {
                    let theirs = region(params, &m.footprint, m.end);
                    mine.iter().any(|r| !r.is_disjoint(&theirs))
                });
                if hit {
                    let on_edge = row == 0 || row == strip.lanes - 1 || col == 0 || col == strip.length - 1;
                    if on_edge {
                        return Err(BruteForceError::StripTooSmall { lanes: strip.lanes, length: strip.length });
                    }
                    out.insert(Coord::new(row - anchor.row, col - anchor.col));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProbeResult {
    /// Bubble cells with no interfering state at all.
    pub without_witness: Vec<Coord>,
    /// Bubble cells where no witness is unsafe under the timed check
    /// (overlapping sweeps or unsafe braking afterwards).
    pub without_timed_witness: Vec<Coord>,
}

/// For every cell of `bubble` (offsets as in `brute_force_bubble`), looks
/// for a state there and an action pair that interferes with the anchor.
pub fn minimality_probe(params: &AgentParams, v: i32, bubble: &BTreeSet<Coord>) -> ProbeResult {
    let (strip, anchor) = default_strip(params);
    let s0 = Pose::new(anchor, Heading::East, v);
    let mine = allowable_maneuvers(&strip, params, s0);
    let mut res = ProbeResult::default();
    for &off in bubble {
        let cell = Coord::new(anchor.row + off.row, anchor.col + off.col);
        let mut any = false;
        let mut timed = false;
        for w in params.v_min..=params.v_max {
            let s1 = Pose::new(cell, Heading::East, w);
            if !strip.valid(s1) {
                continue;
            }
            for (_, m1) in allowable_maneuvers(&strip, params, s1) {
                let theirs = region(params, &m1.footprint, m1.end);
                for (_, m0) in &mine {
                    if region(params, &m0.footprint, m0.end).is_disjoint(&theirs) {
                        continue;
                    }
                    any = true;
                    let overlap = m0.footprint.iter().any(|c| m1.footprint.contains(c));
                    if overlap || !crate::oracles::safe_pair(params, m0.end, m1.end) {
                        timed = true;
                    }
                }
            }
        }
        if !any {
            res.without_witness.push(off);
        }
        if !timed {
            res.without_timed_witness.push(off);
        }
    }
    res
}

/// Per-check failure counts over one trace, recomputed from the recorded
/// states and actions rather than read from the recorded reports.
#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct TraceCheck {
    pub steps: u64,
    pub safety_p_failures: u64,
    pub invariant_i_failures: u64,
    pub collision_q_failures: u64,
    pub polyforest_failures: u64,
    pub bubble_request_failures: u64,
    pub one_winner_failures: u64,
    pub deadlock_steps: u64,
    pub max_progress_age: u32,
    /// First few failures as (step, check name).
    pub first_failures: Vec<(u64, String)>,
}

impl TraceCheck {
    pub fn all_ok(&self) -> bool {
        self.safety_p_failures
            + self.invariant_i_failures
            + self.collision_q_failures
            + self.polyforest_failures
            + self.bubble_request_failures
            + self.one_winner_failures
            == 0
    }
}

pub fn check_trace(records: &[crate::trace::TraceRecord]) -> Result<TraceCheck, crate::trace::TraceError> {
    use crate::trace::TraceRecord;
    let report = crate::trace::replay(records)?;
    let h = &report.header;
    let world = crate::engine::build_world(&h.config, &h.map_csv)
        .map_err(|e| crate::trace::TraceError::Schema { line: 1, msg: e.to_string() })?;
    let window = deadlock_window(&world);
    let mut out = TraceCheck::default();
    let steps: Vec<&crate::trace::StepRecord> =
        records.iter().filter_map(|r| if let TraceRecord::Step(s) = r { Some(s) } else { None }).collect();
    for (k, s) in steps.iter().enumerate() {
        out.steps += 1;
        let mut fail = |name: &str, n: &mut u64| {
            *n += 1;
            if out.first_failures.len() < 10 {
                out.first_failures.push((s.t, name.to_string()));
            }
        };
        let actions: Vec<Action> = s
            .agents_before
            .iter()
            .map(|a| s.decisions.iter().find(|d| d.id == a.id).map_or(Action::stay(), |d| d.chosen))
            .collect();
        // survivors without this step's spawns
        let after: Vec<AgentState> = match steps.get(k + 1) {
            Some(n) => n.agents_before.iter().filter(|a| !s.spawned.iter().any(|b| b.id == a.id)).cloned().collect(),
            None => report.summary.final_agents.iter().filter(|a| !s.spawned.iter().any(|b| b.id == a.id)).cloned().collect(),
        };
        let sc = check_safety(&world, s.t, &s.agents_before, &actions, &after);
        let mut counts = [0u64; 6];
        if !sc.p {
            fail("safety_p", &mut counts[0]);
        }
        if !sc.i {
            fail("invariant_i", &mut counts[1]);
        }
        if !sc.q {
            fail("collision_q", &mut counts[2]);
        }
        if !forest_ok(&s.forest, &s.agents_before, &world.net) {
            fail("polyforest", &mut counts[3]);
        }
        if !requests_in_bubbles(&world, &s.agents_before, &s.requests) {
            fail("bubble_request", &mut counts[4]);
        }
        let clusters = crate::conflict::build_clusters(&s.requests);
        let winners: BTreeMap<AgentId, bool> = s.decisions.iter().map(|d| (d.id, d.winner)).collect();
        if !one_winner(&clusters, &winners) {
            fail("one_winner", &mut counts[5]);
        }
        out.safety_p_failures += counts[0];
        out.invariant_i_failures += counts[1];
        out.collision_q_failures += counts[2];
        out.polyforest_failures += counts[3];
        out.bubble_request_failures += counts[4];
        out.one_winner_failures += counts[5];
        out.max_progress_age = out.max_progress_age.max(after.iter().map(|a| a.tokens).max().unwrap_or(0));
        if !detect_deadlock(&world, &after, window).is_empty() {
            out.deadlock_steps += 1;
        }
    }
    Ok(out)
}
