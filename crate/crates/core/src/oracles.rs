//! The ten oracles, the tiered profile and the action rankings built on it.
//!
//! Every oracle except the progress pair also looks at the braking
//! trajectory that follows the action, so an action that passes tiers one
//! to three leaves the agent with a backup plan that passes them next step.

use crate::dynamics::{
    allowable_maneuvers, backup_plan_action, braking_poses, braking_sweeps, maneuver, Action, AgentParams, AgentState,
    Maneuver, Pose, Steer,
};
use crate::grid::{Coord, Heading};
use crate::road_network::IntersectionId;
use crate::traffic_lights::Color;
use crate::world::World;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::cell::OnceCell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    DynamicSafety,
    StaticSafety,
    UnprotectedLeftTurnSafety,
    TrafficLightLaw,
    TrafficOrientationLaw,
    IntersectionClearanceLaw,
    IntersectionLaneChangeLaw,
    DestinationReachability,
    ForwardProgress,
    MaintainsProgress,
}

impl OracleKind {
    pub const ALL: [OracleKind; 10] = [
        OracleKind::DynamicSafety,
        OracleKind::StaticSafety,
        OracleKind::UnprotectedLeftTurnSafety,
        OracleKind::TrafficLightLaw,
        OracleKind::TrafficOrientationLaw,
        OracleKind::IntersectionClearanceLaw,
        OracleKind::IntersectionLaneChangeLaw,
        OracleKind::DestinationReachability,
        OracleKind::ForwardProgress,
        OracleKind::MaintainsProgress,
    ];

    pub fn bit(self) -> u16 {
        1 << self as u16
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub tiers: Vec<Vec<OracleKind>>,
}

impl Default for Profile {
    fn default() -> Self {
        use OracleKind::*;
        Profile {
            tiers: vec![
                vec![DynamicSafety, StaticSafety, UnprotectedLeftTurnSafety],
                vec![TrafficLightLaw, TrafficOrientationLaw, IntersectionClearanceLaw, IntersectionLaneChangeLaw],
                vec![DestinationReachability],
                vec![ForwardProgress, MaintainsProgress],
            ],
        }
    }
}

impl Profile {
    /// Oracles whose conjunction at the backup action is backup-plan safety.
    pub fn backup_set(&self) -> Vec<OracleKind> {
        self.tiers.iter().take(3).flatten().copied().collect()
    }
}

/// Satisfied-oracle bits plus per-tier counts, compared tier by tier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionScore {
    pub bits: u16,
    pub tiers: Vec<u8>,
}

impl ActionScore {
    pub fn holds(&self, k: OracleKind) -> bool {
        self.bits & k.bit() != 0
    }
}

impl PartialOrd for ActionScore {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ActionScore {
    fn cmp(&self, other: &Self) -> Ordering {
        self.tiers.cmp(&other.tiers)
    }
}

/// One step of the timed path: the cells swept while executing the step
/// that starts at `time`.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub cells: Vec<Coord>,
    pub heading: Heading,
    pub time: u64,
    pub end: Pose,
}

/// An action together with everything the oracles derive from it.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub action: Action,
    pub maneuver: Maneuver,
    /// The action's sweep followed by the braking sweeps after it; cut at
    /// the goal, where the agent leaves the map.
    pub path: Vec<Sweep>,
    pub exits: bool,
    /// Braking sweeps from the end pose, uncut.
    pub brake: Vec<Vec<Coord>>,
    /// Bounding box of the footprint and every braking sweep.
    pub lo: Coord,
    pub hi: Coord,
}

impl Candidate {
    pub fn new(world: &World, agent: &AgentState, time: u64, action: Action, m: Maneuver) -> Self {
        let exits = world.routing.arrives(agent.goal, m.end.cell);
        let mut path = vec![Sweep { cells: m.footprint.clone(), heading: agent.pose.heading, time, end: m.end }];
        if !exits {
            let poses = braking_poses(&world.params, m.end);
            for (k, w) in poses.windows(2).enumerate() {
                let (p, q) = (w[0], w[1]);
                let cells = (0..=q.v).map(|i| p.cell.step(p.heading, i)).collect();
                path.push(Sweep { cells, heading: p.heading, time: time + 1 + k as u64, end: q });
                if world.routing.arrives(agent.goal, q.cell) {
                    break;
                }
            }
        }
        let brake = braking_sweeps(&world.params, m.end);
        let all = || m.footprint.iter().chain(brake.iter().flatten());
        let lo = Coord::new(all().map(|c| c.row).min().unwrap_or(0), all().map(|c| c.col).min().unwrap_or(0));
        let hi = Coord::new(all().map(|c| c.row).max().unwrap_or(0), all().map(|c| c.col).max().unwrap_or(0));
        Candidate { action, maneuver: m, path, exits, brake, lo, hi }
    }

    pub fn end(&self) -> Pose {
        self.maneuver.end
    }
}

/// Global snapshot an oracle reads: the world, the time and every agent.
pub struct Scene<'a> {
    pub world: &'a World,
    pub time: u64,
    pub agents: &'a [AgentState],
    /// Row-major agent index per cell, `u32::MAX` when free.
    occupied: Vec<u32>,
    backups: Vec<Candidate>,
    /// Per intersection, the agents within the zone radius.
    near: Vec<Vec<usize>>,
    perception: Vec<OnceCell<Vec<usize>>>,
    candidates: Vec<OnceCell<Vec<Candidate>>>,
}

impl<'a> Scene<'a> {
    pub fn new(world: &'a World, time: u64, agents: &'a [AgentState]) -> Self {
        let mut occupied = vec![u32::MAX; (world.net.rows * world.net.cols).max(0) as usize];
        for (i, a) in agents.iter().enumerate() {
            if world.net.in_bounds(a.pose.cell) {
                occupied[(a.pose.cell.row * world.net.cols + a.pose.cell.col) as usize] = i as u32;
            }
        }
        let backups = agents
            .iter()
            .map(|a| {
                let bp = backup_plan_action(&world.params, a.pose);
                let m = maneuver(&world.net, &world.params, a.pose, bp)
                    .unwrap_or_else(|_| Maneuver { footprint: vec![a.pose.cell], end: a.pose });
                Candidate::new(world, a, time, bp, m)
            })
            .collect();
        let r = world.zone_radius;
        let near = world
            .net
            .intersections
            .iter()
            .map(|x| {
                let mut v: Vec<usize> = (0..agents.len()).filter(|&j| x.distance(agents[j].pose.cell) <= r).collect();
                v.sort_by_key(|&j| agents[j].pose.cell.row);
                v
            })
            .collect();
        let n = agents.len();
        Scene {
            world,
            time,
            agents,
            occupied,
            backups,
            near,
            perception: (0..n).map(|_| OnceCell::new()).collect(),
            candidates: (0..n).map(|_| OnceCell::new()).collect(),
        }
    }

    pub fn params(&self) -> &AgentParams {
        &self.world.params
    }

    pub fn index_of(&self, c: Coord) -> Option<usize> {
        if !self.world.net.in_bounds(c) {
            return None;
        }
        let k = self.occupied[(c.row * self.world.net.cols + c.col) as usize];
        (k != u32::MAX).then_some(k as usize)
    }

    pub fn backup(&self, i: usize) -> &Candidate {
        &self.backups[i]
    }

    pub fn backups(&self) -> &[Candidate] {
        &self.backups
    }

    /// Every allowable action of agent `i`, computed once per scene.
    pub fn candidates(&self, i: usize) -> &[Candidate] {
        self.candidates[i].get_or_init(|| {
            let a = &self.agents[i];
            allowable_maneuvers(&self.world.net, self.params(), a.pose)
                .into_iter()
                .map(|(act, m)| Candidate::new(self.world, a, self.time, act, m))
                .collect()
        })
    }

    /// Indices of agents inside the translated bubble of `i`.
    pub fn in_bubble(&self, i: usize) -> Vec<usize> {
        let me = self.agents[i].pose;
        let mut out: Vec<usize> = self
            .world
            .bubbles
            .cells(me)
            .filter_map(|c| self.index_of(c))
            .filter(|&j| j != i)
            .collect();
        out.sort_unstable();
        out
    }

    /// `f` holds for every perceived agent standing in the box `lo..=hi`;
    /// members may be visited twice.
    pub fn all_perceived_within(&self, i: usize, lo: Coord, hi: Coord, mut f: impl FnMut(usize) -> bool) -> bool {
        let inside = |c: Coord| c.row >= lo.row && c.row <= hi.row && c.col >= lo.col && c.col <= hi.col;
        let me = self.agents[i].pose;
        for c in self.world.bubbles.cells(me) {
            if let Some(j) = self.index_of(c) {
                if j != i && inside(c) && !f(j) {
                    return false;
                }
            }
        }
        let r = self.world.zone_radius;
        for (x, near) in self.world.net.intersections.iter().zip(&self.near) {
            if x.distance(me.cell) > r {
                continue;
            }
            // `near` is sorted by row.
            let from = near.partition_point(|&j| self.agents[j].pose.cell.row < lo.row);
            for &j in &near[from..] {
                let c = self.agents[j].pose.cell;
                if c.row > hi.row {
                    break;
                }
                if j != i && inside(c) && !f(j) {
                    return false;
                }
            }
        }
        true
    }

    /// Bubble members plus, near an intersection, every agent near it.
    pub fn perception(&self, i: usize) -> &[usize] {
        self.perception[i].get_or_init(|| {
            let mut out = self.in_bubble(i);
            let me = self.agents[i].pose.cell;
            let r = self.world.zone_radius;
            for (x, near) in self.world.net.intersections.iter().zip(&self.near) {
                if x.distance(me) <= r {
                    out.extend(near.iter().copied().filter(|&j| j != i));
                }
            }
            out.sort_unstable();
            out.dedup();
            out
        })
    }
}

/// Braking sweeps of the two poses are disjoint at every common step.
pub fn safe_pair(params: &AgentParams, p: Pose, q: Pose) -> bool {
    sweeps_disjoint(&braking_sweeps(params, p), &braking_sweeps(params, q))
}

/// Step-aligned disjointness; a finished sweep keeps its last cells.
fn sweeps_disjoint(a: &[Vec<Coord>], b: &[Vec<Coord>]) -> bool {
    let n = a.len().max(b.len());
    (0..n).all(|k| {
        let sa = &a[k.min(a.len() - 1)];
        let sb = &b[k.min(b.len() - 1)];
        sa.iter().all(|c| !sb.contains(c))
    })
}

/// Footprints disjoint and, unless one of them leaves the map, safe braking
/// afterwards.
pub fn compatible(_params: &AgentParams, x: &Candidate, y: &Candidate) -> bool {
    let apart = x.hi.row < y.lo.row || y.hi.row < x.lo.row || x.hi.col < y.lo.col || y.hi.col < x.lo.col;
    if apart {
        return true;
    }
    let fx = &x.maneuver.footprint;
    if y.maneuver.footprint.iter().any(|c| fx.contains(c)) {
        return false;
    }
    x.exits || y.exits || sweeps_disjoint(&x.brake, &y.brake)
}

/// Dynamic safety of `x` for agent `i` against the given reference
/// candidates of every perceived agent.
pub fn dynamic_safety<'c>(scene: &Scene, i: usize, x: &Candidate, refs: &dyn Fn(usize) -> Refs<'c>) -> bool {
    // Agents farther than this from the box of `x` cannot touch it.
    let e = scene.world.reach_extent;
    scene.all_perceived_within(i, x.lo.offset(-e, -e), x.hi.offset(e, e), |j| {
        refs(j).into_iter().flatten().all(|r| compatible(scene.params(), x, r))
    })
}

/// Up to three reference actions of one other agent.
pub type Refs<'c> = [Option<&'c Candidate>; 3];

pub fn only(x: &Candidate) -> Refs<'_> {
    [Some(x), None, None]
}

/// Dynamic safety against every perceived agent's backup action.
pub fn safe_against_backups(scene: &Scene, i: usize, x: &Candidate) -> bool {
    dynamic_safety(scene, i, x, &|j| only(scene.backup(j)))
}

fn cluster_of(scene: &Scene, c: Coord) -> Option<IntersectionId> {
    scene.world.net.intersection_of(c)
}

/// Clusters a sweep moves into from outside.
fn entered(scene: &Scene, s: &Sweep) -> Vec<IntersectionId> {
    let start = cluster_of(scene, s.cells[0]);
    let mut out: Vec<IntersectionId> = s.cells.iter().filter_map(|&c| cluster_of(scene, c)).filter(|&id| Some(id) != start).collect();
    out.dedup();
    out
}

fn light_ok(scene: &Scene, agent: &AgentState, steer: Steer, s: &Sweep, first: bool) -> bool {
    entered(scene, s).into_iter().all(|id| {
        scene.world.lights.may_enter(id, s.heading.axis(), s.time)
            || (first && steer == Steer::LeftTurn && agent.waited && scene.world.lights.all_red(id, s.time))
    })
}

/// The agent can leave cluster `id` from `p` at time `t` by accelerating
/// straight before the crossing axis turns green.
pub fn exit_feasible(world: &World, p: Pose, t: u64, id: IntersectionId) -> bool {
    let cross = p.heading.axis().other();
    let mut p = p;
    for k in 0..64 {
        if world.net.intersection_of(p.cell) != Some(id) {
            return true;
        }
        if world.lights.cycles[id].color(cross, t + k) == Color::Green {
            return false;
        }
        let v = (p.v + world.params.a_max).min(world.params.v_max);
        match maneuver(&world.net, &world.params, p, Action::new(v - p.v, Steer::Straight)) {
            Ok(m) if v > 0 => p = m.end,
            _ => return false,
        }
    }
    false
}

fn reach_ok(scene: &Scene, agent: &AgentState, x: &Candidate) -> bool {
    if x.exits {
        return true;
    }
    let r = &scene.world.routing;
    r.reachable(agent.goal, x.end()) && x.path[1..].iter().all(|s| r.arrives(agent.goal, s.end.cell) || r.reachable(agent.goal, s.end))
}

fn progress(scene: &Scene, agent: &AgentState, x: &Candidate) -> (Option<u32>, Option<u32>) {
    let r = &scene.world.routing;
    let before = r.dist(agent.goal, agent.pose.cell, agent.pose.heading);
    let after = if x.exits { Some(0) } else { r.dist(agent.goal, x.end().cell, x.end().heading) };
    (before, after)
}

fn left_turn_safe(scene: &Scene, i: usize, x: &Candidate) -> bool {
    if x.action.steer != Steer::LeftTurn {
        return true;
    }
    let me = &scene.agents[i];
    let l = &x.maneuver.footprint;
    let Some(id) = l.iter().find_map(|&c| cluster_of(scene, c)) else { return true };
    let zone = &scene.world.net.intersections[id];
    scene.agents.iter().enumerate().all(|(j, a)| {
        if j == i || a.pose.heading != me.pose.heading.opposite() || zone.distance(a.pose.cell) > scene.world.zone_radius {
            return true;
        }
        // Two opposing left turns: the lower ID goes first.
        let mut probe = scene.candidates(j).to_vec();
        if me.id < a.id {
            probe.retain(|y| y.action.steer != Steer::LeftTurn);
        }
        !probe.iter().any(|y| {
            light_ok(scene, a, y.action.steer, &y.path[0], true)
                && y.path.iter().take(if y.exits { 1 } else { usize::MAX }).flat_map(|s| &s.cells).any(|c| l.contains(c))
        })
    })
}

/// Evaluates one oracle. Dynamic safety here is judged against every other
/// agent's backup action.
pub fn eval_oracle(kind: OracleKind, scene: &Scene, i: usize, x: &Candidate) -> bool {
    let agent = &scene.agents[i];
    let net = &scene.world.net;
    match kind {
        OracleKind::DynamicSafety => safe_against_backups(scene, i, x),
        OracleKind::StaticSafety => x.path.iter().all(|s| {
            s.cells.iter().all(|&c| net.is_drivable(c)) && (scene.world.routing.arrives(agent.goal, s.end.cell) || !scene.world.routing.touches(agent.goal, &s.cells))
        }),
        OracleKind::UnprotectedLeftTurnSafety => left_turn_safe(scene, i, x),
        OracleKind::TrafficLightLaw => {
            x.path.iter().enumerate().all(|(k, s)| light_ok(scene, agent, x.action.steer, s, k == 0))
        }
        OracleKind::TrafficOrientationLaw => x.path.iter().enumerate().all(|(k, s)| {
            if k == 0 && x.action.steer.is_turn() {
                let (h, d) = (s.heading, x.end().heading);
                let corner = s.cells.iter().rposition(|&c| net.allows(c, h)).unwrap_or(0);
                s.cells.iter().enumerate().all(|(n, &c)| if n <= corner { net.allows(c, h) } else { net.allows(c, d) })
            } else {
                s.cells.iter().all(|&c| net.allows(c, s.heading))
            }
        }),
        OracleKind::IntersectionClearanceLaw => {
            let Some((e, id)) = x.path.iter().enumerate().find_map(|(k, s)| entered(scene, s).first().map(|&id| (k, id))) else {
                return true;
            };
            x.path[e..].iter().all(|s| {
                scene.world.routing.arrives(agent.goal, s.end.cell)
                    || net.intersection_of(s.end.cell) != Some(id)
                    || exit_feasible(scene.world, s.end, s.time + 1, id)
            })
        }
        OracleKind::IntersectionLaneChangeLaw => {
            !x.action.steer.is_lane_change() || x.maneuver.footprint.iter().all(|&c| !net.is_intersection(c))
        }
        OracleKind::DestinationReachability => reach_ok(scene, agent, x),
        OracleKind::ForwardProgress => match progress(scene, agent, x) {
            (Some(b), Some(a)) => a < b,
            (None, Some(_)) => true,
            _ => false,
        },
        OracleKind::MaintainsProgress => {
            let (b, a) = progress(scene, agent, x);
            !x.exits && a == b
        }
    }
}

/// Scores `x`; dynamic safety is skipped when `dyn_ok` is `None`.
pub fn score(profile: &Profile, scene: &Scene, i: usize, x: &Candidate, dyn_ok: Option<&dyn Fn(&Candidate) -> bool>) -> ActionScore {
    let mut bits = 0u16;
    let mut tiers = Vec::with_capacity(profile.tiers.len());
    for tier in &profile.tiers {
        let mut n = 0u8;
        for &k in tier {
            let holds = match (k, dyn_ok) {
                (OracleKind::DynamicSafety, None) => continue,
                (OracleKind::DynamicSafety, Some(f)) => f(x),
                _ => eval_oracle(k, scene, i, x),
            };
            if holds {
                bits |= k.bit();
                n += 1;
            }
        }
        tiers.push(n);
    }
    ActionScore { bits, tiers }
}

/// Deterministic tie-break: larger acceleration first, then steer order.
fn tie_key(a: &Action) -> (i32, Steer) {
    (-a.acc, a.steer)
}

/// Candidates sorted best first.
pub fn rank_actions<'c>(
    profile: &Profile,
    scene: &Scene,
    i: usize,
    candidates: impl IntoIterator<Item = &'c Candidate>,
    dyn_ok: Option<&dyn Fn(&Candidate) -> bool>,
) -> Vec<(&'c Candidate, ActionScore)> {
    let mut scored: Vec<(&Candidate, ActionScore)> =
        candidates.into_iter().map(|x| (x, score(profile, scene, i, x, dyn_ok))).collect();
    scored.sort_by(|(x, sx), (y, sy)| sy.cmp(sx).then_with(|| tie_key(&x.action).cmp(&tie_key(&y.action))));
    scored
}

/// The candidate `rank_actions` would put first, found tier by tier so
/// that later tiers are only scored for candidates still tied.
pub fn best_action<'c>(
    profile: &Profile,
    scene: &Scene,
    i: usize,
    candidates: impl IntoIterator<Item = &'c Candidate>,
    dyn_ok: Option<&dyn Fn(&Candidate) -> bool>,
) -> Option<&'c Candidate> {
    let mut alive: Vec<&Candidate> = candidates.into_iter().collect();
    for tier in &profile.tiers {
        if alive.len() <= 1 {
            break;
        }
        let counts: Vec<usize> = alive
            .iter()
            .map(|x| {
                tier.iter()
                    .filter(|&&k| match (k, dyn_ok) {
                        (OracleKind::DynamicSafety, None) => false,
                        (OracleKind::DynamicSafety, Some(f)) => f(x),
                        _ => eval_oracle(k, scene, i, x),
                    })
                    .count()
            })
            .collect();
        let top = counts.iter().copied().max().unwrap_or(0);
        alive = alive.into_iter().zip(counts).filter(|&(_, n)| n == top).map(|(x, _)| x).collect();
    }
    alive.into_iter().min_by_key(|x| tie_key(&x.action))
}

/// Top-ranked allowable action without dynamic safety.
pub fn intended_action<'s>(profile: &Profile, scene: &'s Scene, i: usize) -> &'s Candidate {
    best_action(profile, scene, i, scene.candidates(i), None).unwrap_or_else(|| scene.backup(i))
}

/// Top-ranked straight action, dynamic safety judged against everyone
/// else's backup action.
pub fn best_straight_action<'s>(profile: &Profile, scene: &'s Scene, i: usize) -> &'s Candidate {
    let straight = scene.candidates(i).iter().filter(|x| x.action.steer == Steer::Straight);
    let f = |x: &Candidate| safe_against_backups(scene, i, x);
    best_action(profile, scene, i, straight, Some(&f)).unwrap_or_else(|| scene.backup(i))
}

/// Tiers one to three hold at the backup action while everyone brakes.
pub fn backup_plan_safe(profile: &Profile, scene: &Scene, i: usize) -> bool {
    let x = scene.backup(i);
    profile.backup_set().into_iter().all(|k| eval_oracle(k, scene, i, x))
}

/// Oracle bits of `x` for diagnostics.
pub fn explain(scene: &Scene, i: usize, x: &Candidate) -> Vec<(OracleKind, bool)> {
    OracleKind::ALL.iter().map(|&k| (k, eval_oracle(k, scene, i, x))).collect()
}
