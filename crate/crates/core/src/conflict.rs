//! Conflict requests for lane changes, the max-yielding flag, conflict
//! clusters and token-based winner resolution.

use crate::dynamics::AgentId;
use crate::oracles::{compatible, Candidate, Scene};
use crate::precedence::at_most;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConflictRequest {
    pub sender: AgentId,
    pub receiver: AgentId,
    pub time: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Sender,
    Receiver,
    Both,
    Neither,
}

impl Role {
    pub fn receives(self) -> bool {
        matches!(self, Role::Receiver | Role::Both)
    }
}

/// Footprints overlap or the pair is left without safe braking.
pub fn in_conflict(scene: &Scene, x: &Candidate, y: &Candidate) -> bool {
    !compatible(scene.params(), x, y)
}

/// A lane change is unsafe for some follower in the target lane even if
/// that follower brakes as hard as it can.
pub fn max_yielding_flag(scene: &Scene, i: usize, x: &Candidate) -> bool {
    if !x.action.steer.is_lane_change() {
        return false;
    }
    let me = scene.agents[i].pose;
    let h = me.heading;
    let lane = h.across(x.end().cell);
    scene.perception(i).iter().any(|&j| {
        let p = scene.agents[j].pose;
        p.heading == h && h.across(p.cell) == lane && h.along(p.cell) <= h.along(me.cell) && !compatible(scene.params(), x, scene.backup(j))
    })
}

/// All six send criteria for a request from `i` to `j`.
pub fn may_send(scene: &Scene, i: usize, j: usize, xi: &Candidate, xj: &Candidate, flag_i: bool) -> bool {
    let (a, b) = (&scene.agents[i], &scene.agents[j]);
    xi.action.steer.is_lane_change()
        && scene.world.bubbles.contains(a.pose, b.pose.cell)
        && at_most(&scene.world.net, b, a)
        && a.pose.heading == b.pose.heading
        && in_conflict(scene, xi, xj)
        && !flag_i
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Clusters {
    /// Per agent: everyone it sent to or received from.
    pub per_agent: BTreeMap<AgentId, BTreeSet<AgentId>>,
    /// Connected components of the request graph, each sorted.
    pub components: Vec<Vec<AgentId>>,
}

pub fn build_clusters(requests: &[ConflictRequest]) -> Clusters {
    let mut per_agent: BTreeMap<AgentId, BTreeSet<AgentId>> = BTreeMap::new();
    for r in requests {
        per_agent.entry(r.sender).or_default().insert(r.receiver);
        per_agent.entry(r.receiver).or_default().insert(r.sender);
    }
    let mut seen = BTreeSet::new();
    let mut components = Vec::new();
    for &start in per_agent.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &v in &per_agent[&u] {
                if seen.insert(v) {
                    comp.push(v);
                    stack.push(v);
                }
            }
        }
        comp.sort_unstable();
        components.push(comp);
    }
    Clusters { per_agent, components }
}

pub fn role(requests: &[ConflictRequest], id: AgentId) -> Role {
    let sent = requests.iter().any(|r| r.sender == id);
    let got = requests.iter().any(|r| r.receiver == id);
    match (sent, got) {
        (true, true) => Role::Both,
        (true, false) => Role::Sender,
        (false, true) => Role::Receiver,
        (false, false) => Role::Neither,
    }
}

/// Winner flags: in each component the agent with most tokens wins, ties
/// to the smaller ID. Agents outside every cluster win vacuously.
pub fn resolve(clusters: &Clusters, tokens: &BTreeMap<AgentId, u32>) -> BTreeMap<AgentId, bool> {
    let mut w = BTreeMap::new();
    for comp in &clusters.components {
        let best = comp.iter().copied().max_by_key(|id| (tokens.get(id).copied().unwrap_or(0), std::cmp::Reverse(*id)));
        for &id in comp {
            w.insert(id, Some(id) == best);
        }
    }
    w
}

pub fn update_tokens(prev: u32, progressed: bool) -> u32 {
    if progressed {
        0
    } else {
        prev + 1
    }
}
