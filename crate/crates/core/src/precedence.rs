//! Local precedence between agents and the turn-order forest built from it.
//!
//! Agents in one bundle are ordered by their projection on the bundle's
//! travel axis; equal projections are equivalent and act together. Agents
//! in different bundles are incomparable.

use crate::dynamics::{AgentId, AgentState};
use crate::road_network::{BundleId, RoadNetwork};
use petgraph::graph::{DiGraph, UnGraph};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Higher,
    Lower,
    Equivalent,
    Incomparable,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrecedenceError {
    #[error("turn-order graph is not a polyforest over {0} classes")]
    NotPolyforest(usize),
}

/// Bundle used for precedence: the current lane's bundle, or the bundle
/// driven before entering an intersection.
pub fn precedence_bundle(net: &RoadNetwork, a: &AgentState) -> Option<BundleId> {
    net.bundle_of(a.pose.cell).ok().or(a.bundle)
}

fn key(net: &RoadNetwork, a: &AgentState) -> Option<(BundleId, i32)> {
    let b = precedence_bundle(net, a)?;
    Some((b, net.bundles[b].heading.along(a.pose.cell)))
}

/// Precedence of `a` relative to `b`.
pub fn compare(net: &RoadNetwork, a: &AgentState, b: &AgentState) -> Relation {
    match (key(net, a), key(net, b)) {
        (Some((ba, pa)), Some((bb, pb))) if ba == bb => match pa.cmp(&pb) {
            std::cmp::Ordering::Greater => Relation::Higher,
            std::cmp::Ordering::Less => Relation::Lower,
            std::cmp::Ordering::Equal => Relation::Equivalent,
        },
        _ => Relation::Incomparable,
    }
}

/// `b` has equal or lower precedence than `a`.
pub fn at_most(net: &RoadNetwork, b: &AgentState, a: &AgentState) -> bool {
    matches!(compare(net, b, a), Relation::Lower | Relation::Equivalent)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TurnOrderForest {
    /// Equivalence classes, members sorted by ID.
    pub classes: Vec<Vec<AgentId>>,
    /// Edges from a class to the next higher class of the same bundle.
    pub edges: Vec<(usize, usize)>,
    /// Class indices in processing order.
    pub order: Vec<usize>,
}

/// Directed acyclic and acyclic as an undirected graph.
pub fn is_polyforest(nodes: usize, edges: &[(usize, usize)]) -> bool {
    let mut d = DiGraph::<(), ()>::new();
    let mut u = UnGraph::<(), ()>::new_undirected();
    for _ in 0..nodes {
        d.add_node(());
        u.add_node(());
    }
    for &(a, b) in edges {
        if a >= nodes || b >= nodes {
            return false;
        }
        d.add_edge((a as u32).into(), (b as u32).into(), ());
        u.add_edge((a as u32).into(), (b as u32).into(), ());
    }
    !petgraph::algo::is_cyclic_directed(&d) && !petgraph::algo::is_cyclic_undirected(&u)
}

pub fn build_turn_order(net: &RoadNetwork, agents: &[AgentState]) -> Result<TurnOrderForest, PrecedenceError> {
    // bundle -> projection -> members
    let mut trees: BTreeMap<Option<BundleId>, BTreeMap<i32, Vec<AgentId>>> = BTreeMap::new();
    let mut loose = Vec::new();
    for a in agents {
        match key(net, a) {
            Some((b, p)) => trees.entry(Some(b)).or_default().entry(p).or_default().push(a.id),
            None => loose.push(a.id),
        }
    }
    let mut chains: Vec<Vec<Vec<AgentId>>> = trees
        .into_values()
        .map(|by_proj| by_proj.into_values().rev().map(|mut m| { m.sort_unstable(); m }).collect())
        .collect();
    chains.extend(loose.into_iter().map(|id| vec![vec![id]]));
    chains.sort_by_key(|c| c.iter().flatten().min().copied());
    let mut classes = Vec::new();
    let mut edges = Vec::new();
    for chain in chains {
        let base = classes.len();
        for (k, members) in chain.into_iter().enumerate() {
            if k > 0 {
                edges.push((base + k, base + k - 1));
            }
            classes.push(members);
        }
    }
    if !is_polyforest(classes.len(), &edges) {
        return Err(PrecedenceError::NotPolyforest(classes.len()));
    }
    let order = (0..classes.len()).collect();
    Ok(TurnOrderForest { classes, edges, order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Pose;
    use crate::grid::{Coord, Heading};
    use crate::road_network::parse_map;

    fn agent(id: AgentId, r: i32, c: i32, h: Heading) -> AgentState {
        AgentState { id, pose: Pose::new(Coord::new(r, c), h, 0), goal: Coord::new(r, 0), tokens: 0, plan: vec![], bundle: None, waited: false }
    }

    #[test]
    fn chain_and_classes() {
        let net = parse_map(">,>,>,>,>,>,>,>\n>,>,>,>,>,>,>,>\n.,.,.,.,.,.,.,.\n<,<,<,<,<,<,<,<\n").unwrap();
        let e = Heading::East;
        let agents = vec![agent(1, 0, 3, e), agent(2, 0, 7, e), agent(3, 1, 3, e), agent(4, 3, 2, Heading::West)];
        assert_eq!(compare(&net, &agents[1], &agents[0]), Relation::Higher);
        assert_eq!(compare(&net, &agents[0], &agents[2]), Relation::Equivalent);
        assert_eq!(compare(&net, &agents[0], &agents[3]), Relation::Incomparable);
        let f = build_turn_order(&net, &agents).unwrap();
        assert_eq!(f.classes, vec![vec![2], vec![1, 3], vec![4]]);
        assert_eq!(f.edges, vec![(1, 0)]);
    }

    #[test]
    fn polyforest_detection() {
        assert!(is_polyforest(3, &[(0, 1), (2, 1)]));
        assert!(!is_polyforest(2, &[(0, 1), (1, 0)]));
        assert!(!is_polyforest(3, &[(0, 1), (1, 2), (0, 2)]));
    }
}
