use proptest::prelude::*;
use rose_core::dynamics::{AgentParams, AgentState, Pose};
use rose_core::grid::{Axis, Coord};
use rose_core::precedence::{build_turn_order, compare, is_polyforest, Relation};
use rose_core::road_network::{normalize, parse_map, LoopSize, MapError, RoadNetwork};
use rose_core::traffic_lights::{Color, LightController, LightSettings};
use rose_core::verify::{check_sparsity, forest_ok};
use std::path::PathBuf;

fn map(name: &str) -> RoadNetwork {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../maps").join(name);
    parse_map(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn shipped_maps_parse_and_round_trip() {
    for name in ["straight.csv", "small_city.csv", "large_city.csv", "loop.csv"] {
        let net = map(name);
        assert!(!net.sources.is_empty() && !net.sinks.is_empty(), "{name}");
        let again = parse_map(&net.serialize()).unwrap();
        assert_eq!(again.serialize(), net.serialize());
        assert_eq!(again.intersections.len(), net.intersections.len());
    }
}

#[test]
fn loop_sizes_and_sparsity() {
    assert_eq!(map("straight.csv").smallest_loop_size(), LoopSize::NoLoop);
    let ring = map("loop.csv");
    assert_eq!(ring.smallest_loop_size(), LoopSize::Cells(20));
    assert!(check_sparsity(Some(18), &ring));
    assert!(!check_sparsity(Some(19), &ring));
    assert!(!check_sparsity(None, &ring));
    assert!(check_sparsity(None, &map("straight.csv")));
    assert!(map("loop.csv").build_dependency_graph().is_cyclic());
    assert!(map("straight.csv").build_dependency_graph().topological_order().is_some());
}

#[test]
fn malformed_maps_are_rejected() {
    assert!(matches!(parse_map(""), Err(MapError::Empty)));
    assert!(matches!(parse_map(">,>\n>\n"), Err(MapError::NonRectangular { .. })));
    assert!(matches!(parse_map(">,x\n"), Err(MapError::UnknownCode { .. })));
    assert!(matches!(parse_map(".,v,.\n>,+,>\n.,v,.\n"), Err(MapError::IntersectionWithoutLight { .. })));
    // comments and blank lines are ignored
    assert_eq!(normalize("# a map\n>,>\n\n"), normalize(">,>\n"));
}

#[test]
fn lights_never_show_green_both_ways() {
    for name in ["small_city.csv", "large_city.csv", "loop.csv"] {
        let net = map(name);
        let lights = LightController::new(&net, &LightSettings::default()).unwrap();
        lights.validate(&AgentParams::default()).unwrap();
        for (id, c) in lights.cycles.iter().enumerate() {
            for t in 0..2 * c.period() as u64 {
                let h = c.color(Axis::Horizontal, t);
                let v = c.color(Axis::Vertical, t);
                assert!(h == Color::Red || v == Color::Red, "{name} #{id} t {t}");
                assert_eq!(h, c.color(Axis::Horizontal, t + c.period() as u64));
            }
        }
    }
}

#[test]
fn short_red_is_rejected() {
    let net = map("loop.csv");
    let s = LightSettings { green_steps: 1, yellow_steps: 0, all_red_steps: Some(1), overrides: vec![] };
    assert!(LightController::new(&net, &s).unwrap().validate(&AgentParams::default()).is_err());
}

fn agents_on(net: &RoadNetwork, picks: &[(usize, i32)]) -> Vec<AgentState> {
    let cells: Vec<_> = net.road_cells().collect();
    let mut out: Vec<AgentState> = Vec::new();
    for &(k, v) in picks {
        let (c, h) = cells[k % cells.len()];
        if out.iter().any(|a| a.pose.cell == c) {
            continue;
        }
        let id = out.len() as u32 + 1;
        out.push(AgentState { id, pose: Pose::new(c, h, v), goal: net.sinks[0], tokens: 0, plan: vec![], bundle: None, waited: false });
    }
    out
}

proptest! {
    #[test]
    fn turn_order_is_a_polyforest(picks in prop::collection::vec((0..5000usize, 0..=3i32), 1..60)) {
        let net = map("small_city.csv");
        let agents = agents_on(&net, &picks);
        let f = build_turn_order(&net, &agents).unwrap();
        prop_assert!(is_polyforest(f.classes.len(), &f.edges));
        prop_assert!(forest_ok(&f, &agents, &net));
        let mut ids: Vec<u32> = f.classes.iter().flatten().copied().collect();
        ids.sort_unstable();
        prop_assert_eq!(ids, agents.iter().map(|a| a.id).collect::<Vec<_>>());
        // an edge runs from a class to the next higher one
        for &(lo, hi) in &f.edges {
            let a = agents.iter().find(|a| a.id == f.classes[lo][0]).unwrap();
            let b = agents.iter().find(|a| a.id == f.classes[hi][0]).unwrap();
            prop_assert_eq!(compare(&net, b, a), Relation::Higher);
        }
    }

    #[test]
    fn precedence_is_antisymmetric(picks in prop::collection::vec((0..5000usize, 0..=3i32), 2..20)) {
        let net = map("large_city.csv");
        let agents = agents_on(&net, &picks);
        for a in &agents {
            for b in &agents {
                let ab = compare(&net, a, b);
                let ba = compare(&net, b, a);
                let flipped = match ab {
                    Relation::Higher => Relation::Lower,
                    Relation::Lower => Relation::Higher,
                    r => r,
                };
                prop_assert_eq!(ba, flipped);
            }
        }
    }
}

#[test]
fn query_helpers_agree() {
    let net = map("small_city.csv");
    for (c, h) in net.road_cells() {
        assert!(net.allows(c, h));
        assert!(net.is_drivable(c));
        assert!(!net.is_intersection(c));
        assert!(net.bundle_of(c).is_ok());
    }
    assert!(net.bundle_of(Coord::new(-1, -1)).is_err());
}
