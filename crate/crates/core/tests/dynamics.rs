use proptest::prelude::*;
use rose_core::dynamics::*;
use rose_core::grid::{Coord, Heading};

fn params() -> impl Strategy<Value = AgentParams> {
    (1..=3i32, 0..=3i32, 0..=4i32).prop_map(|(d, a_max, v_max)| AgentParams { a_min: -d, a_max, v_min: 0, v_max })
}

fn iterated_stop(p: &AgentParams, v: i32) -> i32 {
    let mut pose = Pose::new(Coord::new(0, 0), Heading::East, v);
    let road = OpenRoad { heading: Heading::East };
    while pose.v > 0 {
        pose = transition(&road, p, pose, backup_plan_action(p, pose)).unwrap();
    }
    pose.cell.col
}

#[test]
fn stopping_distance_matches_simulation() {
    for d in 1..=2 {
        for v_max in 0..=6 {
            let p = AgentParams { a_min: -d, a_max: 1, v_min: 0, v_max };
            for v in 0..=v_max {
                assert_eq!(p.stopping_distance(v), iterated_stop(&p, v), "a_min {} v {v}", -d);
                if d == 1 {
                    assert_eq!(p.stopping_distance(v), v * (v - 1) / 2);
                }
            }
        }
    }
}

#[test]
fn clamping_on_a_strip() {
    let p = AgentParams::default();
    let strip = Strip { lanes: 1, length: 20 };
    for col in 0..20 {
        for v in p.v_min..=p.v_max {
            let from = Pose::new(Coord::new(0, col), Heading::East, v);
            for acc in p.a_min - 1..=p.a_max + 1 {
                for steer in Steer::ALL {
                    let a = Action::new(acc, steer);
                    assert!((p.v_min..=p.v_max).contains(&p.next_velocity(v, acc)));
                    if let Ok(m) = maneuver(&strip, &p, from, a) {
                        assert_eq!(m.end.v, v + acc);
                        assert!(m.footprint.iter().all(|&c| strip.contains(c)));
                        assert!(allowable_actions(&strip, &p, from).contains(&a));
                    }
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn footprints_are_connected_and_contain_both_ends(p in params(), v in 0..=4i32, h in 0..4usize) {
        prop_assume!(v <= p.v_max);
        let heading = Heading::ALL[h];
        let road = OpenRoad { heading };
        let from = Pose::new(Coord::new(50, 50), heading, v);
        for (a, m) in allowable_maneuvers(&road, &p, from) {
            prop_assert!(m.footprint.contains(&from.cell));
            prop_assert!(m.footprint.contains(&m.end.cell));
            prop_assert_eq!(m.end.v, v + a.acc);
            prop_assert!(a.acc >= p.a_min && a.acc <= p.a_max);
            // every cell touches another one, so the sweep is one piece
            if m.footprint.len() > 1 {
                for c in &m.footprint {
                    prop_assert!(m.footprint.iter().any(|d| d != c && c.chebyshev(*d) == 1));
                }
            }
            if a.steer.is_lane_change() || a.steer.is_turn() {
                prop_assert!(m.end.v >= 1);
            }
        }
    }

    #[test]
    fn braking_ends_at_rest(p in params(), v in 0..=4i32) {
        prop_assume!(v <= p.v_max);
        let from = Pose::new(Coord::new(0, 0), Heading::South, v);
        let poses = braking_poses(&p, from);
        prop_assert_eq!(poses.last().unwrap().v, 0);
        prop_assert_eq!(poses.len() as i32 - 1, p.stopping_steps(v));
        let sweeps = braking_sweeps(&p, from);
        prop_assert_eq!(sweeps.last().unwrap(), &vec![poses.last().unwrap().cell]);
        prop_assert!(poses.windows(2).all(|w| w[1].v < w[0].v));
    }

    #[test]
    fn backup_action_is_allowable(p in params(), v in 0..=4i32) {
        prop_assume!(v <= p.v_max);
        let road = OpenRoad { heading: Heading::West };
        let from = Pose::new(Coord::new(3, 3), Heading::West, v);
        let a = backup_plan_action(&p, from);
        prop_assert!(allowable_actions(&road, &p, from).contains(&a));
        prop_assert_eq!(a.steer, Steer::Straight);
    }
}
