//! Acceptance report: one PASS/FAIL line per criterion plus the measured
//! numbers behind it. Set `ROSE_ACCEPT_STRICT=1` to exit non-zero on FAIL.

mod common;

use common::*;
use rose_core::bubble::compute_bubble;
use rose_core::campaign::{aggregate, run_campaign, run_trial, Aggregate, TrialResult};
use rose_core::config::ScenarioConfig;
use rose_core::dynamics::*;
use rose_core::engine::{build_world, new_agent, RunOptions};
use rose_core::grid::{Coord, Heading};
use rose_core::selection::Choice;
use rose_core::trace::{read_trace_file, replay, TraceRecord, TraceSink};
use rose_core::verify::{brute_force_bubble, check_safety, check_trace, minimality_probe};
use std::collections::BTreeSet;
use std::time::Instant;

/// Per-check failure counts gathered from the step records of a run.
#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    steps: u64,
    p: u64,
    i: u64,
    q: u64,
    forest: u64,
    bubble: u64,
    winner: u64,
    deadlock_steps: u64,
    max_age: u32,
}

impl Tally {
    fn add(&mut self, o: &Tally) {
        self.steps += o.steps;
        self.p += o.p;
        self.i += o.i;
        self.q += o.q;
        self.forest += o.forest;
        self.bubble += o.bubble;
        self.winner += o.winner;
        self.deadlock_steps += o.deadlock_steps;
        self.max_age = self.max_age.max(o.max_age);
    }
}

impl TraceSink for Tally {
    fn record(&mut self, r: &TraceRecord) -> std::io::Result<()> {
        if let TraceRecord::Step(s) = r {
            self.steps += 1;
            match &s.checks {
                Some(c) => {
                    self.p += u64::from(!c.safety_p);
                    self.i += u64::from(!c.invariant_i);
                    self.q += u64::from(!c.collision_q);
                    self.forest += u64::from(!c.polyforest_ok);
                    self.bubble += u64::from(!c.bubble_request_ok);
                    self.winner += u64::from(!c.one_winner_ok);
                    self.deadlock_steps += u64::from(!c.deadlock.is_empty());
                    self.max_age = self.max_age.max(c.progress_ages.values().copied().max().unwrap_or(0));
                }
                // a missing report counts against every check
                None => {
                    self.p += 1;
                    self.q += 1;
                }
            }
        }
        Ok(())
    }
}

struct Campaign {
    name: &'static str,
    agg: Aggregate,
    tally: Tally,
    secs: f64,
}

fn campaign(name: &'static str, trials: u64, steps: Option<u64>) -> Campaign {
    let (mut c, m, w) = shipped(name);
    if let Some(s) = steps {
        c.steps = s;
    }
    let start = Instant::now();
    let mut tally = Tally::default();
    let mut results = Vec::new();
    for k in 0..trials {
        let mut t = Tally::default();
        let seed = c.seed + k;
        let summary = run_trial(&w, &c, &m, seed, RunOptions::default(), &mut t).unwrap();
        tally.add(&t);
        results.push(TrialResult { seed, summary, trace_file: None });
    }
    Campaign { name, agg: aggregate(&results), tally, secs: start.elapsed().as_secs_f64() }
}

fn line(ok: bool, id: u32, what: &str, detail: String) -> bool {
    println!("{} {id} {what}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn c1(maps: &[Campaign]) -> bool {
    let mut ok = true;
    let mut parts = Vec::new();
    for c in maps {
        ok &= c.agg.trials == 100 && c.agg.collisions == 0 && c.agg.backup_faults == 0 && c.agg.precedence_faults == 0;
        ok &= c.secs < 300.0;
        parts.push(format!(
            "{} {} trials, collisions {}, backup faults {}, {:.0}s",
            c.name, c.agg.trials, c.agg.collisions, c.agg.backup_faults, c.secs
        ));
    }
    line(ok, 1, "safety campaign, 100 x 250 steps per map", parts.join("; "))
}

fn c2(all: &Tally) -> bool {
    // independent recomputation from a recorded trace
    let (mut c, m, w) = shipped("small_city");
    c.steps = 120;
    let (records, _) = record(&w, &c, &m);
    let recheck = check_trace(&records).unwrap();
    // the rear agent drives through a standing one
    let cfg = ScenarioConfig::for_map("two.csv".as_ref());
    let w2 = build_world(&cfg, TWO_LANES).unwrap();
    let lead = new_agent(&w2, 1, Pose::new(Coord::new(0, 6), Heading::East, 0), Coord::new(0, 19), 0);
    let rear = new_agent(&w2, 2, Pose::new(Coord::new(0, 3), Heading::East, 2), Coord::new(0, 19), 0);
    let before = vec![lead.clone(), rear.clone()];
    let mut after = before.clone();
    after[1].pose = Pose::new(Coord::new(0, 6), Heading::East, 3);
    let injected = check_safety(&w2, 0, &before, &[Action::stay(), Action::new(1, Steer::Straight)], &after);
    let ok = all.p == 0 && all.i == 0 && all.q == 0 && recheck.all_ok() && !injected.q;
    line(
        ok,
        2,
        "P, I and Q on every step, injected violation detected",
        format!(
            "{} steps checked, P/I/Q failures {}/{}/{}, recomputed trace ok {}, injected Q = {}",
            all.steps, all.p, all.i, all.q, recheck.all_ok(), injected.q
        ),
    )
}

fn c3(ring: &Campaign, maps: &[Campaign]) -> bool {
    let (c, m, w) = shipped("loop");
    let period = w.lights.max_period();
    let bound = 6 * period;
    let sparse = c.max_agents == Some(18);
    let lively = ring.agg.trials == 20 && ring.tally.deadlock_steps == 0 && ring.tally.max_age < bound && ring.agg.collisions == 0;
    // N = M: every ring cell taken
    let mut sat = c.clone();
    sat.spawn_prob = 0.0;
    sat.steps = 150;
    sat.max_agents = Some(20);
    sat.placements = saturated_ring();
    let ws = build_world(&sat, &m).unwrap();
    let (records, summary) = record(&ws, &sat, &m);
    let cycle = records.iter().rev().find_map(|r| if let TraceRecord::Step(s) = r { s.checks.clone() } else { None }).unwrap().deadlock;
    let straight = maps.iter().find(|c| c.name == "straight").unwrap().agg.mean_completion_pct;
    let pct = |n: &str| maps.iter().find(|c| c.name == n).map_or(0.0, |c| c.agg.mean_completion_pct);
    let ok = sparse && lively && summary.stats.deadlock_steps > 0 && cycle.len() == 20 && straight >= 50.0;
    line(
        ok,
        3,
        "liveness on the loop, saturated ring detected, straight completion",
        format!(
            "loop N=18 M=20: 20 x 1000 steps, max progress age {} (< {bound}), deadlock steps {}, completion {:.1}%; N=M ring: {} agents on the wait-for cycle; completion straight {:.1}% / small {:.1}% / large {:.1}% (reference 77% / 36% / 43%)",
            ring.tally.max_age, ring.tally.deadlock_steps, ring.agg.mean_completion_pct, cycle.len(), straight, pct("small_city"), pct("large_city")
        ),
    )
}

fn c4() -> bool {
    let start = Instant::now();
    let mut ok = true;
    let mut cells = Vec::new();
    let mut timed_gaps = 0;
    for v_max in 1..=3 {
        let p = AgentParams { v_max, ..AgentParams::default() };
        for v in 0..=v_max {
            let b: BTreeSet<Coord> = compute_bubble(&p, Pose::new(Coord::new(0, 0), Heading::East, v)).cells;
            let bf = brute_force_bubble(&p, v).unwrap();
            let probe = minimality_probe(&p, v, &b);
            ok &= b == bf && probe.without_witness.is_empty();
            timed_gaps += probe.without_timed_witness.len();
            cells.push(b.len().to_string());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 120.0;
    line(
        ok,
        4,
        "bubble equals brute force, every cell has an interfering witness",
        format!(
            "sizes {} for v_max 1..3, {:.1}s; cells whose witnesses are all safe under the timed braking check: {timed_gaps}",
            cells.join(","),
            secs
        ),
    )
}

fn c5(all: &Tally) -> bool {
    let ok = all.forest == 0 && all.winner == 0 && all.bubble == 0;
    line(
        ok,
        5,
        "polyforest, one winner, requests inside bubbles",
        format!("{} steps: violations {} / {} / {}", all.steps, all.forest, all.winner, all.bubble),
    )
}

fn c6() -> bool {
    let c = fairness_scene();
    let w = build_world(&c, TWO_LANES).unwrap();
    let (records, summary) = record(&w, &c, TWO_LANES);
    // Bound: tokens of the blocked agent grow by one per step, so it out-
    // bids every initial count after that many steps; then receivers brake
    // to rest before the change is safe.
    let others = c.placements[1..].iter().map(|p| p.tokens).max().unwrap_or(0);
    let mut win_by = 0u64;
    while win_by as u32 <= others {
        win_by += 1;
    }
    let p = w.params;
    let mut stop = 0u64;
    let mut v = p.v_max;
    while v > 0 {
        v = p.next_velocity(v, p.a_min);
        stop += 1;
    }
    let k = win_by + stop + 1;
    let mut tokens = Vec::new();
    let mut won = None;
    let mut changed = None;
    for r in &records {
        let TraceRecord::Step(s) = r else { continue };
        let Some(d) = s.decisions.iter().find(|d| d.id == 1) else { break };
        tokens.push(s.agents_before.iter().find(|a| a.id == 1).unwrap().tokens);
        if d.winner && won.is_none() && !s.requests.is_empty() {
            won = Some(s.t);
        }
        if d.choice == Choice::Intended && d.chosen.steer.is_lane_change() {
            changed = Some(s.t);
            break;
        }
    }
    let until = won.map_or(tokens.len(), |t| t as usize + 1);
    let rising = tokens[..until.min(tokens.len())].windows(2).all(|w| w[1] > w[0]);
    let ok = summary.fault.is_none() && rising && won.is_some() && changed.is_some_and(|t| t <= k);
    line(
        ok,
        6,
        "blocked lane changer gains tokens, wins and changes within K",
        format!("tokens {tokens:?}, won at {won:?}, changed at {changed:?}, K = {k}"),
    )
}

fn c7() -> bool {
    let (mut c, m, w) = shipped("small_city");
    c.steps = 120;
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let runs: Vec<Vec<TrialResult>> = dirs
        .iter()
        .zip([1usize, 1, 4])
        .map(|(d, threads)| run_campaign(&w, &c, &m, 4, threads, RunOptions::default(), Some(d.path())).unwrap())
        .collect();
    let mut identical = true;
    let mut replayed = 0;
    for k in 0..4 {
        let bytes: Vec<Vec<u8>> = runs.iter().map(|r| std::fs::read(r[k].trace_file.as_ref().unwrap()).unwrap()).collect();
        identical &= bytes[0] == bytes[1] && bytes[0] == bytes[2];
        let records = read_trace_file(runs[0][k].trace_file.as_ref().unwrap()).unwrap();
        if let Ok(rep) = replay(&records) {
            replayed += u64::from(rep.summary == runs[0][k].summary);
        }
    }
    let ok = identical && replayed == 4;
    line(
        ok,
        7,
        "byte-identical traces serial, repeated and parallel, replay matches",
        format!("4 seeds x 3 runs identical {identical}, replayed {replayed}/4"),
    )
}

fn c8() -> bool {
    let mut ok = true;
    let mut checked = 0;
    for d in 1..=2 {
        for v_max in 0..=6 {
            let p = AgentParams { a_min: -d, a_max: 1, v_min: 0, v_max };
            for v in 0..=v_max {
                let road = OpenRoad { heading: Heading::East };
                let mut pose = Pose::new(Coord::new(0, 0), Heading::East, v);
                while pose.v > 0 {
                    pose = transition(&road, &p, pose, backup_plan_action(&p, pose)).unwrap();
                }
                ok &= p.stopping_distance(v) == pose.cell.col;
                if d == 1 {
                    ok &= p.stopping_distance(v) == v * (v - 1) / 2;
                }
                checked += 1;
            }
        }
    }
    let p = AgentParams::default();
    let strip = Strip { lanes: 1, length: 20 };
    let mut pairs = 0;
    for col in 0..20 {
        for v in p.v_min..=p.v_max {
            let from = Pose::new(Coord::new(0, col), Heading::East, v);
            for acc in p.a_min - 1..=p.a_max + 1 {
                for steer in Steer::ALL {
                    pairs += 1;
                    ok &= (p.v_min..=p.v_max).contains(&p.next_velocity(v, acc));
                    if let Ok(m) = maneuver(&strip, &p, from, Action::new(acc, steer)) {
                        ok &= m.end.v == v + acc && (p.v_min..=p.v_max).contains(&m.end.v);
                        ok &= m.footprint.iter().all(|&c| strip.contains(c));
                    }
                }
            }
        }
    }
    line(ok, 8, "dynamics: stopping distance and clamping", format!("{checked} stopping cases, {pairs} strip state-action pairs"))
}

fn main() {
    let start = Instant::now();
    let maps: Vec<Campaign> = ["straight", "small_city", "large_city"].into_iter().map(|n| campaign(n, 100, Some(250))).collect();
    let ring = campaign("loop", 20, Some(1000));
    let mut all = Tally::default();
    for c in maps.iter().chain(std::iter::once(&ring)) {
        all.add(&c.tally);
    }
    let results = [c1(&maps), c2(&all), c3(&ring, &maps), c4(), c5(&all), c6(), c7(), c8()];
    let passed = results.iter().filter(|&&b| b).count();
    println!("{passed}/{} criteria pass ({:.0}s)", results.len(), start.elapsed().as_secs_f64());
    if passed < results.len() && std::env::var_os("ROSE_ACCEPT_STRICT").is_some() {
        std::process::exit(1);
    }
}
