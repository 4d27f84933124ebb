//! The quasi-simultaneous step loop.
//!
//! Each step: check backup safety, compute every intention against one
//! snapshot, collect conflict requests and resolve them, then let agents
//! choose in turn-order forest order (a precedence class at once), apply
//! all transitions, update tokens, despawn arrivals, spawn at sources and
//! advance time.

use crate::config::{ConfigError, ScenarioConfig};
use crate::conflict::{build_clusters, max_yielding_flag, may_send, resolve, role, update_tokens, ConflictRequest};
use crate::dynamics::{AgentId, AgentState, Pose};
use crate::oracles::{
    backup_plan_safe, best_straight_action, compatible, dynamic_safety, eval_oracle, explain, intended_action, only, rank_actions,
    Candidate, OracleKind, Profile, Refs, Scene,
};
use crate::precedence::build_turn_order;
use crate::road_network::{parse_map, RoadNetwork};
use crate::selection::{possible_choices, select_action, Choice, SelectionInput};
use crate::trace::{CheckReport, Decision, Explained, Header, StepRecord, Stats, Summary, TraceRecord, TraceSink, TRACE_VERSION};
use crate::traffic_lights::Color;
use crate::verify;
use crate::world::World;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Fault {
    Collision { time: u64, agents: Vec<AgentId> },
    BackupSafety { time: u64, agents: Vec<AgentId> },
    PrecedenceCycle { time: u64 },
}

impl Fault {
    pub fn exit_code(&self) -> i32 {
        match self {
            Fault::Collision { .. } => 2,
            Fault::BackupSafety { .. } => 3,
            Fault::PrecedenceCycle { .. } => 4,
        }
    }
}

pub const CONFIG_ERROR_EXIT: i32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Skip the per-step invariant checks.
    pub no_checks: bool,
    pub explain_agent: Option<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameState {
    pub time: u64,
    /// Sorted by ID.
    pub agents: Vec<AgentState>,
    pub next_id: AgentId,
}

/// Post-step state of agent `i` after executing `x`.
pub fn advance_agent(scene: &Scene, i: usize, x: &Candidate) -> AgentState {
    let world = scene.world;
    let a = &scene.agents[i];
    let mut b = a.clone();
    let p = x.end();
    b.pose = p;
    b.tokens = update_tokens(a.tokens, eval_oracle(OracleKind::ForwardProgress, scene, i, x));
    if let Ok(bundle) = world.net.bundle_of(p.cell) {
        b.bundle = Some(bundle);
    }
    if p.cell != a.pose.cell {
        b.waited = false;
    }
    if p.v == 0 && world.net.is_road_with(p.cell, p.heading) {
        if let Some(id) = world.net.intersection_of(p.cell.step(p.heading, 1)) {
            if world.lights.cycles[id].color(p.heading.axis(), scene.time + 1) != Color::Red {
                b.waited = true;
            }
        }
    }
    b.plan = world.routing.plan_route(p.cell, p.heading, a.goal).unwrap_or_else(|_| vec![a.goal]);
    b
}

/// Every allowable action of agent `i`, best first, with the oracles it
/// satisfies and its tier counts.
pub fn explain_rows(profile: &Profile, scene: &Scene, i: usize) -> Vec<Explained> {
    rank_actions(profile, scene, i, scene.candidates(i), None)
        .into_iter()
        .map(|(y, s)| Explained {
            action: y.action,
            satisfied: explain(scene, i, &y).into_iter().filter(|(_, b)| *b).map(|(k, _)| k).collect(),
            tiers: s.tiers,
        })
        .collect()
}

pub fn new_agent(world: &World, id: AgentId, pose: Pose, goal: crate::grid::Coord, tokens: u32) -> AgentState {
    AgentState {
        id,
        pose,
        goal,
        tokens,
        plan: world.routing.plan_route(pose.cell, pose.heading, goal).unwrap_or_else(|_| vec![goal]),
        bundle: world.net.bundle_of(pose.cell).ok(),
        waited: false,
    }
}

/// Builds the shared world for a config and its map text.
pub fn build_world(config: &ScenarioConfig, map_csv: &str) -> Result<World, ConfigError> {
    let net: RoadNetwork = parse_map(map_csv)?;
    let goals: Vec<_> = config.placements.iter().map(|p| p.goal()).collect();
    let world = World::new(net, config.agent, &config.lights, &goals)?;
    world.lights.validate(&world.params)?;
    Ok(world)
}

pub struct Simulation<'w> {
    pub world: &'w World,
    pub config: ScenarioConfig,
    pub state: GameState,
    pub profile: Profile,
    pub options: RunOptions,
    rngs: Vec<ChaCha8Rng>,
    stats: Stats,
    deadlock_window: u32,
}

impl<'w> Simulation<'w> {
    pub fn new(world: &'w World, config: ScenarioConfig, options: RunOptions) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut agents = Vec::new();
        for (k, p) in config.placements.iter().enumerate() {
            let pose = Pose::new(p.cell(), p.heading, p.v);
            let bad = |m: &str| ConfigError::Invalid(format!("placement {k} at {}: {m}", p.cell()));
            if !world.net.allows(pose.cell, pose.heading) {
                return Err(bad("cell is not drivable with that heading"));
            }
            if agents.iter().any(|a: &AgentState| a.pose.cell == pose.cell) {
                return Err(bad("cell already occupied"));
            }
            agents.push(new_agent(world, k as AgentId + 1, pose, p.goal(), p.tokens));
        }
        let scene = Scene::new(world, 0, &agents);
        let profile = Profile::default();
        for i in 0..agents.len() {
            if !backup_plan_safe(&profile, &scene, i) {
                return Err(ConfigError::Invalid(format!("placement {i} has no safe backup plan")));
            }
        }
        let rngs = world
            .net
            .sources
            .iter()
            .enumerate()
            .map(|(k, _)| {
                let mut r = ChaCha8Rng::seed_from_u64(config.seed);
                r.set_stream(k as u64);
                r
            })
            .collect();
        let stats = Stats { spawned: agents.len() as u64, ..Stats::default() };
        let next_id = agents.len() as AgentId + 1;
        Ok(Simulation {
            world,
            state: GameState { time: 0, agents, next_id },
            profile,
            options,
            rngs,
            stats,
            deadlock_window: verify::deadlock_window(world),
            config,
        })
    }

    pub fn header(&self, map_csv: &str) -> Header {
        Header {
            version: TRACE_VERSION.to_string(),
            map_csv: map_csv.to_string(),
            config: self.config.clone(),
            seed: self.config.seed,
            initial_agents: self.state.agents.clone(),
        }
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    /// Executes one step. A fault stops the step after recording it.
    pub fn step(&mut self) -> (StepRecord, Option<Fault>) {
        let world = self.world;
        let t = self.state.time;
        let checks = !self.options.no_checks;
        let agents = self.state.agents.clone();
        let n = agents.len();
        let scene = Scene::new(world, t, &agents);
        let mut report = CheckReport::default();
        let mut record = StepRecord {
            t,
            agents_before: agents.clone(),
            decisions: Vec::new(),
            requests: Vec::new(),
            clusters: Vec::new(),
            forest: Default::default(),
            tokens: BTreeMap::new(),
            despawned: Vec::new(),
            spawned: Vec::new(),
            checks: None,
        };

        if checks {
            let unsafe_agents: Vec<AgentId> =
                (0..n).filter(|&i| !backup_plan_safe(&self.profile, &scene, i)).map(|i| agents[i].id).collect();
            report.safety_p = unsafe_agents.is_empty();
            if !report.safety_p {
                record.checks = Some(report);
                return (record, Some(Fault::BackupSafety { time: t, agents: unsafe_agents }));
            }
        }

        let intended: Vec<&Candidate> = (0..n).map(|i| intended_action(&self.profile, &scene, i)).collect();
        let straight: Vec<&Candidate> = (0..n).map(|i| best_straight_action(&self.profile, &scene, i)).collect();
        let flags: Vec<bool> = (0..n).map(|i| max_yielding_flag(&scene, i, &intended[i])).collect();

        let mut requests = Vec::new();
        for i in 0..n {
            if !intended[i].action.steer.is_lane_change() {
                continue;
            }
            for &j in scene.perception(i) {
                if may_send(&scene, i, j, &intended[i], &intended[j], flags[i]) {
                    requests.push(ConflictRequest { sender: agents[i].id, receiver: agents[j].id, time: t });
                }
            }
        }
        let clusters = build_clusters(&requests);
        let tokens: BTreeMap<AgentId, u32> = agents.iter().map(|a| (a.id, a.tokens)).collect();
        let winners = resolve(&clusters, &tokens);

        let forest = match build_turn_order(&world.net, &agents) {
            Ok(f) => f,
            Err(_) => {
                report.polyforest_ok = false;
                record.checks = checks.then_some(report);
                return (record, Some(Fault::PrecedenceCycle { time: t }));
            }
        };
        let index: BTreeMap<AgentId, usize> = agents.iter().enumerate().map(|(i, a)| (a.id, i)).collect();

        let partial: Vec<SelectionInput> = (0..n)
            .map(|i| {
                let id = agents[i].id;
                SelectionInput {
                    intended_is_lane_change: intended[i].action.steer.is_lane_change(),
                    role: role(&requests, id),
                    winner: winners.get(&id).copied().unwrap_or(true),
                    flag: flags[i],
                    intended_safe: false,
                    straight_safe: false,
                }
            })
            .collect();
        let mut committed: Vec<Option<Candidate>> = vec![None; n];
        let mut decisions: Vec<Option<Decision>> = vec![None; n];
        for &c in &forest.order {
            let members: Vec<usize> = forest.classes[c].iter().map(|id| index[id]).collect();
            let mut chosen = Vec::with_capacity(members.len());
            // what each class member could still end up doing
            let options: BTreeMap<usize, Vec<Choice>> = members.iter().map(|&j| (j, possible_choices(&partial[j]))).collect();
            for &i in &members {
                let refs = |j: usize| -> Refs {
                    if let Some(x) = &committed[j] {
                        only(x)
                    } else if let Some(cs) = options.get(&j) {
                        let mut r: Refs = [None; 3];
                        for (k, c) in cs.iter().enumerate() {
                            r[k] = Some(match c {
                                Choice::Intended => &intended[j],
                                Choice::Straight => &straight[j],
                                Choice::Backup => scene.backup(j),
                            });
                        }
                        r
                    } else {
                        only(scene.backup(j))
                    }
                };
                let id = agents[i].id;
                let input = SelectionInput {
                    intended_safe: dynamic_safety(&scene, i, &intended[i], &refs),
                    straight_safe: dynamic_safety(&scene, i, &straight[i], &refs),
                    ..partial[i]
                };
                let (choice, branch) = select_action(&input);
                let x = match choice {
                    Choice::Intended => intended[i].clone(),
                    Choice::Straight => straight[i].clone(),
                    Choice::Backup => scene.backup(i).clone(),
                };
                let explain_rows = (self.options.explain_agent == Some(id)).then(|| explain_rows(&self.profile, &scene, i));
                decisions[i] = Some(Decision {
                    id,
                    intended: intended[i].action,
                    best_straight: straight[i].action,
                    backup: scene.backup(i).action,
                    chosen: x.action,
                    choice,
                    branch,
                    role: input.role,
                    winner: input.winner,
                    flag: input.flag,
                    explain: explain_rows,
                });
                chosen.push((i, x));
            }
            for (i, x) in chosen {
                committed[i] = Some(x);
            }
        }
        let chosen: Vec<Candidate> = committed.into_iter().map(|x| x.expect("every agent decides")).collect();

        record.decisions = decisions.into_iter().flatten().collect();
        record.clusters = clusters.components.clone();
        record.forest = forest.clone();

        if checks {
            let overlapping = verify::overlapping_pairs(&chosen);
            report.collision_q = overlapping.is_empty();
            report.polyforest_ok = verify::forest_ok(&forest, &agents, &world.net);
            report.bubble_request_ok = verify::requests_in_bubbles(world, &agents, &requests);
            report.one_winner_ok = verify::one_winner(&clusters, &winners);
            if !report.collision_q {
                record.requests = requests;
                record.checks = Some(report);
                let ids: BTreeSet<AgentId> = overlapping.iter().flat_map(|&(a, b)| [agents[a].id, agents[b].id]).collect();
                return (record, Some(Fault::Collision { time: t, agents: ids.into_iter().collect() }));
            }
        }
        record.requests = requests;

        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let b = advance_agent(&scene, i, &chosen[i]);
            if world.routing.arrives(agents[i].goal, b.pose.cell) {
                record.despawned.push(b.id);
                self.stats.completed += 1;
            } else {
                next.push(b);
            }
        }
        let mut fault = None;
        if checks {
            let after = Scene::new(world, t + 1, &next);
            let bad: Vec<AgentId> =
                (0..next.len()).filter(|&i| !backup_plan_safe(&self.profile, &after, i)).map(|i| next[i].id).collect();
            report.invariant_i = report.collision_q && bad.is_empty();
            if !bad.is_empty() {
                fault = Some(Fault::BackupSafety { time: t + 1, agents: bad });
            }
        }
        if fault.is_none() {
            record.spawned = self.spawn(&mut next, t + 1);
        }
        record.tokens = next.iter().map(|a| (a.id, a.tokens)).collect();
        for a in &next {
            self.stats.max_tokens = self.stats.max_tokens.max(a.tokens);
        }
        if checks {
            report.progress_ages = record.tokens.clone();
            report.deadlock = verify::detect_deadlock(world, &next, self.deadlock_window);
            self.stats.max_progress_age = self.stats.max_progress_age.max(record.tokens.values().copied().max().unwrap_or(0));
            if !report.deadlock.is_empty() {
                self.stats.deadlock_steps += 1;
            }
            if !report.all_ok() {
                self.stats.check_failures += 1;
            }
            record.checks = Some(report);
        }
        self.state.agents = next;
        self.state.time = t + 1;
        self.stats.steps = self.state.time;
        (record, fault)
    }

    /// One draw per source; spawn at rest when the source is free and every
    /// agent keeps a safe backup plan. Backups do not depend on other
    /// agents, so the newcomer is checked pairwise against the others'
    /// backups and alone for the oracles that ignore other agents.
    fn spawn(&mut self, agents: &mut Vec<AgentState>, time: u64) -> Vec<AgentState> {
        let world = self.world;
        let mut out = Vec::new();
        let mut backups: Option<Vec<Candidate>> = None;
        for (k, &src) in world.net.sources.iter().enumerate() {
            let draw: f64 = self.rngs[k].gen();
            if draw >= self.config.spawn_prob {
                continue;
            }
            if self.config.max_agents.is_some_and(|cap| agents.len() >= cap) {
                continue;
            }
            let Some(h) = world.net.road_heading(src) else { continue };
            let pose = Pose::new(src, h, 0);
            let goals: Vec<_> = world.net.sinks.iter().copied().filter(|&g| world.routing.reachable(g, pose)).collect();
            if goals.is_empty() {
                continue;
            }
            let goal = goals[self.rngs[k].gen_range(0..goals.len())];
            let fresh = new_agent(world, self.state.next_id, pose, goal, 0);
            let alone = std::slice::from_ref(&fresh);
            let scene = Scene::new(world, time, alone);
            let mine = scene.backup(0);
            let others = backups.get_or_insert_with(|| Scene::new(world, time, agents).backups().to_vec());
            let ok = others.iter().all(|b| compatible(&world.params, mine, b)) && backup_plan_safe(&self.profile, &scene, 0);
            if ok {
                others.push(mine.clone());
                self.state.next_id += 1;
                agents.push(fresh.clone());
                out.push(fresh);
                self.stats.spawned += 1;
            }
        }
        out
    }

    fn summary(&mut self, fault: Option<Fault>) -> Summary {
        let s = &mut self.stats;
        s.completion_pct = if s.spawned == 0 { 0.0 } else { 100.0 * s.completed as f64 / s.spawned as f64 };
        Summary { final_agents: self.state.agents.clone(), stats: s.clone(), fault }
    }

    /// Runs to the configured step count or the first fault.
    pub fn run(&mut self, map_csv: &str, sink: &mut dyn TraceSink) -> std::io::Result<Summary> {
        sink.record(&TraceRecord::Header(self.header(map_csv)))?;
        let mut fault = None;
        while self.state.time < self.config.steps {
            let (rec, f) = self.step();
            sink.record(&TraceRecord::Step(rec))?;
            log::debug!("step {} done", self.state.time);
            if f.is_some() {
                log::warn!("fault: {f:?}");
                fault = f;
                break;
            }
        }
        let s = self.summary(fault);
        sink.record(&TraceRecord::Summary(s.clone()))?;
        Ok(s)
    }
}
