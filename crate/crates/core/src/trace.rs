//! Newline-delimited JSON traces: a header, one record per step and a
//! summary. Files ending in `.gz` are gzip-compressed. Replay re-applies
//! the recorded actions and compares every recorded state.

use crate::config::ScenarioConfig;
use crate::conflict::{ConflictRequest, Role};
use crate::dynamics::{maneuver, Action, AgentId, AgentState};
use crate::engine::{advance_agent, Fault};
use crate::oracles::{Candidate, OracleKind, Scene};
use crate::precedence::TurnOrderForest;
use crate::road_network::parse_map;
use crate::selection::{Branch, Choice};
use crate::world::World;
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const TRACE_VERSION: &str = "rose-trace/1";

/// Integer-keyed maps as `[[id, value], ...]`: JSON object keys are
/// strings, which tagged records cannot turn back into integers.
mod id_pairs {
    use crate::dynamics::AgentId;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(m: &BTreeMap<AgentId, u32>, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<(AgentId, u32)> = m.iter().map(|(&k, &v)| (k, v)).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<AgentId, u32>, D::Error> {
        Ok(Vec::<(AgentId, u32)>::deserialize(d)?.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TraceRecord {
    Header(Header),
    Step(StepRecord),
    Summary(Summary),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: String,
    pub map_csv: String,
    pub config: ScenarioConfig,
    pub seed: u64,
    pub initial_agents: Vec<AgentState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explained {
    pub action: Action,
    pub satisfied: Vec<OracleKind>,
    pub tiers: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub id: AgentId,
    pub intended: Action,
    pub best_straight: Action,
    pub backup: Action,
    pub chosen: Action,
    pub choice: Choice,
    pub branch: Branch,
    pub role: Role,
    pub winner: bool,
    pub flag: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explain: Option<Vec<Explained>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CheckReport {
    pub safety_p: bool,
    pub invariant_i: bool,
    pub collision_q: bool,
    pub polyforest_ok: bool,
    pub bubble_request_ok: bool,
    pub one_winner_ok: bool,
    pub deadlock: Vec<AgentId>,
    #[serde(with = "id_pairs")]
    pub progress_ages: BTreeMap<AgentId, u32>,
}

impl CheckReport {
    pub fn all_ok(&self) -> bool {
        self.safety_p && self.invariant_i && self.collision_q && self.polyforest_ok && self.bubble_request_ok && self.one_winner_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub agents_before: Vec<AgentState>,
    pub decisions: Vec<Decision>,
    pub requests: Vec<ConflictRequest>,
    pub clusters: Vec<Vec<AgentId>>,
    pub forest: TurnOrderForest,
    #[serde(with = "id_pairs")]
    pub tokens: BTreeMap<AgentId, u32>,
    pub despawned: Vec<AgentId>,
    pub spawned: Vec<AgentState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<CheckReport>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub steps: u64,
    pub spawned: u64,
    pub completed: u64,
    pub completion_pct: f64,
    pub max_tokens: u32,
    pub max_progress_age: u32,
    pub deadlock_steps: u64,
    pub check_failures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub final_agents: Vec<AgentState>,
    pub stats: Stats,
    pub fault: Option<Fault>,
}

pub trait TraceSink {
    fn record(&mut self, r: &TraceRecord) -> std::io::Result<()>;
}

/// Keeps nothing; for runs where only the summary matters.
pub struct Discard;

impl TraceSink for Discard {
    fn record(&mut self, _: &TraceRecord) -> std::io::Result<()> {
        Ok(())
    }
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, r: &TraceRecord) -> std::io::Result<()> {
        self.push(r.clone());
        Ok(())
    }
}

/// NDJSON writer over any byte sink.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        TraceWriter { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> TraceSink for TraceWriter<W> {
    fn record(&mut self, r: &TraceRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, r)?;
        self.out.write_all(b"\n")
    }
}

/// Opens a trace file for writing; gzip when the name ends in `.gz`.
pub fn create_trace_file(path: &Path) -> std::io::Result<TraceWriter<Box<dyn Write + Send>>> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let out: Box<dyn Write + Send> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzEncoder::new(f, flate2::Compression::default()))
    } else {
        Box::new(f)
    };
    Ok(TraceWriter::new(out))
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error("trace version {found} does not match {expected}")]
    Version { found: String, expected: &'static str },
    #[error("trace ends without a summary record")]
    Truncated,
    #[error("replay diverged at step {t}: {msg}")]
    Divergence { t: u64, msg: String },
}

pub fn parse_trace(reader: impl Read) -> Result<Vec<TraceRecord>, TraceError> {
    let mut out = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| TraceError::Schema { line: k + 1, msg: e.to_string() })?;
        out.push(r);
    }
    Ok(out)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        parse_trace(GzDecoder::new(&bytes[..]))
    } else {
        parse_trace(&bytes[..])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub steps: u64,
    pub header: Header,
    pub summary: Summary,
}

/// Re-derives every state from the header and the recorded actions.
pub fn replay(records: &[TraceRecord]) -> Result<ReplayReport, TraceError> {
    let Some(TraceRecord::Header(h)) = records.first() else {
        return Err(TraceError::Schema { line: 1, msg: "first record is not a header".into() });
    };
    if h.version != TRACE_VERSION {
        return Err(TraceError::Version { found: h.version.clone(), expected: TRACE_VERSION });
    }
    let net = parse_map(&h.map_csv).map_err(|e| TraceError::Schema { line: 1, msg: e.to_string() })?;
    let goals: Vec<_> = h.config.placements.iter().map(|p| p.goal()).collect();
    let world = World::new(net, h.config.agent, &h.config.lights, &goals)
        .map_err(|e| TraceError::Schema { line: 1, msg: e.to_string() })?;
    let mut state = h.initial_agents.clone();
    let mut time = 0u64;
    for r in &records[1..] {
        match r {
            TraceRecord::Header(_) => return Err(TraceError::Schema { line: 0, msg: "second header".into() }),
            TraceRecord::Step(s) => {
                let div = |msg: String| TraceError::Divergence { t: s.t, msg };
                if s.t != time {
                    return Err(div(format!("expected step {time}")));
                }
                if s.agents_before != state {
                    return Err(div("agent states differ from the replayed ones".into()));
                }
                let scene = Scene::new(&world, time, &state);
                let mut next = Vec::with_capacity(state.len());
                for (i, a) in state.iter().enumerate() {
                    let d = s.decisions.iter().find(|d| d.id == a.id).ok_or_else(|| div(format!("no decision for agent {}", a.id)))?;
                    let m = maneuver(&world.net, &world.params, a.pose, d.chosen).map_err(|e| div(e.to_string()))?;
                    let x = Candidate::new(&world, a, time, d.chosen, m);
                    let after = advance_agent(&scene, i, &x);
                    if world.routing.arrives(a.goal, after.pose.cell) {
                        if !s.despawned.contains(&a.id) {
                            return Err(div(format!("agent {} reached its goal but stayed", a.id)));
                        }
                    } else {
                        next.push(after);
                    }
                }
                if next.len() + s.despawned.len() != state.len() {
                    return Err(div("despawn list does not match goal arrivals".into()));
                }
                next.extend(s.spawned.iter().cloned());
                state = next;
                time += 1;
            }
            TraceRecord::Summary(sum) => {
                if sum.final_agents != state {
                    return Err(TraceError::Divergence { t: time, msg: "final agents differ".into() });
                }
                return Ok(ReplayReport { steps: time, header: h.clone(), summary: sum.clone() });
            }
        }
    }
    Err(TraceError::Truncated)
}
