//! `rose`: run campaigns, replay and check traces, print bubbles and run
//! fixed-placement scenarios.
//!
//! Exit codes: 0 clean, 1 failed check or unreadable trace, 2 collision,
//! 3 backup-safety fault, 4 precedence cycle, 5 config error.

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rose_core::bubble::{compute_bubble, Bubble};
use rose_core::campaign::{aggregate, run_campaign, Aggregate, TrialResult};
use rose_core::config::{read, ConfigError, ScenarioConfig};
use rose_core::dynamics::{AgentId, AgentParams, Pose};
use rose_core::engine::{build_world, explain_rows, RunOptions, CONFIG_ERROR_EXIT};
use rose_core::grid::{Coord, Heading};
use rose_core::oracles::{Profile, Scene};
use rose_core::trace::{create_trace_file, read_trace_file, replay, TraceRecord};
use rose_core::verify::check_trace;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rose", version, about = "Decentralized grid traffic game")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a campaign of seeded trials and print aggregate statistics.
    Run(RunArgs),
    /// Re-derive every state of a trace from its recorded actions.
    Replay {
        trace: PathBuf,
        /// Print every action's satisfied oracles for this agent each step.
        #[arg(long)]
        explain_agent: Option<AgentId>,
    },
    /// Recompute the runtime checks over a trace.
    Check {
        trace: PathBuf,
        /// Write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the bubble of one (heading, velocity) class.
    Bubble(BubbleArgs),
    /// Run the fixed placements of a config once, without spawning.
    Scenario {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
        /// Trace file to write (`.gz` compresses).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        explain_agent: Option<AgentId>,
        #[arg(long)]
        no_checks: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Map CSV; used with default settings when no config is given.
    #[arg(long, required_unless_present = "config")]
    map: Option<PathBuf>,
    #[arg(long, conflicts_with = "map")]
    config: Option<PathBuf>,
    /// Base seed; trial k uses seed + k.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long, default_value_t = 1)]
    trials: u64,
    #[arg(long)]
    spawn_prob: Option<f64>,
    /// Directory for per-trial traces and stats.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs serially.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    #[arg(long)]
    explain_agent: Option<AgentId>,
    #[arg(long)]
    no_checks: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridFormat {
    Ascii,
    Csv,
}

#[derive(Args)]
struct BubbleArgs {
    /// Take agent parameters from this config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    a_min: Option<i32>,
    #[arg(long)]
    a_max: Option<i32>,
    #[arg(long)]
    v_min: Option<i32>,
    #[arg(long)]
    v_max: Option<i32>,
    #[arg(long, default_value_t = 0)]
    velocity: i32,
    #[arg(long, default_value = "east")]
    heading: String,
    #[arg(long, value_enum, default_value = "ascii")]
    format: GridFormat,
}

fn main() -> ExitCode {
    // Die quietly when piped into `head` instead of panicking in println.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ROSE_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.chain().any(|c| c.downcast_ref::<ConfigError>().is_some());
            ExitCode::from(if config { CONFIG_ERROR_EXIT as u8 } else { 1 })
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<u8> {
    match cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Replay { trace, explain_agent } => cmd_replay(&trace, explain_agent),
        Cmd::Check { trace, out } => cmd_check(&trace, out.as_deref()),
        Cmd::Bubble(a) => cmd_bubble(a),
        Cmd::Scenario { config, steps, out, explain_agent, no_checks } => {
            cmd_scenario(&config, steps, out.as_deref(), RunOptions { no_checks, explain_agent })
        }
    }
}

fn load(config: Option<&Path>, map: Option<&Path>) -> Result<(ScenarioConfig, String), ConfigError> {
    match (config, map) {
        (Some(c), _) => ScenarioConfig::load(c),
        (None, Some(m)) => Ok((ScenarioConfig::for_map(m), read(m)?)),
        (None, None) => Err(ConfigError::Invalid("either --config or --map is required".into())),
    }
}

fn cmd_run(a: RunArgs) -> Result<u8> {
    let (mut config, map_csv) = load(a.config.as_deref(), a.map.as_deref())?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(s) = a.steps {
        config.steps = s;
    }
    if let Some(p) = a.spawn_prob {
        config.spawn_prob = p;
    }
    if a.trials == 0 {
        return Err(ConfigError::Invalid("--trials must be at least 1".into()).into());
    }
    config.validate()?;
    let world = build_world(&config, &map_csv)?;
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let options = RunOptions { no_checks: a.no_checks, explain_agent: a.explain_agent };
    let results = run_campaign(&world, &config, &map_csv, a.trials, a.parallel, options, a.out.as_deref())?;
    let agg = aggregate(&results);
    print_table(&results, &agg);
    if let Some(dir) = &a.out {
        let stats = serde_json::json!({ "aggregate": agg, "trials": results });
        let path = dir.join("stats.json");
        std::fs::write(&path, serde_json::to_string_pretty(&stats)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(results.iter().find_map(|r| r.summary.fault.as_ref()).map_or(0, |f| f.exit_code() as u8))
}

fn print_table(results: &[TrialResult], agg: &Aggregate) {
    if results.len() <= 20 {
        println!("{:>8} {:>6} {:>8} {:>10} {:>8} {:>6}  fault", "seed", "steps", "spawned", "completed", "pct", "maxTc");
        for r in results {
            let s = &r.summary.stats;
            let fault = r.summary.fault.as_ref().map_or("-".to_string(), |f| format!("{f:?}"));
            println!(
                "{:>8} {:>6} {:>8} {:>10} {:>7.1}% {:>6}  {}",
                r.seed, s.steps, s.spawned, s.completed, s.completion_pct, s.max_tokens, fault
            );
        }
    }
    println!("trials            {}", agg.trials);
    println!("collisions        {}", agg.collisions);
    println!("backup faults     {}", agg.backup_faults);
    println!("precedence faults {}", agg.precedence_faults);
    println!("deadlock trials   {}", agg.trials_with_deadlock);
    println!("check failures    {}", agg.check_failures);
    println!("mean completion   {:.1}%", agg.mean_completion_pct);
    println!("max tokens        {}", agg.max_tokens);
}

fn cmd_replay(trace: &Path, explain_agent: Option<AgentId>) -> Result<u8> {
    let records = read_trace_file(trace)?;
    let report = replay(&records)?;
    println!("replayed {} steps: identical", report.steps);
    if let Some(id) = explain_agent {
        let world = build_world(&report.header.config, &report.header.map_csv)?;
        let profile = Profile::default();
        for r in &records {
            let TraceRecord::Step(s) = r else { continue };
            let Some(i) = s.agents_before.iter().position(|a| a.id == id) else { continue };
            let scene = Scene::new(&world, s.t, &s.agents_before);
            println!("t={} agent {} at {:?}", s.t, id, s.agents_before[i].pose);
            for row in explain_rows(&profile, &scene, i) {
                println!("  {} tiers={:?} {:?}", serde_json::to_string(&row.action)?, row.tiers, row.satisfied);
            }
        }
    }
    Ok(0)
}

fn cmd_check(trace: &Path, out: Option<&Path>) -> Result<u8> {
    let records = read_trace_file(trace)?;
    let c = check_trace(&records)?;
    println!("steps                {}", c.steps);
    println!("P failures           {}", c.safety_p_failures);
    println!("I failures           {}", c.invariant_i_failures);
    println!("Q failures           {}", c.collision_q_failures);
    println!("polyforest failures  {}", c.polyforest_failures);
    println!("bubble failures      {}", c.bubble_request_failures);
    println!("one-winner failures  {}", c.one_winner_failures);
    println!("deadlock steps       {}", c.deadlock_steps);
    println!("max progress age     {}", c.max_progress_age);
    for (t, name) in &c.first_failures {
        println!("  failed {name} at step {t}");
    }
    if let Some(p) = out {
        std::fs::write(p, serde_json::to_string_pretty(&c)?).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(if c.all_ok() { 0 } else { 1 })
}

fn cmd_bubble(a: BubbleArgs) -> Result<u8> {
    let mut p = match &a.config {
        Some(c) => ScenarioConfig::load(c)?.0.agent,
        None => AgentParams::default(),
    };
    p.a_min = a.a_min.unwrap_or(p.a_min);
    p.a_max = a.a_max.unwrap_or(p.a_max);
    p.v_min = a.v_min.unwrap_or(p.v_min);
    p.v_max = a.v_max.unwrap_or(p.v_max);
    p.validate().map_err(ConfigError::Invalid)?;
    if a.velocity < p.v_min || a.velocity > p.v_max {
        return Err(ConfigError::Invalid(format!("velocity {} outside [{}, {}]", a.velocity, p.v_min, p.v_max)).into());
    }
    let heading = Heading::ALL
        .into_iter()
        .find(|h| format!("{h:?}").eq_ignore_ascii_case(&a.heading))
        .ok_or_else(|| ConfigError::Invalid(format!("unknown heading {}", a.heading)))?;
    let b = compute_bubble(&p, Pose::new(Coord::new(0, 0), heading, a.velocity));
    print!("{}", render(&b, a.format));
    Ok(0)
}

/// `@` for the agent, `#` for bubble cells, `.` elsewhere.
fn render(b: &Bubble, format: GridFormat) -> String {
    let cells: Vec<Coord> = b.cells.iter().copied().chain(std::iter::once(b.anchor.cell)).collect();
    let (r0, r1) = (cells.iter().map(|c| c.row).min().unwrap(), cells.iter().map(|c| c.row).max().unwrap());
    let (c0, c1) = (cells.iter().map(|c| c.col).min().unwrap(), cells.iter().map(|c| c.col).max().unwrap());
    let sep = match format {
        GridFormat::Ascii => "",
        GridFormat::Csv => ",",
    };
    let mut out = String::new();
    for r in r0..=r1 {
        let row: Vec<&str> = (c0..=c1)
            .map(|c| {
                let x = Coord::new(r, c);
                if x == b.anchor.cell {
                    "@"
                } else if b.cells.contains(&x) {
                    "#"
                } else {
                    "."
                }
            })
            .collect();
        out.push_str(&row.join(sep));
        out.push('\n');
    }
    out
}

fn cmd_scenario(config: &Path, steps: Option<u64>, out: Option<&Path>, options: RunOptions) -> Result<u8> {
    let (mut config, map_csv) = ScenarioConfig::load(config)?;
    config.spawn_prob = 0.0;
    if let Some(s) = steps {
        config.steps = s;
    }
    let world = build_world(&config, &map_csv)?;
    let mut sim = rose_core::engine::Simulation::new(&world, config, options)?;
    let summary = match out {
        Some(p) => {
            let mut w = create_trace_file(p).with_context(|| format!("creating {}", p.display()))?;
            let s = sim.run(&map_csv, &mut w)?;
            std::io::Write::flush(&mut w.into_inner())?;
            s
        }
        None => sim.run(&map_csv, &mut rose_core::trace::Discard)?,
    };
    let s = &summary.stats;
    println!("steps {} completed {}/{} max tokens {}", s.steps, s.completed, s.spawned, s.max_tokens);
    for a in &summary.final_agents {
        println!("  agent {} at {:?} goal {:?} tokens {}", a.id, a.pose, a.goal, a.tokens);
    }
    match &summary.fault {
        Some(f) => {
            println!("fault: {f:?}");
            Ok(f.exit_code() as u8)
        }
        None => Ok(0),
    }
}
