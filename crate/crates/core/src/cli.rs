//! Command-line front end: `lcsynth <command> <model> [...]`.
//!
//! Verdicts are reported in the JSON payload. The exit code only tells
//! operational failures apart: 1 for bad input, 2 for an exceeded budget,
//! 3 for an objective no solver supports.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::{validate_model, ObjectiveKind};
use crate::order::{GameState, Valuation};
use crate::reach::{solve_reach_with, DEFAULT_MAX_NODES};
use crate::safety::{solve_safety_with, SafetyOptions};
use crate::strategy::{
    check_wellformed, extract_reach_strategy, extract_safety_strategy_with, ExtractOptions, StrategyAutomaton,
    StrategyError,
};
use crate::verify::{finite_oracle_solve, fuzz_model, persist_instance, verify_strategy, weak_apply};
use crate::{parse_model, LcsModel, ModelError, SolveError, Winner};

pub const ORACLE_BUDGET: usize = 20_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Budget(String),
    #[error("{0}")]
    Unsupported(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Budget(_) => 2,
            CliError::Unsupported(_) => 3,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::UnsupportedObjective { .. } => CliError::Unsupported(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Budget(_) => CliError::Budget(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<StrategyError> for CliError {
    fn from(e: StrategyError) -> Self {
        match e {
            StrategyError::Import(_) | StrategyError::Precondition(_) => CliError::Input(e.to_string()),
            StrategyError::Budget(_) | StrategyError::ExtractionIncomplete(_) => CliError::Budget(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Dot,
}

#[derive(Debug, Parser)]
#[command(name = "lcsynth", version, about = "Solve and synthesize controllers for lossy channel games")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: Format,
    /// Cap on safety fixpoint generations.
    #[arg(long, global = true, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_generations: u64,
    /// Cap on reachability forest nodes (and strategy nodes during extraction).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_nodes: Option<u64>,
    /// Play length for reachability verification; derived from the forest when absent.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub depth: Option<u64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide who wins and print the verdict.
    Solve { model: PathBuf },
    /// Solve and write a winning strategy for Player∃.
    Synth { model: PathBuf },
    /// Check a strategy: well-formedness, then product coverability or play enumeration.
    Verify { model: PathBuf, strategy: PathBuf },
    /// Replay a strategy against the moves listed in a file.
    Simulate { model: PathBuf, strategy: PathBuf, moves: PathBuf },
    /// Emit DOT for a strategy, a knowledge forest or a freshly synthesized strategy.
    Export { model: PathBuf, strategy: Option<PathBuf> },
    /// Solve with the finite reference solver, or fuzz and compare with --seed.
    Oracle { model: Option<PathBuf> },
}

/// Runs the command line and returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cfg) {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<LcsModel, CliError> {
    let m = parse_model(&read(path)?)?;
    let rep = validate_model(&m);
    if !rep.is_ok() {
        let v: Vec<String> = rep.violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Input(format!("{}: invalid model: {}", path.display(), v.join("; "))));
    }
    Ok(m)
}

fn load_strategy(m: &LcsModel, path: &Path) -> Result<StrategyAutomaton, CliError> {
    let v: Value =
        serde_json::from_str(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(StrategyAutomaton::from_json(m, &v)?)
}

fn winner_str(w: Winner) -> &'static str {
    match w {
        Winner::ExistsWins => "exists",
        Winner::ForallWins => "forall",
    }
}

fn objective_str(k: ObjectiveKind) -> &'static str {
    match k {
        ObjectiveKind::Safety => "safety",
        ObjectiveKind::Reach => "reach",
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap();
    s.push('\n');
    s
}

struct Solved {
    winner: Winner,
    stats: Value,
    strategy: Option<StrategyAutomaton>,
    depth_bound: Option<usize>,
    forest_dot: Option<String>,
}

fn max_nodes(cfg: &RunConfig, default: usize) -> usize {
    cfg.max_nodes.map_or(default, |n| n as usize)
}

fn solve(cfg: &RunConfig, m: &LcsModel, want_strategy: bool) -> Result<Solved, CliError> {
    match m.objective.kind {
        ObjectiveKind::Safety => {
            let opts = SafetyOptions { max_generations: cfg.max_generations as usize, ..Default::default() };
            let r = solve_safety_with(m, opts)?;
            let stats = json!({
                "generations": r.generations,
                "bad_families": r.bad.families.len(),
                "max_family_size": r.max_family_size,
                "converged": r.converged,
            });
            let mut strategy = r.strategy.clone();
            if want_strategy && strategy.is_none() && r.winner == Winner::ExistsWins {
                let opts = ExtractOptions { max_nodes: max_nodes(cfg, ExtractOptions::default().max_nodes) };
                strategy = Some(extract_safety_strategy_with(m, &r.bad, opts)?);
            }
            Ok(Solved { winner: r.winner, stats, strategy, depth_bound: None, forest_dot: None })
        }
        ObjectiveKind::Reach => {
            let r = solve_reach_with(m, max_nodes(cfg, DEFAULT_MAX_NODES))?;
            let bound = r.forest.depth_bound(m);
            let stats = json!({
                "forest_nodes": r.forest.nodes.len(),
                "roots": r.forest.roots.len(),
                "depth_bound": bound,
            });
            let strategy = if want_strategy && r.winner == Winner::ExistsWins {
                Some(extract_reach_strategy(m, &r.forest)?)
            } else {
                None
            };
            Ok(Solved { winner: r.winner, stats, strategy, depth_bound: Some(bound), forest_dot: Some(r.forest.to_dot(m)) })
        }
    }
}

fn verdict(m: &LcsModel, s: &Solved) -> Value {
    json!({
        "winner": winner_str(s.winner),
        "objective": objective_str(m.objective.kind),
        "stats": s.stats,
    })
}

fn render_strategy(m: &LcsModel, a: &StrategyAutomaton, f: Format) -> String {
    match f {
        Format::Json => pretty(&a.to_json(m)),
        Format::Dot => a.to_dot(m),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
}

pub fn execute(cfg: &RunConfig) -> Result<String, CliError> {
    match &cfg.command {
        Command::Solve { model } => {
            let m = load_model(model)?;
            let s = solve(cfg, &m, false)?;
            Ok(pretty(&verdict(&m, &s)))
        }
        Command::Synth { model } => {
            let m = load_model(model)?;
            let s = solve(cfg, &m, true)?;
            let mut v = verdict(&m, &s);
            match &s.strategy {
                Some(a) => {
                    let ext = if cfg.format == Format::Dot { "dot" } else { "json" };
                    let path =
                        cfg.out.clone().unwrap_or_else(|| PathBuf::from(format!("out/{}-strategy.{ext}", stem(model))));
                    write_file(&path, &render_strategy(&m, a, cfg.format))?;
                    v["strategy"] = json!({ "path": path.display().to_string(), "states": a.states });
                }
                None => v["strategy"] = Value::Null,
            }
            Ok(pretty(&v))
        }
        Command::Verify { model, strategy } => {
            let m = load_model(model)?;
            let a = load_strategy(&m, strategy)?;
            let wf = check_wellformed(&a, &m);
            if !wf.is_ok() {
                return Err(CliError::Input(format!("ill-formed strategy: {}", wf.violations.join("; "))));
            }
            let depth = match (m.objective.kind, cfg.depth) {
                (ObjectiveKind::Safety, _) => 0,
                (ObjectiveKind::Reach, Some(d)) => d as usize,
                (ObjectiveKind::Reach, None) => solve(cfg, &m, false)?.depth_bound.unwrap_or(0),
            };
            let r = verify_strategy(&m, &a, depth).map_err(|e| CliError::Input(e.to_string()))?;
            let mut v = json!({ "objective": objective_str(m.objective.kind), "ok": r.ok, "message": r.message });
            if m.objective.kind == ObjectiveKind::Reach {
                v["depth"] = json!(depth);
            }
            Ok(pretty(&v))
        }
        Command::Simulate { model, strategy, moves } => {
            let m = load_model(model)?;
            let a = load_strategy(&m, strategy)?;
            let wf = check_wellformed(&a, &m);
            if !wf.is_ok() {
                return Err(CliError::Input(format!("ill-formed strategy: {}", wf.violations.join("; "))));
            }
            let v = simulate(&m, &a, &read(moves)?)?;
            Ok(pretty(&v))
        }
        Command::Export { model, strategy } => {
            let m = load_model(model)?;
            let text = match strategy {
                Some(p) => load_strategy(&m, p)?.to_dot(&m),
                None => {
                    let s = solve(cfg, &m, m.objective.kind == ObjectiveKind::Safety)?;
                    match (s.forest_dot, s.strategy) {
                        (Some(dot), _) => dot,
                        (None, Some(a)) => a.to_dot(&m),
                        (None, None) => {
                            return Err(CliError::Input(
                                "Player∀ wins: there is no strategy to export".to_string(),
                            ))
                        }
                    }
                }
            };
            match &cfg.out {
                Some(p) => {
                    write_file(p, &text)?;
                    Ok(String::new())
                }
                None => Ok(text),
            }
        }
        Command::Oracle { model } => match (model, cfg.seed) {
            (Some(p), _) => {
                let m = load_model(p)?;
                let budget = max_nodes(cfg, ORACLE_BUDGET);
                let o = finite_oracle_solve(&m, budget).map_err(|e| CliError::Budget(e.to_string()))?;
                let s = solve(cfg, &m, false)?;
                Ok(pretty(&json!({
                    "objective": objective_str(m.objective.kind),
                    "oracle": winner_str(o),
                    "solver": winner_str(s.winner),
                    "agree": o == s.winner,
                })))
            }
            (None, Some(seed)) => {
                let mut rows = Vec::new();
                for kind in [ObjectiveKind::Safety, ObjectiveKind::Reach] {
                    let m = fuzz_model(seed, kind);
                    let mut row = json!({ "objective": objective_str(kind), "seed": seed });
                    match finite_oracle_solve(&m, max_nodes(cfg, ORACLE_BUDGET)) {
                        Err(e) => row["skipped"] = json!(e.to_string()),
                        Ok(o) => {
                            let s = solve(cfg, &m, false)?;
                            row["oracle"] = json!(winner_str(o));
                            row["solver"] = json!(winner_str(s.winner));
                            row["agree"] = json!(o == s.winner);
                            if o != s.winner {
                                let name = format!("fuzz-{}-{seed}", objective_str(kind));
                                if let Some(path) = persist_instance(&m, &name) {
                                    row["saved"] = json!(path.display().to_string());
                                }
                            }
                        }
                    }
                    rows.push(row);
                }
                Ok(pretty(&Value::Array(rows)))
            }
            (None, None) => Err(CliError::Input("oracle needs a model or --seed".to_string())),
        },
    }
}

fn parse_valuation(m: &LcsModel, text: &str, line: usize) -> Result<Valuation, CliError> {
    let bad = |msg: String| CliError::Input(format!("moves line {line}: {msg}"));
    let mut w = Valuation::empty(m.channels.len());
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (c, word) = part.split_once('=').ok_or_else(|| bad(format!("expected CHAN=WORD, got `{part}`")))?;
        let c = m.chan_id(c.trim()).ok_or_else(|| bad(format!("unknown channel {c}")))?;
        let word = word.trim();
        if word == "eps" {
            continue;
        }
        let letters: Vec<&str> = if word.contains('.') || m.messages.iter().any(|x| x.chars().count() > 1) {
            word.split('.').collect()
        } else {
            word.char_indices().map(|(i, ch)| &word[i..i + ch.len_utf8()]).collect()
        };
        for l in letters {
            w.0[c].push(m.msg_id(l).ok_or_else(|| bad(format!("unknown message {l}")))?);
        }
    }
    Ok(w)
}

/// Replays the strategy on a scripted play. Each line of `moves` reads
/// `LABEL P CHAN=WORD,... [@LOC]`: the label taken by the scheduled process,
/// the process scheduled next, the channel contents afterwards and, when
/// needed, the target location. An optional first line `start P` picks the
/// first scheduled process.
pub fn simulate(m: &LcsModel, a: &StrategyAutomaton, moves: &str) -> Result<Value, CliError> {
    let target = m.objective_observations();
    let mut lines = moves
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .peekable();
    let mut p = 0u8;
    if let Some((n, l)) = lines.peek().copied() {
        if let Some(rest) = l.strip_prefix("start") {
            p = parse_p(rest.trim(), n)?;
            lines.next();
        }
    }
    let mut s = GameState { p, q0: m.procs[0].initial, q1: m.procs[1].initial, w: Valuation::empty(m.channels.len()) };
    let mut qs = a.initial;
    let mut steps = Vec::new();
    let mut hit = target.contains(&s.obs(m)).then_some(0);
    for (n, line) in lines {
        if hit.is_some() {
            break;
        }
        let bad = |msg: String| CliError::Input(format!("moves line {n}: {msg}"));
        let mut toks = line.split_whitespace();
        let label = toks.next().ok_or_else(|| bad("missing label".into()))?;
        let a_id = m.label_id(label).ok_or_else(|| bad(format!("unknown label {label}")))?;
        let next_p = parse_p(toks.next().ok_or_else(|| bad("missing next process".into()))?, n)?;
        let mut chans = String::new();
        let mut loc = None;
        for t in toks {
            match t.strip_prefix('@') {
                Some(l) => loc = Some(l.to_string()),
                None => chans.push_str(t),
            }
        }
        let w2 = parse_valuation(m, &chans, n)?;
        let o = s.obs(m);
        let proc = &m.procs[s.p as usize];
        let cur = if s.p == 0 { s.q0 } else { s.q1 };
        let loc_id = match &loc {
            Some(l) => Some(proc.loc_id(l).ok_or_else(|| bad(format!("unknown location {l}")))?),
            None => None,
        };
        let fits: Vec<_> = proc
            .from_loc(cur)
            .filter(|t| t.label == a_id && loc_id.is_none_or(|q| q == t.to) && weak_apply(&s.w, t).contains(&w2))
            .collect();
        let to = match fits.as_slice() {
            [] => return Err(bad(format!("`{label}` cannot lead to {} from {}", w2.show(m), s.show(m)))),
            [t, rest @ ..] if rest.iter().all(|r| r.to == t.to) => t.to,
            _ => return Err(bad("ambiguous target location, add @LOC".into())),
        };
        let mut step = json!({ "state": s.show(m), "label": label });
        if s.p == 0 {
            let ch = a.decide(qs, &o);
            step["choice"] = json!(ch.name(m));
            step["strategy_state"] = json!(qs);
            qs = a.step(qs, &o, ch, a_id).ok_or_else(|| bad(format!("the strategy plays {} and forbids `{label}`", ch.name(m))))?;
            s.q0 = to;
        } else {
            s.q1 = to;
        }
        s.p = next_p;
        s.w = w2;
        steps.push(step);
        if target.contains(&s.obs(m)) {
            hit = Some(steps.len());
        }
    }
    let outcome = match (m.objective.kind, hit) {
        (ObjectiveKind::Safety, Some(_)) => "err",
        (ObjectiveKind::Reach, Some(_)) => "goal",
        (_, None) => "none",
    };
    Ok(json!({
        "steps": steps,
        "final": s.show(m),
        "strategy_state": qs,
        "outcome": outcome,
        "hit_at": hit,
    }))
}

fn parse_p(t: &str, line: usize) -> Result<u8, CliError> {
    match t {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(CliError::Input(format!("moves line {line}: process must be 0 or 1, got `{t}`"))),
    }
}
