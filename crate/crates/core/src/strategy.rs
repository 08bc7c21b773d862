//! Finite-state observation-based strategies for Player∃.
//!
//! An automaton reads, at each process 0 turn, the observation, the choice
//! it makes there and the label Player∀ then picks. Its state only depends on
//! what Player∃ has seen, so the induced strategy is observation-consistent.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LabelId, LcsModel, Loc};
use crate::order::{Observation, UpSet, Valuation};
use crate::reach::{Forest, NodeStatus};
use crate::safety::{BadFamilySet, PreCache};
use crate::semantics::{Choice, GameCtx};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub obs: Observation,
    pub choice: Choice,
    pub adv: LabelId,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyAutomaton {
    pub states: usize,
    pub initial: usize,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StrategyError {
    #[error("no safe choice found for knowledge {0}")]
    ExtractionIncomplete(String),
    #[error("strategy extraction exceeded its budget: {0}")]
    Budget(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("cannot import strategy: {0}")]
    Import(String),
}

impl StrategyAutomaton {
    /// The choice made at `(q, o)`, if the automaton has edges there.
    pub fn choice_at(&self, q: usize, o: &Observation) -> Option<Choice> {
        self.edges.iter().find(|e| e.from == q && &e.obs == o).map(|e| e.choice)
    }

    pub fn step(&self, q: usize, o: &Observation, ch: Choice, a: LabelId) -> Option<usize> {
        self.edges.iter().find(|e| e.from == q && &e.obs == o && e.choice == ch && e.adv == a).map(|e| e.to)
    }

    /// The choice to play at `(q, o)`; observations without edges have no
    /// enabled label and ⊥ is the only choice.
    pub fn decide(&self, q: usize, o: &Observation) -> Choice {
        self.choice_at(q, o).unwrap_or(Choice::Bot)
    }

    /// Replays an observation word `o0 a0 o1 a1 ... on` and returns the
    /// choices made along it (the last one at `on`).
    pub fn replay(&self, word: &[(Observation, LabelId)], last: &Observation) -> Option<Vec<Choice>> {
        let mut q = self.initial;
        let mut out = Vec::new();
        for (o, a) in word {
            let ch = self.choice_at(q, o)?;
            out.push(ch);
            q = self.step(q, o, ch, *a)?;
        }
        out.push(self.decide(q, last));
        Some(out)
    }

    pub fn to_dot(&self, m: &LcsModel) -> String {
        let mut s = String::from("digraph strategy {\n  rankdir=LR;\n  node [shape=circle];\n");
        let _ = writeln!(s, "  init [shape=point];\n  init -> s{};", self.initial);
        for q in 0..self.states {
            let _ = writeln!(s, "  s{q} [label=\"{q}\"];");
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "  s{} -> s{} [label=\"{} / {} / {}\"];",
                e.from,
                e.to,
                m.obs_str(&e.obs).replace('"', "'"),
                e.choice.name(m),
                m.labels[e.adv]
            );
        }
        s.push_str("}\n");
        s
    }

    pub fn to_json(&self, m: &LcsModel) -> serde_json::Value {
        let transitions: Vec<serde_json::Value> = self
            .edges
            .iter()
            .map(|e| {
                let heads: serde_json::Map<String, serde_json::Value> = m
                    .observable
                    .iter()
                    .zip(&e.obs.heads)
                    .map(|(&c, &h)| (m.channels[c].clone(), serde_json::Value::from(m.head_str(h))))
                    .collect();
                serde_json::json!({
                    "from": e.from,
                    "obs": { "q0": m.procs[0].locations[e.obs.q0], "heads": heads },
                    "choice": match e.choice { Choice::Bot => "bot".to_string(), Choice::Label(a) => m.labels[a].clone() },
                    "adv": m.labels[e.adv],
                    "to": e.to,
                })
            })
            .collect();
        serde_json::json!({
            "states": (0..self.states).collect::<Vec<_>>(),
            "initial": self.initial,
            "transitions": transitions,
        })
    }

    pub fn from_json(m: &LcsModel, v: &serde_json::Value) -> Result<StrategyAutomaton, StrategyError> {
        let err = |s: &str| StrategyError::Import(s.to_string());
        let states = v["states"].as_array().ok_or_else(|| err("missing states"))?;
        let ids: BTreeSet<usize> = states.iter().filter_map(|x| x.as_u64()).map(|x| x as usize).collect();
        if ids.len() != states.len() || ids.iter().enumerate().any(|(i, &x)| i != x) {
            return Err(err("states must be 0..n"));
        }
        let initial = v["initial"].as_u64().ok_or_else(|| err("missing initial"))? as usize;
        if !ids.contains(&initial) {
            return Err(err("initial state is not a state"));
        }
        let mut edges = Vec::new();
        for t in v["transitions"].as_array().ok_or_else(|| err("missing transitions"))? {
            let state = |k: &str| -> Result<usize, StrategyError> {
                let x = t[k].as_u64().ok_or_else(|| err(&format!("transition without {k}")))? as usize;
                if ids.contains(&x) {
                    Ok(x)
                } else {
                    Err(err(&format!("unknown state {x}")))
                }
            };
            let q0name = t["obs"]["q0"].as_str().ok_or_else(|| err("obs without q0"))?;
            let q0 = m.procs[0].loc_id(q0name).ok_or_else(|| err(&format!("unknown location {q0name}")))?;
            let mut heads = Vec::new();
            for &c in &m.observable {
                let h = t["obs"]["heads"][&m.channels[c]].as_str().ok_or_else(|| err("missing head"))?;
                heads.push(if h == "eps" {
                    None
                } else {
                    Some(m.msg_id(h).ok_or_else(|| err(&format!("unknown message {h}")))?)
                });
            }
            let ch = t["choice"].as_str().ok_or_else(|| err("missing choice"))?;
            let choice = Choice::parse(m, ch).ok_or_else(|| err(&format!("unknown label {ch}")))?;
            let adv = t["adv"].as_str().ok_or_else(|| err("missing adv"))?;
            let adv = m.label_id(adv).ok_or_else(|| err(&format!("unknown label {adv}")))?;
            edges.push(Edge { from: state("from")?, obs: Observation { p: 0, q0, heads }, choice, adv, to: state("to")? });
        }
        Ok(StrategyAutomaton { states: ids.len(), initial, edges })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WellFormedReport {
    pub violations: Vec<String>,
}

impl WellFormedReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks conditions (i) determinism, (ii) totality, (iii) closure under
/// Player∀'s labels and (iv) one choice per state and observation, plus
/// that every edge uses an available choice and label. Totality is required
/// at observations where some label is enabled.
pub fn check_wellformed(a: &StrategyAutomaton, m: &LcsModel) -> WellFormedReport {
    let ctx = GameCtx::new(m);
    let mut rep = WellFormedReport::default();
    let mut det: BTreeMap<(usize, &Observation, Choice, LabelId), usize> = BTreeMap::new();
    let mut choice: BTreeMap<(usize, &Observation), BTreeSet<Choice>> = BTreeMap::new();
    for e in &a.edges {
        if e.from >= a.states || e.to >= a.states {
            rep.violations.push(format!("edge {} -> {} leaves the state set", e.from, e.to));
        }
        if let Some(&prev) = det.get(&(e.from, &e.obs, e.choice, e.adv)) {
            if prev != e.to {
                rep.violations.push(format!(
                    "(i) state {} has two successors on {} / {} / {}",
                    e.from,
                    m.obs_str(&e.obs),
                    e.choice.name(m),
                    m.labels[e.adv]
                ));
            }
        }
        det.insert((e.from, &e.obs, e.choice, e.adv), e.to);
        choice.entry((e.from, &e.obs)).or_default().insert(e.choice);
        match ctx.acts_forall(&e.obs, e.choice) {
            Ok(adv) if adv.contains(&e.adv) => {}
            _ => rep.violations.push(format!(
                "edge from state {} at {} uses unavailable {} / {}",
                e.from,
                m.obs_str(&e.obs),
                e.choice.name(m),
                m.labels[e.adv]
            )),
        }
    }
    for ((q, o), chs) in &choice {
        if chs.len() > 1 {
            rep.violations.push(format!("(iv) state {q} makes {} different choices at {}", chs.len(), m.obs_str(o)));
        }
        for &ch in chs {
            for a2 in ctx.acts_forall(o, ch).unwrap_or_default() {
                if !det.contains_key(&(*q, *o, ch, a2)) {
                    rep.violations.push(format!(
                        "(iii) state {q} at {} lacks the edge for {} / {}",
                        m.obs_str(o),
                        ch.name(m),
                        m.labels[a2]
                    ));
                }
            }
        }
    }
    for q in 0..a.states {
        for o in m.all_observations().into_iter().filter(|o| o.p == 0) {
            if ctx.enabled(&o).map(|e| !e.is_empty()).unwrap_or(false) && !choice.contains_key(&(q, &o)) {
                rep.violations.push(format!("(ii) state {q} has no edge at {}", m.obs_str(&o)));
            }
        }
    }
    rep
}

/// Builds an automaton whose states are bundles `observation -> node`.
/// `node_choice` gives a node's choice, `node_next` the bundle reached from
/// a node after Player∀'s label. Observations outside a bundle lead to a
/// sink that plays the first available choice.
fn bundle_automaton<F, G>(m: &LcsModel, init: BTreeMap<Observation, usize>, node_choice: F, node_next: G) -> StrategyAutomaton
where
    F: Fn(usize) -> Choice,
    G: Fn(usize, LabelId) -> BTreeMap<Observation, usize>,
{
    let ctx = GameCtx::new(m);
    let obs: Vec<Observation> = m
        .all_observations()
        .into_iter()
        .filter(|o| o.p == 0 && ctx.enabled(o).map(|e| !e.is_empty()).unwrap_or(false))
        .collect();
    let mut ids: BTreeMap<BTreeMap<Observation, usize>, usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    ids.insert(init.clone(), 0);
    queue.push_back(init);
    let mut edges = Vec::new();
    while let Some(bundle) = queue.pop_front() {
        let from = ids[&bundle];
        for o in &obs {
            let (ch, node) = match bundle.get(o) {
                Some(&n) => (node_choice(n), Some(n)),
                None => (*ctx.acts_exists(o).unwrap().iter().next().unwrap(), None),
            };
            for a in ctx.acts_forall(o, ch).unwrap_or_default() {
                let next = node.map(|n| node_next(n, a)).unwrap_or_default();
                let to = match ids.get(&next) {
                    Some(&t) => t,
                    None => {
                        let t = ids.len();
                        ids.insert(next.clone(), t);
                        queue.push_back(next);
                        t
                    }
                };
                edges.push(Edge { from, obs: o.clone(), choice: ch, adv: a, to });
            }
        }
    }
    StrategyAutomaton { states: ids.len(), initial: 0, edges }
}

// ---------------------------------------------------------------------------
// Safety extraction

#[derive(Debug, Clone, Copy)]
pub struct ExtractOptions {
    pub max_nodes: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { max_nodes: 20_000 }
    }
}

/// The members of the bad families at one observation, each family given
/// as indices into `members`.
#[derive(Default)]
struct ObsFamilies {
    members: Vec<UpSet>,
    families: Vec<Vec<usize>>,
}

/// Knowledge over-approximated by the set of members it avoids: the states
/// of the observation outside every avoided member.
type Avoid = BTreeSet<usize>;

struct Abstraction<'a> {
    ctx: GameCtx<'a>,
    by_obs: BTreeMap<Observation, ObsFamilies>,
    cache: PreCache,
    p0_obs: BTreeMap<Loc, Vec<Observation>>,
}

impl<'a> Abstraction<'a> {
    fn new(m: &'a LcsModel, b: &BadFamilySet) -> Self {
        let mut by_obs: BTreeMap<Observation, ObsFamilies> = BTreeMap::new();
        for l in &b.families {
            let f = by_obs.entry(l.obs.clone()).or_default();
            let mut idx = Vec::new();
            for u in &l.members {
                let i = match f.members.iter().position(|v| v == u) {
                    Some(i) => i,
                    None => {
                        f.members.push(u.clone());
                        f.members.len() - 1
                    }
                };
                idx.push(i);
            }
            f.families.push(idx);
        }
        let mut p0_obs: BTreeMap<Loc, Vec<Observation>> = BTreeMap::new();
        for o in m.all_observations() {
            let writable = m.observable.iter().zip(&o.heads).all(|(&c, h)| h.is_none_or(|a| m.writable(c).contains(&a)));
            if o.p == 0 && writable {
                p0_obs.entry(o.q0).or_default().push(o);
            }
        }
        Abstraction { ctx: GameCtx::with_idle(m), by_obs, cache: PreCache::default(), p0_obs }
    }

    fn members(&self, o: &Observation) -> usize {
        self.by_obs.get(o).map_or(0, |f| f.members.len())
    }

    fn member(&self, o: &Observation, i: usize) -> &UpSet {
        &self.by_obs[o].members[i]
    }

    fn losing(&self, o: &Observation, avoid: &Avoid) -> bool {
        self.by_obs.get(o).is_some_and(|f| f.families.iter().any(|l| l.iter().all(|i| !avoid.contains(i))))
    }

    /// Is `piece` inside the union of the avoided members at its observation?
    fn covered(&self, piece: &UpSet, avoid: &Avoid) -> bool {
        piece.minima.iter().all(|(q1, w)| avoid.iter().any(|&i| self.member(&piece.obs, i).contains(*q1, w)))
    }

    /// Members at `o1p` avoided by the process 1 knowledge reached from the
    /// knowledge `(o, avoid)` by label `a`.
    fn after_move(&mut self, o: &Observation, avoid: &Avoid, a: LabelId, o1p: &Observation) -> Avoid {
        let mut out = Avoid::new();
        for i in 0..self.members(o1p) {
            let u = self.member(o1p, i).clone();
            let piece = self.cache.pre0(&self.ctx, &u, a).get(o).cloned();
            if piece.is_none_or(|p| self.covered(&p, avoid)) {
                out.insert(i);
            }
        }
        out
    }

    fn avoided_after_s1(&mut self, target: &Observation, o1p: &Observation, avoid: &Avoid) -> Avoid {
        let mut out = Avoid::new();
        for i in 0..self.members(target) {
            let u = self.member(target, i).clone();
            let pre = self.cache.pre1(&self.ctx, &u);
            if pre.is_none_or(|p| p.obs == *o1p && self.covered(&p, avoid)) {
                out.insert(i);
            }
        }
        out
    }

    /// Closes process 1 knowledge under process 1 moves and hands the turn
    /// back to process 0. `None` when some resulting knowledge is losing.
    fn close_and_flip(&mut self, o1p: &Observation, mut avoid: Avoid) -> Option<BTreeMap<Observation, Avoid>> {
        loop {
            let next: Avoid = self.avoided_after_s1(o1p, o1p, &avoid).intersection(&avoid).copied().collect();
            if next == avoid {
                break;
            }
            avoid = next;
        }
        if self.losing(o1p, &avoid) {
            return None;
        }
        let mut out = BTreeMap::new();
        for o1 in self.p0_obs.get(&o1p.q0).cloned().unwrap_or_default() {
            let a1 = self.avoided_after_s1(&o1, o1p, &avoid);
            if self.losing(&o1, &a1) {
                return None;
            }
            out.insert(o1, a1);
        }
        Some(out)
    }

    /// Process 0 knowledge after `a` from `(o, avoid)`, by observation.
    fn successors(&mut self, o: &Observation, avoid: &Avoid, a: LabelId) -> Option<BTreeMap<Observation, Avoid>> {
        let m = self.ctx.model;
        let targets: BTreeSet<Loc> = m.procs[0].from_loc(o.q0).filter(|t| t.label == a).map(|t| t.to).collect();
        let mut out = BTreeMap::new();
        for q0 in targets {
            let o1p = Observation { p: 1, q0, heads: vec![None; m.observable.len()] };
            let start = self.after_move(o, avoid, a, &o1p);
            out.extend(self.close_and_flip(&o1p, start)?);
        }
        Some(out)
    }
}

/// Forward exploration of Player∃'s knowledge, kept abstractly as the
/// members of bad families it avoids. At each process 0 knowledge the first
/// choice whose every outcome stays non-losing is taken.
pub fn extract_safety_strategy(m: &LcsModel, b: &BadFamilySet) -> Result<StrategyAutomaton, StrategyError> {
    extract_safety_strategy_with(m, b, ExtractOptions::default())
}

pub fn extract_safety_strategy_with(
    m: &LcsModel,
    b: &BadFamilySet,
    opts: ExtractOptions,
) -> Result<StrategyAutomaton, StrategyError> {
    let mut abs = Abstraction::new(m, b);
    let init_obs = Observation { p: 1, q0: m.procs[0].initial, heads: vec![None; m.observable.len()] };
    let empty = Valuation::empty(m.channels.len());
    let start: Avoid =
        (0..abs.members(&init_obs)).filter(|&i| !abs.member(&init_obs, i).contains(m.procs[1].initial, &empty)).collect();
    let roots = abs
        .close_and_flip(&init_obs, start)
        .ok_or_else(|| StrategyError::Precondition("the initial knowledge is already losing".into()))?;

    let mut nodes: Vec<(Observation, Avoid)> = Vec::new();
    let mut choices: Vec<Choice> = Vec::new();
    let mut succs: Vec<BTreeMap<LabelId, BTreeMap<Observation, usize>>> = Vec::new();
    let mut work: VecDeque<usize> = VecDeque::new();
    let resolve = |o: Observation, avoid: Avoid, nodes: &mut Vec<(Observation, Avoid)>, work: &mut VecDeque<usize>| {
        if let Some(i) = nodes.iter().position(|(p, v)| *p == o && v.is_subset(&avoid)) {
            return i;
        }
        nodes.push((o, avoid));
        work.push_back(nodes.len() - 1);
        nodes.len() - 1
    };
    let init: BTreeMap<Observation, usize> =
        roots.into_iter().map(|(o, v)| (o.clone(), resolve(o, v, &mut nodes, &mut work))).collect();
    while let Some(id) = work.pop_front() {
        let (o, avoid) = nodes[id].clone();
        let acts = abs.ctx.acts_exists(&o).unwrap_or_default();
        let mut found = None;
        'choices: for &ch in &acts {
            let mut succ = BTreeMap::new();
            for a in abs.ctx.acts_forall(&o, ch).unwrap_or_default() {
                let Some(next) = abs.successors(&o, &avoid, a) else { continue 'choices };
                succ.insert(a, next);
            }
            found = Some((ch, succ));
            break;
        }
        let Some((ch, succ)) = found else {
            return Err(StrategyError::ExtractionIncomplete(format!("{} avoiding {} members", m.obs_str(&o), avoid.len())));
        };
        let mut links = BTreeMap::new();
        for (a, next) in succ {
            let bundle = next.into_iter().map(|(o1, v)| (o1.clone(), resolve(o1, v, &mut nodes, &mut work))).collect();
            links.insert(a, bundle);
        }
        choices.resize(nodes.len(), Choice::Bot);
        succs.resize(nodes.len(), BTreeMap::new());
        choices[id] = ch;
        succs[id] = links;
        if nodes.len() > opts.max_nodes {
            return Err(StrategyError::Budget(format!("more than {} knowledge nodes", opts.max_nodes)));
        }
    }
    choices.resize(nodes.len(), Choice::Bot);
    succs.resize(nodes.len(), BTreeMap::new());
    Ok(bundle_automaton(m, init, |n| choices[n], |n, a| succs[n].get(&a).cloned().unwrap_or_default()))
}

// ---------------------------------------------------------------------------
// Reachability extraction

/// Follows the winning choices stored in a labelled forest.
pub fn extract_reach_strategy(m: &LcsModel, forest: &Forest) -> Result<StrategyAutomaton, StrategyError> {
    if !forest.roots.iter().all(|&r| forest.nodes[r].win) {
        return Err(StrategyError::Precondition("Player∃ does not win the reachability game".into()));
    }
    let pick = |ids: &mut dyn Iterator<Item = usize>| -> BTreeMap<Observation, usize> {
        let mut by_obs: BTreeMap<Observation, Vec<usize>> = BTreeMap::new();
        for id in ids {
            let n = &forest.nodes[id];
            if n.status == NodeStatus::Expanded && n.knowledge.obs.p == 0 {
                by_obs.entry(n.knowledge.obs.clone()).or_default().push(id);
            }
        }
        by_obs
            .into_iter()
            .map(|(o, ids)| {
                let best = ids
                    .iter()
                    .copied()
                    .find(|&i| ids.iter().all(|&j| forest.nodes[j].knowledge.subset_of(&forest.nodes[i].knowledge)))
                    .unwrap_or_else(|| {
                        *ids.iter().max_by_key(|&&i| forest.nodes[i].knowledge.maxima.len()).unwrap()
                    });
                (o, best)
            })
            .collect()
    };
    let init = pick(&mut forest.roots.iter().copied());
    for &n in init.values() {
        if !forest.nodes[n].win {
            return Err(StrategyError::Precondition("a root knowledge is not winning".into()));
        }
    }
    let choice = |n: usize| forest.nodes[n].witness.unwrap_or(Choice::Bot);
    let next = |n: usize, a: LabelId| {
        let node = &forest.nodes[n];
        match node.witness {
            Some(ch) => pick(&mut node.children.get(&(ch, a)).into_iter().flatten().copied()),
            None => BTreeMap::new(),
        }
    };
    Ok(bundle_automaton(m, init, choice, next))
}
