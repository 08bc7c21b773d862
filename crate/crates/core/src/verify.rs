//! Independent checks of solver verdicts and extracted strategies.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{LabelId, Loc, Msg, ObjectiveKind, Transition};
use crate::order::{sub_valuations, GameState, Observation, Valuation};
use crate::safety::least_valuation;
use crate::semantics::{min_pre_valuation, split_up, strong_step, writable_valuation, Choice, GameCtx};
use crate::strategy::{check_wellformed, StrategyAutomaton};
use crate::{parse_model, LcsModel, Winner};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("strategy is not well formed: {0}")]
    IllFormed(String),
}

/// A state of the closed system obtained by letting the strategy resolve
/// Player∃'s choices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ProductState {
    pub p: u8,
    pub q0: Loc,
    pub qs: usize,
    pub q1: Loc,
    pub w: Valuation,
}

impl ProductState {
    pub fn game_state(&self) -> GameState {
        GameState { p: self.p, q0: self.q0, q1: self.q1, w: self.w.clone() }
    }

    pub fn show(&self, m: &LcsModel) -> String {
        format!("{} @{}", self.game_state().show(m), self.qs)
    }
}

/// A process 0 move of the product: taken from `(q0, qs)` when the heads
/// currently visible are `heads`.
#[derive(Debug, Clone)]
pub struct ProductEdge {
    pub from: (Loc, usize),
    pub heads: Vec<Option<Msg>>,
    pub trans: Transition,
    pub to: (Loc, usize),
}

#[derive(Debug, Clone)]
pub struct ProductLcs<'a> {
    pub model: &'a LcsModel,
    pub strategy: &'a StrategyAutomaton,
    pub edges: Vec<ProductEdge>,
}

pub fn product_lcs<'a>(m: &'a LcsModel, a: &'a StrategyAutomaton) -> Result<ProductLcs<'a>, VerifyError> {
    let rep = check_wellformed(a, m);
    if !rep.is_ok() {
        return Err(VerifyError::IllFormed(rep.violations.join("; ")));
    }
    let mut edges = Vec::new();
    for e in &a.edges {
        for t in m.procs[0].from_loc(e.obs.q0).filter(|t| t.label == e.adv) {
            edges.push(ProductEdge {
                from: (e.obs.q0, e.from),
                heads: e.obs.heads.clone(),
                trans: t.clone(),
                to: (t.to, e.to),
            });
        }
    }
    Ok(ProductLcs { model: m, strategy: a, edges })
}

/// All valuations reachable from `w` by losses, `t`, and losses again.
pub fn weak_apply(w: &Valuation, t: &Transition) -> BTreeSet<Valuation> {
    let mut out = BTreeSet::new();
    let mut mids = BTreeSet::new();
    for x1 in sub_valuations(w) {
        if let Some(x2) = strong_step(&x1, t) {
            mids.insert(x2);
        }
    }
    for x2 in mids {
        out.extend(sub_valuations(&x2));
    }
    out
}

impl ProductLcs<'_> {
    pub fn locations(&self) -> BTreeSet<(Loc, usize)> {
        let mut out: BTreeSet<(Loc, usize)> = self.edges.iter().flat_map(|e| [e.from, e.to]).collect();
        out.insert((self.model.procs[0].initial, self.strategy.initial));
        out
    }

    pub fn initial_states(&self) -> Vec<ProductState> {
        let m = self.model;
        (0..2)
            .map(|p| ProductState {
                p,
                q0: m.procs[0].initial,
                qs: self.strategy.initial,
                q1: m.procs[1].initial,
                w: Valuation::empty(m.channels.len()),
            })
            .collect()
    }

    pub fn observe(&self, s: &ProductState) -> Observation {
        s.game_state().obs(self.model)
    }

    pub fn successors(&self, s: &ProductState) -> BTreeSet<ProductState> {
        let m = self.model;
        let mut out = BTreeSet::new();
        let mut push = |q0, qs, q1, vals: BTreeSet<Valuation>| {
            for w in vals {
                for p in 0..2 {
                    out.insert(ProductState { p, q0, qs, q1, w: w.clone() });
                }
            }
        };
        if s.p == 0 {
            let heads = self.observe(s).heads;
            for e in self.edges.iter().filter(|e| e.from == (s.q0, s.qs) && e.heads == heads) {
                push(e.to.0, e.to.1, s.q1, weak_apply(&s.w, &e.trans));
            }
        } else {
            for t in m.procs[1].from_loc(s.q1) {
                push(s.q0, s.qs, t.to, weak_apply(&s.w, t));
            }
        }
        out
    }

    /// Minimal states with a one-step successor `⊒ x`. Process 0
    /// predecessors keep the visible heads the strategy edge was taken under.
    fn predecessors(&self, x: &ProductState, into: &[&ProductEdge]) -> Vec<ProductState> {
        let m = self.model;
        let mut out = Vec::new();
        for e in into {
            let Some(y) = min_pre_valuation(&e.trans, &x.w) else { continue };
            for (heads, v) in split_up(m, &y) {
                if heads == e.heads {
                    out.push(ProductState { p: 0, q0: e.from.0, qs: e.from.1, q1: x.q1, w: v });
                }
            }
        }
        for t in m.procs[1].into_loc(x.q1) {
            if let Some(y) = min_pre_valuation(t, &x.w) {
                out.push(ProductState { p: 1, q0: x.q0, qs: x.qs, q1: t.from, w: y });
            }
        }
        out
    }

    /// `a` is below `b`: same control, subword channels and, for process 0
    /// states, the same visible heads.
    fn below(&self, a: &ProductState, b: &ProductState) -> bool {
        a.p == b.p
            && a.q0 == b.q0
            && a.qs == b.qs
            && a.q1 == b.q1
            && a.w.leq(&b.w)
            && (a.p == 1 || a.w.heads(self.model) == b.w.heads(self.model))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverabilityResult {
    pub reachable: bool,
    pub basis_size: usize,
    pub iterations: usize,
}

/// Control state, plus the visible heads of process 0 states.
type BasisKey = (u8, Loc, usize, Loc, Vec<Option<Msg>>);

/// Exact backward coverability: saturates the minimal predecessors of the
/// states whose observation satisfies `bad` and checks the initial states.
pub fn backward_coverability(p: &ProductLcs, bad: &BTreeSet<Observation>) -> CoverabilityResult {
    let m = p.model;
    let key = |x: &ProductState| {
        let heads = if x.p == 0 { x.w.heads(m) } else { Vec::new() };
        (x.p, x.q0, x.qs, x.q1, heads)
    };
    let mut basis: BTreeMap<BasisKey, Vec<Valuation>> = BTreeMap::new();
    let mut work: VecDeque<ProductState> = VecDeque::new();
    let add = |x: ProductState, basis: &mut BTreeMap<_, Vec<Valuation>>, work: &mut VecDeque<ProductState>| {
        let slot = basis.entry(key(&x)).or_default();
        if slot.iter().any(|v| v.leq(&x.w)) {
            return;
        }
        slot.retain(|v| !x.w.leq(v));
        slot.push(x.w.clone());
        work.push_back(x);
    };
    for o in bad {
        let w = least_valuation(m, o);
        for qs in 0..p.strategy.states {
            for q1 in 0..m.procs[1].locations.len() {
                add(ProductState { p: o.p, q0: o.q0, qs, q1, w: w.clone() }, &mut basis, &mut work);
            }
        }
    }
    let mut into: BTreeMap<(Loc, usize), Vec<&ProductEdge>> = BTreeMap::new();
    for e in &p.edges {
        into.entry(e.to).or_default().push(e);
    }
    let init = p.initial_states();
    let mut iterations = 0;
    let mut reachable = false;
    while let Some(x) = work.pop_front() {
        // Skip states that a smaller one replaced after they were queued.
        let live = basis.get(&key(&x)).is_some_and(|s| s.contains(&x.w));
        if !live {
            continue;
        }
        iterations += 1;
        if init.iter().any(|s| p.below(&x, s)) {
            reachable = true;
            break;
        }
        for y in p.predecessors(&x, into.get(&(x.q0, x.qs)).map_or(&[][..], |v| v)) {
            // States holding a message nobody writes are never reached.
            if writable_valuation(m, &y.w) {
                add(y, &mut basis, &mut work);
            }
        }
    }
    let basis_size = basis.values().map(Vec::len).sum();
    CoverabilityResult { reachable, basis_size, iterations }
}

/// Breadth-first search of the product up to `depth` steps; returns a path
/// to a state whose observation is in `target`.
pub fn forward_search(p: &ProductLcs, target: &BTreeSet<Observation>, depth: usize) -> Option<Vec<ProductState>> {
    let mut parent: BTreeMap<ProductState, Option<ProductState>> = BTreeMap::new();
    let mut layer: Vec<ProductState> = Vec::new();
    for s in p.initial_states() {
        parent.insert(s.clone(), None);
        layer.push(s);
    }
    for d in 0..=depth {
        for s in &layer {
            if target.contains(&p.observe(s)) {
                let mut path = vec![s.clone()];
                while let Some(Some(prev)) = parent.get(path.last().unwrap()) {
                    path.push(prev.clone());
                }
                path.reverse();
                return Some(path);
            }
        }
        if d == depth {
            break;
        }
        let mut next = Vec::new();
        for s in &layer {
            for t in p.successors(s) {
                if !parent.contains_key(&t) {
                    parent.insert(t.clone(), Some(s.clone()));
                    next.push(t);
                }
            }
        }
        layer = next;
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutcomeReport {
    pub depth: usize,
    /// Distinct (state, remaining depth) pairs explored.
    pub configurations: usize,
    /// A play reaching an error observation within the depth, if any.
    pub err_play: Option<Vec<ProductState>>,
    /// Every play visits the objective set within the depth.
    pub all_hit_goal: bool,
    /// A play that avoids the objective set for the whole depth or gets stuck.
    pub goal_miss: Option<Vec<ProductState>>,
}

/// Enumerates all plays consistent with the strategy up to `depth` steps.
/// Errors are the model's objective set when it is a safety model; goal hits
/// are measured against it when it is a reachability model.
pub fn exhaustive_outcomes(m: &LcsModel, a: &StrategyAutomaton, depth: usize) -> Result<OutcomeReport, VerifyError> {
    let p = product_lcs(m, a)?;
    let target = m.objective_observations();
    let err_play = match m.objective.kind {
        ObjectiveKind::Safety => forward_search(&p, &target, depth),
        ObjectiveKind::Reach => None,
    };
    let mut memo: BTreeMap<(ProductState, usize), bool> = BTreeMap::new();
    let mut goal_miss = None;
    let mut all_hit_goal = true;
    for s in p.initial_states() {
        if !hits_goal(&p, &target, &s, depth, &mut memo) {
            all_hit_goal = false;
            if goal_miss.is_none() {
                goal_miss = Some(miss_path(&p, &target, s, depth, &mut memo));
            }
        }
    }
    Ok(OutcomeReport { depth, configurations: memo.len(), err_play, all_hit_goal, goal_miss })
}

fn hits_goal(
    p: &ProductLcs,
    goal: &BTreeSet<Observation>,
    s: &ProductState,
    left: usize,
    memo: &mut BTreeMap<(ProductState, usize), bool>,
) -> bool {
    if goal.contains(&p.observe(s)) {
        return true;
    }
    if left == 0 {
        return false;
    }
    if let Some(&r) = memo.get(&(s.clone(), left)) {
        return r;
    }
    let succ = p.successors(s);
    let r = !succ.is_empty() && succ.iter().all(|t| hits_goal(p, goal, t, left - 1, memo));
    memo.insert((s.clone(), left), r);
    r
}

fn miss_path(
    p: &ProductLcs,
    goal: &BTreeSet<Observation>,
    start: ProductState,
    depth: usize,
    memo: &mut BTreeMap<(ProductState, usize), bool>,
) -> Vec<ProductState> {
    let mut path = vec![start];
    let mut left = depth;
    while left > 0 {
        let s = path.last().unwrap().clone();
        let next = p.successors(&s).into_iter().find(|t| !hits_goal(p, goal, t, left - 1, memo));
        match next {
            Some(t) => path.push(t),
            None => break,
        }
        left -= 1;
    }
    path
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub objective: ObjectiveKind,
    pub ok: bool,
    pub message: String,
}

/// Well-formedness plus product coverability (safety) or outcome enumeration
/// to `depth` (reachability).
pub fn verify_strategy(m: &LcsModel, a: &StrategyAutomaton, depth: usize) -> Result<VerifyReport, VerifyError> {
    let p = product_lcs(m, a)?;
    let target = m.objective_observations();
    Ok(match m.objective.kind {
        ObjectiveKind::Safety => {
            let r = backward_coverability(&p, &target);
            VerifyReport {
                objective: ObjectiveKind::Safety,
                ok: !r.reachable,
                message: if r.reachable { "Err reachable".into() } else { "Err unreachable".into() },
            }
        }
        ObjectiveKind::Reach => {
            let r = exhaustive_outcomes(m, a, depth)?;
            VerifyReport {
                objective: ObjectiveKind::Reach,
                ok: r.all_hit_goal,
                message: if r.all_hit_goal {
                    format!("every play reaches Goal within {depth} steps")
                } else {
                    format!("some play misses Goal within {depth} steps")
                },
            }
        }
    })
}

// ---------------------------------------------------------------------------
// Finite reference solver

/// The explicit weak-step graph reachable from the initial states.
#[derive(Debug, Clone)]
pub struct FiniteGameGraph {
    pub states: Vec<GameState>,
    pub obs: Vec<Observation>,
    /// Successors per state and label.
    pub succ: Vec<BTreeMap<LabelId, BTreeSet<usize>>>,
    pub initial: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("reachable game graph exceeds {0} states")]
    NotFinite(usize),
}

impl FiniteGameGraph {
    pub fn build(m: &LcsModel, budget: usize) -> Result<FiniteGameGraph, OracleError> {
        let ctx = GameCtx::new(m);
        let mut index: BTreeMap<GameState, usize> = BTreeMap::new();
        let mut g = FiniteGameGraph { states: Vec::new(), obs: Vec::new(), succ: Vec::new(), initial: Vec::new() };
        let mut work = VecDeque::new();
        let mut intern = |s: GameState, g: &mut FiniteGameGraph, work: &mut VecDeque<usize>| -> Result<usize, OracleError> {
            if let Some(&i) = index.get(&s) {
                return Ok(i);
            }
            if g.states.len() >= budget {
                return Err(OracleError::NotFinite(budget));
            }
            let i = g.states.len();
            index.insert(s.clone(), i);
            g.obs.push(ctx.observe(&s));
            g.states.push(s);
            g.succ.push(BTreeMap::new());
            work.push_back(i);
            Ok(i)
        };
        for s in ctx.initial_states() {
            let i = intern(s, &mut g, &mut work)?;
            g.initial.push(i);
        }
        while let Some(i) = work.pop_front() {
            let s = g.states[i].clone();
            for a in ctx.labels_of_state(&s) {
                let mut ids = BTreeSet::new();
                for t in ctx.weak_post_state(&s, a) {
                    ids.insert(intern(t, &mut g, &mut work)?);
                }
                if !ids.is_empty() {
                    g.succ[i].insert(a, ids);
                }
            }
        }
        Ok(g)
    }

    fn s1_successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.succ[i].values().flatten().copied()
    }
}

/// What happens after a set of states is entered: the process 1 states
/// visited before process 0 moves again, and the process 0 states reached,
/// grouped by observation.
struct Region {
    s1: BTreeSet<usize>,
    s0: BTreeMap<Observation, BTreeSet<usize>>,
    /// Some process 1 state outside the stop set has no successor or lies on
    /// a cycle avoiding the stop set.
    unbounded: bool,
}

fn region(g: &FiniteGameGraph, start: &BTreeSet<usize>, stop: &BTreeSet<Observation>) -> Region {
    let mut r = Region { s1: BTreeSet::new(), s0: BTreeMap::new(), unbounded: false };
    let mut work: Vec<usize> = start.iter().copied().collect();
    while let Some(i) = work.pop() {
        if g.states[i].p == 0 {
            r.s0.entry(g.obs[i].clone()).or_default().insert(i);
            continue;
        }
        if !r.s1.insert(i) {
            continue;
        }
        if stop.contains(&g.obs[i]) {
            continue;
        }
        if g.succ[i].is_empty() {
            r.unbounded = true;
        }
        work.extend(g.s1_successors(i));
    }
    if !r.unbounded {
        r.unbounded = has_cycle(g, &r.s1, stop);
    }
    r
}

/// A cycle among process 1 states of `within` whose observation is not in
/// `stop`.
fn has_cycle(g: &FiniteGameGraph, within: &BTreeSet<usize>, stop: &BTreeSet<Observation>) -> bool {
    let live: BTreeSet<usize> = within.iter().copied().filter(|&i| !stop.contains(&g.obs[i])).collect();
    let mut indeg: BTreeMap<usize, usize> = live.iter().map(|&i| (i, 0)).collect();
    for &i in &live {
        for j in g.s1_successors(i).collect::<BTreeSet<_>>() {
            if let Some(d) = indeg.get_mut(&j) {
                *d += 1;
            }
        }
    }
    let mut queue: Vec<usize> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&i, _)| i).collect();
    let mut removed = 0;
    while let Some(i) = queue.pop() {
        removed += 1;
        for j in g.s1_successors(i).collect::<BTreeSet<_>>() {
            if let Some(d) = indeg.get_mut(&j) {
                *d -= 1;
                if *d == 0 {
                    queue.push(j);
                }
            }
        }
    }
    removed < live.len()
}

type Knowledge = BTreeSet<usize>;

/// One edge of the knowledge game: Player∃'s choice followed by one of
/// Player∀'s labels, summarized by the region it leads to.
struct Move {
    choice: Choice,
    stuck: bool,
    region_bad: bool,
    next: Vec<Knowledge>,
}

/// Solves the model's game on its explicit graph by the subset construction
/// over Player∃'s observations.
pub fn finite_oracle_solve(m: &LcsModel, budget: usize) -> Result<Winner, OracleError> {
    let g = FiniteGameGraph::build(m, budget)?;
    let ctx = GameCtx::new(m);
    let target = m.objective_observations();
    let safety = m.objective.kind == ObjectiveKind::Safety;
    let stop = if safety { BTreeSet::new() } else { target.clone() };
    let summarize = |r: &Region| -> (bool, Vec<Knowledge>) {
        if safety {
            let bad = r.s1.iter().any(|&i| target.contains(&g.obs[i]));
            (bad, r.s0.values().cloned().collect())
        } else {
            let next = r.s0.iter().filter(|(o, _)| !target.contains(o)).map(|(_, k)| k.clone()).collect();
            (r.unbounded, next)
        }
    };

    let init: Knowledge = g.initial.iter().copied().collect();
    let (init_bad, init_next) = summarize(&region(&g, &init, &stop));

    let mut moves: BTreeMap<Knowledge, Vec<Move>> = BTreeMap::new();
    let mut work: Vec<Knowledge> = init_next.clone();
    while let Some(k) = work.pop() {
        if moves.contains_key(&k) {
            continue;
        }
        let o = g.obs[*k.iter().next().unwrap()].clone();
        let mut ms = Vec::new();
        if !target.contains(&o) {
            for ch in ctx.acts_exists(&o).unwrap_or_default() {
                for a in ctx.acts_forall(&o, ch).unwrap_or_default() {
                    let post: BTreeSet<usize> =
                        k.iter().filter_map(|&i| g.succ[i].get(&a)).flatten().copied().collect();
                    let (region_bad, next) = summarize(&region(&g, &post, &stop));
                    work.extend(next.iter().cloned());
                    ms.push(Move { choice: ch, stuck: post.is_empty(), region_bad, next });
                }
            }
        }
        moves.insert(k, ms);
    }

    let obs_of = |k: &Knowledge| g.obs[*k.iter().next().unwrap()].clone();
    let choice_wins = |k: &Knowledge, ms: &[Move], win: &BTreeMap<Knowledge, bool>| -> bool {
        let o = obs_of(k);
        ctx.acts_exists(&o).unwrap_or_default().into_iter().any(|ch| {
            let mine: Vec<&Move> = ms.iter().filter(|mv| mv.choice == ch).collect();
            if safety {
                mine.iter().all(|mv| !mv.region_bad && mv.next.iter().all(|n| win[n]))
            } else {
                !mine.is_empty() && mine.iter().all(|mv| !mv.stuck && !mv.region_bad && mv.next.iter().all(|n| win[n]))
            }
        })
    };

    let mut win: BTreeMap<Knowledge, bool> = if safety {
        moves.keys().map(|k| (k.clone(), !target.contains(&obs_of(k)))).collect()
    } else {
        moves.keys().map(|k| (k.clone(), target.contains(&obs_of(k)))).collect()
    };
    loop {
        let mut changed = false;
        for (k, ms) in &moves {
            let now = if safety {
                win[k] && choice_wins(k, ms, &win)
            } else {
                win[k] || choice_wins(k, ms, &win)
            };
            if now != win[k] {
                win.insert(k.clone(), now);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let exists = !init_bad && init_next.iter().all(|k| win[k]);
    Ok(if exists { Winner::ExistsWins } else { Winner::ForallWins })
}

// ---------------------------------------------------------------------------
// Bounded search for Player∀

/// Does Player∀ force an error observation within `depth` steps against
/// every observation-based strategy? Only states reachable within the depth
/// are tracked, so a `true` answer is a proof for the unbounded game.
pub fn forall_forces_err(m: &LcsModel, depth: usize) -> bool {
    let ctx = GameCtx::new(m);
    let err = m.objective_observations();
    let init: BTreeSet<GameState> = ctx.initial_states().into_iter().collect();
    let mut memo = BTreeMap::new();
    forces_from_set(&ctx, &err, &init, depth, &mut memo)
}

fn forces_from_set(
    ctx: &GameCtx,
    err: &BTreeSet<Observation>,
    start: &BTreeSet<GameState>,
    depth: usize,
    memo: &mut BTreeMap<(BTreeSet<GameState>, usize), bool>,
) -> bool {
    // Process 1 moves first, keeping the largest remaining budget per state.
    let mut left: BTreeMap<GameState, usize> = BTreeMap::new();
    let mut work: Vec<(GameState, usize)> = start.iter().map(|s| (s.clone(), depth)).collect();
    let mut groups: BTreeMap<Observation, BTreeMap<GameState, usize>> = BTreeMap::new();
    while let Some((s, d)) = work.pop() {
        if err.contains(&ctx.observe(&s)) {
            return true;
        }
        if left.get(&s).is_some_and(|&old| old >= d) {
            continue;
        }
        left.insert(s.clone(), d);
        if s.p == 0 {
            groups.entry(ctx.observe(&s)).or_default().insert(s, d);
            continue;
        }
        if d == 0 {
            continue;
        }
        for a in ctx.labels_of_state(&s) {
            for t in ctx.weak_post_state(&s, a) {
                work.push((t, d - 1));
            }
        }
    }
    // Forcing from a subset of the knowledge forces from all of it.
    groups.values().any(|g| {
        let levels: BTreeSet<usize> = g.values().copied().collect();
        levels.into_iter().rev().any(|d| {
            let k: BTreeSet<GameState> = g.iter().filter(|(_, &e)| e >= d).map(|(s, _)| s.clone()).collect();
            forces_from_knowledge(ctx, err, &k, d, memo)
        })
    })
}

fn forces_from_knowledge(
    ctx: &GameCtx,
    err: &BTreeSet<Observation>,
    k: &BTreeSet<GameState>,
    depth: usize,
    memo: &mut BTreeMap<(BTreeSet<GameState>, usize), bool>,
) -> bool {
    if depth == 0 {
        return false;
    }
    if let Some(&r) = memo.get(&(k.clone(), depth)) {
        return r;
    }
    let o = ctx.observe(k.iter().next().unwrap());
    let r = ctx.acts_exists(&o).unwrap_or_default().into_iter().all(|ch| {
        ctx.acts_forall(&o, ch).unwrap_or_default().into_iter().any(|a| {
            let post: BTreeSet<GameState> = k.iter().flat_map(|s| ctx.weak_post_state(s, a)).collect();
            !post.is_empty() && forces_from_set(ctx, err, &post, depth - 1, memo)
        })
    });
    memo.insert((k.clone(), depth), r);
    r
}

// ---------------------------------------------------------------------------
// Random models

/// A random model whose reachable state space is finite. A process either
/// never writes, or only moves forward in its location order (self-loops
/// allowed) and writes only on strictly forward moves, so every run performs
/// boundedly many writes.
pub fn fuzz_model(seed: u64, kind: ObjectiveKind) -> LcsModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let text = fuzz_text(&mut rng, kind);
        if let Ok(m) = parse_model(&text) {
            if m.validate().is_ok() {
                return m;
            }
        }
    }
}

fn fuzz_text(rng: &mut ChaCha8Rng, kind: ObjectiveKind) -> String {
    let nmsg = rng.gen_range(1..=2);
    let nchan = rng.gen_range(1..=2);
    let chans = ["K", "L"];
    let obs_l = nchan == 2 && rng.gen_bool(0.5);
    let observable: Vec<&str> = if obs_l { vec!["K", "L"] } else { vec!["K"] };
    let mut text = format!(
        "messages: {}\nchannels: {}\nobservable: {}\n",
        (0..nmsg).map(|i| i.to_string()).collect::<Vec<_>>().join(", "),
        chans[..nchan].join(", "),
        observable.join(", ")
    );
    let n0 = rng.gen_range(2..=3);
    let n1 = rng.gen_range(1..=3);
    let mut used_ctl = BTreeSet::new();
    let mut body = String::new();
    for (p, n, labels, name) in [(0, n0, ["x", "y", "u", "v"].as_slice(), "q"), (1, n1, ["t", "s"].as_slice(), "r")] {
        writeln_str(&mut body, &format!("process {p} {{ init {name}0"));
        let writer = rng.gen_bool(0.6);
        for _ in 0..rng.gen_range(2..=5) {
            let mut from = rng.gen_range(0..n);
            let mut to = rng.gen_range(0..n);
            if writer && from > to {
                std::mem::swap(&mut from, &mut to);
            }
            let label = labels[rng.gen_range(0..labels.len())];
            if label == "x" || label == "y" {
                used_ctl.insert(label);
            }
            let mut guards = Vec::new();
            let mut ops = Vec::new();
            for &c in &chans[..nchan] {
                let visible = p == 1 || observable.contains(&c);
                if visible {
                    match rng.gen_range(0..10) {
                        0..=2 => guards.push(format!("{c}==eps")),
                        3..=5 => guards.push(format!("{c}@{}", rng.gen_range(0..nmsg))),
                        _ => {}
                    }
                }
                let r = rng.gen_range(0..10);
                if writer && from < to && r < 4 {
                    ops.push(format!("{c}!{}", rng.gen_range(0..nmsg)));
                } else if visible && r >= 7 {
                    ops.push(format!("{c}?{}", rng.gen_range(0..nmsg)));
                }
            }
            let mut line = format!(" {name}{from} -{label}-> {name}{to}");
            if !guards.is_empty() {
                line.push_str(&format!(" [{}]", guards.join(", ")));
            }
            if !ops.is_empty() {
                line.push_str(&format!(" {{{}}}", ops.join(", ")));
            }
            writeln_str(&mut body, &line);
        }
        writeln_str(&mut body, "}");
    }
    if !used_ctl.is_empty() {
        text.push_str(&format!("controllable: {}\n", used_ctl.into_iter().collect::<Vec<_>>().join(", ")));
    }
    text.push_str(&body);
    let target = format!("q{}", rng.gen_range(0..n0));
    match kind {
        ObjectiveKind::Safety => {
            let p = if rng.gen_bool(0.5) { "p=0; " } else { "" };
            text.push_str(&format!("objective safety {{ {p}loc in {{{target}}}; }}\n"));
        }
        ObjectiveKind::Reach => {
            let extra = match rng.gen_range(0..3) {
                0 => String::new(),
                1 => " or { p=1; }".to_string(),
                _ => format!(" or {{ p=1; loc in {{q0, {target}}}; }}"),
            };
            text.push_str(&format!("objective reach {{ loc in {{{target}}}; }}{extra}\n"));
        }
    }
    text
}

fn writeln_str(s: &mut String, line: &str) {
    s.push_str(line);
    s.push('\n');
}

/// Writes `m` to the directory named by `LCSYNTH_CORPUS`, if set.
pub fn persist_instance(m: &LcsModel, name: &str) -> Option<std::path::PathBuf> {
    let dir = std::env::var_os("LCSYNTH_CORPUS")?;
    let dir = std::path::PathBuf::from(dir);
    std::fs::create_dir_all(&dir).ok()?;
    let path = dir.join(format!("{name}.lcs"));
    std::fs::write(&path, m.to_dsl()).ok()?;
    Some(path)
}
