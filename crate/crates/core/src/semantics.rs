//! Game semantics: observations, the label menus of both players, and weak
//! (lossy) predecessor and successor images, split by observation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ChanOp, Guard, LabelId, LcsModel, Loc, Msg, Transition, Word};
use crate::order::{sub_valuations, subwords, GameState, KnowSet, Observation, UpSet, Valuation};

/// A choice of Player∃: a controllable label, or ⊥ (leave it to the environment).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Choice {
    Label(LabelId),
    Bot,
}

impl Choice {
    pub fn name(self, m: &LcsModel) -> String {
        match self {
            Choice::Label(a) => m.labels[a].clone(),
            Choice::Bot => "_".to_string(),
        }
    }

    pub fn parse(m: &LcsModel, s: &str) -> Option<Choice> {
        if s == "_" || s == "bot" {
            Some(Choice::Bot)
        } else {
            m.label_id(s).map(Choice::Label)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticsError {
    #[error("observation has p = 1, where Player∃ does not move")]
    NotPlayerZero,
    #[error("choice is not available at this observation")]
    ChoiceNotAvailable,
}

/// A model viewed as a game, optionally with process 1's idle move added.
#[derive(Debug, Clone, Copy)]
pub struct GameCtx<'a> {
    pub model: &'a LcsModel,
    pub idle: bool,
}

impl<'a> GameCtx<'a> {
    pub fn new(model: &'a LcsModel) -> Self {
        GameCtx { model, idle: false }
    }

    pub fn with_idle(model: &'a LcsModel) -> Self {
        GameCtx { model, idle: true }
    }

    /// Label id used for the idle move; never a model label.
    pub fn idle_label(&self) -> LabelId {
        self.model.labels.len()
    }

    pub fn label_name(&self, a: LabelId) -> &str {
        self.model.labels.get(a).map_or("idle", |s| s.as_str())
    }

    pub fn observe(&self, s: &GameState) -> Observation {
        s.obs(self.model)
    }

    pub fn initial_states(&self) -> Vec<GameState> {
        let m = self.model;
        let w = Valuation::empty(m.channels.len());
        (0..2)
            .map(|p| GameState { p, q0: m.procs[0].initial, q1: m.procs[1].initial, w: w.clone() })
            .collect()
    }

    pub fn initial_observations(&self) -> BTreeSet<Observation> {
        self.initial_states().iter().map(|s| self.observe(s)).collect()
    }

    fn head_of(&self, o: &Observation, c: usize) -> Option<Option<Msg>> {
        self.model.obs_index(c).map(|i| o.heads[i])
    }

    /// Is `t` (a process 0 transition) strongly enabled in every state of `o`?
    fn enabled_at(&self, o: &Observation, t: &Transition) -> bool {
        (0..self.model.channels.len()).all(|c| {
            let h = self.head_of(o, c);
            let guard_ok = match (t.guards[c], h) {
                (Guard::True, _) => true,
                (Guard::Empty, Some(h)) => h.is_none(),
                (Guard::Head(m), Some(h)) => h == Some(m),
                (_, None) => true,
            };
            let read_ok = match (t.ops[c], h) {
                (ChanOp::Read(m), Some(h)) => h == Some(m),
                _ => true,
            };
            guard_ok && read_ok
        })
    }

    pub fn enabled(&self, o: &Observation) -> Result<BTreeSet<LabelId>, SemanticsError> {
        if o.p != 0 {
            return Err(SemanticsError::NotPlayerZero);
        }
        Ok(self.model.procs[0]
            .from_loc(o.q0)
            .filter(|t| self.enabled_at(o, t))
            .map(|t| t.label)
            .collect())
    }

    pub fn acts_exists(&self, o: &Observation) -> Result<BTreeSet<Choice>, SemanticsError> {
        let en = self.enabled(o)?;
        let ctl: BTreeSet<Choice> =
            en.iter().filter(|a| self.model.is_controllable(**a)).map(|&a| Choice::Label(a)).collect();
        let unctl = en.iter().any(|a| !self.model.is_controllable(*a));
        let mut out = ctl;
        if out.is_empty() || unctl {
            out.insert(Choice::Bot);
        }
        Ok(out)
    }

    pub fn acts_forall(&self, o: &Observation, ch: Choice) -> Result<BTreeSet<LabelId>, SemanticsError> {
        if !self.acts_exists(o)?.contains(&ch) {
            return Err(SemanticsError::ChoiceNotAvailable);
        }
        let mut out: BTreeSet<LabelId> =
            self.enabled(o)?.into_iter().filter(|a| !self.model.is_controllable(*a)).collect();
        if let Choice::Label(a) = ch {
            out.insert(a);
        }
        Ok(out)
    }

    /// Transitions of process `p` from `q` carrying label `a`.
    fn transitions(&self, p: u8, q: Loc, a: LabelId) -> impl Iterator<Item = &'a Transition> + 'a {
        self.model.procs[p as usize].from_loc(q).filter(move |t| t.label == a)
    }

    // -- explicit semantics ------------------------------------------------

    /// Weak successors of a single state via label `a` (the idle label
    /// included when enabled). Finite because losses only shrink words.
    pub fn weak_post_state(&self, s: &GameState, a: LabelId) -> BTreeSet<GameState> {
        let mut out = BTreeSet::new();
        let mut results: Vec<(Loc, Loc, Valuation)> = Vec::new();
        if s.p == 1 && self.idle && a == self.idle_label() {
            results.push((s.q0, s.q1, s.w.clone()));
        } else {
            let (q, p) = if s.p == 0 { (s.q0, 0) } else { (s.q1, 1) };
            for t in self.transitions(p, q, a) {
                for x1 in sub_valuations(&s.w) {
                    if let Some(x2) = strong_step(&x1, t) {
                        let (q0, q1) = if p == 0 { (t.to, s.q1) } else { (s.q0, t.to) };
                        results.push((q0, q1, x2));
                    }
                }
            }
        }
        for (q0, q1, x2) in results {
            for w in sub_valuations(&x2) {
                for p in 0..2 {
                    out.insert(GameState { p, q0, q1, w: w.clone() });
                }
            }
        }
        out
    }

    /// Labels usable from state `s` by the process whose turn it is.
    pub fn labels_of_state(&self, s: &GameState) -> BTreeSet<LabelId> {
        let q = if s.p == 0 { s.q0 } else { s.q1 };
        let mut out: BTreeSet<LabelId> = self.model.procs[s.p as usize].from_loc(q).map(|t| t.label).collect();
        if s.p == 1 && self.idle {
            out.insert(self.idle_label());
        }
        out
    }

    /// Process 1 labels with at least one weak successor from `s`.
    pub fn env_menu(&self, s: &GameState) -> BTreeSet<LabelId> {
        self.labels_of_state(s).into_iter().filter(|&a| !self.weak_post_state(s, a).is_empty()).collect()
    }

    // -- symbolic predecessors ---------------------------------------------

    /// The observation-partition of the weak predecessors of `u` via the
    /// process 0 label `a`.
    pub fn pre0_pieces(&self, u: &UpSet, a: LabelId) -> BTreeSet<UpSet> {
        let mut pieces: BTreeMap<Observation, UpSet> = BTreeMap::new();
        for t in self.model.procs[0].into_loc(u.obs.q0).filter(|t| t.label == a) {
            for (q1, y) in &u.minima {
                let Some(x) = min_pre_valuation(t, y) else { continue };
                for (heads, xs) in split_up(self.model, &x) {
                    let o = Observation { p: 0, q0: t.from, heads };
                    pieces.entry(o.clone()).or_insert_with(|| UpSet::new(o)).insert(*q1, xs);
                }
            }
        }
        pieces.into_values().collect()
    }

    /// The weak predecessors of `u` via any process 1 move, all in one
    /// observation `(1, q0, ε̄)`.
    pub fn pre1_pieces(&self, u: &UpSet) -> BTreeSet<UpSet> {
        let o = Observation { p: 1, q0: u.obs.q0, heads: vec![None; self.model.observable.len()] };
        let mut piece = UpSet::new(o);
        for (q1, y) in &u.minima {
            if self.idle {
                piece.insert(*q1, y.clone());
            }
            for t in self.model.procs[1].into_loc(*q1) {
                if let Some(x) = min_pre_valuation(t, y) {
                    piece.insert(t.from, x);
                }
            }
        }
        if piece.is_empty() {
            BTreeSet::new()
        } else {
            [piece].into()
        }
    }

    // -- symbolic successors -----------------------------------------------

    fn add_successor(&self, pieces: &mut BTreeMap<Observation, KnowSet>, q0: Loc, q1: Loc, v: Valuation) {
        let o1 = Observation { p: 1, q0, heads: vec![None; self.model.observable.len()] };
        pieces.entry(o1.clone()).or_insert_with(|| KnowSet::new(o1)).insert(q1, v.clone());
        for (heads, vs) in split_down(self.model, &v) {
            let o = Observation { p: 0, q0, heads };
            pieces.entry(o.clone()).or_insert_with(|| KnowSet::new(o)).insert(q1, vs);
        }
    }

    /// Weak successors of the process 0 knowledge `d` via label `a`, split by
    /// observation. Both values of the next turn flag occur.
    pub fn post0_pieces(&self, d: &KnowSet, a: LabelId) -> BTreeSet<KnowSet> {
        let mut pieces = BTreeMap::new();
        if d.obs.p == 0 {
            for t in self.transitions(0, d.obs.q0, a) {
                for (q1, x) in &d.maxima {
                    if let Some(v) = max_post_valuation(t, x) {
                        self.add_successor(&mut pieces, t.to, *q1, v);
                    }
                }
            }
        }
        pieces.into_values().collect()
    }

    /// Weak successors of the process 1 knowledge `d` via any process 1 move.
    pub fn post1_pieces(&self, d: &KnowSet) -> BTreeSet<KnowSet> {
        let mut pieces = BTreeMap::new();
        if d.obs.p == 1 {
            for (q1, x) in &d.maxima {
                if self.idle {
                    self.add_successor(&mut pieces, d.obs.q0, *q1, x.clone());
                }
                for t in self.model.procs[1].from_loc(*q1) {
                    if let Some(v) = max_post_valuation(t, x) {
                        self.add_successor(&mut pieces, d.obs.q0, t.to, v);
                    }
                }
            }
        }
        pieces.into_values().collect()
    }

    /// Does the process 1 knowledge `d` contain a state with no successor?
    /// The all-empty state of each location is in `d`, and it is stuck
    /// exactly when every move needs a nonempty channel.
    pub fn has_deadlock(&self, d: &KnowSet) -> bool {
        if self.idle {
            return false;
        }
        let locs: BTreeSet<Loc> = d.maxima.iter().map(|(q, _)| *q).collect();
        locs.into_iter().any(|q| self.model.procs[1].from_loc(q).all(|t| !t.enabled_on_empty()))
    }

    /// Turns a process 1 knowledge set into the process 0 knowledge obtained
    /// by handing the turn over without a move, split by observation.
    pub fn flip_split(&self, d: &KnowSet) -> BTreeSet<KnowSet> {
        let mut pieces: BTreeMap<Observation, KnowSet> = BTreeMap::new();
        for (q1, x) in &d.maxima {
            for (heads, vs) in split_down(self.model, x) {
                let o = Observation { p: 0, q0: d.obs.q0, heads };
                pieces.entry(o.clone()).or_insert_with(|| KnowSet::new(o)).insert(*q1, vs);
            }
        }
        pieces.into_values().collect()
    }

    /// Process 0 knowledge reachable after label `a` and any number of
    /// unobserved process 1 moves, plus process 1 knowledge sets that close
    /// a process 1 loop, end in a deadlock, or lie inside the goal.
    pub fn post0_obs(&self, d: &KnowSet, a: LabelId, goal: Option<&BTreeSet<Observation>>) -> BTreeSet<KnowSet> {
        let mut out = BTreeSet::new();
        for d0 in self.post0_pieces(d, a) {
            if d0.obs.p == 0 {
                out.insert(d0);
            } else {
                out.extend(self.s1_closure(d0, goal));
            }
        }
        out
    }

    /// As [`GameCtx::post0_obs`], starting from process 1 knowledge `d`.
    pub fn post1_obs(&self, d: &KnowSet, goal: Option<&BTreeSet<Observation>>) -> BTreeSet<KnowSet> {
        if d.is_empty() || d.obs.p != 1 {
            return BTreeSet::new();
        }
        self.s1_closure(d.clone(), goal)
    }

    /// Number of process 1 steps the chain behind [`GameCtx::post0_obs`]
    /// takes from `d0` before it stops.
    pub fn s1_stretch(&self, d0: &KnowSet, goal: Option<&BTreeSet<Observation>>) -> usize {
        if goal.is_some_and(|g| g.contains(&d0.obs)) {
            return 0;
        }
        let mut chain = vec![d0.clone()];
        loop {
            let last = chain.last().unwrap();
            if self.has_deadlock(last) {
                return chain.len() - 1;
            }
            let Some(next) = self.post1_pieces(last).into_iter().find(|k| k.obs.p == 1) else {
                return chain.len() - 1;
            };
            if chain.iter().any(|di| di.subset_of(&next)) {
                return chain.len();
            }
            chain.push(next);
        }
    }

    fn s1_closure(&self, d0: KnowSet, goal: Option<&BTreeSet<Observation>>) -> BTreeSet<KnowSet> {
        let mut out = BTreeSet::new();
        if goal.is_some_and(|g| g.contains(&d0.obs)) {
            out.extend(self.flip_split(&d0));
            out.insert(d0);
            return out;
        }
        let mut chain = vec![d0.clone()];
        let mut union = d0;
        loop {
            out.extend(self.flip_split(&union));
            let last = chain.last().unwrap();
            if self.has_deadlock(last) {
                out.insert(last.clone());
                break;
            }
            let next = self.post1_pieces(last).into_iter().find(|k| k.obs.p == 1);
            let Some(next) = next else { break };
            union.union_with(&next);
            if chain.iter().any(|di| di.subset_of(&next)) {
                out.extend(self.flip_split(&union));
                out.insert(next);
                break;
            }
            chain.push(next);
        }
        out
    }
}

/// The strong step of transition `t` on valuation `w`, if enabled.
pub fn strong_step(w: &Valuation, t: &Transition) -> Option<Valuation> {
    let mut out = Vec::with_capacity(w.0.len());
    for (c, x) in w.0.iter().enumerate() {
        let ok = match t.guards[c] {
            Guard::True => true,
            Guard::Empty => x.is_empty(),
            Guard::Head(m) => x.first() == Some(&m),
        };
        if !ok {
            return None;
        }
        out.push(match t.ops[c] {
            ChanOp::Nop => x.clone(),
            ChanOp::Write(m) => {
                let mut y = x.clone();
                y.push(m);
                y
            }
            ChanOp::Read(m) => {
                if x.first() != Some(&m) {
                    return None;
                }
                x[1..].to_vec()
            }
        });
    }
    Some(Valuation(out))
}

/// The least word `x` such that some weak step from `x` through `(g, op)`
/// reaches a word above `y`. `None` when no word qualifies.
pub fn min_pre_word(g: Guard, op: ChanOp, y: &[Msg]) -> Option<Word> {
    let with_head = |m: Msg, z: Word| -> Word {
        if z.first() == Some(&m) {
            z
        } else {
            let mut v = vec![m];
            v.extend(z);
            v
        }
    };
    match op {
        ChanOp::Nop => match g {
            Guard::True => Some(y.to_vec()),
            Guard::Empty => y.is_empty().then(Vec::new),
            Guard::Head(m) => Some(with_head(m, y.to_vec())),
        },
        ChanOp::Write(m) => {
            let z: Word = if y.last() == Some(&m) { y[..y.len() - 1].to_vec() } else { y.to_vec() };
            match g {
                Guard::True => Some(z),
                Guard::Empty => z.is_empty().then(Vec::new),
                Guard::Head(h) => Some(with_head(h, z)),
            }
        }
        ChanOp::Read(m) => match g {
            Guard::Empty => None,
            Guard::Head(h) if h != m => None,
            _ => {
                let mut v = vec![m];
                v.extend_from_slice(y);
                Some(v)
            }
        },
    }
}

/// The greatest word reachable by a weak step from `x` through `(g, op)`.
pub fn max_post_word(g: Guard, op: ChanOp, x: &[Msg]) -> Option<Word> {
    let from_first = |m: Msg| x.iter().position(|&b| b == m).map(|i| x[i..].to_vec());
    let start: Word = match g {
        Guard::True => x.to_vec(),
        Guard::Empty => Vec::new(),
        Guard::Head(m) => from_first(m)?,
    };
    match op {
        ChanOp::Nop => Some(start),
        ChanOp::Write(m) => {
            let mut v = start;
            v.push(m);
            Some(v)
        }
        ChanOp::Read(m) => {
            let i = start.iter().position(|&b| b == m)?;
            if matches!(g, Guard::Head(_)) && i != 0 {
                return None;
            }
            Some(start[i + 1..].to_vec())
        }
    }
}

pub fn min_pre_valuation(t: &Transition, y: &Valuation) -> Option<Valuation> {
    y.0.iter()
        .enumerate()
        .map(|(c, w)| min_pre_word(t.guards[c], t.ops[c], w))
        .collect::<Option<Vec<_>>>()
        .map(Valuation)
}

pub fn max_post_valuation(t: &Transition, x: &Valuation) -> Option<Valuation> {
    x.0.iter()
        .enumerate()
        .map(|(c, w)| max_post_word(t.guards[c], t.ops[c], w))
        .collect::<Option<Vec<_>>>()
        .map(Valuation)
}

fn product<T: Clone>(choices: Vec<Vec<T>>) -> Vec<Vec<T>> {
    let mut out = vec![Vec::new()];
    for opts in choices {
        let mut next = Vec::with_capacity(out.len() * opts.len());
        for pre in &out {
            for o in &opts {
                let mut e = pre.clone();
                e.push(o.clone());
                next.push(e);
            }
        }
        out = next;
    }
    out
}

/// Does every channel of `x` hold only messages that can be written to it?
pub fn writable_valuation(m: &LcsModel, x: &Valuation) -> bool {
    x.0.iter().enumerate().all(|(c, w)| {
        let ok = m.writable(c);
        w.iter().all(|a| ok.contains(a))
    })
}

/// Splits `↑x` among process 0 observations: one minimal valuation per
/// combination of observable heads.
pub fn split_up(m: &LcsModel, x: &Valuation) -> Vec<(Vec<Option<Msg>>, Valuation)> {
    let choices: Vec<Vec<(Option<Msg>, Word)>> = m
        .observable
        .iter()
        .map(|&c| {
            let z = &x.0[c];
            let mut opts = Vec::new();
            if z.is_empty() {
                opts.push((None, Vec::new()));
            }
            for a in 0..m.messages.len() as Msg {
                let w = if z.first() == Some(&a) {
                    z.clone()
                } else {
                    let mut v = vec![a];
                    v.extend_from_slice(z);
                    v
                };
                opts.push((Some(a), w));
            }
            opts
        })
        .collect();
    product(choices)
        .into_iter()
        .map(|combo| {
            let mut v = x.clone();
            let mut heads = Vec::new();
            for (i, (h, w)) in combo.into_iter().enumerate() {
                v.0[m.observable[i]] = w;
                heads.push(h);
            }
            (heads, v)
        })
        .collect()
}

/// Splits `↓x` among process 0 observations: one maximal valuation per
/// combination of observable heads that occurs.
pub fn split_down(m: &LcsModel, x: &Valuation) -> Vec<(Vec<Option<Msg>>, Valuation)> {
    let choices: Vec<Vec<(Option<Msg>, Word)>> = m
        .observable
        .iter()
        .map(|&c| {
            let z = &x.0[c];
            let mut opts = vec![(None, Vec::new())];
            for a in 0..m.messages.len() as Msg {
                if let Some(i) = z.iter().position(|&b| b == a) {
                    opts.push((Some(a), z[i..].to_vec()));
                }
            }
            opts
        })
        .collect();
    product(choices)
        .into_iter()
        .map(|combo| {
            let mut v = x.clone();
            let mut heads = Vec::new();
            for (i, (h, w)) in combo.into_iter().enumerate() {
                v.0[m.observable[i]] = w;
                heads.push(h);
            }
            (heads, v)
        })
        .collect()
}

/// Brute-force weak successors of a single word through `(g, op)`.
pub fn weak_image_word(g: Guard, op: ChanOp, x: &[Msg]) -> BTreeSet<Word> {
    let mut out = BTreeSet::new();
    for x1 in subwords(x) {
        let ok = match g {
            Guard::True => true,
            Guard::Empty => x1.is_empty(),
            Guard::Head(m) => x1.first() == Some(&m),
        };
        if !ok {
            continue;
        }
        let x2 = match op {
            ChanOp::Nop => Some(x1.clone()),
            ChanOp::Write(m) => {
                let mut v = x1.clone();
                v.push(m);
                Some(v)
            }
            ChanOp::Read(m) => (x1.first() == Some(&m)).then(|| x1[1..].to_vec()),
        };
        if let Some(x2) = x2 {
            out.extend(subwords(&x2));
        }
    }
    out
}
