//! The subword ordering on channel contents, its lift to game states, and
//! antichain representations of closed sets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{LcsModel, Loc, Msg, Word};

/// Channel contents, indexed by channel id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Valuation(pub Vec<Word>);

impl Valuation {
    pub fn empty(channels: usize) -> Valuation {
        Valuation(vec![Vec::new(); channels])
    }

    pub fn leq(&self, other: &Valuation) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(x, y)| subword_leq(x, y))
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|w| w.is_empty())
    }

    /// Heads of the observable channels.
    pub fn heads(&self, m: &LcsModel) -> Vec<Option<Msg>> {
        m.observable.iter().map(|&c| self.0[c].first().copied()).collect()
    }

    pub fn show(&self, m: &LcsModel) -> String {
        let parts: Vec<String> =
            self.0.iter().enumerate().map(|(c, w)| format!("{}={}", m.channels[c], m.word_str(w))).collect();
        parts.join(",")
    }
}

/// What process 0 sees: whose turn it is, its own location, and the heads of
/// the observable channels (all empty on process 1's turn).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub p: u8,
    pub q0: Loc,
    pub heads: Vec<Option<Msg>>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GameState {
    pub p: u8,
    pub q0: Loc,
    pub q1: Loc,
    pub w: Valuation,
}

impl GameState {
    pub fn obs(&self, m: &LcsModel) -> Observation {
        let heads = if self.p == 1 { vec![None; m.observable.len()] } else { self.w.heads(m) };
        Observation { p: self.p, q0: self.q0, heads }
    }

    pub fn show(&self, m: &LcsModel) -> String {
        format!(
            "({}, {}, {}, {})",
            self.p,
            m.procs[0].locations[self.q0],
            m.procs[1].locations[self.q1],
            self.w.show(m)
        )
    }
}

/// Does `x` embed into `y` as a scattered subword? Greedy matching is exact.
pub fn subword_leq(x: &[Msg], y: &[Msg]) -> bool {
    let mut it = y.iter();
    x.iter().all(|a| it.any(|b| b == a))
}

pub fn state_leq(m: &LcsModel, s: &GameState, t: &GameState) -> bool {
    s.p == t.p && s.q0 == t.q0 && s.q1 == t.q1 && s.w.leq(&t.w) && s.obs(m) == t.obs(m)
}

/// A partial order usable inside antichains.
pub trait PartialLeq {
    fn pleq(&self, other: &Self) -> bool;
}

impl PartialLeq for Word {
    fn pleq(&self, other: &Self) -> bool {
        subword_leq(self, other)
    }
}

impl PartialLeq for Valuation {
    fn pleq(&self, other: &Self) -> bool {
        self.leq(other)
    }
}

/// Elements of a single observation bucket: process 1 location and valuation.
impl PartialLeq for (Loc, Valuation) {
    fn pleq(&self, other: &Self) -> bool {
        self.0 == other.0 && self.1.leq(&other.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    Minima,
    Maxima,
}

/// Inserts `x` into antichain `a`, keeping minima or maxima. Returns whether
/// the denoted closed set grew.
pub fn antichain_insert<T: PartialLeq + Ord>(a: &mut BTreeSet<T>, x: T, keep: Keep) -> bool {
    let below = |y: &T, z: &T| match keep {
        Keep::Minima => y.pleq(z),
        Keep::Maxima => z.pleq(y),
    };
    if a.iter().any(|y| below(y, &x)) {
        return false;
    }
    a.retain(|y| !below(&x, y));
    a.insert(x);
    true
}

/// All scattered subwords of `w`.
pub fn subwords(w: &[Msg]) -> BTreeSet<Word> {
    let mut out = BTreeSet::new();
    out.insert(Vec::new());
    for &a in w {
        let ext: Vec<Word> = out
            .iter()
            .map(|v| {
                let mut v = v.clone();
                v.push(a);
                v
            })
            .collect();
        out.extend(ext);
    }
    out
}

/// All valuations below `v` (channelwise subwords).
pub fn sub_valuations(v: &Valuation) -> Vec<Valuation> {
    let mut out = vec![Vec::new()];
    for w in &v.0 {
        let subs = subwords(w);
        let mut next = Vec::with_capacity(out.len() * subs.len());
        for pre in &out {
            for s in &subs {
                let mut e: Vec<Word> = pre.clone();
                e.push(s.clone());
                next.push(e);
            }
        }
        out = next;
    }
    out.into_iter().map(Valuation).collect()
}

pub fn down_closure(m: &LcsModel, states: &BTreeSet<GameState>) -> BTreeSet<GameState> {
    let mut out = BTreeSet::new();
    for s in states {
        let o = s.obs(m);
        for w in sub_valuations(&s.w) {
            let t = GameState { p: s.p, q0: s.q0, q1: s.q1, w };
            if t.obs(m) == o {
                out.insert(t);
            }
        }
    }
    out
}

/// An upward-closed set inside one observation, kept as its minimal elements.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UpSet {
    pub obs: Observation,
    pub minima: BTreeSet<(Loc, Valuation)>,
}

impl UpSet {
    pub fn new(obs: Observation) -> UpSet {
        UpSet { obs, minima: BTreeSet::new() }
    }

    pub fn insert(&mut self, q1: Loc, w: Valuation) -> bool {
        antichain_insert(&mut self.minima, (q1, w), Keep::Minima)
    }

    /// Membership of a state assumed to lie in this set's observation.
    pub fn contains(&self, q1: Loc, w: &Valuation) -> bool {
        self.minima.iter().any(|(q, v)| *q == q1 && v.leq(w))
    }

    pub fn contains_state(&self, m: &LcsModel, s: &GameState) -> bool {
        s.obs(m) == self.obs && self.contains(s.q1, &s.w)
    }

    /// `self ⊇ other`.
    pub fn includes(&self, other: &UpSet) -> bool {
        self.obs == other.obs && other.minima.iter().all(|(q, w)| self.contains(*q, w))
    }

    pub fn is_empty(&self) -> bool {
        self.minima.is_empty()
    }
}

/// A finite downward-closed set inside one observation, kept as its maximal elements.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KnowSet {
    pub obs: Observation,
    pub maxima: BTreeSet<(Loc, Valuation)>,
}

impl KnowSet {
    pub fn new(obs: Observation) -> KnowSet {
        KnowSet { obs, maxima: BTreeSet::new() }
    }

    pub fn insert(&mut self, q1: Loc, w: Valuation) -> bool {
        antichain_insert(&mut self.maxima, (q1, w), Keep::Maxima)
    }

    pub fn contains(&self, q1: Loc, w: &Valuation) -> bool {
        self.maxima.iter().any(|(q, v)| *q == q1 && w.leq(v))
    }

    /// `self ⊆ other`.
    pub fn subset_of(&self, other: &KnowSet) -> bool {
        self.obs == other.obs && self.maxima.iter().all(|(q, w)| other.contains(*q, w))
    }

    pub fn is_empty(&self) -> bool {
        self.maxima.is_empty()
    }

    pub fn union_with(&mut self, other: &KnowSet) {
        for (q, w) in &other.maxima {
            self.insert(*q, w.clone());
        }
    }

    /// Does the set meet the upward-closed set `u`?
    pub fn meets(&self, u: &UpSet) -> bool {
        self.obs == u.obs && u.minima.iter().any(|(q, w)| self.contains(*q, w))
    }

    /// The explicit states, with the observation filter applied.
    pub fn states(&self, m: &LcsModel) -> BTreeSet<GameState> {
        let tops: BTreeSet<GameState> = self
            .maxima
            .iter()
            .map(|(q1, w)| GameState { p: self.obs.p, q0: self.obs.q0, q1: *q1, w: w.clone() })
            .collect();
        down_closure(m, &tops)
    }
}

/// A member of L(S): a nonempty set of upward-closed sets sharing one observation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LFamily {
    pub obs: Observation,
    pub members: BTreeSet<UpSet>,
}

impl LFamily {
    /// Keeps only ⊆-minimal members; the ⊑-class of the family is unchanged.
    pub fn reduced(mut self) -> LFamily {
        let all: Vec<UpSet> = self.members.iter().cloned().collect();
        self.members.retain(|u| !all.iter().any(|v| v != u && u.includes(v)));
        self
    }
}

/// `l ⊑ l2`: every member of `l` contains some member of `l2`.
pub fn family_leq(l: &LFamily, l2: &LFamily) -> bool {
    l.obs == l2.obs && l.members.iter().all(|u| l2.members.iter().any(|v| u.includes(v)))
}

/// The ⊑-minimal families, one representative per equivalence class.
pub fn family_min(fams: &BTreeSet<LFamily>) -> BTreeSet<LFamily> {
    let mut out: Vec<LFamily> = Vec::new();
    for l in fams {
        if out.iter().any(|k| family_leq(k, l)) {
            continue;
        }
        out.retain(|k| !family_leq(l, k));
        out.push(l.clone());
    }
    out.into_iter().collect()
}
