//! Safety games: a backward fixpoint over families of upward-closed sets.
//!
//! A family `l` stands for "any knowledge meeting every member of `l` is
//! losing for Player∃". Starting from the error observations, families are
//! propagated backwards until the ⊑-minimal ones stabilise.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::model::{LabelId, LcsModel, ObjectiveKind};
use crate::order::{family_leq, KnowSet, LFamily, Observation, UpSet, Valuation};
use crate::semantics::{writable_valuation, GameCtx};
use crate::strategy::{extract_safety_strategy_with, ExtractOptions, StrategyAutomaton};
use crate::verify::{backward_coverability, product_lcs};
use crate::{SolveError, Winner};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BadFamilySet {
    pub families: BTreeSet<LFamily>,
    pub generation: usize,
}

impl BadFamilySet {
    /// Adds `l` unless an existing family is ⊑ it; drops families `l` is ⊑ to.
    pub fn insert(&mut self, l: LFamily) -> bool {
        let l = l.reduced();
        let same: Vec<&LFamily> = self.same_obs(&l.obs).collect();
        if same.iter().any(|k| family_leq(k, &l)) {
            return false;
        }
        let dominated: Vec<LFamily> = same.into_iter().filter(|k| family_leq(&l, k)).cloned().collect();
        for k in dominated {
            self.families.remove(&k);
        }
        self.families.insert(l);
        true
    }

    /// The families at observation `o`.
    pub fn same_obs<'a>(&'a self, o: &'a Observation) -> impl Iterator<Item = &'a LFamily> + 'a {
        let lo = LFamily { obs: o.clone(), members: BTreeSet::new() };
        self.families.range(lo..).take_while(move |l| &l.obs == o)
    }

    pub fn len(&self) -> usize {
        self.families.len()
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SafetyOptions {
    pub idle: bool,
    /// Keep only the ⊑-minimal families of the bad set.
    pub minimize: bool,
    pub max_generations: usize,
    pub max_families: usize,
    /// Stop before convergence once a bad family meets the initial states,
    /// or once a strategy extracted from the current bad set is proved
    /// winning on the product.
    pub early_exit: bool,
}

impl Default for SafetyOptions {
    fn default() -> Self {
        SafetyOptions { idle: true, minimize: true, max_generations: 10_000, max_families: 1_000_000, early_exit: true }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SafetyResult {
    pub winner: Winner,
    pub bad: BadFamilySet,
    pub generations: usize,
    pub max_family_size: usize,
    /// Whether the bad set reached its fixpoint.
    pub converged: bool,
    /// A strategy already verified winning, when the solve stopped early on it.
    #[serde(skip)]
    pub strategy: Option<StrategyAutomaton>,
}

/// The least valuation of each observation: heads written, everything else empty.
pub fn least_valuation(m: &LcsModel, o: &Observation) -> Valuation {
    let mut v = Valuation::empty(m.channels.len());
    if o.p == 0 {
        for (i, &c) in m.observable.iter().enumerate() {
            if let Some(h) = o.heads[i] {
                v.0[c] = vec![h];
            }
        }
    }
    v
}

/// `States(o)` as an upward-closed set.
pub fn states_of(m: &LcsModel, o: &Observation) -> UpSet {
    let mut u = UpSet::new(o.clone());
    let v = least_valuation(m, o);
    for q1 in 0..m.procs[1].locations.len() {
        u.insert(q1, v.clone());
    }
    u
}

pub fn init_bad(ctx: &GameCtx, err: &BTreeSet<Observation>) -> BadFamilySet {
    let mut b = BadFamilySet::default();
    for o in err {
        let u = states_of(ctx.model, o);
        if !u.is_empty() {
            b.insert(LFamily { obs: o.clone(), members: [u].into() });
        }
    }
    b
}

/// Memoised predecessor computations.
#[derive(Default)]
pub struct PreCache {
    pre0: BTreeMap<(UpSet, LabelId), BTreeMap<Observation, UpSet>>,
    pre1: BTreeMap<UpSet, Option<UpSet>>,
}

impl PreCache {
    pub fn pre0(&mut self, ctx: &GameCtx, u: &UpSet, a: LabelId) -> &BTreeMap<Observation, UpSet> {
        self.pre0.entry((u.clone(), a)).or_insert_with(|| {
            ctx.pre0_pieces(u, a).into_iter().filter_map(|p| writable_part(ctx.model, p)).map(|p| (p.obs.clone(), p)).collect()
        })
    }

    pub fn pre1(&mut self, ctx: &GameCtx, u: &UpSet) -> Option<UpSet> {
        self.pre1
            .entry(u.clone())
            .or_insert_with(|| ctx.pre1_pieces(u).into_iter().next().and_then(|p| writable_part(ctx.model, p)))
            .clone()
    }
}

/// The part of `u` whose channels hold writable messages only, or `None`
/// when no reachable state lies in `u`.
pub fn writable_part(m: &LcsModel, mut u: UpSet) -> Option<UpSet> {
    u.minima.retain(|(_, w)| writable_valuation(m, w));
    (!u.is_empty()).then_some(u)
}

/// Keeps only the ⊑-minimal piece sets. The flag records whether a set
/// depends on a fresh family and is or-ed when equal sets meet.
fn minimal_sets(sets: Vec<(BTreeSet<UpSet>, bool)>) -> Vec<(BTreeSet<UpSet>, bool)> {
    let mut out: Vec<(BTreeSet<UpSet>, bool)> = Vec::new();
    let leq = |a: &BTreeSet<UpSet>, b: &BTreeSet<UpSet>| a.iter().all(|u| b.iter().any(|v| u.includes(v)));
    for (s, fresh) in sets {
        if let Some(e) = out.iter_mut().find(|(k, _)| *k == s) {
            e.1 |= fresh;
            continue;
        }
        if out.iter().any(|(k, _)| leq(k, &s)) {
            continue;
        }
        out.retain(|(k, _)| !leq(&s, k));
        out.push((s, fresh));
    }
    out
}

/// Pieces of one candidate family and whether it uses a fresh family.
type Candidate = (BTreeSet<UpSet>, bool);

/// New families generated from `b` by one backward step. Only families
/// built from at least one member of `fresh` are returned; the others were
/// generated in an earlier step.
pub fn generate(ctx: &GameCtx, b: &BadFamilySet, fresh: &BTreeSet<LFamily>, cache: &mut PreCache) -> Vec<LFamily> {
    let m = ctx.model;
    let mut out = Vec::new();

    // Process 0 targets: candidate piece sets per (observation, label).
    let mut cands: BTreeMap<(Observation, LabelId), Vec<Candidate>> = BTreeMap::new();
    for &a in &m.alphabet(0) {
        for l in &b.families {
            let is_fresh = fresh.contains(l);
            let mut per_member: Vec<BTreeMap<Observation, UpSet>> = Vec::new();
            for u in &l.members {
                per_member.push(cache.pre0(ctx, u, a).clone());
            }
            let Some(first) = per_member.first() else { continue };
            for o in first.keys() {
                if per_member.iter().all(|pm| pm.contains_key(o)) {
                    let set: BTreeSet<UpSet> = per_member.iter().map(|pm| pm[o].clone()).collect();
                    cands.entry((o.clone(), a)).or_default().push((set, is_fresh));
                }
            }
        }
    }
    let targets: BTreeSet<Observation> =
        cands.iter().filter(|(_, v)| v.iter().any(|(_, f)| *f)).map(|((o, _), _)| o.clone()).collect();
    for o in targets {
        let Ok(acts) = ctx.acts_exists(&o) else { continue };
        let mut options: Vec<Vec<(BTreeSet<UpSet>, bool)>> = Vec::new();
        for &ch in &acts {
            let labels = ctx.acts_forall(&o, ch).unwrap_or_default();
            let mut sets = Vec::new();
            for a in labels {
                if let Some(v) = cands.get(&(o.clone(), a)) {
                    sets.extend(v.iter().cloned());
                }
            }
            let sets = minimal_sets(sets);
            if sets.is_empty() {
                options.clear();
                break;
            }
            options.push(sets);
        }
        if options.is_empty() {
            continue;
        }
        let mut combos: Vec<(BTreeSet<UpSet>, bool)> = vec![(BTreeSet::new(), false)];
        for opts in options {
            let mut next = Vec::new();
            for (c, cf) in &combos {
                for (s, sf) in &opts {
                    let mut u = c.clone();
                    u.extend(s.iter().cloned());
                    next.push((u, *cf || *sf));
                }
            }
            combos = minimal_sets(next);
        }
        for (members, f) in combos {
            if f {
                out.push(LFamily { obs: o.clone(), members });
            }
        }
    }

    // Process 1 targets.
    for l in fresh {
        let mut members = BTreeSet::new();
        let mut obs = None;
        let mut ok = true;
        for u in &l.members {
            match cache.pre1(ctx, u) {
                Some(p) => {
                    obs = Some(p.obs.clone());
                    members.insert(p);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if let (true, Some(obs)) = (ok, obs) {
            out.push(LFamily { obs, members });
        }
    }
    out
}

pub fn expand_bad(ctx: &GameCtx, b: &BadFamilySet, cache: &mut PreCache, minimize: bool) -> BadFamilySet {
    expand_from(ctx, b, &b.families, cache, minimize).0
}

/// One step that only regenerates from `fresh`; also returns the families
/// that entered the set and are still in it.
pub fn expand_from(
    ctx: &GameCtx,
    b: &BadFamilySet,
    fresh: &BTreeSet<LFamily>,
    cache: &mut PreCache,
    minimize: bool,
) -> (BadFamilySet, BTreeSet<LFamily>) {
    let mut next = b.clone();
    next.generation += 1;
    let mut added = BTreeSet::new();
    for l in generate(ctx, b, fresh, cache) {
        if minimize {
            let l = l.reduced();
            if next.insert(l.clone()) {
                added.insert(l);
            }
        } else if next.families.insert(l.clone()) {
            added.insert(l);
        }
    }
    added.retain(|l| next.families.contains(l));
    (next, added)
}

/// `Min(next) ⊆ Min(prev)`.
pub fn has_converged(prev: &BadFamilySet, next: &BadFamilySet) -> bool {
    let mut p = BadFamilySet::default();
    for l in &prev.families {
        p.insert(l.clone());
    }
    let mut n = BadFamilySet::default();
    for l in &next.families {
        n.insert(l.clone());
    }
    n.families.iter().all(|l| p.families.iter().any(|k| family_leq(k, l) && family_leq(l, k)))
}

/// Knowledge `k` is losing if it meets every member of some family.
pub fn losing_knowledge(k: &KnowSet, b: &BadFamilySet) -> bool {
    b.same_obs(&k.obs).any(|l| l.members.iter().all(|u| k.meets(u)))
}

/// Does `u` contain an initial state?
pub fn meets_initial(ctx: &GameCtx, u: &UpSet) -> bool {
    ctx.initial_states().iter().any(|s| u.contains_state(ctx.model, s))
}

pub fn winner_of(ctx: &GameCtx, b: &BadFamilySet) -> Winner {
    if b.families.iter().all(|l| l.members.iter().any(|u| !meets_initial(ctx, u))) {
        Winner::ExistsWins
    } else {
        Winner::ForallWins
    }
}

pub fn solve_safety(m: &LcsModel) -> Result<SafetyResult, SolveError> {
    solve_safety_with(m, SafetyOptions::default())
}

pub fn solve_safety_with(m: &LcsModel, opts: SafetyOptions) -> Result<SafetyResult, SolveError> {
    if m.objective.kind != ObjectiveKind::Safety {
        return Err(SolveError::WrongObjective { expected: ObjectiveKind::Safety, found: m.objective.kind });
    }
    let ctx = GameCtx { model: m, idle: opts.idle };
    let mut cache = PreCache::default();
    let mut b = init_bad(&ctx, &m.objective_observations());
    b.families.retain(|l| l.members.iter().all(|u| writable_part(m, u.clone()).is_some()));
    let mut fresh = b.families.clone();
    let mut converged = false;
    let mut strategy = None;
    loop {
        if opts.early_exit {
            if winner_of(&ctx, &b) == Winner::ForallWins {
                break;
            }
            strategy = certified_strategy(m, &b);
            if strategy.is_some() {
                break;
            }
        }
        if b.generation >= opts.max_generations {
            return Err(SolveError::Budget(format!(
                "safety fixpoint did not converge within {} generations",
                opts.max_generations
            )));
        }
        let (next, added) = expand_from(&ctx, &b, &fresh, &mut cache, opts.minimize);
        if next.families.len() > opts.max_families {
            return Err(SolveError::Budget(format!("more than {} bad families", opts.max_families)));
        }
        // Under pruning nothing new entering the set is exactly Min(next) ⊆ Min(b).
        let done = if opts.minimize { added.is_empty() } else { has_converged(&b, &next) };
        b = next;
        fresh = added;
        if done {
            converged = true;
            break;
        }
    }
    let winner = if strategy.is_some() { Winner::ExistsWins } else { winner_of(&ctx, &b) };
    let max_family_size = b.families.iter().map(|l| l.members.len()).max().unwrap_or(0);
    Ok(SafetyResult { winner, generations: b.generation, bad: b, max_family_size, converged, strategy })
}

/// A strategy extracted from the partial bad set `b` whose product with the
/// model provably never reaches Err.
fn certified_strategy(m: &LcsModel, b: &BadFamilySet) -> Option<StrategyAutomaton> {
    let a = extract_safety_strategy_with(m, b, ExtractOptions { max_nodes: 256 }).ok()?;
    let p = product_lcs(m, &a).ok()?;
    (!backward_coverability(&p, &m.objective_observations()).reachable).then_some(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    const ONE_STEP: &str = "
messages: 0
channels: c
observable:
process 0 { init q
  q -u-> err
}
process 1 { init s
  s -t-> s
}
objective safety { loc in {err}; }
";

    #[test]
    fn init_bad_examples() {
        let m = parse_model(ONE_STEP).unwrap();
        let ctx = GameCtx::with_idle(&m);
        let b = init_bad(&ctx, &m.objective_observations());
        assert_eq!(b.len(), 2);
        assert!(init_bad(&ctx, &BTreeSet::new()).is_empty());
        let k = parse_model(
            "messages: 0, 1\nchannels: K, L\nobservable: K\nprocess 0 { init q\n q -a-> q [K@0] }\n\
             process 1 { init r\n r -b-> r }\nobjective safety { p=0; head K = 0; }\n",
        )
        .unwrap();
        let ctx = GameCtx::with_idle(&k);
        let b = init_bad(&ctx, &k.objective_observations());
        let l = b.families.iter().next().unwrap();
        let u = l.members.iter().next().unwrap();
        assert_eq!(u.minima, [(0, Valuation(vec![vec![0], vec![]]))].into());
    }

    #[test]
    fn one_step_model_is_lost() {
        let m = parse_model(ONE_STEP).unwrap();
        let r = solve_safety(&m).unwrap();
        assert_eq!(r.winner, Winner::ForallWins);
        let ctx = GameCtx::with_idle(&m);
        let b0 = init_bad(&ctx, &m.objective_observations());
        let b1 = expand_bad(&ctx, &b0, &mut PreCache::default(), true);
        let q = Observation { p: 0, q0: 0, heads: vec![] };
        assert!(b1.families.iter().any(|l| l.obs == q));
    }

    #[test]
    fn every_choice_needs_a_witness() {
        let m = parse_model(
            "messages: 0\nchannels: c\nobservable:\ncontrollable: x, y\n\
             process 0 { init q\n q -x-> q\n q -y-> err }\nprocess 1 { init s\n s -t-> s }\n\
             objective safety { loc in {err}; }\n",
        )
        .unwrap();
        let r = solve_safety(&m).unwrap();
        assert_eq!(r.winner, Winner::ExistsWins);
        let q = Observation { p: 0, q0: 0, heads: vec![] };
        assert!(!r.bad.families.iter().any(|l| l.obs == q));
    }

    #[test]
    fn error_at_initial_observation_is_lost() {
        let m = parse_model(&ONE_STEP.replace("loc in {err}", "loc in {q}")).unwrap();
        assert_eq!(solve_safety(&m).unwrap().winner, Winner::ForallWins);
    }

    #[test]
    fn convergence_examples() {
        let m = parse_model(ONE_STEP).unwrap();
        let ctx = GameCtx::with_idle(&m);
        let b0 = init_bad(&ctx, &m.objective_observations());
        assert!(has_converged(&b0, &b0));
        assert!(has_converged(&BadFamilySet::default(), &BadFamilySet::default()));
        let b1 = expand_bad(&ctx, &b0, &mut PreCache::default(), true);
        assert!(!has_converged(&b0, &b1));
        let mut dominated = b0.clone();
        let l = b0.families.iter().next().unwrap();
        let mut bigger = l.clone();
        let mut extra = states_of(&m, &l.obs);
        extra.minima = extra.minima.into_iter().map(|(q, _)| (q, Valuation(vec![vec![0]]))).collect();
        bigger.members = [extra].into();
        dominated.families.insert(bigger);
        assert!(has_converged(&b0, &dominated));
    }

    #[test]
    fn losing_knowledge_examples() {
        let o = Observation { p: 0, q0: 1, heads: vec![] };
        let mut u = UpSet::new(o.clone());
        u.insert(0, Valuation(vec![vec![0]]));
        let mut b = BadFamilySet::default();
        b.insert(LFamily { obs: o.clone(), members: [u].into() });
        let mut k = KnowSet::new(o.clone());
        k.insert(0, Valuation(vec![vec![0, 0]]));
        assert!(losing_knowledge(&k, &b));
        let mut below = KnowSet::new(o.clone());
        below.insert(0, Valuation(vec![vec![]]));
        assert!(!losing_knowledge(&below, &b));
        let other = KnowSet { obs: Observation { p: 1, q0: 1, heads: vec![] }, maxima: k.maxima.clone() };
        assert!(!losing_knowledge(&other, &b));
    }
}
