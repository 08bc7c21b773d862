//! Reachability games: forward exploration of Player∃'s knowledge as a
//! finite forest, labelled bottom-up.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::model::{LabelId, LcsModel, ObjectiveKind};
use crate::order::{KnowSet, Observation, Valuation};
use crate::semantics::{Choice, GameCtx};
use crate::{SolveError, Winner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeStatus {
    Open,
    ClosedGoal,
    ClosedSubsumed { ancestor: usize },
    ClosedS1,
    Expanded,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForestNode {
    pub id: usize,
    pub knowledge: KnowSet,
    pub parent: Option<(usize, Choice, LabelId)>,
    pub children: BTreeMap<(Choice, LabelId), BTreeSet<usize>>,
    pub status: NodeStatus,
    pub win: bool,
    pub witness: Option<Choice>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Forest {
    pub nodes: Vec<ForestNode>,
    pub roots: Vec<usize>,
}

impl Forest {
    pub fn ancestors(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.nodes[id].parent.map(|p| p.0);
        while let Some(n) = cur {
            out.push(n);
            cur = self.nodes[n].parent.map(|p| p.0);
        }
        out
    }

    /// A bound on the length of plays the forest accounts for: every edge
    /// is one process 0 move plus the process 1 stretch behind it.
    pub fn depth_bound(&self, m: &LcsModel) -> usize {
        let ctx = GameCtx::new(m);
        let goal = m.objective_observations();
        let mut stretch = ctx.s1_stretch(&initial_knowledge(&ctx, 1), Some(&goal));
        let mut height = 0;
        for n in &self.nodes {
            height = height.max(self.ancestors(n.id).len());
            for (_, a) in n.children.keys() {
                for d in ctx.post0_pieces(&n.knowledge, *a) {
                    if d.obs.p == 1 {
                        stretch = stretch.max(ctx.s1_stretch(&d, Some(&goal)));
                    }
                }
            }
        }
        stretch + (height + 1) * (stretch + 1)
    }

    pub fn to_dot(&self, m: &LcsModel) -> String {
        let mut s = String::from("digraph forest {\n  node [shape=box, fontname=monospace];\n");
        for n in &self.nodes {
            let status = match n.status {
                NodeStatus::Open => "open".to_string(),
                NodeStatus::ClosedGoal => "goal".to_string(),
                NodeStatus::ClosedSubsumed { ancestor } => format!("subsumed by {ancestor}"),
                NodeStatus::ClosedS1 => "p=1 leaf".to_string(),
                NodeStatus::Expanded => "expanded".to_string(),
            };
            let _ = writeln!(
                s,
                "  n{} [label=\"#{} {}\\n|max|={} {}\\nwin={}\", color={}];",
                n.id,
                n.id,
                m.obs_str(&n.knowledge.obs),
                n.knowledge.maxima.len(),
                status,
                n.win,
                if n.win { "darkgreen" } else { "red" }
            );
        }
        for n in &self.nodes {
            for ((ch, a), kids) in &n.children {
                for k in kids {
                    let _ = writeln!(s, "  n{} -> n{} [label=\"{}/{}\"];", n.id, k, ch.name(m), m.labels[*a]);
                }
            }
        }
        s.push_str("}\n");
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReachResult {
    pub winner: Winner,
    pub forest: Forest,
}

pub const DEFAULT_MAX_NODES: usize = 200_000;

fn initial_knowledge(ctx: &GameCtx, p: u8) -> KnowSet {
    let m = ctx.model;
    let o = Observation { p, q0: m.procs[0].initial, heads: vec![None; m.observable.len()] };
    let mut k = KnowSet::new(o);
    k.insert(m.procs[1].initial, Valuation::empty(m.channels.len()));
    k
}

pub fn build_forest(m: &LcsModel, max_nodes: usize) -> Result<Forest, SolveError> {
    if m.objective.kind != ObjectiveKind::Reach {
        return Err(SolveError::WrongObjective { expected: ObjectiveKind::Reach, found: m.objective.kind });
    }
    let ctx = GameCtx::new(m);
    let goal = m.objective_observations();
    let mut forest = Forest::default();
    let mut roots: Vec<KnowSet> = vec![initial_knowledge(&ctx, 0)];
    let s1 = initial_knowledge(&ctx, 1);
    if !goal.contains(&s1.obs) {
        roots.extend(ctx.post1_obs(&s1, Some(&goal)));
    }
    let mut seen_roots = BTreeSet::new();
    for k in roots {
        if seen_roots.insert(k.clone()) {
            let id = forest.nodes.len();
            forest.nodes.push(new_node(id, k, None));
            forest.roots.push(id);
        }
    }

    let mut work: Vec<usize> = forest.roots.iter().rev().copied().collect();
    while let Some(id) = work.pop() {
        let d = forest.nodes[id].knowledge.clone();
        if goal.contains(&d.obs) {
            forest.nodes[id].status = NodeStatus::ClosedGoal;
            continue;
        }
        if d.obs.p == 1 {
            forest.nodes[id].status = NodeStatus::ClosedS1;
            continue;
        }
        if let Some(anc) = forest.ancestors(id).into_iter().find(|&a| forest.nodes[a].knowledge.subset_of(&d)) {
            forest.nodes[id].status = NodeStatus::ClosedSubsumed { ancestor: anc };
            continue;
        }
        forest.nodes[id].status = NodeStatus::Expanded;
        let acts = ctx.acts_exists(&d.obs).unwrap_or_default();
        let mut made: BTreeMap<(LabelId, KnowSet), usize> = BTreeMap::new();
        let mut new_ids = Vec::new();
        for &ch in &acts {
            for a in ctx.acts_forall(&d.obs, ch).unwrap_or_default() {
                let mut kids = BTreeSet::new();
                for d2 in ctx.post0_obs(&d, a, Some(&goal)) {
                    let kid = *made.entry((a, d2.clone())).or_insert_with(|| {
                        let nid = forest.nodes.len();
                        forest.nodes.push(new_node(nid, d2, Some((id, ch, a))));
                        new_ids.push(nid);
                        nid
                    });
                    kids.insert(kid);
                }
                forest.nodes[id].children.insert((ch, a), kids);
            }
        }
        if forest.nodes.len() > max_nodes {
            return Err(SolveError::Budget(format!("knowledge forest exceeded {max_nodes} nodes")));
        }
        work.extend(new_ids.into_iter().rev());
    }
    Ok(forest)
}

fn new_node(id: usize, knowledge: KnowSet, parent: Option<(usize, Choice, LabelId)>) -> ForestNode {
    ForestNode {
        id,
        knowledge,
        parent,
        children: BTreeMap::new(),
        status: NodeStatus::Open,
        win: false,
        witness: None,
    }
}

/// Bottom-up labelling: a choice wins when every adversary label and every
/// resulting knowledge wins; a node wins when some choice does. A choice
/// with no adversary label at all is a dead end and does not win.
pub fn label_win(forest: &mut Forest) {
    for id in (0..forest.nodes.len()).rev() {
        let n = &forest.nodes[id];
        let (win, witness) = match n.status {
            NodeStatus::ClosedGoal => (true, None),
            NodeStatus::Open | NodeStatus::ClosedS1 | NodeStatus::ClosedSubsumed { .. } => (false, None),
            NodeStatus::Expanded => {
                let mut by_choice: BTreeMap<Choice, bool> = BTreeMap::new();
                for ((ch, _), kids) in &n.children {
                    let ok = !kids.is_empty() && kids.iter().all(|&k| forest.nodes[k].win);
                    let e = by_choice.entry(*ch).or_insert(true);
                    *e = *e && ok;
                }
                let w = by_choice.iter().find(|(_, &ok)| ok).map(|(c, _)| *c);
                (w.is_some(), w)
            }
        };
        forest.nodes[id].win = win;
        forest.nodes[id].witness = witness;
    }
}

pub fn solve_reach(m: &LcsModel) -> Result<ReachResult, SolveError> {
    solve_reach_with(m, DEFAULT_MAX_NODES)
}

pub fn solve_reach_with(m: &LcsModel, max_nodes: usize) -> Result<ReachResult, SolveError> {
    let mut forest = build_forest(m, max_nodes)?;
    label_win(&mut forest);
    let winner =
        if forest.roots.iter().all(|&r| forest.nodes[r].win) { Winner::ExistsWins } else { Winner::ForallWins };
    Ok(ReachResult { winner, forest })
}
