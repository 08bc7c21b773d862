//! Partially specified lossy channel systems: data model, the `.lcs` text
//! format, and validation.
//!
//! A model has two processes. Process 0 is the partially specified one whose
//! controllable labels are resolved by synthesis; process 1 is the
//! environment. Channels are unbounded lossy FIFO queues over a finite
//! message alphabet.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use thiserror::Error;

use crate::order::Observation;

pub type Msg = u8;
pub type Word = Vec<Msg>;
pub type ChanId = usize;
pub type Loc = usize;
pub type LabelId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Guard {
    True,
    Empty,
    Head(Msg),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChanOp {
    Nop,
    Write(Msg),
    Read(Msg),
}

/// A transition of one process. `guards` and `ops` are total over the
/// channels of the model (indexed by [`ChanId`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub from: Loc,
    pub to: Loc,
    pub label: LabelId,
    pub guards: Vec<Guard>,
    pub ops: Vec<ChanOp>,
}

impl Transition {
    /// True when the transition can fire from a valuation whose channels are
    /// all empty (no head test, no read).
    pub fn enabled_on_empty(&self) -> bool {
        self.guards
            .iter()
            .zip(&self.ops)
            .all(|(g, op)| !matches!(g, Guard::Head(_)) && !matches!(op, ChanOp::Read(_)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Process {
    pub locations: Vec<String>,
    pub initial: Loc,
    pub transitions: Vec<Transition>,
}

impl Process {
    pub fn from_loc(&self, q: Loc) -> impl Iterator<Item = &Transition> + '_ {
        self.transitions.iter().filter(move |t| t.from == q)
    }

    pub fn into_loc(&self, q: Loc) -> impl Iterator<Item = &Transition> + '_ {
        self.transitions.iter().filter(move |t| t.to == q)
    }

    pub fn loc_id(&self, name: &str) -> Option<Loc> {
        self.locations.iter().position(|l| l == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Safety,
    Reach,
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectiveKind::Safety => write!(f, "safety"),
            ObjectiveKind::Reach => write!(f, "reach"),
        }
    }
}

/// One conjunctive clause over observations. Absent fields do not constrain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObsClause {
    pub p: Option<u8>,
    pub locs: Option<BTreeSet<Loc>>,
    /// Head constraints on observable channels; `None` stands for the empty channel.
    pub heads: Vec<(ChanId, Option<Msg>)>,
}

/// A visible set of states, given as a disjunction of observation clauses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObsPredicate {
    pub clauses: Vec<ObsClause>,
}

impl ObsPredicate {
    pub fn matches(&self, model: &LcsModel, o: &Observation) -> bool {
        self.clauses.iter().any(|cl| {
            cl.p.is_none_or(|p| p == o.p)
                && cl.locs.as_ref().is_none_or(|ls| ls.contains(&o.q0))
                && cl.heads.iter().all(|&(c, h)| match model.obs_index(c) {
                    Some(i) => o.heads[i] == h,
                    None => false,
                })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Objective {
    pub kind: ObjectiveKind,
    pub target: ObsPredicate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LcsModel {
    pub messages: Vec<String>,
    pub channels: Vec<String>,
    /// Observable channels, sorted by id.
    pub observable: Vec<ChanId>,
    /// All transition labels of both processes, sorted by name.
    pub labels: Vec<String>,
    pub procs: [Process; 2],
    pub controllable: BTreeSet<LabelId>,
    pub objective: Objective,
}

impl LcsModel {
    pub fn parse(text: &str) -> Result<LcsModel, ModelError> {
        parse_model(text)
    }

    pub fn proc(&self, p: u8) -> &Process {
        &self.procs[p as usize]
    }

    /// Labels occurring on transitions of process `p`.
    pub fn alphabet(&self, p: u8) -> BTreeSet<LabelId> {
        self.proc(p).transitions.iter().map(|t| t.label).collect()
    }

    /// Messages that some transition writes to channel `c`. Only these can
    /// ever occur in `c`.
    pub fn writable(&self, c: ChanId) -> BTreeSet<Msg> {
        self.procs
            .iter()
            .flat_map(|p| &p.transitions)
            .filter_map(|t| match t.ops[c] {
                ChanOp::Write(a) => Some(a),
                _ => None,
            })
            .collect()
    }

    pub fn is_controllable(&self, a: LabelId) -> bool {
        self.controllable.contains(&a)
    }

    /// Position of channel `c` among the observable channels.
    pub fn obs_index(&self, c: ChanId) -> Option<usize> {
        self.observable.iter().position(|&x| x == c)
    }

    pub fn label_id(&self, name: &str) -> Option<LabelId> {
        self.labels.iter().position(|l| l == name)
    }

    pub fn msg_id(&self, name: &str) -> Option<Msg> {
        self.messages.iter().position(|m| m == name).map(|i| i as Msg)
    }

    pub fn chan_id(&self, name: &str) -> Option<ChanId> {
        self.channels.iter().position(|c| c == name)
    }

    pub fn word_str(&self, w: &[Msg]) -> String {
        if w.is_empty() {
            return "eps".to_string();
        }
        let sep = if self.messages.iter().all(|m| m.chars().count() == 1) { "" } else { "." };
        w.iter()
            .map(|&m| self.messages[m as usize].as_str())
            .collect::<Vec<_>>()
            .join(sep)
    }

    pub fn head_str(&self, h: Option<Msg>) -> &str {
        match h {
            None => "eps",
            Some(m) => &self.messages[m as usize],
        }
    }

    pub fn obs_str(&self, o: &Observation) -> String {
        let heads = self
            .observable
            .iter()
            .zip(&o.heads)
            .map(|(&c, &h)| format!("{}:{}", self.channels[c], self.head_str(h)))
            .collect::<Vec<_>>()
            .join(",");
        format!("({}, {}, [{}])", o.p, self.procs[0].locations[o.q0], heads)
    }

    /// Every observation of the game: `|Q0| * (1 + (|M|+1)^|C_obs|)` of them.
    pub fn all_observations(&self) -> Vec<Observation> {
        let mut heads_all: Vec<Vec<Option<Msg>>> = vec![vec![]];
        for _ in &self.observable {
            let mut next = Vec::new();
            for h in &heads_all {
                let mut e = h.clone();
                e.push(None);
                next.push(e);
                for m in 0..self.messages.len() {
                    let mut e = h.clone();
                    e.push(Some(m as Msg));
                    next.push(e);
                }
            }
            heads_all = next;
        }
        let mut out = Vec::new();
        for q0 in 0..self.procs[0].locations.len() {
            for h in &heads_all {
                out.push(Observation { p: 0, q0, heads: h.clone() });
            }
            out.push(Observation { p: 1, q0, heads: vec![None; self.observable.len()] });
        }
        out.sort();
        out
    }

    /// The observations denoted by the objective's target predicate.
    pub fn objective_observations(&self) -> BTreeSet<Observation> {
        self.all_observations()
            .into_iter()
            .filter(|o| self.objective.target.matches(self, o))
            .collect()
    }

    pub fn validate(&self) -> ValidationReport {
        validate_model(self)
    }

    pub fn to_dsl(&self) -> String {
        serialize_model(self)
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    AlphabetsNotDisjoint { label: String },
    ControllableNotInSigma0 { label: String },
    ReadNotObservable { channel: String },
    GuardNotObservable { channel: String },
    HeadConstraintNotObservable { channel: String },
    HeadConstraintWithP1 { channel: String },
    ReservedName { name: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::AlphabetsNotDisjoint { label } => {
                write!(f, "alphabets not disjoint: label {label} used by both processes")
            }
            Violation::ControllableNotInSigma0 { label } => {
                write!(f, "controllable label {label} is not a label of process 0")
            }
            Violation::ReadNotObservable { channel } => {
                write!(f, "proc0 reads channel {channel} not in C_obs")
            }
            Violation::GuardNotObservable { channel } => {
                write!(f, "proc0 guards channel {channel} not in C_obs")
            }
            Violation::HeadConstraintNotObservable { channel } => {
                write!(f, "objective constrains head of channel {channel} not in C_obs")
            }
            Violation::HeadConstraintWithP1 { channel } => {
                write!(f, "objective constrains head of {channel} in a p=1 clause (heads are hidden when p=1)")
            }
            Violation::ReservedName { name } => write!(f, "`{name}` is reserved and cannot name a message"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_model(m: &LcsModel) -> ValidationReport {
    let mut rep = ValidationReport::default();
    if m.messages.iter().any(|x| x == "eps") {
        rep.violations.push(Violation::ReservedName { name: "eps".into() });
    }
    let s0 = m.alphabet(0);
    let s1 = m.alphabet(1);
    for &a in s0.intersection(&s1) {
        rep.violations.push(Violation::AlphabetsNotDisjoint { label: m.labels[a].clone() });
    }
    for &a in &m.controllable {
        if !s0.contains(&a) {
            rep.violations.push(Violation::ControllableNotInSigma0 { label: m.labels[a].clone() });
        }
    }
    let mut reported_read = BTreeSet::new();
    let mut reported_guard = BTreeSet::new();
    for t in &m.procs[0].transitions {
        for c in 0..m.channels.len() {
            if m.obs_index(c).is_some() {
                continue;
            }
            if matches!(t.ops[c], ChanOp::Read(_)) && reported_read.insert(c) {
                rep.violations.push(Violation::ReadNotObservable { channel: m.channels[c].clone() });
            }
            if t.guards[c] != Guard::True && reported_guard.insert(c) {
                rep.violations.push(Violation::GuardNotObservable { channel: m.channels[c].clone() });
            }
        }
    }
    for cl in &m.objective.target.clauses {
        for &(c, h) in &cl.heads {
            if m.obs_index(c).is_none() {
                rep.violations
                    .push(Violation::HeadConstraintNotObservable { channel: m.channels[c].clone() });
            } else if cl.p == Some(1) && h.is_some() {
                rep.violations.push(Violation::HeadConstraintWithP1 { channel: m.channels[c].clone() });
            }
        }
    }
    for (p, proc_) in m.procs.iter().enumerate() {
        for t in &proc_.transitions {
            for c in 0..m.channels.len() {
                let clash = match (t.guards[c], t.ops[c]) {
                    (Guard::Head(x), ChanOp::Read(y)) => x != y,
                    (Guard::Empty, ChanOp::Read(_)) => true,
                    _ => false,
                };
                if clash {
                    rep.warnings.push(format!(
                        "process {p} transition {} -{}-> {} can never fire: guard and read on channel {} are incompatible",
                        proc_.locations[t.from], m.labels[t.label], proc_.locations[t.to], m.channels[c]
                    ));
                }
            }
        }
    }
    rep
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: duplicate identifier {name}")]
    Duplicate { line: usize, col: usize, name: String },
    #[error("{line}:{col}: unknown channel {name}")]
    UnknownChannel { line: usize, col: usize, name: String },
    #[error("{line}:{col}: unknown message {name}")]
    UnknownMessage { line: usize, col: usize, name: String },
    #[error("{line}:{col}: unknown location {name}")]
    UnknownLocation { line: usize, col: usize, name: String },
    #[error("{line}:{col}: unknown label {name}")]
    UnknownLabel { line: usize, col: usize, name: String },
    #[error(
        "{line}:{col}: unsupported objective `{kind}`: weak parity objectives are undecidable for \
         lossy channel games under incomplete information (and so are parity, Buchi and co-Buchi); \
         only `safety` and `reach` can be solved"
    )]
    UnsupportedObjective { line: usize, col: usize, kind: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\'' || c == '.'
}

fn tokenize(text: &str) -> Result<Vec<Token>, ModelError> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let (line, col) = (ln + 1, i + 1);
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if is_ident_char(c) {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line, col });
                continue;
            }
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let sym = match two.as_str() {
                "->" => Some("->"),
                "==" => Some("=="),
                _ => None,
            };
            if let Some(s) = sym {
                out.push(Token { tok: Tok::Sym(s), line, col });
                i += 2;
                continue;
            }
            let s = match c {
                ':' => ":",
                ',' => ",",
                ';' => ";",
                '{' => "{",
                '}' => "}",
                '[' => "[",
                ']' => "]",
                '=' => "=",
                '@' => "@",
                '!' => "!",
                '?' => "?",
                '-' => "-",
                '|' => "|",
                _ => {
                    return Err(ModelError::Syntax { line, col, msg: format!("unexpected character `{c}`") })
                }
            };
            out.push(Token { tok: Tok::Sym(s), line, col });
            i += 1;
        }
    }
    let (line, col) = match text.lines().count() {
        0 => (1, 1),
        n => (n, text.lines().last().map_or(0, |l| l.chars().count()) + 1),
    };
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

const KEYWORDS: &[&str] = &["messages", "channels", "observable", "controllable", "process", "objective", "init"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

struct RawTransition {
    from: String,
    label: (String, usize, usize),
    to: String,
    guards: Vec<Guard>,
    ops: Vec<ChanOp>,
}

struct RawProcess {
    init: String,
    transitions: Vec<RawTransition>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ModelError> {
        let t = self.peek();
        Err(ModelError::Syntax { line: t.line, col: t.col, msg: msg.into() })
    }

    fn at_sym(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(x) if *x == s)
    }

    fn at_ident(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(x) if x == s)
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ModelError> {
        if self.at_sym(s) {
            self.next();
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.at_sym(s) {
            self.next();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<(String, usize, usize), ModelError> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                let t = self.next();
                Ok((s, t.line, t.col))
            }
            _ => self.err("expected identifier"),
        }
    }

    fn name(&mut self) -> Result<(String, usize, usize), ModelError> {
        if let Tok::Ident(s) = &self.peek().tok {
            if KEYWORDS.contains(&s.as_str()) {
                return self.err(format!("`{s}` is a keyword"));
            }
        }
        self.ident()
    }

    /// Comma separated list; empty when the next token is a keyword, `}` or EOF.
    fn name_list(&mut self) -> Result<Vec<(String, usize, usize)>, ModelError> {
        let mut out = Vec::new();
        let starts_list = match &self.peek().tok {
            Tok::Ident(s) => !KEYWORDS.contains(&s.as_str()),
            _ => false,
        };
        if !starts_list {
            return Ok(out);
        }
        out.push(self.name()?);
        while self.eat_sym(",") {
            out.push(self.name()?);
        }
        Ok(out)
    }
}

fn unique_list(list: Vec<(String, usize, usize)>) -> Result<Vec<String>, ModelError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (n, line, col) in list {
        if !seen.insert(n.clone()) {
            return Err(ModelError::Duplicate { line, col, name: n });
        }
        out.push(n);
    }
    Ok(out)
}

pub fn parse_model(text: &str) -> Result<LcsModel, ModelError> {
    let toks = tokenize(text)?;
    let mut ps = Parser { toks, pos: 0 };

    let mut messages: Option<Vec<String>> = None;
    let mut channels: Option<Vec<String>> = None;
    let mut observable_raw: Option<Vec<(String, usize, usize)>> = None;
    let mut controllable_raw: Option<Vec<(String, usize, usize)>> = None;
    let mut procs: [Option<RawProcess>; 2] = [None, None];
    let mut objective: Option<(String, usize, usize, Vec<Vec<RawStmt>>)> = None;

    loop {
        let tok = ps.peek().clone();
        let kw = match &tok.tok {
            Tok::Eof => break,
            Tok::Ident(s) => s.clone(),
            Tok::Sym(s) => return ps.err(format!("unexpected `{s}`")),
        };
        let dup = |_: ()| ModelError::Duplicate { line: tok.line, col: tok.col, name: kw.clone() };
        match kw.as_str() {
            "messages" | "channels" | "observable" | "controllable" => {
                ps.next();
                ps.expect_sym(":")?;
                let list = ps.name_list()?;
                match kw.as_str() {
                    "messages" if messages.is_none() => messages = Some(unique_list(list)?),
                    "channels" if channels.is_none() => channels = Some(unique_list(list)?),
                    "observable" if observable_raw.is_none() => observable_raw = Some(list),
                    "controllable" if controllable_raw.is_none() => controllable_raw = Some(list),
                    _ => return Err(dup(())),
                }
            }
            "process" => {
                ps.next();
                let (id, line, col) = ps.ident()?;
                let p = match id.as_str() {
                    "0" => 0,
                    "1" => 1,
                    _ => return Err(ModelError::Syntax { line, col, msg: "process id must be 0 or 1".into() }),
                };
                if procs[p].is_some() {
                    return Err(ModelError::Duplicate { line, col, name: format!("process {p}") });
                }
                let ch = channels.as_ref().ok_or(ModelError::Syntax {
                    line,
                    col,
                    msg: "`channels:` must be declared before processes".into(),
                })?;
                let ms = messages.as_ref().ok_or(ModelError::Syntax {
                    line,
                    col,
                    msg: "`messages:` must be declared before processes".into(),
                })?;
                procs[p] = Some(parse_process(&mut ps, ch, ms)?);
            }
            "objective" => {
                ps.next();
                if objective.is_some() {
                    return Err(dup(()));
                }
                let (kind, line, col) = ps.ident()?;
                if kind != "safety" && kind != "reach" {
                    return Err(ModelError::UnsupportedObjective { line, col, kind });
                }
                let mut clauses = vec![parse_clause(&mut ps)?];
                while ps.at_ident("or") || ps.at_sym("|") {
                    ps.next();
                    clauses.push(parse_clause(&mut ps)?);
                }
                objective = Some((kind, line, col, clauses));
            }
            other => return ps.err(format!("unexpected `{other}`, expected a section keyword")),
        }
    }

    let eof = ps.peek().clone();
    let missing = |what: &str| ModelError::Syntax { line: eof.line, col: eof.col, msg: format!("missing {what}") };
    let messages = messages.ok_or_else(|| missing("`messages:` section"))?;
    let channels = channels.ok_or_else(|| missing("`channels:` section"))?;
    let [p0, p1] = procs;
    let p0 = p0.ok_or_else(|| missing("`process 0`"))?;
    let p1 = p1.ok_or_else(|| missing("`process 1`"))?;
    let (kind, _, _, raw_clauses) = objective.ok_or_else(|| missing("`objective`"))?;

    let mut observable = Vec::new();
    for (n, line, col) in observable_raw.unwrap_or_default() {
        let c = channels
            .iter()
            .position(|x| *x == n)
            .ok_or(ModelError::UnknownChannel { line, col, name: n.clone() })?;
        if observable.contains(&c) {
            return Err(ModelError::Duplicate { line, col, name: n });
        }
        observable.push(c);
    }
    observable.sort_unstable();

    let mut label_names: BTreeSet<String> = BTreeSet::new();
    for rp in [&p0, &p1] {
        for t in &rp.transitions {
            label_names.insert(t.label.0.clone());
        }
    }
    let labels: Vec<String> = label_names.into_iter().collect();
    let lid = |n: &str| labels.iter().position(|l| l == n).unwrap();

    let build = |rp: RawProcess| -> Process {
        let mut locations = vec![rp.init.clone()];
        let loc = |n: &str, locations: &mut Vec<String>| -> Loc {
            match locations.iter().position(|l| l == n) {
                Some(i) => i,
                None => {
                    locations.push(n.to_string());
                    locations.len() - 1
                }
            }
        };
        let mut transitions = Vec::new();
        for t in rp.transitions {
            let from = loc(&t.from, &mut locations);
            let to = loc(&t.to, &mut locations);
            transitions.push(Transition { from, to, label: lid(&t.label.0), guards: t.guards, ops: t.ops });
        }
        Process { locations, initial: 0, transitions }
    };
    let procs = [build(p0), build(p1)];

    let mut controllable = BTreeSet::new();
    for (n, line, col) in controllable_raw.unwrap_or_default() {
        let a = labels
            .iter()
            .position(|l| *l == n)
            .ok_or(ModelError::UnknownLabel { line, col, name: n.clone() })?;
        if !controllable.insert(a) {
            return Err(ModelError::Duplicate { line, col, name: n });
        }
    }

    let mut clauses = Vec::new();
    for raw in raw_clauses {
        let mut cl = ObsClause::default();
        for st in raw {
            match st {
                RawStmt::P(p, line, col) => {
                    if cl.p.replace(p).is_some() {
                        return Err(ModelError::Duplicate { line, col, name: "p".into() });
                    }
                }
                RawStmt::Locs(names) => {
                    let set = cl.locs.get_or_insert_with(BTreeSet::new);
                    for (n, line, col) in names {
                        let q = procs[0]
                            .loc_id(&n)
                            .ok_or(ModelError::UnknownLocation { line, col, name: n.clone() })?;
                        set.insert(q);
                    }
                }
                RawStmt::Head(c, h, line, col) => {
                    let cid = channels
                        .iter()
                        .position(|x| *x == c)
                        .ok_or(ModelError::UnknownChannel { line, col, name: c.clone() })?;
                    let hm = match h {
                        None => None,
                        Some(m) => Some(
                            messages
                                .iter()
                                .position(|x| *x == m)
                                .ok_or(ModelError::UnknownMessage { line, col, name: m.clone() })?
                                as Msg,
                        ),
                    };
                    if cl.heads.iter().any(|&(x, _)| x == cid) {
                        return Err(ModelError::Duplicate { line, col, name: format!("head {c}") });
                    }
                    cl.heads.push((cid, hm));
                }
            }
        }
        cl.heads.sort();
        clauses.push(cl);
    }
    let kind = if kind == "safety" { ObjectiveKind::Safety } else { ObjectiveKind::Reach };

    Ok(LcsModel {
        messages,
        channels,
        observable,
        labels,
        procs,
        controllable,
        objective: Objective { kind, target: ObsPredicate { clauses } },
    })
}

fn parse_process(ps: &mut Parser, channels: &[String], messages: &[String]) -> Result<RawProcess, ModelError> {
    ps.expect_sym("{")?;
    if !ps.at_ident("init") {
        return ps.err("expected `init <location>`");
    }
    ps.next();
    let (init, _, _) = ps.name()?;
    ps.eat_sym(";");
    let chan = |n: &(String, usize, usize)| {
        channels
            .iter()
            .position(|c| *c == n.0)
            .ok_or(ModelError::UnknownChannel { line: n.1, col: n.2, name: n.0.clone() })
    };
    let msg = |n: &(String, usize, usize)| {
        messages
            .iter()
            .position(|c| *c == n.0)
            .map(|i| i as Msg)
            .ok_or(ModelError::UnknownMessage { line: n.1, col: n.2, name: n.0.clone() })
    };
    let mut transitions = Vec::new();
    while !ps.at_sym("}") {
        if matches!(ps.peek().tok, Tok::Eof) {
            return ps.err("unterminated process block, expected `}`");
        }
        let (from, _, _) = ps.name()?;
        ps.expect_sym("-")?;
        let label = ps.name()?;
        ps.expect_sym("->")?;
        let (to, _, _) = ps.name()?;
        let mut guards = vec![Guard::True; channels.len()];
        let mut ops = vec![ChanOp::Nop; channels.len()];
        let mut guarded = BTreeSet::new();
        if ps.eat_sym("[") {
            loop {
                let c = ps.ident()?;
                let cid = chan(&c)?;
                if !guarded.insert(cid) {
                    return Err(ModelError::Duplicate { line: c.1, col: c.2, name: format!("guard on {}", c.0) });
                }
                if ps.eat_sym("==") {
                    let e = ps.ident()?;
                    if e.0 != "eps" {
                        return Err(ModelError::Syntax { line: e.1, col: e.2, msg: "expected `eps`".into() });
                    }
                    guards[cid] = Guard::Empty;
                } else if ps.eat_sym("@") {
                    let m = ps.ident()?;
                    guards[cid] = Guard::Head(msg(&m)?);
                } else {
                    return ps.err("expected `==` or `@` in guard");
                }
                if !ps.eat_sym(",") {
                    break;
                }
            }
            ps.expect_sym("]")?;
        }
        let mut touched = BTreeSet::new();
        if ps.eat_sym("{") {
            loop {
                let c = ps.ident()?;
                let cid = chan(&c)?;
                if !touched.insert(cid) {
                    return Err(ModelError::Duplicate { line: c.1, col: c.2, name: format!("operation on {}", c.0) });
                }
                if ps.eat_sym("!") {
                    let m = ps.ident()?;
                    ops[cid] = ChanOp::Write(msg(&m)?);
                } else if ps.eat_sym("?") {
                    let m = ps.ident()?;
                    ops[cid] = ChanOp::Read(msg(&m)?);
                } else {
                    return ps.err("expected `!` or `?` in channel operation");
                }
                if !ps.eat_sym(",") {
                    break;
                }
            }
            ps.expect_sym("}")?;
        }
        ps.eat_sym(";");
        transitions.push(RawTransition { from, label, to, guards, ops });
    }
    ps.expect_sym("}")?;
    Ok(RawProcess { init, transitions })
}

enum RawStmt {
    P(u8, usize, usize),
    Locs(Vec<(String, usize, usize)>),
    Head(String, Option<String>, usize, usize),
}

fn parse_clause(ps: &mut Parser) -> Result<Vec<RawStmt>, ModelError> {
    ps.expect_sym("{")?;
    let mut out = Vec::new();
    while !ps.eat_sym("}") {
        let (kw, line, col) = ps.ident()?;
        match kw.as_str() {
            "p" => {
                ps.expect_sym("=")?;
                let (v, l, c) = ps.ident()?;
                let p = match v.as_str() {
                    "0" => 0,
                    "1" => 1,
                    _ => return Err(ModelError::Syntax { line: l, col: c, msg: "p must be 0 or 1".into() }),
                };
                out.push(RawStmt::P(p, line, col));
            }
            "loc" => {
                if !ps.at_ident("in") {
                    return ps.err("expected `in`");
                }
                ps.next();
                ps.expect_sym("{")?;
                let list = ps.name_list()?;
                ps.expect_sym("}")?;
                out.push(RawStmt::Locs(list));
            }
            "head" => {
                let (c, l, co) = ps.ident()?;
                ps.expect_sym("=")?;
                let (m, _, _) = ps.ident()?;
                let h = if m == "eps" { None } else { Some(m) };
                out.push(RawStmt::Head(c, h, l, co));
            }
            _ => return Err(ModelError::Syntax { line, col, msg: format!("unexpected `{kw}` in objective clause") }),
        }
        ps.eat_sym(";");
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Serialization

pub fn serialize_model(m: &LcsModel) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "messages: {}", m.messages.join(", "));
    let _ = writeln!(s, "channels: {}", m.channels.join(", "));
    let obs: Vec<&str> = m.observable.iter().map(|&c| m.channels[c].as_str()).collect();
    let _ = writeln!(s, "observable: {}", obs.join(", "));
    let ctl: Vec<&str> = m.controllable.iter().map(|&a| m.labels[a].as_str()).collect();
    let _ = writeln!(s, "controllable: {}", ctl.join(", "));
    for (p, pr) in m.procs.iter().enumerate() {
        let _ = writeln!(s, "\nprocess {p} {{");
        let _ = writeln!(s, "  init {}", pr.locations[pr.initial]);
        for t in &pr.transitions {
            let _ = write!(s, "  {} -{}-> {}", pr.locations[t.from], m.labels[t.label], pr.locations[t.to]);
            let guards: Vec<String> = t
                .guards
                .iter()
                .enumerate()
                .filter_map(|(c, g)| match g {
                    Guard::True => None,
                    Guard::Empty => Some(format!("{}==eps", m.channels[c])),
                    Guard::Head(x) => Some(format!("{}@{}", m.channels[c], m.messages[*x as usize])),
                })
                .collect();
            if !guards.is_empty() {
                let _ = write!(s, " [{}]", guards.join(", "));
            }
            let ops: Vec<String> = t
                .ops
                .iter()
                .enumerate()
                .filter_map(|(c, op)| match op {
                    ChanOp::Nop => None,
                    ChanOp::Write(x) => Some(format!("{}!{}", m.channels[c], m.messages[*x as usize])),
                    ChanOp::Read(x) => Some(format!("{}?{}", m.channels[c], m.messages[*x as usize])),
                })
                .collect();
            if !ops.is_empty() {
                let _ = write!(s, " {{{}}}", ops.join(", "));
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s, "}}");
    }
    let _ = write!(s, "\nobjective {}", m.objective.kind);
    for (i, cl) in m.objective.target.clauses.iter().enumerate() {
        if i > 0 {
            let _ = write!(s, " or");
        }
        let _ = write!(s, " {{");
        if let Some(p) = cl.p {
            let _ = write!(s, " p={p};");
        }
        if let Some(ls) = &cl.locs {
            let names: Vec<&str> = ls.iter().map(|&q| m.procs[0].locations[q].as_str()).collect();
            let _ = write!(s, " loc in {{{}}};", names.join(", "));
        }
        for &(c, h) in &cl.heads {
            let _ = write!(s, " head {} = {};", m.channels[c], m.head_str(h));
        }
        let _ = write!(s, " }}");
    }
    let _ = writeln!(s);
    s
}

/// Parses a single word written either letter-by-letter (single character
/// messages) or dot separated. `eps` and the empty string denote ε.
pub fn parse_word(m: &LcsModel, s: &str) -> Option<Word> {
    let s = s.trim();
    if s.is_empty() || s == "eps" {
        return Some(Vec::new());
    }
    if s.contains('.') {
        return s.split('.').map(|x| m.msg_id(x)).collect();
    }
    s.chars().map(|c| m.msg_id(&c.to_string())).collect()
}
