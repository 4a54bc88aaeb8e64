//! Turns a witness cycle into a small counterexample a person can read.
//!
//! The cycle is grown, branch-and-bound, into the smallest union of cycles
//! that is complete (every open constraint it touches appears with both
//! branches or neither) and that stays cyclic under every choice of those
//! branches. While some constraint is one-sided, a cycle through its other
//! side is added; once complete, a branch choice that breaks every cycle is
//! looked for and a cycle agreeing with it is added. RW edges then get their
//! supporting WR and WW edges back, constraint edges forced by the certain
//! ones are settled, and whatever is still uncertain is dropped.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;
use thiserror::Error;

use crate::history::History;
use crate::polygraph::{
    Branch, ConstraintId, Dependency, Edge, EdgeLabel, GeneralizedPolygraph, Origin, VertexId,
    WitnessCycle, INIT,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InterpretBudget {
    pub time: Duration,
    /// Longest cycle, in dependencies, considered when extending the set.
    pub max_cycle_len: usize,
    /// Cap on search steps across all cycle enumerations.
    pub max_steps: u64,
}

impl Default for InterpretBudget {
    fn default() -> Self {
        Self {
            time: Duration::from_secs(5),
            max_cycle_len: 12,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Anomaly {
    LostUpdate,
    LongFork,
    CausalityViolation,
    AbortedRead,
    IntermediateRead,
    InternalInconsistency,
    FutureRead,
    Unclassified,
}

impl fmt::Display for Anomaly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Anomaly::LostUpdate => "lost-update",
            Anomaly::LongFork => "long-fork",
            Anomaly::CausalityViolation => "causality-violation",
            Anomaly::AbortedRead => "aborted-read",
            Anomaly::IntermediateRead => "intermediate-read",
            Anomaly::InternalInconsistency => "internal-inconsistency",
            Anomaly::FutureRead => "future-read",
            Anomaly::Unclassified => "unclassified",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Certainty {
    Certain,
    Uncertain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaggedDependency {
    pub dep: Dependency,
    pub tag: Certainty,
}

/// A set of dependencies with certainty tags. Transactions pulled in only
/// to support RW edges are listed in `recovered`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Scenario {
    pub deps: Vec<TaggedDependency>,
    pub recovered: BTreeSet<VertexId>,
}

/// Known edges and branches of resolved constraints are certain.
fn default_tag(g: &GeneralizedPolygraph, d: &Dependency) -> Certainty {
    match d.origin {
        Origin::Constraint(c, _) if g.resolution(c).is_none() => Certainty::Uncertain,
        _ => Certainty::Certain,
    }
}

impl Scenario {
    pub fn from_dependencies(g: &GeneralizedPolygraph, deps: impl IntoIterator<Item = Dependency>) -> Self {
        let mut s = Scenario::default();
        for d in deps {
            s.insert(g, d);
        }
        s
    }

    fn insert(&mut self, g: &GeneralizedPolygraph, dep: Dependency) -> bool {
        if self.deps.iter().any(|t| t.dep == dep) {
            return false;
        }
        self.deps.push(TaggedDependency {
            dep,
            tag: default_tag(g, &dep),
        });
        self.deps.sort();
        true
    }

    pub fn len(&self) -> usize {
        self.deps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deps.is_empty()
    }

    pub fn transactions(&self) -> BTreeSet<VertexId> {
        self.deps
            .iter()
            .flat_map(|t| [t.dep.edge.from, t.dep.edge.to])
            .collect()
    }

    pub fn all_certain(&self) -> bool {
        self.deps.iter().all(|t| t.tag == Certainty::Certain)
    }
}

/// Cycles whose union is the scenario core. `complete` when every touched
/// constraint contributes from both branches or from neither.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdjoiningCycleSet {
    pub cycles: Vec<Vec<Dependency>>,
    pub complete: bool,
}

impl AdjoiningCycleSet {
    pub fn dependencies(&self) -> Vec<Dependency> {
        let set: BTreeSet<Dependency> = self.cycles.iter().flatten().copied().collect();
        set.into_iter().collect()
    }
}

/// Whether every open constraint in `deps` appears with both branches or
/// none.
pub fn is_complete(g: &GeneralizedPolygraph, deps: &[Dependency]) -> bool {
    one_sided(g, deps.iter()).is_none()
}

/// The smallest open constraint drawn from on exactly one side, with that
/// side.
fn one_sided<'a>(
    g: &GeneralizedPolygraph,
    deps: impl Iterator<Item = &'a Dependency>,
) -> Option<(ConstraintId, Branch)> {
    let mut sides: BTreeMap<ConstraintId, (bool, bool)> = BTreeMap::new();
    for d in deps {
        if let Origin::Constraint(c, b) = d.origin {
            if g.resolution(c).is_some() {
                continue;
            }
            let e = sides.entry(c).or_default();
            match b {
                Branch::Either => e.0 = true,
                Branch::Or => e.1 = true,
            }
        }
    }
    sides.into_iter().find_map(|(c, s)| match s {
        (true, false) => Some((c, Branch::Either)),
        (false, true) => Some((c, Branch::Or)),
        _ => None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Original,
    Participants,
    Recovered,
    Final,
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" => Ok(Stage::Original),
            "participants" => Ok(Stage::Participants),
            "recovered" => Ok(Stage::Recovered),
            "final" => Ok(Stage::Final),
            other => Err(format!("unknown stage {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub classification: Anomaly,
    /// The cycle set is provably the smallest complete one containing the
    /// witness.
    pub minimal: bool,
    pub acs: AdjoiningCycleSet,
    pub original: Scenario,
    pub participants: Scenario,
    pub recovered: Scenario,
    pub finalized: Scenario,
}

impl Counterexample {
    pub fn stage(&self, stage: Stage) -> &Scenario {
        match stage {
            Stage::Original => &self.original,
            Stage::Participants => &self.participants,
            Stage::Recovered => &self.recovered,
            Stage::Final => &self.finalized,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InterpretError {
    #[error("RW edge {0} has no supporting write")]
    MissingSupport(String),
}

/// All dependencies of a polygraph, indexed, with per-vertex out lists.
struct DependencyIndex {
    deps: Vec<Dependency>,
    index: FxHashMap<Dependency, u32>,
    out: Vec<Vec<u32>>,
    resolved: Vec<bool>,
}

impl DependencyIndex {
    fn new(g: &GeneralizedPolygraph) -> Self {
        let deps = g.dependencies();
        let mut out = vec![Vec::new(); g.vertex_count()];
        let mut index = FxHashMap::default();
        for (i, d) in deps.iter().enumerate() {
            out[d.edge.from as usize].push(i as u32);
            index.insert(*d, i as u32);
        }
        let resolved = (0..g.constraints().len() as ConstraintId)
            .map(|c| g.resolution(c).is_some())
            .collect();
        Self {
            deps,
            index,
            out,
            resolved,
        }
    }

    fn open(&self, c: ConstraintId) -> bool {
        !self.resolved[c as usize]
    }
}

/// Fixed branch choices, by constraint.
type Choice = FxHashMap<ConstraintId, Branch>;

struct CycleSearch<'a> {
    ix: &'a DependencyIndex,
    max_len: usize,
    steps: u64,
    max_steps: u64,
    deadline: Instant,
    exhausted: bool,
    truncated: bool,
    cache: FxHashMap<u32, Rc<Vec<Vec<u32>>>>,
}

/// State of one depth-first cycle walk.
struct Walk<'s> {
    target: VertexId,
    /// Vertices a cycle may pass through besides the target.
    min_vertex: VertexId,
    path: Vec<u32>,
    on_path: Vec<bool>,
    /// Branch in use and reference count per constraint.
    sides: FxHashMap<ConstraintId, (Branch, u32)>,
    /// Dependencies that do not count towards `max_new`.
    free: Option<&'s FxHashSet<u32>>,
    new: usize,
    max_new: usize,
    found: Vec<Vec<u32>>,
}

const PINNED: u32 = u32::MAX / 2;

impl CycleSearch<'_> {
    fn tick(&mut self) -> bool {
        self.steps += 1;
        if self.steps > self.max_steps
            || (self.steps % 4096 == 0 && Instant::now() > self.deadline)
        {
            self.exhausted = true;
        }
        !self.exhausted
    }

    fn sort(found: &mut [Vec<u32>]) {
        found.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    }

    /// Simple cycles through dependency `d`, with no two cyclically
    /// adjacent RW edges and consistent branches, shortest first.
    fn through(&mut self, d: u32) -> Rc<Vec<Vec<u32>>> {
        if let Some(c) = self.cache.get(&d) {
            return c.clone();
        }
        let dep = self.ix.deps[d as usize];
        let mut w = Walk {
            target: dep.edge.from,
            min_vertex: 0,
            path: vec![d],
            on_path: vec![false; self.ix.out.len()],
            sides: FxHashMap::default(),
            free: None,
            new: 0,
            max_new: usize::MAX,
            found: Vec::new(),
        };
        w.on_path[dep.edge.from as usize] = true;
        w.on_path[dep.edge.to as usize] = true;
        if let Origin::Constraint(c, b) = dep.origin {
            if self.ix.open(c) {
                w.sides.insert(c, (b, 1));
            }
        }
        self.walk(dep.edge.to, &mut w);
        Self::sort(&mut w.found);
        let found = Rc::new(w.found);
        if !self.exhausted {
            self.cache.insert(d, found.clone());
        }
        found
    }

    /// Simple cycles that agree with `choice`, each adding at most `max_new`
    /// dependencies outside `set`, fewest new dependencies first.
    fn agreeing(&mut self, choice: &Choice, set: &FxHashSet<u32>, max_new: usize) -> Vec<Vec<u32>> {
        let n = self.ix.out.len();
        let mut all = Vec::new();
        for s in 0..n as VertexId {
            let mut w = Walk {
                target: s,
                min_vertex: s,
                path: Vec::new(),
                on_path: vec![false; n],
                sides: choice.iter().map(|(&c, &b)| (c, (b, PINNED))).collect(),
                free: Some(set),
                new: 0,
                max_new,
                found: Vec::new(),
            };
            w.on_path[s as usize] = true;
            self.walk(s, &mut w);
            all.extend(w.found);
            if self.exhausted {
                break;
            }
        }
        let new = |c: &Vec<u32>| c.iter().filter(|i| !set.contains(i)).count();
        all.sort_by(|a, b| new(a).cmp(&new(b)).then_with(|| a.len().cmp(&b.len())).then_with(|| a.cmp(b)));
        all
    }

    fn walk(&mut self, v: VertexId, w: &mut Walk<'_>) {
        let ix = self.ix;
        for &e in &ix.out[v as usize] {
            if !self.tick() {
                return;
            }
            let de = ix.deps[e as usize];
            let rw = de.edge.label.is_rw();
            if w.path.last().is_some_and(|&p| ix.deps[p as usize].edge.label.is_rw()) && rw {
                continue;
            }
            let side = match de.origin {
                Origin::Constraint(c, b) if ix.open(c) => Some((c, b)),
                _ => None,
            };
            if let Some((c, b)) = side {
                if w.sides.get(&c).is_some_and(|&(s, _)| s != b) {
                    continue;
                }
            }
            let is_new = !w.free.is_some_and(|f| f.contains(&e));
            if is_new && w.new >= w.max_new {
                continue;
            }
            let to = de.edge.to;
            if to == w.target {
                let first_rw = w
                    .path
                    .first()
                    .map_or(rw, |&f| ix.deps[f as usize].edge.label.is_rw());
                if first_rw && rw {
                    continue;
                }
                if w.path.len() < self.max_len {
                    let mut cycle = w.path.clone();
                    cycle.push(e);
                    w.found.push(cycle);
                } else {
                    self.truncated = true;
                }
                continue;
            }
            if w.on_path[to as usize] || to < w.min_vertex {
                continue;
            }
            if w.path.len() + 2 > self.max_len {
                self.truncated = true;
                continue;
            }
            if let Some((c, b)) = side {
                w.sides.entry(c).or_insert((b, 0)).1 += 1;
            }
            w.on_path[to as usize] = true;
            w.path.push(e);
            w.new += is_new as usize;
            self.walk(to, w);
            w.new -= is_new as usize;
            w.path.pop();
            w.on_path[to as usize] = false;
            if let Some((c, _)) = side {
                let entry = w.sides.get_mut(&c).unwrap();
                entry.1 -= 1;
                if entry.1 == 0 {
                    w.sides.remove(&c);
                }
            }
            if self.exhausted {
                return;
            }
        }
    }
}

/// Whether the induced graph of `edges` has a cycle, self-loops included.
fn induced_cyclic(n: usize, edges: &[Edge]) -> bool {
    let mut a_out: Vec<Vec<VertexId>> = vec![Vec::new(); n];
    let mut b_out: Vec<Vec<VertexId>> = vec![Vec::new(); n];
    for e in edges {
        let list = if e.label.is_rw() { &mut b_out } else { &mut a_out };
        list[e.from as usize].push(e.to);
    }
    let mut k_out: Vec<Vec<VertexId>> = vec![Vec::new(); n];
    let mut indeg = vec![0u32; n];
    for i in 0..n {
        let mut succ: Vec<VertexId> = Vec::new();
        for &m in &a_out[i] {
            succ.push(m);
            succ.extend(b_out[m as usize].iter().copied());
        }
        succ.sort_unstable();
        succ.dedup();
        for &j in &succ {
            indeg[j as usize] += 1;
        }
        k_out[i] = succ;
    }
    let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = stack.pop() {
        seen += 1;
        for &j in &k_out[v] {
            indeg[j as usize] -= 1;
            if indeg[j as usize] == 0 {
                stack.push(j as usize);
            }
        }
    }
    seen < n
}

/// A choice of branches for the open constraints of `deps` under which
/// their induced graph is acyclic, or `None` when every choice leaves a
/// cycle.
fn escape(g: &GeneralizedPolygraph, deps: &[Dependency]) -> Option<Choice> {
    let open: Vec<ConstraintId> = deps
        .iter()
        .filter_map(|d| match d.origin {
            Origin::Constraint(c, _) if g.resolution(c).is_none() => Some(c),
            _ => None,
        })
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    fn go(i: usize, open: &[ConstraintId], choice: &mut Choice, deps: &[Dependency], g: &GeneralizedPolygraph) -> bool {
        // Undecided constraints contribute nothing, so a cycle here survives
        // every completion of `choice`.
        let edges: Vec<Edge> = deps
            .iter()
            .filter(|d| match d.origin {
                Origin::Constraint(c, b) if g.resolution(c).is_none() => choice.get(&c) == Some(&b),
                _ => true,
            })
            .map(|d| d.edge)
            .collect();
        if induced_cyclic(g.vertex_count(), &edges) {
            return false;
        }
        if i == open.len() {
            return true;
        }
        for b in [Branch::Either, Branch::Or] {
            choice.insert(open[i], b);
            if go(i + 1, open, choice, deps, g) {
                return true;
            }
        }
        choice.remove(&open[i]);
        false
    }
    let mut choice = Choice::default();
    go(0, &open, &mut choice, deps, g).then_some(choice)
}

struct AcsSearch<'a> {
    cycles: CycleSearch<'a>,
    g: &'a GeneralizedPolygraph,
    best: Option<(Vec<u32>, Vec<Vec<u32>>)>,
    visited: FxHashSet<Vec<u32>>,
}

impl AcsSearch<'_> {
    fn best_len(&self) -> usize {
        self.best.as_ref().map_or(usize::MAX, |b| b.0.len())
    }

    fn extend(&mut self, set: &[u32], chosen: &[Vec<u32>], cycle: &[u32]) {
        let mut next = set.to_vec();
        next.extend(cycle.iter().copied());
        next.sort_unstable();
        next.dedup();
        if next.len() >= self.best_len() {
            return;
        }
        let mut more = chosen.to_vec();
        more.push(cycle.to_vec());
        self.go(next, more);
    }

    fn go(&mut self, set: Vec<u32>, chosen: Vec<Vec<u32>>) {
        if self.cycles.exhausted || set.len() >= self.best_len() {
            return;
        }
        if !self.visited.insert(set.clone()) {
            return;
        }
        let ix = self.cycles.ix;
        let deps: Vec<Dependency> = set.iter().map(|&i| ix.deps[i as usize]).collect();
        if let Some((c, present)) = one_sided(self.g, deps.iter()) {
            let opposite: Vec<u32> = self
                .g
                .constraint(c)
                .dependencies(present.opposite())
                .map(|d| ix.index[&d])
                .collect();
            for d in opposite {
                let options = self.cycles.through(d);
                for cycle in options.iter() {
                    self.extend(&set, &chosen, cycle);
                    if self.cycles.exhausted {
                        return;
                    }
                }
            }
            return;
        }
        let Some(choice) = escape(self.g, &deps) else {
            self.best = Some((set, chosen));
            return;
        };
        // Some cycle agreeing with `choice` must be added.
        let room = self.best_len().saturating_sub(set.len() + 1);
        if room == 0 {
            return;
        }
        let members: FxHashSet<u32> = set.iter().copied().collect();
        let options = self.cycles.agreeing(&choice, &members, room);
        for cycle in &options {
            self.extend(&set, &chosen, cycle);
            if self.cycles.exhausted {
                return;
            }
        }
    }
}

/// Result of the cycle-set search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AcsOutcome {
    pub set: AdjoiningCycleSet,
    /// The search ran to completion with no cycle length cut-off.
    pub minimal: bool,
}

/// The smallest complete adjoining cycle set containing `cycle` that is a
/// violation on its own: every choice of branches for the open constraints
/// it touches leaves a cycle. When the budget runs out first, the best such
/// set found so far, or the cycle alone.
pub fn find_acs(cycle: &WitnessCycle, g: &GeneralizedPolygraph, budget: &InterpretBudget) -> AcsOutcome {
    let ix = DependencyIndex::new(g);
    let base: Vec<Dependency> = cycle.dependencies();
    let mut set: Vec<u32> = base
        .iter()
        .filter_map(|d| ix.index.get(d).copied())
        .collect();
    set.sort_unstable();
    set.dedup();
    let mut search = AcsSearch {
        cycles: CycleSearch {
            ix: &ix,
            max_len: budget.max_cycle_len,
            steps: 0,
            max_steps: budget.max_steps,
            deadline: Instant::now() + budget.time,
            exhausted: false,
            truncated: false,
            cache: FxHashMap::default(),
        },
        g,
        best: None,
        visited: FxHashSet::default(),
    };
    search.go(set, Vec::new());
    let minimal = !search.cycles.exhausted && !search.cycles.truncated && search.best.is_some();
    let to_deps = |ids: &[u32]| ids.iter().map(|&i| ix.deps[i as usize]).collect::<Vec<_>>();
    let set = match &search.best {
        Some((_, chosen)) => {
            let mut cycles = vec![base.clone()];
            cycles.extend(chosen.iter().map(|c| to_deps(c)));
            AdjoiningCycleSet {
                cycles,
                complete: true,
            }
        }
        None => AdjoiningCycleSet {
            complete: is_complete(g, &base),
            cycles: vec![base],
        },
    };
    AcsOutcome { set, minimal }
}

/// Adds, for every RW(k) edge `u → v`, the writer `w` whose value `u` read,
/// with `w -WW(k)-> v` and `w -WR(k)-> u`.
pub fn restore_rw_context(mut s: Scenario, g: &GeneralizedPolygraph) -> Result<Scenario, InterpretError> {
    let present = s.transactions();
    let rws: Vec<Dependency> = s
        .deps
        .iter()
        .map(|t| t.dep)
        .filter(|d| d.edge.label.is_rw())
        .collect();
    for rw in rws {
        let Edge { from: u, to: v, label } = rw.edge;
        let k = label.key().unwrap();
        let missing = || InterpretError::MissingSupport(g.edge_name(&rw.edge));
        let w = g.read_source(k, u).ok_or_else(missing)?;
        let ww_edge = Edge::new(w, v, EdgeLabel::Ww(k));
        let ww = if w == INIT {
            if !g.initial_edges().contains(&ww_edge) {
                return Err(missing());
            }
            Dependency {
                edge: ww_edge,
                origin: Origin::Initial,
            }
        } else {
            let c = g.find_constraint(k, w, v).ok_or_else(missing)?;
            let b = if g.constraint(c).writers.0 == w {
                Branch::Either
            } else {
                Branch::Or
            };
            Dependency {
                edge: ww_edge,
                origin: Origin::Constraint(c, b),
            }
        };
        s.insert(g, ww);
        s.insert(g, Dependency {
            edge: Edge::new(w, u, EdgeLabel::Wr(k)),
            origin: Origin::Known,
        });
        if !present.contains(&w) {
            s.recovered.insert(w);
        }
    }
    Ok(s)
}

/// Whether adding branch `b` of constraint `c` to `certain` puts one of the
/// branch's edges on a cycle of the induced graph.
fn branch_dead(certain: &[Dependency], g: &GeneralizedPolygraph, c: ConstraintId, b: Branch) -> bool {
    let n = g.vertex_count();
    let mut a_out: Vec<Vec<VertexId>> = vec![Vec::new(); n];
    let mut a_in: Vec<Vec<VertexId>> = vec![Vec::new(); n];
    let mut b_out: Vec<Vec<VertexId>> = vec![Vec::new(); n];
    let branch: Vec<Edge> = g.constraint(c).branch(b).to_vec();
    for e in certain.iter().map(|d| d.edge).chain(branch.iter().copied()) {
        if e.label.is_rw() {
            b_out[e.from as usize].push(e.to);
        } else {
            a_out[e.from as usize].push(e.to);
            a_in[e.to as usize].push(e.from);
        }
    }
    let mut flagged: BTreeSet<(VertexId, VertexId)> = BTreeSet::new();
    for e in &branch {
        if e.label.is_rw() {
            flagged.extend(a_in[e.from as usize].iter().map(|&i| (i, e.to)));
        } else {
            flagged.insert((e.from, e.to));
            flagged.extend(b_out[e.to as usize].iter().map(|&j| (e.from, j)));
        }
    }
    let reaches = |s: VertexId, t: VertexId| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([s]);
        seen[s as usize] = true;
        while let Some(x) = queue.pop_front() {
            if x == t {
                return true;
            }
            for &m in &a_out[x as usize] {
                for y in std::iter::once(m).chain(b_out[m as usize].iter().copied()) {
                    if !seen[y as usize] {
                        seen[y as usize] = true;
                        queue.push_back(y);
                    }
                }
            }
        }
        false
    };
    flagged.iter().any(|&(i, j)| i == j || reaches(j, i))
}

/// Settles constraints whose one branch would close a cycle with the certain
/// dependencies (the scenario's certain ones plus every known dependency of
/// `g`): the dead branch's dependencies leave the scenario and the
/// other branch's become certain. Repeats until nothing changes.
pub fn resolve_uncertain(mut s: Scenario, g: &GeneralizedPolygraph) -> Scenario {
    loop {
        let mut certain: BTreeSet<Dependency> = s
            .deps
            .iter()
            .filter(|t| t.tag == Certainty::Certain)
            .map(|t| t.dep)
            .collect();
        certain.extend(g.known_dependencies());
        let certain: Vec<Dependency> = certain.into_iter().collect();
        let touched: BTreeSet<ConstraintId> = s
            .deps
            .iter()
            .filter(|t| t.tag == Certainty::Uncertain)
            .filter_map(|t| match t.dep.origin {
                Origin::Constraint(c, _) => Some(c),
                _ => None,
            })
            .collect();
        let mut changed = false;
        for c in touched {
            let either_dead = branch_dead(&certain, g, c, Branch::Either);
            let or_dead = branch_dead(&certain, g, c, Branch::Or);
            let dead = match (either_dead, or_dead) {
                (true, false) => Branch::Either,
                (false, true) => Branch::Or,
                _ => continue,
            };
            s.deps
                .retain(|t| t.dep.origin != Origin::Constraint(c, dead));
            for t in &mut s.deps {
                if t.dep.origin == Origin::Constraint(c, dead.opposite()) {
                    t.tag = Certainty::Certain;
                }
            }
            changed = true;
            break;
        }
        if !changed {
            return s;
        }
    }
}

/// Drops every dependency still uncertain.
pub fn finalize(mut s: Scenario) -> Scenario {
    s.deps.retain(|t| t.tag == Certainty::Certain);
    let present = s.transactions();
    s.recovered.retain(|v| present.contains(v));
    s
}

/// Labels a cycle-based violation. Two transactions in the scenario that
/// read the same version of a key and both write it are a lost update; a
/// cycle through session order, or one whose only RW edge sits among SO and
/// WR edges, is a causality violation; two or more RW edges make a long fork.
pub fn classify(
    _h: &History,
    g: &GeneralizedPolygraph,
    cycle: &WitnessCycle,
    finalized: &Scenario,
) -> Anomaly {
    let mut txns = finalized.transactions();
    txns.extend(cycle.vertices());
    txns.remove(&INIT);
    let txns: Vec<VertexId> = txns.into_iter().collect();
    for k in 0..g.key_count() as u32 {
        let writers = g.writers(k);
        let rmw: Vec<(VertexId, VertexId)> = txns
            .iter()
            .filter(|v| writers.binary_search(v).is_ok())
            .filter_map(|&v| g.read_source(k, v).map(|src| (src, v)))
            .collect();
        for (i, a) in rmw.iter().enumerate() {
            if rmw[i + 1..].iter().any(|b| b.0 == a.0) {
                return Anomaly::LostUpdate;
            }
        }
    }
    let deps = cycle.dependencies();
    if deps.iter().any(|d| d.edge.label == EdgeLabel::So) {
        return Anomaly::CausalityViolation;
    }
    let rw = deps.iter().filter(|d| d.edge.label.is_rw()).count();
    let only_so_wr = deps
        .iter()
        .filter(|d| !d.edge.label.is_rw())
        .all(|d| matches!(d.edge.label, EdgeLabel::So | EdgeLabel::Wr(_)));
    if rw == 1 && only_so_wr {
        return Anomaly::CausalityViolation;
    }
    if rw >= 2 {
        return Anomaly::LongFork;
    }
    Anomaly::Unclassified
}

/// Runs every interpretation stage on a witness cycle.
pub fn interpret(
    h: &History,
    g: &GeneralizedPolygraph,
    cycle: &WitnessCycle,
    budget: &InterpretBudget,
) -> Result<Counterexample, InterpretError> {
    let original = Scenario::from_dependencies(g, cycle.dependencies());
    let acs = find_acs(cycle, g, budget);
    let participants = restore_rw_context(Scenario::from_dependencies(g, acs.set.dependencies()), g)?;
    let recovered = resolve_uncertain(participants.clone(), g);
    let finalized = finalize(recovered.clone());
    let classification = classify(h, g, cycle, &finalized);
    Ok(Counterexample {
        classification,
        minimal: acs.minimal,
        acs: acs.set,
        original,
        participants,
        recovered,
        finalized,
    })
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz rendering of one stage. Certain edges are solid, uncertain
/// ones dashed; recovered transactions are filled grey.
pub fn render_dot(ce: &Counterexample, stage: Stage, g: &GeneralizedPolygraph) -> String {
    let s = ce.stage(stage);
    let mut out = String::from("digraph counterexample {\n  node [shape=box];\n");
    for v in s.transactions() {
        let name = quote(&g.vertex_name(v));
        if s.recovered.contains(&v) {
            out.push_str(&format!("  {name} [style=filled, fillcolor=lightgrey];\n"));
        } else {
            out.push_str(&format!("  {name};\n"));
        }
    }
    for t in &s.deps {
        let style = match t.tag {
            Certainty::Certain => "solid",
            Certainty::Uncertain => "dashed",
        };
        out.push_str(&format!(
            "  {} -> {} [label={}, style={style}];\n",
            quote(&g.vertex_name(t.dep.edge.from)),
            quote(&g.vertex_name(t.dep.edge.to)),
            quote(&g.label_name(t.dep.edge.label)),
        ));
    }
    out.push_str("}\n");
    out
}
