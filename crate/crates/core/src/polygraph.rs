//! Generalized polygraphs: the known graph of SO/WR edges plus one
//! either/or constraint per unordered pair of writers of a key.
//!
//! Vertex `0` is the virtual initial transaction ⊥, which writes the initial
//! value of every key and precedes every other writer. Its WW edges, and the
//! RW edges from readers of initial values, are axioms rather than
//! constraints.

use std::collections::BTreeMap;
use std::fmt;

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::history::{effective_reads_writes, History, TxnId, WriteIndex, INITIAL_VALUE};

pub type VertexId = u32;
pub type KeyId = u32;
pub type ConstraintId = u32;

/// The virtual initial transaction.
pub const INIT: VertexId = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeLabel {
    So,
    Wr(KeyId),
    Ww(KeyId),
    Rw(KeyId),
}

impl EdgeLabel {
    pub fn is_rw(self) -> bool {
        matches!(self, EdgeLabel::Rw(_))
    }

    pub fn key(self) -> Option<KeyId> {
        match self {
            EdgeLabel::So => None,
            EdgeLabel::Wr(k) | EdgeLabel::Ww(k) | EdgeLabel::Rw(k) => Some(k),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub from: VertexId,
    pub to: VertexId,
    pub label: EdgeLabel,
}

impl Edge {
    pub const fn new(from: VertexId, to: VertexId, label: EdgeLabel) -> Self {
        Self { from, to, label }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Either,
    Or,
}

impl Branch {
    pub fn opposite(self) -> Branch {
        match self {
            Branch::Either => Branch::Or,
            Branch::Or => Branch::Either,
        }
    }
}

/// Where a dependency comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    /// SO or WR edge observed directly in the history.
    Known,
    /// WW edge from ⊥, or RW edge from a reader of an initial value.
    Initial,
    /// Member of one branch of a constraint.
    Constraint(ConstraintId, Branch),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Dependency {
    pub edge: Edge,
    pub origin: Origin,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneralizedConstraint {
    pub id: ConstraintId,
    pub key: KeyId,
    /// `(T, S)` with `T < S`; `either` orders `T` before `S`.
    pub writers: (VertexId, VertexId),
    /// WW `T→S`, then RW `T'→S` for each reader `T'` of `T`'s value, by reader.
    pub either: Vec<Edge>,
    /// WW `S→T`, then RW `S'→T` for each reader `S'` of `S`'s value, by reader.
    pub or: Vec<Edge>,
}

impl GeneralizedConstraint {
    pub fn branch(&self, b: Branch) -> &[Edge] {
        match b {
            Branch::Either => &self.either,
            Branch::Or => &self.or,
        }
    }

    pub fn dependencies(&self, b: Branch) -> impl Iterator<Item = Dependency> + '_ {
        self.branch(b).iter().map(move |&edge| Dependency {
            edge,
            origin: Origin::Constraint(self.id, b),
        })
    }
}

/// Constraint and unknown-dependency counts over unresolved constraints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConstraintStats {
    pub constraints: usize,
    pub unknown_dependencies: usize,
}

#[derive(Clone, Debug)]
pub struct GeneralizedPolygraph {
    /// Index 0 is ⊥; the rest are committed transactions in session order.
    txns: Vec<Option<TxnId>>,
    vertex_of: BTreeMap<TxnId, VertexId>,
    keys: Vec<String>,
    /// SO and WR edges.
    base: Vec<Edge>,
    /// ⊥ axioms: WW from ⊥ to each writer, RW from initial readers to writers.
    initial: Vec<Edge>,
    /// Writers of each key by vertex, excluding ⊥.
    writers: Vec<Vec<VertexId>>,
    /// Effective readers of `(key, writer)`, sorted.
    readers: BTreeMap<(KeyId, VertexId), Vec<VertexId>>,
    constraints: Vec<GeneralizedConstraint>,
    resolution: Vec<Option<Branch>>,
    by_pair: FxHashMap<(KeyId, VertexId, VertexId), ConstraintId>,
}

impl GeneralizedPolygraph {
    pub fn vertex_count(&self) -> usize {
        self.txns.len()
    }

    /// `None` for ⊥.
    pub fn txn(&self, v: VertexId) -> Option<TxnId> {
        self.txns[v as usize]
    }

    pub fn vertex_of(&self, id: TxnId) -> Option<VertexId> {
        self.vertex_of.get(&id).copied()
    }

    pub fn vertex_name(&self, v: VertexId) -> String {
        match self.txn(v) {
            None => "init".to_owned(),
            Some(id) => id.to_string(),
        }
    }

    pub fn key_count(&self) -> usize {
        self.keys.len()
    }

    pub fn key_name(&self, k: KeyId) -> &str {
        &self.keys[k as usize]
    }

    pub fn key_id(&self, name: &str) -> Option<KeyId> {
        self.keys
            .binary_search_by(|k| k.as_str().cmp(name))
            .ok()
            .map(|i| i as KeyId)
    }

    pub fn label_name(&self, label: EdgeLabel) -> String {
        match label {
            EdgeLabel::So => "SO".to_owned(),
            EdgeLabel::Wr(k) => format!("WR({})", self.key_name(k)),
            EdgeLabel::Ww(k) => format!("WW({})", self.key_name(k)),
            EdgeLabel::Rw(k) => format!("RW({})", self.key_name(k)),
        }
    }

    pub fn edge_name(&self, e: &Edge) -> String {
        format!(
            "{}-{}->{}",
            self.vertex_name(e.from),
            self.label_name(e.label),
            self.vertex_name(e.to)
        )
    }

    /// SO and WR edges.
    pub fn base_edges(&self) -> &[Edge] {
        &self.base
    }

    /// Axiomatic edges of ⊥.
    pub fn initial_edges(&self) -> &[Edge] {
        &self.initial
    }

    pub fn writers(&self, k: KeyId) -> &[VertexId] {
        &self.writers[k as usize]
    }

    /// Effective readers of the value `writer` installed on `k`.
    pub fn readers(&self, k: KeyId, writer: VertexId) -> &[VertexId] {
        self.readers
            .get(&(k, writer))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Which writer's value `reader` observed on `k`, if it read `k`.
    pub fn read_source(&self, k: KeyId, reader: VertexId) -> Option<VertexId> {
        self.base
            .iter()
            .find(|e| e.to == reader && e.label == EdgeLabel::Wr(k))
            .map(|e| e.from)
    }

    pub fn constraints(&self) -> &[GeneralizedConstraint] {
        &self.constraints
    }

    pub fn constraint(&self, c: ConstraintId) -> &GeneralizedConstraint {
        &self.constraints[c as usize]
    }

    /// The constraint for writers `a`, `b` of `k`, in either order.
    pub fn find_constraint(&self, k: KeyId, a: VertexId, b: VertexId) -> Option<ConstraintId> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.by_pair.get(&(k, lo, hi)).copied()
    }

    pub fn resolution(&self, c: ConstraintId) -> Option<Branch> {
        self.resolution[c as usize]
    }

    /// Moves a branch into the known graph.
    pub fn resolve(&mut self, c: ConstraintId, b: Branch) {
        debug_assert!(self.resolution[c as usize].is_none());
        self.resolution[c as usize] = Some(b);
    }

    /// A copy with every resolution undone.
    pub fn unresolved(&self) -> GeneralizedPolygraph {
        let mut g = self.clone();
        g.resolution.iter_mut().for_each(|r| *r = None);
        g
    }

    pub fn open_constraints(&self) -> impl Iterator<Item = &GeneralizedConstraint> + '_ {
        self.constraints
            .iter()
            .filter(move |c| self.resolution[c.id as usize].is_none())
    }

    /// Base, initial, and resolved-branch edges with their origins.
    pub fn known_dependencies(&self) -> impl Iterator<Item = Dependency> + '_ {
        let base = self.base.iter().map(|&edge| Dependency {
            edge,
            origin: Origin::Known,
        });
        let init = self.initial.iter().map(|&edge| Dependency {
            edge,
            origin: Origin::Initial,
        });
        let resolved = self.constraints.iter().flat_map(move |c| {
            self.resolution[c.id as usize]
                .into_iter()
                .flat_map(move |b| c.dependencies(b))
        });
        base.chain(init).chain(resolved)
    }

    /// Known dependencies plus both branches of every open constraint.
    pub fn dependencies(&self) -> Vec<Dependency> {
        let mut out: Vec<Dependency> = self.known_dependencies().collect();
        for c in self.open_constraints() {
            out.extend(c.dependencies(Branch::Either));
            out.extend(c.dependencies(Branch::Or));
        }
        out
    }

    /// Whether `d` is an edge of this polygraph under its claimed origin.
    /// Resolved constraints only admit their surviving branch.
    pub fn has_dependency(&self, d: &Dependency) -> bool {
        match d.origin {
            Origin::Known => self.base.contains(&d.edge),
            Origin::Initial => self.initial.contains(&d.edge),
            Origin::Constraint(c, b) => {
                let Some(con) = self.constraints.get(c as usize) else {
                    return false;
                };
                if self.resolution[c as usize].is_some_and(|r| r != b) {
                    return false;
                }
                con.branch(b).contains(&d.edge)
            }
        }
    }
}

/// Builds the vertices, SO edges between consecutive committed transactions
/// of a session, and WR edges from each value's writer to its effective
/// readers. Reads that no committed transaction explains are skipped; the
/// completeness gate reports them.
pub fn create_known_graph(h: &History) -> GeneralizedPolygraph {
    let mut txns = vec![None];
    let mut vertex_of = BTreeMap::new();
    for t in h.committed() {
        vertex_of.insert(t.id, txns.len() as VertexId);
        txns.push(Some(t.id));
    }

    let mut key_set = std::collections::BTreeSet::new();
    for t in h.committed() {
        for op in &t.ops {
            key_set.insert(op.key.clone());
        }
    }
    let keys: Vec<String> = key_set.into_iter().collect();
    let key_id = |name: &str| keys.binary_search_by(|k| k.as_str().cmp(name)).unwrap() as KeyId;

    let mut base = Vec::new();
    for s in h.sessions() {
        let committed: Vec<VertexId> = s
            .transactions
            .iter()
            .filter(|t| t.is_committed())
            .map(|t| vertex_of[&t.id])
            .collect();
        for w in committed.windows(2) {
            base.push(Edge::new(w[0], w[1], EdgeLabel::So));
        }
    }

    let index = WriteIndex::build(h);
    let mut writers = vec![Vec::new(); keys.len()];
    let mut readers: BTreeMap<(KeyId, VertexId), Vec<VertexId>> = BTreeMap::new();
    for t in h.committed() {
        let v = vertex_of[&t.id];
        let eff = effective_reads_writes(t);
        for key in eff.writes.keys() {
            writers[key_id(key) as usize].push(v);
        }
        for (key, &value) in &eff.reads {
            let k = key_id(key);
            let source = if value == INITIAL_VALUE {
                Some(INIT)
            } else {
                index
                    .lookup(key, value)
                    .and_then(|site| vertex_of.get(&site.txn).copied())
            };
            if let Some(w) = source.filter(|&w| w != v) {
                base.push(Edge::new(w, v, EdgeLabel::Wr(k)));
                readers.entry((k, w)).or_default().push(v);
            }
        }
    }
    for list in &mut writers {
        list.sort_unstable();
    }
    for list in readers.values_mut() {
        list.sort_unstable();
    }

    GeneralizedPolygraph {
        txns,
        vertex_of,
        keys,
        base,
        initial: Vec::new(),
        writers,
        readers,
        constraints: Vec::new(),
        resolution: Vec::new(),
        by_pair: FxHashMap::default(),
    }
}

/// Adds the ⊥ axioms and one constraint per unordered pair of writers of
/// each key, ordered by key and then by writer pair.
pub fn generate_constraints(_h: &History, mut g: GeneralizedPolygraph) -> GeneralizedPolygraph {
    g.initial.clear();
    g.constraints.clear();
    g.by_pair.clear();
    for k in 0..g.keys.len() as KeyId {
        let writers = g.writers[k as usize].clone();
        let init_readers = g.readers(k, INIT).to_vec();
        for &w in &writers {
            g.initial.push(Edge::new(INIT, w, EdgeLabel::Ww(k)));
        }
        for &r in &init_readers {
            for &w in writers.iter().filter(|&&w| w != r) {
                g.initial.push(Edge::new(r, w, EdgeLabel::Rw(k)));
            }
        }
        for (i, &t) in writers.iter().enumerate() {
            for &s in &writers[i + 1..] {
                let id = g.constraints.len() as ConstraintId;
                let branch = |first: VertexId, second: VertexId| {
                    let mut edges = vec![Edge::new(first, second, EdgeLabel::Ww(k))];
                    edges.extend(
                        g.readers(k, first)
                            .iter()
                            .filter(|&&r| r != second)
                            .map(|&r| Edge::new(r, second, EdgeLabel::Rw(k))),
                    );
                    edges
                };
                let either = branch(t, s);
                let or = branch(s, t);
                g.constraints.push(GeneralizedConstraint {
                    id,
                    key: k,
                    writers: (t, s),
                    either,
                    or,
                });
                g.by_pair.insert((k, t, s), id);
            }
        }
    }
    g.resolution = vec![None; g.constraints.len()];
    g
}

/// Known graph plus constraints.
pub fn build_polygraph(h: &History) -> GeneralizedPolygraph {
    generate_constraints(h, create_known_graph(h))
}

pub fn constraint_count(g: &GeneralizedPolygraph) -> ConstraintStats {
    let mut stats = ConstraintStats::default();
    for c in g.open_constraints() {
        stats.constraints += 1;
        stats.unknown_dependencies += c.either.len() + c.or.len();
    }
    stats
}

/// One edge of an induced graph: a non-RW dependency, optionally composed
/// with an RW dependency leaving its head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InducedStep {
    pub base: Dependency,
    pub rw: Option<Dependency>,
}

impl InducedStep {
    pub fn direct(base: Dependency) -> Self {
        Self { base, rw: None }
    }

    pub fn composed(base: Dependency, rw: Dependency) -> Self {
        Self { base, rw: Some(rw) }
    }

    pub fn from(&self) -> VertexId {
        self.base.edge.from
    }

    pub fn to(&self) -> VertexId {
        self.rw.map_or(self.base.edge.to, |r| r.edge.to)
    }

    pub fn dependencies(&self) -> impl Iterator<Item = Dependency> {
        std::iter::once(self.base).chain(self.rw)
    }

    /// Shape check: the base is not RW, and a composed RW starts where the
    /// base ends.
    pub fn well_formed(&self) -> bool {
        !self.base.edge.label.is_rw()
            && self
                .rw
                .is_none_or(|r| r.edge.label.is_rw() && r.edge.from == self.base.edge.to)
    }
}

/// A closed walk in an induced graph.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WitnessCycle {
    pub steps: Vec<InducedStep>,
}

impl WitnessCycle {
    pub fn dependencies(&self) -> Vec<Dependency> {
        self.steps.iter().flat_map(|s| s.dependencies()).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.iter().map(|s| 1 + s.rw.is_some() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Every step is well formed and each one starts where the previous ends.
    pub fn is_closed(&self) -> bool {
        !self.steps.is_empty()
            && self.steps.iter().all(InducedStep::well_formed)
            && (0..self.steps.len())
                .all(|i| self.steps[i].to() == self.steps[(i + 1) % self.steps.len()].from())
    }

    /// No constraint contributes dependencies from both of its branches.
    pub fn is_consistent(&self) -> bool {
        let mut seen: BTreeMap<ConstraintId, Branch> = BTreeMap::new();
        self.dependencies().iter().all(|d| match d.origin {
            Origin::Constraint(c, b) => *seen.entry(c).or_insert(b) == b,
            _ => true,
        })
    }

    /// Number of RW dependencies.
    pub fn rw_count(&self) -> usize {
        self.steps.iter().filter(|s| s.rw.is_some()).count()
    }

    /// Vertices visited, starting with the first step's source.
    pub fn vertices(&self) -> Vec<VertexId> {
        let mut out = Vec::new();
        for s in &self.steps {
            out.push(s.base.edge.from);
            if s.rw.is_some() {
                out.push(s.base.edge.to);
            }
        }
        out
    }

    /// Rotates so the dependency sequence starts at its smallest vertex.
    pub fn canonical(mut self) -> Self {
        if let Some((pos, _)) = self
            .steps
            .iter()
            .enumerate()
            .min_by_key(|(i, s)| (s.from(), *i))
        {
            self.steps.rotate_left(pos);
        }
        self
    }

    pub fn display<'a>(&'a self, g: &'a GeneralizedPolygraph) -> CycleDisplay<'a> {
        CycleDisplay { cycle: self, g }
    }
}

pub struct CycleDisplay<'a> {
    cycle: &'a WitnessCycle,
    g: &'a GeneralizedPolygraph,
}

impl fmt::Display for CycleDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let deps = self.cycle.dependencies();
        for d in &deps {
            write!(
                f,
                "{}-{}->",
                self.g.vertex_name(d.edge.from),
                self.g.label_name(d.edge.label)
            )?;
        }
        if let Some(first) = deps.first() {
            write!(f, "{}", self.g.vertex_name(first.edge.from))?;
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::history::{parse_history, Operation, Session, Transaction};

    pub(crate) const LONG_FORK: &str = r#"{"sessions":[
        {"id":0,"transactions":[
            {"index":0,"status":"committed","ops":[{"t":"w","k":"x","v":1},{"t":"w","k":"y","v":1}]},
            {"index":1,"status":"committed","ops":[{"t":"w","k":"x","v":3}]}]},
        {"id":1,"transactions":[{"index":0,"status":"committed","ops":[{"t":"w","k":"x","v":2}]}]},
        {"id":2,"transactions":[{"index":0,"status":"committed","ops":[{"t":"w","k":"y","v":2}]}]},
        {"id":3,"transactions":[{"index":0,"status":"committed","ops":[{"t":"r","k":"x","v":2},{"t":"r","k":"y","v":1}]}]},
        {"id":4,"transactions":[{"index":0,"status":"committed","ops":[{"t":"r","k":"y","v":2},{"t":"r","k":"x","v":1}]}]}]}"#;

    /// Vertices of the long-fork history named as in its usual drawing.
    pub(crate) struct LongFork {
        pub g: GeneralizedPolygraph,
        pub t: [VertexId; 6],
        pub x: KeyId,
        pub y: KeyId,
    }

    pub(crate) fn long_fork() -> LongFork {
        let h = parse_history(LONG_FORK.as_bytes()).unwrap();
        let g = build_polygraph(&h);
        let v = |s, i| g.vertex_of(TxnId::new(s, i)).unwrap();
        let t = [v(0, 0), v(1, 0), v(2, 0), v(3, 0), v(4, 0), v(0, 1)];
        let (x, y) = (g.key_id("x").unwrap(), g.key_id("y").unwrap());
        LongFork { g, t, x, y }
    }

    fn single(ops: Vec<Vec<Operation>>) -> History {
        History::new(
            ops.into_iter()
                .enumerate()
                .map(|(s, ops)| Session {
                    id: s as u64,
                    transactions: vec![Transaction::committed(TxnId::new(s as u64, 0), ops)],
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn long_fork_known_graph() {
        let LongFork { g, t, x, y } = long_fork();
        let mut got = g.base_edges().to_vec();
        got.sort();
        let mut want = vec![
            Edge::new(t[0], t[5], EdgeLabel::So),
            Edge::new(t[1], t[3], EdgeLabel::Wr(x)),
            Edge::new(t[0], t[3], EdgeLabel::Wr(y)),
            Edge::new(t[2], t[4], EdgeLabel::Wr(y)),
            Edge::new(t[0], t[4], EdgeLabel::Wr(x)),
        ];
        want.sort();
        assert_eq!(got, want);
        assert_eq!(g.vertex_count(), 7);
    }

    #[test]
    fn long_fork_constraints() {
        let LongFork { g, t, x, y } = long_fork();
        assert_eq!(constraint_count(&g).constraints, 4);
        for (a, b) in [(t[0], t[1]), (t[0], t[5]), (t[1], t[5])] {
            let c = g.constraint(g.find_constraint(x, a, b).unwrap());
            assert_eq!(c.key, x);
        }
        assert!(g.find_constraint(y, t[0], t[2]).is_some());
        assert!(g.find_constraint(y, t[0], t[1]).is_none());

        // {T1,T5}: either = WW T1→T5 + RW T3→T5; or = WW T5→T1 only.
        let c = g.constraint(g.find_constraint(x, t[1], t[5]).unwrap());
        let (a, b) = c.writers;
        assert_eq!((a, b), (t[5].min(t[1]), t[5].max(t[1])));
        let t1_first = if a == t[1] { &c.either } else { &c.or };
        let t5_first = if a == t[1] { &c.or } else { &c.either };
        assert_eq!(
            t1_first,
            &vec![
                Edge::new(t[1], t[5], EdgeLabel::Ww(x)),
                Edge::new(t[3], t[5], EdgeLabel::Rw(x)),
            ]
        );
        assert_eq!(t5_first, &vec![Edge::new(t[5], t[1], EdgeLabel::Ww(x))]);
    }

    #[test]
    fn initial_axioms() {
        let LongFork { g, t, x, y } = long_fork();
        let init = g.initial_edges();
        for w in [t[0], t[1], t[5]] {
            assert!(init.contains(&Edge::new(INIT, w, EdgeLabel::Ww(x))));
        }
        for w in [t[0], t[2]] {
            assert!(init.contains(&Edge::new(INIT, w, EdgeLabel::Ww(y))));
        }
        assert!(!init.iter().any(|e| e.label.is_rw()));
    }

    #[test]
    fn single_writer_history() {
        let h = single(vec![vec![Operation::write("x", 1)]]);
        let g = build_polygraph(&h);
        assert_eq!(g.vertex_count(), 2);
        assert!(g.base_edges().is_empty());
        assert_eq!(constraint_count(&g), ConstraintStats::default());
    }

    #[test]
    fn read_of_initial_value() {
        let h = single(vec![
            vec![Operation::write("y", 1)],
            vec![Operation::read("y", 0)],
        ]);
        let g = build_polygraph(&h);
        let (w, r) = (
            g.vertex_of(TxnId::new(0, 0)).unwrap(),
            g.vertex_of(TxnId::new(1, 0)).unwrap(),
        );
        let y = g.key_id("y").unwrap();
        assert_eq!(g.base_edges(), &[Edge::new(INIT, r, EdgeLabel::Wr(y))]);
        assert!(g.initial_edges().contains(&Edge::new(r, w, EdgeLabel::Rw(y))));
    }

    #[test]
    fn generalized_constraint_shape() {
        // T and S write x; T' reads T's value; S' reads S's value.
        let h = single(vec![
            vec![Operation::write("x", 1)],
            vec![Operation::write("x", 2)],
            vec![Operation::read("x", 1)],
            vec![Operation::read("x", 2)],
        ]);
        let g = build_polygraph(&h);
        let v = |s| g.vertex_of(TxnId::new(s, 0)).unwrap();
        let x = g.key_id("x").unwrap();
        assert_eq!(g.constraints().len(), 1);
        let c = &g.constraints()[0];
        assert_eq!(
            c.either,
            vec![
                Edge::new(v(0), v(1), EdgeLabel::Ww(x)),
                Edge::new(v(2), v(1), EdgeLabel::Rw(x)),
            ]
        );
        assert_eq!(
            c.or,
            vec![
                Edge::new(v(1), v(0), EdgeLabel::Ww(x)),
                Edge::new(v(3), v(0), EdgeLabel::Rw(x)),
            ]
        );
        assert_eq!(constraint_count(&g).unknown_dependencies, 4);
    }

    #[test]
    fn known_dependencies_include_resolved_branches() {
        let LongFork { mut g, .. } = long_fork();
        let before = g.known_dependencies().count();
        g.resolve(0, Branch::Or);
        let added = g.constraint(0).or.len();
        assert_eq!(g.known_dependencies().count(), before + added);
        assert_eq!(constraint_count(&g).constraints, 3);
        let d = g.constraint(0).dependencies(Branch::Either).next().unwrap();
        assert!(!g.has_dependency(&d));
        assert!(g.unresolved().has_dependency(&d));
    }
}
