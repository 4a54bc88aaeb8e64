//! Fixpoint pruning of constraints against the known induced graph.
//!
//! Each outer iteration rebuilds `K = A ∪ (A ∘ B)` from the known edges
//! (`A`: SO, WR, WW; `B`: RW), computes its transitive closure, and drops
//! every constraint branch containing an edge that would close a cycle in
//! `K`. Branch tests within one iteration all see the iteration-start
//! closure.

use std::collections::VecDeque;

use crate::bits::{floyd_warshall, BitMatrix};
use crate::polygraph::{
    Branch, ConstraintId, Dependency, Edge, EdgeLabel, GeneralizedPolygraph, InducedStep, Origin,
    VertexId, WitnessCycle,
};

/// The known induced graph of a polygraph with its reachability relation.
pub struct KnownInducedGraph {
    a_out: Vec<Vec<Dependency>>,
    b_out: Vec<Vec<Dependency>>,
    /// Row `v`: immediate A-predecessors of `v`.
    a_pred: BitMatrix,
    /// Row `v`: RW-successors of `v`.
    b_succ: BitMatrix,
    k: BitMatrix,
    reach: BitMatrix,
    /// Transpose of `reach`.
    reach_rev: BitMatrix,
}

impl KnownInducedGraph {
    pub fn build(g: &GeneralizedPolygraph) -> Self {
        let n = g.vertex_count();
        let mut a_out = vec![Vec::new(); n];
        let mut b_out = vec![Vec::new(); n];
        let mut a_pred = BitMatrix::new(n);
        let mut b_succ = BitMatrix::new(n);
        for d in g.known_dependencies() {
            let (f, t) = (d.edge.from as usize, d.edge.to as usize);
            if d.edge.label.is_rw() {
                b_out[f].push(d);
                b_succ.set(f, t);
            } else {
                a_out[f].push(d);
                a_pred.set(t, f);
            }
        }
        let mut k = BitMatrix::new(n);
        for (i, deps) in a_out.iter().enumerate() {
            for d in deps {
                let m = d.edge.to as usize;
                k.set(i, m);
                k.or_row_from(i, &b_succ, m);
            }
        }
        let reach = floyd_warshall(&k);
        let reach_rev = reach.transpose();
        Self {
            a_out,
            b_out,
            a_pred,
            b_succ,
            k,
            reach,
            reach_rev,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.k.len()
    }

    pub fn adjacency(&self) -> &BitMatrix {
        &self.k
    }

    pub fn reachability(&self) -> &BitMatrix {
        &self.reach
    }

    /// Path of length ≥ 1 in `K`.
    pub fn reaches(&self, from: VertexId, to: VertexId) -> bool {
        self.reach.get(from as usize, to as usize)
    }

    /// Shortest vertex path `from ⇝ to` in `K`, both ends included.
    pub fn k_path(&self, from: VertexId, to: VertexId) -> Option<Vec<VertexId>> {
        let n = self.vertex_count();
        let (s, t) = (from as usize, to as usize);
        let mut parent = vec![usize::MAX; n];
        let mut queue = VecDeque::from([s]);
        parent[s] = s;
        while let Some(v) = queue.pop_front() {
            for w in self.k.row_ones(v) {
                if parent[w] != usize::MAX {
                    continue;
                }
                parent[w] = v;
                if w == t {
                    let mut path = vec![t as VertexId];
                    let mut cur = t;
                    while cur != s {
                        cur = parent[cur];
                        path.push(cur as VertexId);
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(w);
            }
        }
        None
    }

    /// Underlying dependencies of the `K`-edge `i → j`, preferring a direct
    /// A-edge over a composition.
    pub fn expand(&self, i: VertexId, j: VertexId) -> Option<InducedStep> {
        let out = &self.a_out[i as usize];
        if let Some(d) = out.iter().find(|d| d.edge.to == j) {
            return Some(InducedStep::direct(*d));
        }
        out.iter().find_map(|a| {
            self.b_out[a.edge.to as usize]
                .iter()
                .find(|b| b.edge.to == j)
                .map(|b| InducedStep::composed(*a, *b))
        })
    }

    fn expand_path(&self, path: &[VertexId]) -> Vec<InducedStep> {
        path.windows(2)
            .map(|w| self.expand(w[0], w[1]).expect("K-edge without support"))
            .collect()
    }

    fn a_dep(&self, from: VertexId, to: VertexId) -> Dependency {
        *self.a_out[from as usize]
            .iter()
            .find(|d| d.edge.to == to)
            .expect("missing A-edge")
    }

    fn b_dep(&self, from: VertexId, to: VertexId) -> Dependency {
        *self.b_out[from as usize]
            .iter()
            .find(|d| d.edge.to == to)
            .expect("missing RW edge")
    }

    /// A cycle through `d` that exists once `d` is added, if any.
    pub fn blocking_cycle(&self, d: Dependency) -> Option<WitnessCycle> {
        let (from, to) = (d.edge.from, d.edge.to);
        let (f, t) = (from as usize, to as usize);
        let steps = if d.edge.label.is_rw() {
            let p = self.a_pred.row_ones(f).find(|&p| p == t || self.reach.get(t, p))?;
            let mut steps = vec![InducedStep::composed(self.a_dep(p as VertexId, from), d)];
            if p != t {
                steps.extend(self.expand_path(&self.k_path(to, p as VertexId)?));
            }
            steps
        } else if self.reach.get(t, f) {
            let mut steps = vec![InducedStep::direct(d)];
            steps.extend(self.expand_path(&self.k_path(to, from)?));
            steps
        } else {
            let q = self
                .b_succ
                .row_ones(t)
                .find(|&q| q == f || self.reach_rev.get(f, q))?;
            let mut steps = vec![InducedStep::composed(d, self.b_dep(to, q as VertexId))];
            if q != f {
                steps.extend(self.expand_path(&self.k_path(q as VertexId, from)?));
            }
            steps
        };
        Some(WitnessCycle { steps })
    }

    /// A shortest cycle of `K` itself, if the known graph is already cyclic.
    pub fn known_cycle(&self) -> Option<WitnessCycle> {
        let mut best: Option<Vec<VertexId>> = None;
        for v in 0..self.vertex_count() {
            if !self.reach.get(v, v) {
                continue;
            }
            for w in self.k.row_ones(v) {
                let path = if w == v {
                    vec![v as VertexId, v as VertexId]
                } else {
                    let Some(rest) = self.k_path(w as VertexId, v as VertexId) else {
                        continue;
                    };
                    let mut p = vec![v as VertexId];
                    p.extend(rest);
                    p
                };
                if best.as_ref().is_none_or(|b| path.len() < b.len()) {
                    best = Some(path);
                }
            }
        }
        best.map(|p| WitnessCycle {
            steps: self.expand_path(&p),
        })
    }

    /// First edge of a branch, in branch order, that closes a cycle.
    pub fn branch_blocking_cycle(
        &self,
        g: &GeneralizedPolygraph,
        c: ConstraintId,
        b: Branch,
    ) -> Option<WitnessCycle> {
        g.constraint(c)
            .dependencies(b)
            .find_map(|d| self.blocking_cycle(d))
    }
}

/// Whether adding RW edge `from → to` closes a `K`-cycle: some A-predecessor
/// `p` of `from` is `to` itself or is reachable from `to`.
pub fn rw_branch_blocked(from: VertexId, to: VertexId, graph: &KnownInducedGraph) -> bool {
    let (f, t) = (from as usize, to as usize);
    graph.a_pred.get(f, t) || graph.a_pred.rows_intersect(f, &graph.reach, t)
}

/// Whether adding WW edge `from → to` closes a cycle directly: `reach(to, from)`.
pub fn ww_branch_blocked(from: VertexId, to: VertexId, graph: &KnownInducedGraph) -> bool {
    graph.reaches(to, from)
}

/// Whether WW edge `from → to` composed with a known RW edge `to → q`
/// closes a cycle: `q = from` or `reach(q, from)`.
pub fn ww_composition_blocked(from: VertexId, to: VertexId, graph: &KnownInducedGraph) -> bool {
    let (f, t) = (from as usize, to as usize);
    graph.b_succ.get(t, f) || graph.b_succ.rows_intersect(t, &graph.reach_rev, f)
}

/// Whether adding `e` to the known graph closes a cycle in `K`.
pub fn edge_blocked(e: &Edge, graph: &KnownInducedGraph) -> bool {
    match e.label {
        EdgeLabel::Rw(_) => rw_branch_blocked(e.from, e.to, graph),
        _ => {
            ww_branch_blocked(e.from, e.to, graph) || ww_composition_blocked(e.from, e.to, graph)
        }
    }
}

/// A constraint both of whose branches close a cycle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImmediateViolation {
    pub constraint: ConstraintId,
    pub either_cycle: WitnessCycle,
    pub or_cycle: WitnessCycle,
    /// A cycle of the known graph alone, when it was already cyclic at the
    /// start of the pass.
    pub known_cycle: Option<WitnessCycle>,
}

impl ImmediateViolation {
    /// The known cycle if any, else the shorter branch witness with `either`
    /// on ties.
    pub fn cycle(&self) -> &WitnessCycle {
        if let Some(c) = &self.known_cycle {
            c
        } else if self.or_cycle.len() < self.either_cycle.len() {
            &self.or_cycle
        } else {
            &self.either_cycle
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PruneVerdict {
    Ok,
    ImmediateViolation(ImmediateViolation),
}

#[derive(Clone, Debug)]
pub struct PruneOutcome {
    pub pruned: GeneralizedPolygraph,
    pub resolved_count: usize,
    /// Cumulative resolved count after each outer iteration.
    pub progress: Vec<usize>,
    pub verdict: PruneVerdict,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PassOutcome {
    Resolved(usize),
    Violation(ImmediateViolation),
}

/// One outer iteration: tests every open constraint against the current
/// known graph and resolves those with exactly one blocked branch.
pub fn prune_pass(g: &mut GeneralizedPolygraph) -> PassOutcome {
    let graph = KnownInducedGraph::build(g);
    let open: Vec<ConstraintId> = g.open_constraints().map(|c| c.id).collect();
    let mut resolved = 0;
    for c in open {
        let con = g.constraint(c);
        let either_dead = con.either.iter().any(|e| edge_blocked(e, &graph));
        let or_dead = con.or.iter().any(|e| edge_blocked(e, &graph));
        match (either_dead, or_dead) {
            (true, true) => {
                let either_cycle = graph
                    .branch_blocking_cycle(g, c, Branch::Either)
                    .expect("blocked branch without witness");
                let or_cycle = graph
                    .branch_blocking_cycle(g, c, Branch::Or)
                    .expect("blocked branch without witness");
                return PassOutcome::Violation(ImmediateViolation {
                    constraint: c,
                    either_cycle,
                    or_cycle,
                    known_cycle: graph.known_cycle(),
                });
            }
            (true, false) => {
                g.resolve(c, Branch::Or);
                resolved += 1;
            }
            (false, true) => {
                g.resolve(c, Branch::Either);
                resolved += 1;
            }
            (false, false) => {}
        }
    }
    PassOutcome::Resolved(resolved)
}

/// Repeats [`prune_pass`] until nothing changes or a constraint has no
/// viable branch.
pub fn prune_constraints(mut g: GeneralizedPolygraph) -> PruneOutcome {
    let mut resolved_count = 0;
    let mut progress = Vec::new();
    loop {
        match prune_pass(&mut g) {
            PassOutcome::Violation(v) => {
                progress.push(resolved_count);
                return PruneOutcome {
                    pruned: g,
                    resolved_count,
                    progress,
                    verdict: PruneVerdict::ImmediateViolation(v),
                };
            }
            PassOutcome::Resolved(n) => {
                resolved_count += n;
                progress.push(resolved_count);
                if n == 0 {
                    return PruneOutcome {
                        pruned: g,
                        resolved_count,
                        progress,
                        verdict: PruneVerdict::Ok,
                    };
                }
            }
        }
    }
}

/// Origins of a witness that come from constraints, with their branches.
pub fn constraint_choices(cycle: &WitnessCycle) -> Vec<(ConstraintId, Branch)> {
    let mut out: Vec<_> = cycle
        .dependencies()
        .into_iter()
        .filter_map(|d| match d.origin {
            Origin::Constraint(c, b) => Some((c, b)),
            _ => None,
        })
        .collect();
    out.sort();
    out.dedup();
    out
}
