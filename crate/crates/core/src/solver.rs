//! Conflict-driven search over constraint branches with acyclicity of the
//! induced graph as a lazily checked theory.
//!
//! There is one Boolean variable per unresolved constraint; its two literals
//! select the `either` and `or` branch. Activating a literal adds the branch's
//! edges to the graph and materializes the induced edges
//! `K = A ∪ (A ∘ B)` incrementally, keeping a topological order of `K` with
//! the Pearce–Kelly algorithm. A cycle becomes a learned clause over the
//! literals that support it; 1-UIP analysis picks the backjump level.
//! Backtracking undoes graph changes from a trail.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::encoder::Encoding;
use crate::polygraph::{
    Branch, ConstraintId, Dependency, EdgeLabel, GeneralizedPolygraph, InducedStep, Origin,
    WitnessCycle,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolverBudget {
    pub time: Option<Duration>,
    pub conflicts: Option<u64>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolveError {
    #[error("solver budget exceeded after {conflicts} conflicts and {elapsed_ms} ms")]
    BudgetExceeded { conflicts: u64, elapsed_ms: u64 },
}

/// A branch choice for every unresolved constraint, sorted by constraint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub choices: Vec<(ConstraintId, Branch)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolveResult {
    Sat(Assignment),
    Unsat(WitnessCycle),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct SolverStats {
    pub variables: usize,
    pub decisions: u64,
    pub conflicts: u64,
    pub propagations: u64,
    pub learned_clauses: u64,
}

type Lit = u32;
const NO_REASON: u32 = u32::MAX;

#[inline]
fn var(l: Lit) -> usize {
    (l >> 1) as usize
}

#[inline]
fn neg(l: Lit) -> Lit {
    l ^ 1
}

fn lit_branch(l: Lit) -> Branch {
    if l & 1 == 0 {
        Branch::Either
    } else {
        Branch::Or
    }
}

#[derive(Clone, Copy)]
struct EdgeRec {
    from: u32,
    to: u32,
    rw: bool,
    lit: Option<Lit>,
    dep: Dependency,
}

#[derive(Clone, Copy)]
enum Undo {
    A(u32),
    B(u32),
    K(u32, u32),
}

enum Conflict {
    Clause(u32),
    Cycle(Vec<(u32, u32)>),
}

struct Solver {
    edges: Vec<EdgeRec>,
    lit_edges: Vec<Vec<u32>>,
    cids: Vec<ConstraintId>,

    value: Vec<i8>,
    level: Vec<u32>,
    reason: Vec<u32>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    undo_lim: Vec<usize>,
    qhead: usize,
    cursor: usize,
    seen: Vec<bool>,

    clauses: Vec<Vec<Lit>>,
    watches: Vec<Vec<u32>>,

    a_out: Vec<Vec<u32>>,
    a_in: Vec<Vec<u32>>,
    b_out: Vec<Vec<u32>>,
    kcount: FxHashMap<(u32, u32), u32>,
    k_out: Vec<Vec<u32>>,
    k_in: Vec<Vec<u32>>,
    ord: Vec<u32>,
    undo: Vec<Undo>,

    mark: Vec<u32>,
    stamp: u32,
    parent: Vec<u32>,

    last_cycle: Option<WitnessCycle>,
    stats: SolverStats,
}

impl Solver {
    fn new(enc: &Encoding) -> Self {
        let n = enc.vertex_count;
        let nvars = enc.clauses.branches.len();
        let mut edges = Vec::new();
        for d in &enc.clauses.units {
            edges.push(EdgeRec {
                from: d.edge.from,
                to: d.edge.to,
                rw: d.edge.label.is_rw(),
                lit: None,
                dep: *d,
            });
        }
        let mut lit_edges = vec![Vec::new(); 2 * nvars];
        let mut cids = Vec::with_capacity(nvars);
        for (v, bc) in enc.clauses.branches.iter().enumerate() {
            cids.push(bc.constraint);
            for (b, list) in [(Branch::Either, &bc.either), (Branch::Or, &bc.or)] {
                let lit = (2 * v) as Lit + (b == Branch::Or) as Lit;
                for e in list {
                    lit_edges[lit as usize].push(edges.len() as u32);
                    edges.push(EdgeRec {
                        from: e.from,
                        to: e.to,
                        rw: e.label.is_rw(),
                        lit: Some(lit),
                        dep: Dependency {
                            edge: *e,
                            origin: Origin::Constraint(bc.constraint, b),
                        },
                    });
                }
            }
        }
        Self {
            edges,
            lit_edges,
            cids,
            value: vec![-1; nvars],
            level: vec![0; nvars],
            reason: vec![NO_REASON; nvars],
            trail: Vec::new(),
            trail_lim: Vec::new(),
            undo_lim: Vec::new(),
            qhead: 0,
            cursor: 0,
            seen: vec![false; nvars],
            clauses: Vec::new(),
            watches: vec![Vec::new(); 2 * nvars],
            a_out: vec![Vec::new(); n],
            a_in: vec![Vec::new(); n],
            b_out: vec![Vec::new(); n],
            kcount: FxHashMap::default(),
            k_out: vec![Vec::new(); n],
            k_in: vec![Vec::new(); n],
            ord: (0..n as u32).collect(),
            undo: Vec::new(),
            mark: vec![0; n],
            stamp: 0,
            parent: vec![0; n],
            last_cycle: None,
            stats: SolverStats {
                variables: nvars,
                ..SolverStats::default()
            },
        }
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    /// 1 true, 0 false, -1 unassigned.
    #[inline]
    fn lit_value(&self, l: Lit) -> i8 {
        let v = self.value[var(l)];
        if v < 0 {
            -1
        } else {
            (v == (l & 1) as i8) as i8
        }
    }

    fn assign(&mut self, l: Lit, reason: u32) {
        let v = var(l);
        self.value[v] = (l & 1) as i8;
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(l);
    }

    fn edge_level(&self, e: u32) -> u32 {
        self.edges[e as usize]
            .lit
            .map_or(0, |l| self.level[var(l)])
    }

    fn activate(&mut self, e: u32) -> Result<(), Vec<(u32, u32)>> {
        let rec = self.edges[e as usize];
        if rec.rw {
            self.b_out[rec.from as usize].push(e);
            self.undo.push(Undo::B(e));
            for i in 0..self.a_in[rec.from as usize].len() {
                let a = self.a_in[rec.from as usize][i];
                let src = self.edges[a as usize].from;
                self.add_k(src, rec.to)?;
            }
        } else {
            self.a_out[rec.from as usize].push(e);
            self.a_in[rec.to as usize].push(e);
            self.undo.push(Undo::A(e));
            self.add_k(rec.from, rec.to)?;
            for i in 0..self.b_out[rec.to as usize].len() {
                let b = self.b_out[rec.to as usize][i];
                let dst = self.edges[b as usize].to;
                self.add_k(rec.from, dst)?;
            }
        }
        Ok(())
    }

    fn add_k(&mut self, i: u32, j: u32) -> Result<(), Vec<(u32, u32)>> {
        let c = self.kcount.entry((i, j)).or_insert(0);
        *c += 1;
        let fresh = *c == 1;
        self.undo.push(Undo::K(i, j));
        if fresh {
            self.k_out[i as usize].push(j);
            self.k_in[j as usize].push(i);
            self.pk_insert(i, j)?;
        }
        Ok(())
    }

    fn undo_to(&mut self, len: usize) {
        while self.undo.len() > len {
            match self.undo.pop().unwrap() {
                Undo::A(e) => {
                    let r = self.edges[e as usize];
                    self.a_out[r.from as usize].pop();
                    self.a_in[r.to as usize].pop();
                }
                Undo::B(e) => {
                    let r = self.edges[e as usize];
                    self.b_out[r.from as usize].pop();
                }
                Undo::K(i, j) => {
                    let c = self.kcount.get_mut(&(i, j)).unwrap();
                    *c -= 1;
                    if *c == 0 {
                        self.kcount.remove(&(i, j));
                        self.k_out[i as usize].pop();
                        self.k_in[j as usize].pop();
                    }
                }
            }
        }
    }

    /// Keeps `ord` topological after inserting `x → y`, or returns the cycle
    /// it closes as a list of `K`-edges starting with `x → y`.
    fn pk_insert(&mut self, x: u32, y: u32) -> Result<(), Vec<(u32, u32)>> {
        if x == y {
            return Err(vec![(x, y)]);
        }
        let (lb, ub) = (self.ord[y as usize], self.ord[x as usize]);
        if lb > ub {
            return Ok(());
        }
        self.stamp += 1;
        let stamp = self.stamp;

        let mut delta_f = Vec::new();
        let mut stack = vec![y];
        self.mark[y as usize] = stamp;
        while let Some(v) = stack.pop() {
            delta_f.push(v);
            for idx in 0..self.k_out[v as usize].len() {
                let w = self.k_out[v as usize][idx];
                if w == x {
                    self.parent[x as usize] = v;
                    let mut path = Vec::new();
                    let mut cur = x;
                    while cur != y {
                        let p = self.parent[cur as usize];
                        path.push((p, cur));
                        cur = p;
                    }
                    path.push((x, y));
                    path.reverse();
                    return Err(path);
                }
                if self.mark[w as usize] != stamp && self.ord[w as usize] < ub {
                    self.mark[w as usize] = stamp;
                    self.parent[w as usize] = v;
                    stack.push(w);
                }
            }
        }

        let mut delta_b = Vec::new();
        let mut stack = vec![x];
        self.mark[x as usize] = stamp;
        while let Some(v) = stack.pop() {
            delta_b.push(v);
            for idx in 0..self.k_in[v as usize].len() {
                let w = self.k_in[v as usize][idx];
                if self.mark[w as usize] != stamp && self.ord[w as usize] > lb {
                    self.mark[w as usize] = stamp;
                    stack.push(w);
                }
            }
        }

        delta_b.sort_unstable_by_key(|&v| self.ord[v as usize]);
        delta_f.sort_unstable_by_key(|&v| self.ord[v as usize]);
        let mut slots: Vec<u32> = delta_b
            .iter()
            .chain(&delta_f)
            .map(|&v| self.ord[v as usize])
            .collect();
        slots.sort_unstable();
        for (&v, slot) in delta_b.iter().chain(&delta_f).zip(slots) {
            self.ord[v as usize] = slot;
        }
        Ok(())
    }

    /// Lowest-level support of the `K`-edge `x → y` among active edges.
    fn support(&self, x: u32, y: u32) -> (u32, Option<u32>) {
        let rank = |e: u32| match self.edges[e as usize].dep.edge.label {
            EdgeLabel::Wr(_) => 0,
            EdgeLabel::Ww(_) => 1,
            _ => 2,
        };
        let mut best: Option<((u32, u8), (u32, Option<u32>))> = None;
        let mut offer = |key: (u32, u8), s: (u32, Option<u32>)| {
            if best.is_none_or(|(k, _)| key < k) {
                best = Some((key, s));
            }
        };
        for &a in &self.a_out[x as usize] {
            let ea = self.edges[a as usize];
            let la = self.edge_level(a);
            if ea.to == y {
                offer((la, rank(a)), (a, None));
            }
            for &b in &self.b_out[ea.to as usize] {
                if self.edges[b as usize].to == y {
                    offer((la.max(self.edge_level(b)), rank(a)), (a, Some(b)));
                }
            }
        }
        best.expect("active K-edge without support").1
    }

    /// Converts a `K`-cycle into its dependency witness and the literals
    /// that support it.
    fn explain_cycle(&self, cycle: &[(u32, u32)]) -> (WitnessCycle, Vec<Lit>) {
        let mut steps = Vec::with_capacity(cycle.len());
        let mut lits = Vec::new();
        for &(x, y) in cycle {
            let (a, b) = self.support(x, y);
            lits.extend(self.edges[a as usize].lit);
            let rw = b.map(|b| {
                lits.extend(self.edges[b as usize].lit);
                self.edges[b as usize].dep
            });
            steps.push(InducedStep {
                base: self.edges[a as usize].dep,
                rw,
            });
        }
        lits.sort_unstable();
        lits.dedup();
        (WitnessCycle { steps }.canonical(), lits)
    }

    fn propagate(&mut self) -> Option<Conflict> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            for idx in 0..self.lit_edges[p as usize].len() {
                let e = self.lit_edges[p as usize][idx];
                if let Err(cycle) = self.activate(e) {
                    return Some(Conflict::Cycle(cycle));
                }
            }
            if let Some(c) = self.propagate_clauses(neg(p)) {
                return Some(Conflict::Clause(c));
            }
        }
        None
    }

    /// Visits clauses watching `false_lit`, which just became false.
    fn propagate_clauses(&mut self, false_lit: Lit) -> Option<u32> {
        let mut ws = std::mem::take(&mut self.watches[false_lit as usize]);
        let mut i = 0;
        let mut conflict = None;
        while i < ws.len() {
            let ci = ws[i];
            let clause = &mut self.clauses[ci as usize];
            if clause[0] == false_lit {
                clause.swap(0, 1);
            }
            let first = clause[0];
            if self.value[var(first)] >= 0
                && (self.value[var(first)] == (first & 1) as i8)
            {
                i += 1;
                continue;
            }
            let mut moved = false;
            for k in 2..clause.len() {
                let l = clause[k];
                let v = self.value[var(l)];
                if v < 0 || v == (l & 1) as i8 {
                    clause.swap(1, k);
                    let nl = clause[1];
                    self.watches[nl as usize].push(ci);
                    ws.swap_remove(i);
                    moved = true;
                    break;
                }
            }
            if moved {
                continue;
            }
            i += 1;
            match self.lit_value(first) {
                0 => {
                    conflict = Some(ci);
                    break;
                }
                _ => self.assign(first, ci),
            }
        }
        let displaced = std::mem::replace(&mut self.watches[false_lit as usize], ws);
        self.watches[false_lit as usize].extend(displaced);
        conflict
    }

    /// 1-UIP analysis. `conflict` lists literals that are all false.
    fn analyze(&mut self, conflict: Vec<Lit>) -> (Vec<Lit>, u32) {
        let cur = self.decision_level();
        let mut learnt: Vec<Lit> = vec![0];
        let mut counter = 0usize;
        let mut idx = self.trail.len();
        let mut clause = conflict;
        let mut p: Option<Lit> = None;
        loop {
            for &q in &clause {
                if Some(q) == p {
                    continue;
                }
                let v = var(q);
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    if self.level[v] == cur {
                        counter += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            debug_assert!(counter > 0, "conflict without current-level literal");
            loop {
                idx -= 1;
                if self.seen[var(self.trail[idx])] {
                    break;
                }
            }
            let lit = self.trail[idx];
            self.seen[var(lit)] = false;
            counter -= 1;
            p = Some(lit);
            if counter == 0 {
                break;
            }
            clause = self.clauses[self.reason[var(lit)] as usize].clone();
        }
        learnt[0] = neg(p.unwrap());
        for &l in &learnt[1..] {
            self.seen[var(l)] = false;
        }
        let mut bt = 0;
        if learnt.len() > 1 {
            let (pos, lvl) = learnt[1..]
                .iter()
                .enumerate()
                .map(|(i, &l)| (i + 1, self.level[var(l)]))
                .max_by_key(|&(i, lvl)| (lvl, std::cmp::Reverse(i)))
                .unwrap();
            learnt.swap(1, pos);
            bt = lvl;
        }
        (learnt, bt)
    }

    fn backjump(&mut self, level: u32) {
        if self.decision_level() <= level {
            return;
        }
        let lim = self.trail_lim[level as usize];
        for &l in &self.trail[lim..] {
            let v = var(l);
            self.value[v] = -1;
            self.reason[v] = NO_REASON;
            self.cursor = self.cursor.min(v);
        }
        self.trail.truncate(lim);
        self.qhead = lim;
        self.undo_to(self.undo_lim[level as usize]);
        self.trail_lim.truncate(level as usize);
        self.undo_lim.truncate(level as usize);
    }

    fn learn(&mut self, learnt: Vec<Lit>) {
        let ci = self.clauses.len() as u32;
        let asserting = learnt[0];
        if learnt.len() > 1 {
            self.watches[learnt[0] as usize].push(ci);
            self.watches[learnt[1] as usize].push(ci);
        }
        self.clauses.push(learnt);
        self.stats.learned_clauses += 1;
        self.assign(asserting, ci);
    }

    fn pick_branch(&mut self) -> Option<Lit> {
        while self.cursor < self.value.len() && self.value[self.cursor] >= 0 {
            self.cursor += 1;
        }
        if self.cursor == self.value.len() {
            return None;
        }
        let either = (2 * self.cursor) as Lit;
        let ww = self.edges[self.lit_edges[either as usize][0] as usize];
        let forward = self.ord[ww.from as usize] < self.ord[ww.to as usize];
        Some(if forward { either } else { either | 1 })
    }

    fn run(&mut self, budget: &SolverBudget) -> Result<SolveResult, SolveError> {
        let start = Instant::now();
        let units: Vec<u32> = (0..self.edges.len() as u32)
            .filter(|&e| self.edges[e as usize].lit.is_none())
            .collect();
        for e in units {
            if let Err(cycle) = self.activate(e) {
                let (w, _) = self.explain_cycle(&cycle);
                return Ok(SolveResult::Unsat(w));
            }
        }
        loop {
            match self.propagate() {
                Some(conflict) => {
                    self.stats.conflicts += 1;
                    let lits = match conflict {
                        Conflict::Clause(ci) => self.clauses[ci as usize].clone(),
                        Conflict::Cycle(cycle) => {
                            let (w, support) = self.explain_cycle(&cycle);
                            self.last_cycle = Some(w);
                            support.into_iter().map(neg).collect()
                        }
                    };
                    if self.decision_level() == 0 {
                        return Ok(SolveResult::Unsat(
                            self.last_cycle.take().expect("root conflict without a cycle"),
                        ));
                    }
                    let (learnt, bt) = self.analyze(lits);
                    self.backjump(bt);
                    self.learn(learnt);
                    self.check_budget(budget, start)?;
                }
                None => {
                    let Some(lit) = self.pick_branch() else {
                        let mut choices: Vec<_> = (0..self.value.len())
                            .map(|v| (self.cids[v], lit_branch((2 * v) as Lit + self.value[v] as Lit)))
                            .collect();
                        choices.sort();
                        return Ok(SolveResult::Sat(Assignment { choices }));
                    };
                    self.stats.decisions += 1;
                    if self.stats.decisions % 1024 == 0 {
                        self.check_budget(budget, start)?;
                    }
                    self.trail_lim.push(self.trail.len());
                    self.undo_lim.push(self.undo.len());
                    self.assign(lit, NO_REASON);
                }
            }
        }
    }

    fn check_budget(&self, budget: &SolverBudget, start: Instant) -> Result<(), SolveError> {
        let elapsed = start.elapsed();
        let over_time = budget.time.is_some_and(|t| elapsed > t);
        let over_conflicts = budget.conflicts.is_some_and(|c| self.stats.conflicts > c);
        if over_time || over_conflicts {
            return Err(SolveError::BudgetExceeded {
                conflicts: self.stats.conflicts,
                elapsed_ms: elapsed.as_millis() as u64,
            });
        }
        Ok(())
    }
}

/// Decides whether some choice of branches yields an acyclic induced graph.
pub fn solve(enc: &Encoding, budget: &SolverBudget) -> Result<(SolveResult, SolverStats), SolveError> {
    let mut s = Solver::new(enc);
    let result = s.run(budget)?;
    Ok((result, s.stats))
}

/// Independent certificate check. A satisfying assignment must choose a
/// branch for exactly the unresolved constraints and give an induced graph
/// that topologically sorts. A cycle must be closed, use each constraint on
/// one side only, and consist of dependencies of `g` under their claimed
/// origins.
pub fn verify_witness(result: &SolveResult, g: &GeneralizedPolygraph) -> bool {
    match result {
        SolveResult::Sat(a) => verify_assignment(a, g),
        SolveResult::Unsat(c) => {
            c.is_closed()
                && c.is_consistent()
                && c.dependencies().iter().all(|d| g.has_dependency(d))
        }
    }
}

fn verify_assignment(a: &Assignment, g: &GeneralizedPolygraph) -> bool {
    let open: Vec<ConstraintId> = g.open_constraints().map(|c| c.id).collect();
    let chosen: Vec<ConstraintId> = a.choices.iter().map(|&(c, _)| c).collect();
    if open != chosen {
        return false;
    }
    let n = g.vertex_count();
    let mut a_succ = vec![Vec::new(); n];
    let mut b_succ = vec![Vec::new(); n];
    let chosen_edges = a
        .choices
        .iter()
        .flat_map(|&(c, b)| g.constraint(c).branch(b).iter().copied());
    for e in g.known_dependencies().map(|d| d.edge).chain(chosen_edges) {
        let list = if e.label.is_rw() { &mut b_succ } else { &mut a_succ };
        list[e.from as usize].push(e.to as usize);
    }
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &k in &a_succ[i] {
            succ[i].push(k);
            succ[i].extend(b_succ[k].iter().copied());
        }
        succ[i].sort_unstable();
        succ[i].dedup();
        if succ[i].binary_search(&i).is_ok() {
            return false;
        }
    }
    let mut indeg = vec![0usize; n];
    for s in &succ {
        for &j in s {
            indeg[j] += 1;
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut sorted = 0;
    while let Some(v) = queue.pop_front() {
        sorted += 1;
        for &j in &succ[v] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                queue.push_back(j);
            }
        }
    }
    sorted == n
}
