//! Random small histories and exhaustive reference computations used by the
//! property and differential test suites.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};
use std::cmp::Reverse;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::history::{History, Operation, Session, Transaction, TxnId};
use crate::polygraph::{Branch, ConstraintId, Dependency, GeneralizedPolygraph, Origin, VertexId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SmallBounds {
    pub max_txns: usize,
    pub max_sessions: usize,
    pub max_keys: usize,
    pub max_writers_per_key: usize,
    pub max_ops: usize,
    /// Percentage of transactions that abort.
    pub abort_pct: u32,
    /// Percentage of reads that pick an arbitrary written value instead of a
    /// committed final one.
    pub noise_pct: u32,
}

impl Default for SmallBounds {
    fn default() -> Self {
        Self {
            max_txns: 8,
            max_sessions: 3,
            max_keys: 4,
            max_writers_per_key: 4,
            max_ops: 4,
            abort_pct: 5,
            noise_pct: 5,
        }
    }
}

struct Draft {
    session: usize,
    committed: bool,
    /// `(is_write, key, value)`; read values are filled in afterwards.
    ops: Vec<(bool, usize, i64)>,
}

/// A random history within `bounds`, fully determined by `seed`.
pub fn random_small_history(seed: u64, bounds: &SmallBounds) -> History {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_txns = rng.random_range(1..=bounds.max_txns);
    let n_sessions = rng.random_range(1..=bounds.max_sessions);
    let n_keys = rng.random_range(1..=bounds.max_keys);
    let mut next_value = 1i64;
    let mut writers: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_keys];

    let mut drafts = Vec::with_capacity(n_txns);
    for t in 0..n_txns {
        let committed = rng.random_range(0..100) >= bounds.abort_pct;
        let n_ops = rng.random_range(1..=bounds.max_ops);
        let mut ops = Vec::with_capacity(n_ops);
        for _ in 0..n_ops {
            let key = rng.random_range(0..n_keys);
            let mut is_write = rng.random_bool(0.5);
            if is_write
                && committed
                && !writers[key].contains(&t)
                && writers[key].len() >= bounds.max_writers_per_key
            {
                is_write = false;
            }
            if is_write {
                if committed {
                    writers[key].insert(t);
                }
                ops.push((true, key, next_value));
                next_value += 1;
            } else {
                ops.push((false, key, 0));
            }
        }
        drafts.push(Draft {
            session: rng.random_range(0..n_sessions),
            committed,
            ops,
        });
    }

    // Final committed writes and all writes, per key.
    let mut finals: Vec<Vec<(usize, i64)>> = vec![Vec::new(); n_keys];
    let mut any: Vec<Vec<i64>> = vec![Vec::new(); n_keys];
    for (t, d) in drafts.iter().enumerate() {
        let mut last: BTreeMap<usize, i64> = BTreeMap::new();
        for &(w, k, v) in &d.ops {
            if w {
                last.insert(k, v);
                any[k].push(v);
            }
        }
        if d.committed {
            for (k, v) in last {
                finals[k].push((t, v));
            }
        }
    }

    for t in 0..drafts.len() {
        let mut current: BTreeMap<usize, i64> = BTreeMap::new();
        for i in 0..drafts[t].ops.len() {
            let (w, k, v) = drafts[t].ops[i];
            if w {
                current.insert(k, v);
                continue;
            }
            let noisy = rng.random_range(0..100) < bounds.noise_pct;
            let value = match current.get(&k) {
                Some(&seen) if !noisy || any[k].is_empty() => seen,
                _ if noisy && !any[k].is_empty() => any[k][rng.random_range(0..any[k].len())],
                _ => {
                    let others: Vec<i64> = finals[k]
                        .iter()
                        .filter(|&&(w, _)| w != t)
                        .map(|&(_, v)| v)
                        .collect();
                    let pick = rng.random_range(0..=others.len());
                    if pick == others.len() {
                        0
                    } else {
                        others[pick]
                    }
                }
            };
            drafts[t].ops[i].2 = value;
            current.insert(k, value);
        }
    }

    let mut sessions: Vec<Session> = (0..n_sessions)
        .map(|s| Session {
            id: s as u64,
            transactions: Vec::new(),
        })
        .collect();
    for d in drafts {
        let s = &mut sessions[d.session];
        let id = TxnId::new(s.id, s.transactions.len() as u64);
        let ops = d
            .ops
            .into_iter()
            .map(|(w, k, v)| {
                let key = format!("k{k}");
                if w {
                    Operation::write(key, v)
                } else {
                    Operation::read(key, v)
                }
            })
            .collect();
        s.transactions.push(if d.committed {
            Transaction::committed(id, ops)
        } else {
            Transaction::aborted(id, ops)
        });
    }
    sessions.retain(|s| !s.transactions.is_empty());
    History::new(sessions).expect("generator produced an invalid history")
}

/// Every vertex-simple cycle over `deps` with no two cyclically adjacent RW
/// dependencies and no constraint contributing from both branches, each as
/// a set of indices into `deps`.
pub fn enumerate_cycles(n: usize, deps: &[Dependency]) -> Vec<BTreeSet<usize>> {
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, d) in deps.iter().enumerate() {
        out_edges[d.edge.from as usize].push(i);
    }
    let mut found = Vec::new();
    for start in 0..n {
        let mut path: Vec<usize> = Vec::new();
        let mut on_path = vec![false; n];
        on_path[start] = true;
        walk(start, start, deps, &out_edges, &mut path, &mut on_path, &mut found);
    }
    found
}

fn consistent(deps: &[Dependency], path: &[usize]) -> bool {
    let mut side: BTreeMap<ConstraintId, Branch> = BTreeMap::new();
    path.iter().all(|&i| match deps[i].origin {
        Origin::Constraint(c, b) => *side.entry(c).or_insert(b) == b,
        _ => true,
    })
}

fn walk(
    start: usize,
    v: usize,
    deps: &[Dependency],
    out_edges: &[Vec<usize>],
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    found: &mut Vec<BTreeSet<usize>>,
) {
    for &e in &out_edges[v] {
        let d = deps[e];
        let to = d.edge.to as usize;
        if let Some(&prev) = path.last() {
            if deps[prev].edge.label.is_rw() && d.edge.label.is_rw() {
                continue;
            }
        }
        if to < start {
            continue;
        }
        path.push(e);
        if to == start {
            let wraps = deps[path[0]].edge.label.is_rw() && d.edge.label.is_rw() && path.len() > 1;
            let self_rw = path.len() == 1 && d.edge.label.is_rw();
            if !wraps && !self_rw && consistent(deps, path) {
                found.push(path.iter().copied().collect());
            }
        } else if !on_path[to] && consistent(deps, path) {
            on_path[to] = true;
            walk(start, to, deps, out_edges, path, on_path, found);
            on_path[to] = false;
        }
        path.pop();
    }
}

/// Every open constraint touched by `set` has dependencies from both
/// branches in `set`, or from neither.
pub fn is_complete(g: &GeneralizedPolygraph, deps: &[Dependency], set: &BTreeSet<usize>) -> bool {
    let mut sides: BTreeMap<ConstraintId, (bool, bool)> = BTreeMap::new();
    for &i in set {
        if let Origin::Constraint(c, b) = deps[i].origin {
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
    sides.values().all(|&(a, b)| a == b)
}

/// Every choice of branch for the open constraints touched by `set` leaves a
/// cycle in `A ∪ (A∘RW)` over the chosen subset, checked by brute force with
/// boolean matrices.
pub fn is_violation(g: &GeneralizedPolygraph, deps: &[Dependency], set: &BTreeSet<usize>) -> bool {
    let open: Vec<ConstraintId> = set
        .iter()
        .filter_map(|&i| match deps[i].origin {
            Origin::Constraint(c, _) if g.resolution(c).is_none() => Some(c),
            _ => None,
        })
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = g.vertex_count();
    (0u64..1 << open.len()).all(|mask| {
        let mut a = vec![vec![false; n]; n];
        let mut rw = vec![vec![false; n]; n];
        for &i in set {
            let d = deps[i];
            if let Origin::Constraint(c, b) = d.origin {
                if let Ok(pos) = open.binary_search(&c) {
                    let pick = if mask >> pos & 1 == 0 { Branch::Either } else { Branch::Or };
                    if b != pick {
                        continue;
                    }
                }
            }
            let (u, v) = (d.edge.from as usize, d.edge.to as usize);
            if d.edge.label.is_rw() {
                rw[u][v] = true;
            } else {
                a[u][v] = true;
            }
        }
        let mut k = a.clone();
        for u in 0..n {
            for m in 0..n {
                if a[u][m] {
                    for v in 0..n {
                        if rw[m][v] {
                            k[u][v] = true;
                        }
                    }
                }
            }
        }
        for m in 0..n {
            for u in 0..n {
                if k[u][m] {
                    for v in 0..n {
                        if k[m][v] {
                            k[u][v] = true;
                        }
                    }
                }
            }
        }
        (0..n).any(|v| k[v][v])
    })
}

/// Size of the smallest complete, violating union of cycles containing
/// `cycle`, found by best-first search over unions. `None` if none exists or
/// the state limit is hit.
pub fn enumerate_minimal_counterexamples(
    g: &GeneralizedPolygraph,
    cycle: &[Dependency],
    state_limit: usize,
) -> Option<usize> {
    let deps = g.dependencies();
    let index: BTreeMap<Dependency, usize> =
        deps.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let start: BTreeSet<usize> = cycle.iter().map(|d| index[d]).collect();
    let cycles = enumerate_cycles(g.vertex_count(), &deps);

    let mut heap = BinaryHeap::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    heap.push(Reverse((start.len(), start.iter().copied().collect::<Vec<_>>())));
    while let Some(Reverse((_, set))) = heap.pop() {
        if !seen.insert(set.clone()) {
            continue;
        }
        if seen.len() > state_limit {
            return None;
        }
        let members: BTreeSet<usize> = set.iter().copied().collect();
        if is_complete(g, &deps, &members) && is_violation(g, &deps, &members) {
            return Some(members.len());
        }
        for c in &cycles {
            if c.is_subset(&members) {
                continue;
            }
            let next: Vec<usize> = members.union(c).copied().collect();
            if !seen.contains(&next) {
                heap.push(Reverse((next.len(), next)));
            }
        }
    }
    None
}

/// Vertex names of a dependency list, for failure messages.
pub fn describe(g: &GeneralizedPolygraph, deps: &[Dependency]) -> String {
    deps.iter()
        .map(|d| g.edge_name(&d.edge))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Writes a failing input to `<root>/<suite>/<seed>.json` and returns the path.
pub fn persist_failure(root: &Path, suite: &str, seed: u64, h: &History) -> std::io::Result<PathBuf> {
    let dir = root.join(suite);
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{seed}.json"));
    std::fs::write(&path, h.to_json_pretty())?;
    Ok(path)
}

/// The vertex ids of a history's transactions by `TxnId`, for tests.
pub fn vertex_map(g: &GeneralizedPolygraph, h: &History) -> BTreeMap<TxnId, VertexId> {
    h.committed()
        .filter_map(|t| g.vertex_of(t.id).map(|v| (t.id, v)))
        .collect()
}
