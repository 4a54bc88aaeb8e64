//! Brute-force SI decision for small histories.
//!
//! Enumerates every per-key total order of committed writers (the initial
//! transaction first), derives RW edges from it, and looks for an order
//! whose induced graph `(SO ∪ WR ∪ WW) ∪ ((SO ∪ WR ∪ WW) ∘ RW)` is acyclic.
//! Shares no code with the polygraph pipeline: reads, writes and the
//! completeness rules are re-derived from raw operations, and SO is the full
//! session order rather than its transitive reduction.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::history::{History, HistoryError, TxnId, TxnStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_writers_per_key: usize,
    pub max_transactions: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_writers_per_key: 5,
            max_transactions: 10,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("history too large for exhaustive checking: {0}")]
    LimitExceeded(String),
    #[error(transparent)]
    History(#[from] HistoryError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rejection {
    /// A read no WR edge can explain.
    IncompleteRead,
    /// Every write order leaves a cycle.
    Cyclic,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OracleVerdict {
    /// The first acyclic write order found, per key.
    Satisfies(BTreeMap<String, Vec<TxnId>>),
    Violates(Rejection),
}

impl OracleVerdict {
    pub fn satisfies(&self) -> bool {
        matches!(self, OracleVerdict::Satisfies(_))
    }
}

/// Labeled edge sets over vertices `0..n`, vertex 0 being the initial state.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DependencyGraph {
    pub n: usize,
    pub so: Vec<(usize, usize)>,
    pub wr: Vec<(usize, usize)>,
    pub ww: Vec<(usize, usize)>,
    pub rw: Vec<(usize, usize)>,
}

/// `(SO ∪ WR ∪ WW) ∪ ((SO ∪ WR ∪ WW) ∘ RW)`, self-loops included.
pub fn induced_graph(d: &DependencyGraph) -> BTreeSet<(usize, usize)> {
    let base: BTreeSet<(usize, usize)> = d.so.iter().chain(&d.wr).chain(&d.ww).copied().collect();
    let mut rw_from: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(a, b) in &d.rw {
        rw_from.entry(a).or_default().push(b);
    }
    let mut out = base.clone();
    for &(i, k) in &base {
        if let Some(js) = rw_from.get(&k) {
            out.extend(js.iter().map(|&j| (i, j)));
        }
    }
    out
}

pub fn is_acyclic(n: usize, edges: &BTreeSet<(usize, usize)>) -> bool {
    let mut indeg = vec![0usize; n];
    let mut succ = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a == b {
            return false;
        }
        succ[a].push(b);
        indeg[b] += 1;
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop_front() {
        seen += 1;
        for &w in &succ[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    seen == n
}

struct Facts {
    ids: Vec<TxnId>,
    so: Vec<(usize, usize)>,
    wr: Vec<(usize, usize)>,
    /// Per key: writers (vertex ids, ascending) and `(reader, source)` pairs.
    keys: BTreeMap<String, (Vec<usize>, Vec<(usize, usize)>)>,
    complete: bool,
}

fn gather(h: &History) -> Result<Facts, HistoryError> {
    struct Site {
        txn: TxnId,
        op: usize,
        committed: bool,
    }
    let mut sites: HashMap<(&str, i64), Site> = HashMap::new();
    let mut last_write: HashMap<(TxnId, &str), usize> = HashMap::new();
    for s in h.sessions() {
        for t in &s.transactions {
            for (i, op) in t.ops.iter().enumerate() {
                if op.is_write() {
                    sites.insert(
                        (op.key.as_str(), op.value),
                        Site {
                            txn: t.id,
                            op: i,
                            committed: t.status == TxnStatus::Committed,
                        },
                    );
                    last_write.insert((t.id, op.key.as_str()), i);
                }
            }
        }
    }

    let mut ids = Vec::new();
    let mut vertex: HashMap<TxnId, usize> = HashMap::new();
    let mut so = Vec::new();
    for s in h.sessions() {
        let mut earlier = Vec::new();
        for t in s.transactions.iter().filter(|t| t.status == TxnStatus::Committed) {
            let v = ids.len() + 1;
            ids.push(t.id);
            vertex.insert(t.id, v);
            so.extend(earlier.iter().map(|&e| (e, v)));
            earlier.push(v);
        }
    }

    let mut complete = true;
    let mut wr = Vec::new();
    let mut keys: BTreeMap<String, (Vec<usize>, Vec<(usize, usize)>)> = BTreeMap::new();
    for s in h.sessions() {
        for t in s.transactions.iter().filter(|t| t.status == TxnStatus::Committed) {
            let v = vertex[&t.id];
            let mut current: HashMap<&str, i64> = HashMap::new();
            for (i, op) in t.ops.iter().enumerate() {
                let key = op.key.as_str();
                if op.is_write() {
                    current.insert(key, op.value);
                    let writers = &mut keys.entry(op.key.clone()).or_default().0;
                    if !writers.contains(&v) {
                        writers.push(v);
                    }
                    continue;
                }
                let site = sites.get(&(key, op.value));
                if op.value != 0 && site.is_none() {
                    return Err(HistoryError::DanglingRead {
                        txn: t.id,
                        op_index: i,
                        key: op.key.clone(),
                        value: op.value,
                    });
                }
                if let Some(&seen) = current.get(key) {
                    if seen != op.value {
                        complete = false;
                    }
                    continue;
                }
                current.insert(key, op.value);
                let source = if op.value == 0 {
                    0
                } else {
                    let site = site.unwrap();
                    let is_last = last_write[&(site.txn, key)] == site.op;
                    if site.txn == t.id || !site.committed || !is_last {
                        complete = false;
                        continue;
                    }
                    vertex[&site.txn]
                };
                wr.push((source, v));
                keys.entry(op.key.clone()).or_default().1.push((v, source));
            }
        }
    }
    for (writers, _) in keys.values_mut() {
        writers.sort_unstable();
    }
    Ok(Facts {
        ids,
        so,
        wr,
        keys,
        complete,
    })
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        p.reverse();
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

pub fn oracle_check(h: &History, limits: &OracleLimits) -> Result<OracleVerdict, OracleError> {
    let facts = gather(h)?;
    if facts.ids.len() > limits.max_transactions {
        return Err(OracleError::LimitExceeded(format!(
            "{} committed transactions (limit {})",
            facts.ids.len(),
            limits.max_transactions
        )));
    }
    for (key, (writers, _)) in &facts.keys {
        if writers.len() > limits.max_writers_per_key {
            return Err(OracleError::LimitExceeded(format!(
                "key {key:?} has {} writers (limit {})",
                writers.len(),
                limits.max_writers_per_key
            )));
        }
    }
    if !facts.complete {
        return Ok(OracleVerdict::Violates(Rejection::IncompleteRead));
    }

    let n = facts.ids.len() + 1;
    if n > 64 {
        return Err(OracleError::LimitExceeded(format!(
            "{} committed transactions (at most 63 supported)",
            n - 1
        )));
    }
    let mut base = vec![0u64; n];
    for &(a, b) in facts.so.iter().chain(&facts.wr) {
        base[a] |= 1 << b;
    }
    let keys: Vec<(&String, &Vec<usize>, &Vec<(usize, usize)>)> =
        facts.keys.iter().map(|(k, (w, r))| (k, w, r)).collect();
    let mut orders: Vec<Vec<usize>> = keys.iter().map(|(_, w, _)| (*w).clone()).collect();
    loop {
        let mut a = base.clone();
        let mut rw = vec![0u64; n];
        for ((_, _, reads), order) in keys.iter().zip(&orders) {
            let full: Vec<usize> = std::iter::once(0).chain(order.iter().copied()).collect();
            for i in 0..full.len() {
                for &later in &full[i + 1..] {
                    a[full[i]] |= 1 << later;
                }
            }
            for &(reader, source) in reads.iter() {
                let Some(pos) = full.iter().position(|&w| w == source) else {
                    continue;
                };
                for &later in &full[pos + 1..] {
                    if later != reader {
                        rw[reader] |= 1 << later;
                    }
                }
            }
        }
        if masks_acyclic(&induced_masks(&a, &rw)) {
            let witness = keys
                .iter()
                .zip(&orders)
                .map(|((k, _, _), o)| ((*k).clone(), o.iter().map(|&v| facts.ids[v - 1]).collect()))
                .collect();
            return Ok(OracleVerdict::Satisfies(witness));
        }
        // Odometer over keys, last key fastest.
        let mut idx = orders.len();
        loop {
            if idx == 0 {
                return Ok(OracleVerdict::Violates(Rejection::Cyclic));
            }
            idx -= 1;
            if next_permutation(&mut orders[idx]) {
                break;
            }
        }
    }
}

/// Row `i` of the result: `a[i]` plus the RW-successors of every vertex in `a[i]`.
fn induced_masks(a: &[u64], rw: &[u64]) -> Vec<u64> {
    a.iter()
        .map(|&row| {
            let mut out = row;
            let mut bits = row;
            while bits != 0 {
                let m = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                out |= rw[m];
            }
            out
        })
        .collect()
}

fn masks_acyclic(k: &[u64]) -> bool {
    let n = k.len();
    if (0..n).any(|i| k[i] >> i & 1 == 1) {
        return false;
    }
    let mut incoming = vec![0u64; n];
    for (i, &row) in k.iter().enumerate() {
        let mut bits = row;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            incoming[j] |= 1 << i;
        }
    }
    let mut remaining: u64 = if n == 64 { u64::MAX } else { (1 << n) - 1 };
    while remaining != 0 {
        let sources: u64 = (0..n)
            .filter(|&v| remaining >> v & 1 == 1 && incoming[v] & remaining == 0)
            .fold(0, |m, v| m | 1 << v);
        if sources == 0 {
            return false;
        }
        remaining &= !sources;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{parse_history, Operation, Session, Transaction};
    use crate::polygraph::tests::LONG_FORK;

    fn history(sessions: Vec<Vec<Vec<Operation>>>) -> History {
        History::new(
            sessions
                .into_iter()
                .enumerate()
                .map(|(s, ts)| Session {
                    id: s as u64,
                    transactions: ts
                        .into_iter()
                        .enumerate()
                        .map(|(i, ops)| Transaction::committed(TxnId::new(s as u64, i as u64), ops))
                        .collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn long_fork_violates() {
        let h = parse_history(LONG_FORK.as_bytes()).unwrap();
        assert_eq!(
            oracle_check(&h, &OracleLimits::default()).unwrap(),
            OracleVerdict::Violates(Rejection::Cyclic)
        );
    }

    #[test]
    fn single_writers_satisfy() {
        let h = history(vec![
            vec![vec![Operation::write("x", 1)]],
            vec![vec![Operation::read("x", 1), Operation::write("y", 1)]],
        ]);
        assert!(oracle_check(&h, &OracleLimits::default()).unwrap().satisfies());
    }

    #[test]
    fn lost_update_violates() {
        let h = history(vec![
            vec![vec![Operation::write("k", 1)]],
            vec![vec![Operation::read("k", 1), Operation::write("k", 2)]],
            vec![vec![Operation::read("k", 1), Operation::write("k", 3)]],
        ]);
        assert_eq!(
            oracle_check(&h, &OracleLimits::default()).unwrap(),
            OracleVerdict::Violates(Rejection::Cyclic)
        );
    }

    #[test]
    fn incomplete_reads_violate() {
        let h = history(vec![vec![vec![
            Operation::write("x", 1),
            Operation::read("x", 2),
        ]], vec![vec![Operation::write("x", 2)]]]);
        assert_eq!(
            oracle_check(&h, &OracleLimits::default()).unwrap(),
            OracleVerdict::Violates(Rejection::IncompleteRead)
        );
    }

    #[test]
    fn limits_are_enforced() {
        let h = history(vec![(1..=6).map(|v| vec![Operation::write("x", v)]).collect()]);
        assert!(matches!(
            oracle_check(&h, &OracleLimits::default()),
            Err(OracleError::LimitExceeded(_))
        ));
    }

    #[test]
    fn induced_graph_shapes() {
        let d = DependencyGraph {
            n: 3,
            so: vec![(0, 1)],
            ..DependencyGraph::default()
        };
        assert_eq!(induced_graph(&d), BTreeSet::from([(0, 1)]));
        let d = DependencyGraph {
            n: 3,
            ww: vec![(1, 2)],
            rw: vec![(2, 1)],
            ..DependencyGraph::default()
        };
        assert!(induced_graph(&d).contains(&(1, 1)));
        // Either-resolution of a single constraint: T -WR-> T' -RW-> S.
        let d = DependencyGraph {
            n: 4,
            wr: vec![(1, 3)],
            ww: vec![(1, 2)],
            rw: vec![(3, 2)],
            ..DependencyGraph::default()
        };
        let ind = induced_graph(&d);
        assert!(ind.contains(&(1, 2)));
        assert_eq!(ind, BTreeSet::from([(1, 2), (1, 3)]));
    }

    #[test]
    fn mask_path_matches_reference() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let n = rng.random_range(1..9);
            let mut d = DependencyGraph { n, ..DependencyGraph::default() };
            for _ in 0..rng.random_range(0..14) {
                let e = (rng.random_range(0..n), rng.random_range(0..n));
                if e.0 == e.1 {
                    continue;
                }
                match rng.random_range(0..4) {
                    0 => d.so.push(e),
                    1 => d.wr.push(e),
                    2 => d.ww.push(e),
                    _ => d.rw.push(e),
                }
            }
            let mut a = vec![0u64; n];
            let mut rw = vec![0u64; n];
            for &(x, y) in d.so.iter().chain(&d.wr).chain(&d.ww) {
                a[x] |= 1 << y;
            }
            for &(x, y) in &d.rw {
                rw[x] |= 1 << y;
            }
            let reference = induced_graph(&d);
            let masks = induced_masks(&a, &rw);
            let mut from_masks = BTreeSet::new();
            for i in 0..n {
                for j in 0..n {
                    if masks[i] >> j & 1 == 1 {
                        from_masks.insert((i, j));
                    }
                }
            }
            assert_eq!(from_masks, reference);
            assert_eq!(masks_acyclic(&masks), is_acyclic(n, &reference));
        }
    }

    #[test]
    fn permutations_are_lexicographic() {
        let mut p = vec![1, 2, 3];
        let mut seen = vec![p.clone()];
        while next_permutation(&mut p) {
            seen.push(p.clone());
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[1], vec![1, 3, 2]);
        assert_eq!(seen[5], vec![3, 2, 1]);
    }
}
