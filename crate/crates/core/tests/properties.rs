//! Randomized property suites. Each suite checks `SI_SENTINEL_CASES` seeds
//! (500 by default) and writes any failing history to
//! `tests/corpus/<suite>/<seed>.json`; saved histories are replayed first.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use si_sentinel_core::encoder::{encode, Layer};
use si_sentinel_core::harness::{
    enumerate_minimal_counterexamples, persist_failure, random_small_history, SmallBounds,
};
use si_sentinel_core::history::{
    check_completeness, effective_reads_writes, parse_history, History, Operation, Session,
    Transaction, TxnId,
};
use si_sentinel_core::interpreter::{interpret, InterpretBudget};
use si_sentinel_core::oracle::{oracle_check, OracleLimits};
use si_sentinel_core::pipeline::{check_si, CheckOptions};
use si_sentinel_core::polygraph::{
    build_polygraph, constraint_count, create_known_graph, Branch, ConstraintId, Dependency, Edge,
    EdgeLabel, GeneralizedPolygraph, Origin, VertexId, INIT,
};
use si_sentinel_core::pruner::{prune_constraints, PruneVerdict};
use si_sentinel_core::solver::{solve, verify_witness, SolveResult, SolverBudget};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cases() -> u64 {
    std::env::var("SI_SENTINEL_CASES")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(500)
}

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus")
}

/// Runs `check` on saved failures, then on fresh seeds. Panics listing every
/// failing seed.
fn run_suite(name: &str, bounds: SmallBounds, check: impl Fn(&History) -> Result<(), String>) {
    let dir = corpus().join(name);
    if let Ok(entries) = std::fs::read_dir(&dir) {
        for entry in entries.flatten() {
            let bytes = std::fs::read(entry.path()).unwrap();
            let h = parse_history(&bytes).unwrap();
            if let Err(e) = check(&h) {
                panic!("{name}: saved case {} still fails: {e}", entry.path().display());
            }
        }
    }
    let mut failures = Vec::new();
    for seed in 0..cases() {
        let h = random_small_history(seed, &bounds);
        if let Err(e) = check(&h) {
            let path = persist_failure(&corpus(), name, seed, &h).unwrap();
            failures.push(format!("seed {seed} ({}): {e}", path.display()));
        }
    }
    assert!(failures.is_empty(), "{name}:\n{}", failures.join("\n"));
}

fn solver_verdict(h: &History, prune: bool) -> bool {
    let opts = CheckOptions {
        prune,
        interpret: None,
        ..CheckOptions::default()
    };
    check_si(h, &opts).unwrap().holds
}

#[test]
fn oracle_equivalence() {
    run_suite("oracle-equivalence", SmallBounds::default(), |h| {
        let want = oracle_check(h, &OracleLimits::default()).unwrap().satisfies();
        let got = solver_verdict(h, true);
        if want == got {
            Ok(())
        } else {
            Err(format!("oracle {want}, checker {got}"))
        }
    });
}

#[test]
fn oracle_violation_rate_regression() {
    let bounds = SmallBounds::default();
    let violating = (0..500)
        .filter(|&s| {
            !oracle_check(&random_small_history(s, &bounds), &OracleLimits::default())
                .unwrap()
                .satisfies()
        })
        .count();
    assert!(violating * 100 >= 30 * 500, "{violating}/500");
}

fn ten_txn_bounds() -> SmallBounds {
    SmallBounds {
        max_txns: 10,
        max_sessions: 4,
        ..SmallBounds::default()
    }
}

#[test]
fn pruning_preserves_verdicts_and_cycles_replay() {
    run_suite("prune-agreement", ten_txn_bounds(), |h| {
        if !check_completeness(h).unwrap().passes() {
            return Ok(());
        }
        let unpruned = build_polygraph(h);
        let out = prune_constraints(unpruned.clone());
        let cycle = match out.verdict {
            PruneVerdict::ImmediateViolation(v) => Some(v.cycle().clone()),
            PruneVerdict::Ok => {
                match solve(&encode(&out.pruned), &SolverBudget::default()).unwrap().0 {
                    SolveResult::Unsat(c) => Some(c),
                    SolveResult::Sat(_) => None,
                }
            }
        };
        let plain = solve(&encode(&unpruned), &SolverBudget::default()).unwrap().0;
        if cycle.is_some() != matches!(plain, SolveResult::Unsat(_)) {
            return Err("pruned and unpruned verdicts differ".into());
        }
        if let Some(c) = cycle {
            if !verify_witness(&SolveResult::Unsat(c), &out.pruned.unresolved()) {
                return Err("cycle does not replay against the unpruned constraints".into());
            }
        }
        Ok(())
    });
}

#[test]
fn pruning_is_monotone_and_bounded() {
    run_suite("prune-monotonicity", ten_txn_bounds(), |h| {
        if !check_completeness(h).unwrap().passes() {
            return Ok(());
        }
        let g = build_polygraph(h);
        let total = g.constraints().len();
        let out = prune_constraints(g);
        if out.progress.windows(2).any(|w| w[0] > w[1]) {
            return Err(format!("progress {:?}", out.progress));
        }
        if out.progress.len() > total + 1 {
            return Err(format!("{} passes for {total} constraints", out.progress.len()));
        }
        if out.progress.last().copied().unwrap_or(0) != out.resolved_count {
            return Err("resolved count mismatch".into());
        }
        Ok(())
    });
}

#[test]
fn witnesses_verify() {
    run_suite("witness-verification", SmallBounds::default(), |h| {
        if !check_completeness(h).unwrap().passes() {
            return Ok(());
        }
        for prune in [true, false] {
            let v = check_si(
                h,
                &CheckOptions {
                    prune,
                    interpret: None,
                    ..CheckOptions::default()
                },
            )
            .unwrap();
            if v.witness_verified != Some(true) {
                return Err(format!("witness rejected (prune={prune})"));
            }
        }
        Ok(())
    });
}

/// Writers and readers per key, computed from effective operations.
struct PlainFacts {
    writers: BTreeMap<String, BTreeSet<TxnId>>,
    /// (key, writer) -> readers; writer `None` is the initial state.
    readers: BTreeMap<(String, Option<TxnId>), BTreeSet<TxnId>>,
}

fn plain_facts(h: &History) -> PlainFacts {
    let mut writers: BTreeMap<String, BTreeSet<TxnId>> = BTreeMap::new();
    let mut by_value: HashMap<(String, i64), TxnId> = HashMap::new();
    for t in h.committed() {
        for (k, v) in effective_reads_writes(t).writes {
            writers.entry(k.clone()).or_default().insert(t.id);
            by_value.insert((k, v), t.id);
        }
    }
    let mut readers: BTreeMap<(String, Option<TxnId>), BTreeSet<TxnId>> = BTreeMap::new();
    for t in h.committed() {
        for (k, v) in effective_reads_writes(t).reads {
            let w = if v == 0 { None } else { Some(by_value[&(k.clone(), v)]) };
            readers.entry((k, w)).or_default().insert(t.id);
        }
    }
    PlainFacts { writers, readers }
}

type PlainConstraint = ((TxnId, TxnId, String), (TxnId, TxnId, String));

fn six_writer_bounds() -> SmallBounds {
    SmallBounds {
        max_txns: 10,
        max_keys: 2,
        max_writers_per_key: 6,
        abort_pct: 0,
        noise_pct: 0,
        ..SmallBounds::default()
    }
}

#[test]
fn generalized_constraints_expand_to_plain_ones() {
    run_suite("expansion-equivalence", six_writer_bounds(), |h| {
        if !check_completeness(h).unwrap().passes() {
            return Ok(());
        }
        let g = build_polygraph(h);
        let facts = plain_facts(h);
        let name = |v: VertexId| g.txn(v).unwrap();
        for c in g.constraints() {
            let k = g.key_name(c.key).to_owned();
            let (t, s) = (name(c.writers.0), name(c.writers.1));
            // Pair each branch's WW edge with the RW edges of the other branch.
            let mut expanded: BTreeSet<PlainConstraint> = BTreeSet::new();
            for (mine, theirs) in [(&c.either, &c.or), (&c.or, &c.either)] {
                let ww = mine.iter().find(|e| matches!(e.label, EdgeLabel::Ww(_))).unwrap();
                for rw in theirs.iter().filter(|e| e.label.is_rw()) {
                    expanded.insert((
                        (name(ww.from), name(ww.to), "WW".into()),
                        (name(rw.from), name(rw.to), "RW".into()),
                    ));
                }
            }
            // Plain constraints: Ti -WR-> Tj, Tk writes, Tk != Ti, Tj gives <Tk WW Ti, Tj RW Tk>.
            let mut plain: BTreeSet<PlainConstraint> = BTreeSet::new();
            for (ti, tk) in [(t, s), (s, t)] {
                for &tj in facts.readers.get(&(k.clone(), Some(ti))).into_iter().flatten() {
                    if tj != tk {
                        plain.insert(((tk, ti, "WW".into()), (tj, tk, "RW".into())));
                    }
                }
            }
            if expanded != plain {
                return Err(format!("constraint {}: {expanded:?} vs {plain:?}", c.id));
            }
        }
        // Constraints against the initial state are settled with init first.
        let mut want: BTreeSet<(Option<TxnId>, TxnId, String)> = BTreeSet::new();
        for (k, ws) in &facts.writers {
            for &w in ws {
                want.insert((None, w, format!("WW({k})")));
                for &r in facts.readers.get(&(k.clone(), None)).into_iter().flatten() {
                    if r != w {
                        want.insert((Some(r), w, format!("RW({k})")));
                    }
                }
            }
        }
        let got: BTreeSet<(Option<TxnId>, TxnId, String)> = g
            .initial_edges()
            .iter()
            .map(|e| (g.txn(e.from), name(e.to), g.label_name(e.label)))
            .collect();
        if want != got {
            return Err(format!("initial edges {got:?} vs {want:?}"));
        }
        Ok(())
    });
}

#[test]
fn constraint_count_is_pairs_of_writers() {
    run_suite("constraint-count", six_writer_bounds(), |h| {
        if !check_completeness(h).unwrap().passes() {
            return Ok(());
        }
        let g = build_polygraph(h);
        let want: usize = plain_facts(h)
            .writers
            .values()
            .map(|w| w.len() * (w.len().saturating_sub(1)) / 2)
            .sum();
        let stats = constraint_count(&g);
        if stats.constraints != want {
            return Err(format!("{} constraints, want {want}", stats.constraints));
        }
        let unknown: usize = g.constraints().iter().map(|c| c.either.len() + c.or.len()).sum();
        if stats.unknown_dependencies != unknown {
            return Err("unknown dependency count".into());
        }
        Ok(())
    });
}

#[test]
fn known_graph_has_only_so_and_wr() {
    run_suite("known-graph", SmallBounds::default(), |h| {
        if !check_completeness(h).unwrap().passes() {
            return Ok(());
        }
        let g = create_known_graph(h);
        let facts = plain_facts(h);
        for e in g.base_edges() {
            match e.label {
                EdgeLabel::So => {}
                EdgeLabel::Wr(k) => {
                    let w = g.txn(e.from);
                    let r = g.txn(e.to).unwrap();
                    let key = g.key_name(k).to_owned();
                    if !facts.readers.get(&(key, w)).is_some_and(|rs| rs.contains(&r)) {
                        return Err(format!("WR edge {} has no matching read", g.edge_name(e)));
                    }
                }
                _ => return Err(format!("unexpected {}", g.edge_name(e))),
            }
            if e.from == e.to {
                return Err("self-loop in known graph".into());
            }
        }
        Ok(())
    });
}

/// Evaluates the encoding under the pair-level edge set of `edges`.
fn eval_induced(g: &GeneralizedPolygraph, edges: &BTreeSet<Edge>) -> Result<BTreeSet<(VertexId, VertexId)>, String> {
    let enc = encode(g);
    let pairs: BTreeSet<(VertexId, VertexId)> = edges.iter().map(|e| (e.from, e.to)).collect();
    let b = |i: VertexId, j: VertexId| pairs.contains(&(i, j));
    for u in &enc.clauses.units {
        if !b(u.edge.from, u.edge.to) {
            return Err("unit clause false".into());
        }
    }
    for c in &enc.clauses.branches {
        let all = |s: &[Edge]| s.iter().all(|e| b(e.from, e.to));
        let none = |s: &[Edge]| s.iter().all(|e| !b(e.from, e.to));
        if !((all(&c.either) && none(&c.or)) || (all(&c.or) && none(&c.either))) {
            return Err(format!("branch clause {} false", c.constraint));
        }
    }
    Ok(enc
        .clauses
        .induced
        .iter()
        .filter(|d| (d.direct && b(d.i, d.j)) || d.via.iter().any(|&k| b(d.i, k) && b(k, d.j)))
        .map(|d| (d.i, d.j))
        .collect())
}

fn induced_pairs(edges: &BTreeSet<Edge>) -> BTreeSet<(VertexId, VertexId)> {
    let a: Vec<&Edge> = edges.iter().filter(|e| !e.label.is_rw()).collect();
    let mut out: BTreeSet<(VertexId, VertexId)> = a.iter().map(|e| (e.from, e.to)).collect();
    for x in &a {
        for y in edges.iter().filter(|e| e.label.is_rw() && e.from == x.to) {
            out.insert((x.from, y.to));
        }
    }
    out
}

#[test]
fn encoding_models_are_compatible_graphs() {
    run_suite("model-correspondence", SmallBounds::default(), |h| {
        if !check_completeness(h).unwrap().passes() {
            return Ok(());
        }
        let g = build_polygraph(h);
        let mut rng = ChaCha8Rng::seed_from_u64(h.operation_count() as u64);
        let known: BTreeSet<Edge> = g.known_dependencies().map(|d| d.edge).collect();
        for _ in 0..16 {
            let mut edges = known.clone();
            let mut chosen = Vec::new();
            for c in g.open_constraints() {
                let b = if rng.random_bool(0.5) { Branch::Either } else { Branch::Or };
                edges.extend(c.branch(b).iter().copied());
                chosen.push((c.id, b));
            }
            let pairs: BTreeSet<(VertexId, VertexId)> = edges.iter().map(|e| (e.from, e.to)).collect();
            match eval_induced(&g, &edges) {
                Ok(induced) => {
                    for (c, b) in &chosen {
                        let other = g.constraint(*c).branch(b.opposite());
                        if other.iter().any(|e| pairs.contains(&(e.from, e.to))) {
                            return Err(format!("constraint {c} has both branches"));
                        }
                    }
                    if induced != induced_pairs(&edges) {
                        return Err(format!("induced layer differs for {chosen:?}"));
                    }
                }
                // A resolution whose pairs collide with the other branch
                // cannot satisfy the pair-level clauses.
                Err(_) => {}
            }
        }
        Ok(())
    });
}

#[test]
fn induced_variables_exist_only_for_supported_pairs() {
    run_suite("variable-economy", SmallBounds::default(), |h| {
        if !check_completeness(h).unwrap().passes() {
            return Ok(());
        }
        let g = prune_constraints(build_polygraph(h)).pruned;
        let enc = encode(&g);
        let deps = g.dependencies();
        let a: BTreeSet<(VertexId, VertexId)> = deps
            .iter()
            .filter(|d| !d.edge.label.is_rw())
            .map(|d| (d.edge.from, d.edge.to))
            .collect();
        let rw: BTreeSet<(VertexId, VertexId)> = deps
            .iter()
            .filter(|d| d.edge.label.is_rw())
            .map(|d| (d.edge.from, d.edge.to))
            .collect();
        let mut support = a.clone();
        for &(i, k) in &a {
            for &(k2, j) in &rw {
                if k == k2 {
                    support.insert((i, j));
                }
            }
        }
        let vars: BTreeSet<(VertexId, VertexId)> = enc
            .vars
            .iter()
            .filter(|v| v.layer == Layer::Induced)
            .map(|v| (v.i, v.j))
            .collect();
        let n = g.vertex_count();
        if vars.len() > n * n {
            return Err("more induced variables than pairs".into());
        }
        if vars != support {
            return Err(format!("{} induced variables, {} supported pairs", vars.len(), support.len()));
        }
        Ok(())
    });
}

/// Renumbers sessions in reverse and renames every key.
fn relabel(h: &History) -> History {
    let n = h.sessions().len() as u64;
    let sessions = h
        .sessions()
        .iter()
        .rev()
        .enumerate()
        .map(|(s, sess)| Session {
            id: s as u64 + 7 * n,
            transactions: sess
                .transactions
                .iter()
                .enumerate()
                .map(|(i, t)| Transaction {
                    id: TxnId::new(s as u64 + 7 * n, i as u64),
                    status: t.status,
                    ops: t
                        .ops
                        .iter()
                        .map(|o| Operation {
                            kind: o.kind,
                            key: format!("renamed-{}", o.key.chars().rev().collect::<String>()),
                            value: o.value,
                        })
                        .collect(),
                })
                .collect(),
        })
        .collect();
    History::new(sessions).unwrap()
}

#[test]
fn oracle_is_isomorphism_invariant() {
    run_suite("oracle-isomorphism", SmallBounds::default(), |h| {
        let a = oracle_check(h, &OracleLimits::default()).unwrap().satisfies();
        let b = oracle_check(&relabel(h), &OracleLimits::default()).unwrap().satisfies();
        if a == b {
            Ok(())
        } else {
            Err(format!("{a} vs {b} after relabeling"))
        }
    });
}

/// Whether every branch choice over the constraints in `deps` leaves a cycle
/// in the induced graph of the chosen dependencies.
fn always_cyclic(g: &GeneralizedPolygraph, deps: &[Dependency]) -> bool {
    let n = g.vertex_count();
    let touched: Vec<ConstraintId> = deps
        .iter()
        .filter_map(|d| match d.origin {
            Origin::Constraint(c, _) if g.resolution(c).is_none() => Some(c),
            _ => None,
        })
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    (0u32..1 << touched.len()).all(|mask| {
        let pick = |c: ConstraintId| {
            let i = touched.iter().position(|&x| x == c).unwrap();
            if mask >> i & 1 == 0 { Branch::Either } else { Branch::Or }
        };
        let edges: BTreeSet<Edge> = deps
            .iter()
            .filter(|d| match d.origin {
                Origin::Constraint(c, b) if g.resolution(c).is_none() => pick(c) == b,
                _ => true,
            })
            .map(|d| d.edge)
            .collect();
        has_cycle(n, &induced_pairs(&edges))
    })
}

fn has_cycle(n: usize, pairs: &BTreeSet<(VertexId, VertexId)>) -> bool {
    let mut indeg = vec![0usize; n];
    for &(_, j) in pairs {
        indeg[j as usize] += 1;
    }
    let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = stack.pop() {
        seen += 1;
        for &(i, j) in pairs.range((v as VertexId, 0)..(v as VertexId + 1, 0)) {
            debug_assert_eq!(i as usize, v);
            indeg[j as usize] -= 1;
            if indeg[j as usize] == 0 {
                stack.push(j as usize);
            }
        }
    }
    seen < n
}

#[test]
fn counterexamples_are_minimal() {
    let bounds = SmallBounds {
        abort_pct: 0,
        noise_pct: 0,
        ..SmallBounds::default()
    };
    run_suite("interpreter-minimality", bounds, |h| {
        let v = check_si(h, &CheckOptions::default()).unwrap();
        let (Some(c), Some(g)) = (&v.witness, &v.graph) else {
            return Ok(());
        };
        let ce = interpret(h, g, c, &InterpretBudget::default()).map_err(|e| e.to_string())?;
        if !ce.acs.complete {
            return Err("incomplete cycle set".into());
        }
        if !ce.finalized.all_certain() {
            return Err("uncertain dependency after finalizing".into());
        }
        let set = ce.acs.dependencies();
        if ce.minimal {
            let want = enumerate_minimal_counterexamples(g, &c.dependencies(), 1_000_000)
                .ok_or("enumeration gave up")?;
            if set.len() != want {
                return Err(format!("cycle set has {} dependencies, minimum is {want}", set.len()));
            }
        }
        if !always_cyclic(g, &set) {
            return Err("cycle set is not a violation".into());
        }
        for i in 0..set.len() {
            let mut fewer = set.clone();
            fewer.remove(i);
            if always_cyclic(g, &fewer) {
                return Err(format!("still a violation without {}", g.edge_name(&set[i].edge)));
            }
        }
        Ok(())
    });
}

#[test]
fn initial_reads_come_from_init() {
    let h = parse_history(
        br#"{"sessions":[{"id":0,"transactions":[
            {"index":0,"status":"committed","ops":[{"t":"w","k":"x","v":1}]},
            {"index":1,"status":"committed","ops":[{"t":"r","k":"y","v":0}]}]}]}"#,
    )
    .unwrap();
    let g = create_known_graph(&h);
    let y = g.key_id("y").unwrap();
    let t2 = g.vertex_of(TxnId::new(0, 1)).unwrap();
    assert!(g.base_edges().contains(&Edge::new(INIT, t2, EdgeLabel::Wr(y))));
}
