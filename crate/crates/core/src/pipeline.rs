//! End-to-end check: completeness gate, polygraph construction, pruning,
//! encoding, solving and, on a violation, interpretation.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::encoder::encode;
use crate::history::{check_completeness, CompletenessReport, History, HistoryError};
use crate::interpreter::{interpret, Anomaly, Counterexample, InterpretBudget, InterpretError};
use crate::polygraph::{build_polygraph, constraint_count, GeneralizedPolygraph, WitnessCycle};
use crate::pruner::{prune_constraints, PruneVerdict};
use crate::solver::{solve, verify_witness, Assignment, SolveError, SolveResult, SolverBudget, SolverStats};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckOptions {
    pub prune: bool,
    pub solver: SolverBudget,
    /// `None` skips interpretation.
    pub interpret: Option<InterpretBudget>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            prune: true,
            solver: SolverBudget::default(),
            interpret: Some(InterpretBudget::default()),
        }
    }
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Budget(#[from] SolveError),
    #[error(transparent)]
    Interpret(#[from] InterpretError),
}

/// Wall-clock milliseconds per phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub gate: f64,
    pub constructing: f64,
    pub pruning: f64,
    pub encoding: f64,
    pub solving: f64,
    pub interpreting: f64,
}

/// Constraint and unknown-dependency counts before and after pruning.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CheckStats {
    pub transactions: usize,
    pub operations: usize,
    pub constraints_before: usize,
    pub constraints_after: usize,
    pub unknown_dependencies_before: usize,
    pub unknown_dependencies_after: usize,
    pub prune_passes: usize,
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub holds: bool,
    pub classification: Option<Anomaly>,
    pub gate: CompletenessReport,
    pub stats: CheckStats,
    pub solver: Option<SolverStats>,
    pub timings: PhaseTimings,
    pub witness: Option<WitnessCycle>,
    pub assignment: Option<Assignment>,
    /// Outcome of re-checking the witness or assignment against the graph it
    /// came from.
    pub witness_verified: Option<bool>,
    pub counterexample: Option<Counterexample>,
    /// The polygraph the solver ran on, after pruning if enabled. Absent when
    /// the gate rejected the history.
    pub graph: Option<GeneralizedPolygraph>,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

fn gate_anomaly(r: &CompletenessReport) -> Option<Anomaly> {
    if !r.int_violations.is_empty() {
        Some(Anomaly::InternalInconsistency)
    } else if !r.aborted_reads.is_empty() {
        Some(Anomaly::AbortedRead)
    } else if !r.intermediate_reads.is_empty() {
        Some(Anomaly::IntermediateRead)
    } else if !r.future_reads.is_empty() {
        Some(Anomaly::FutureRead)
    } else {
        None
    }
}

pub fn check_si(h: &History, opts: &CheckOptions) -> Result<Verdict, CheckError> {
    let mut timings = PhaseTimings::default();
    let mut stats = CheckStats {
        transactions: h.transaction_count(),
        operations: h.operation_count(),
        ..CheckStats::default()
    };

    let t = Instant::now();
    let gate = check_completeness(h)?;
    timings.gate = ms(t);
    if let Some(anomaly) = gate_anomaly(&gate) {
        return Ok(Verdict {
            holds: false,
            classification: Some(anomaly),
            gate,
            stats,
            solver: None,
            timings,
            witness: None,
            assignment: None,
            witness_verified: None,
            counterexample: None,
            graph: None,
        });
    }

    let t = Instant::now();
    let original = build_polygraph(h);
    timings.constructing = ms(t);
    let before = constraint_count(&original);
    stats.constraints_before = before.constraints;
    stats.unknown_dependencies_before = before.unknown_dependencies;

    let t = Instant::now();
    let (g, immediate) = if opts.prune {
        let out = prune_constraints(original);
        stats.prune_passes = out.progress.len();
        let cycle = match out.verdict {
            PruneVerdict::ImmediateViolation(v) => Some(v.cycle().clone()),
            PruneVerdict::Ok => None,
        };
        (out.pruned, cycle)
    } else {
        (original, None)
    };
    timings.pruning = ms(t);
    let after = constraint_count(&g);
    stats.constraints_after = after.constraints;
    stats.unknown_dependencies_after = after.unknown_dependencies;

    let mut solver = None;
    let (result, witness_verified) = match immediate {
        Some(cycle) => {
            let r = SolveResult::Unsat(cycle);
            let ok = verify_witness(&r, &g);
            (r, ok)
        }
        None => {
            let t = Instant::now();
            let enc = encode(&g);
            timings.encoding = ms(t);
            let t = Instant::now();
            let (r, s) = solve(&enc, &opts.solver)?;
            timings.solving = ms(t);
            solver = Some(s);
            let ok = verify_witness(&r, &g);
            (r, ok)
        }
    };

    let mut verdict = Verdict {
        holds: false,
        classification: None,
        gate,
        stats,
        solver,
        timings,
        witness: None,
        assignment: None,
        witness_verified: Some(witness_verified),
        counterexample: None,
        graph: None,
    };
    match result {
        SolveResult::Sat(a) => {
            verdict.holds = true;
            verdict.assignment = Some(a);
        }
        SolveResult::Unsat(cycle) => {
            if let Some(budget) = &opts.interpret {
                let t = Instant::now();
                let ce = interpret(h, &g, &cycle, budget)?;
                verdict.timings.interpreting = ms(t);
                verdict.classification = Some(ce.classification);
                verdict.counterexample = Some(ce);
            } else {
                verdict.classification = Some(Anomaly::Unclassified);
            }
            verdict.witness = Some(cycle);
        }
    }
    verdict.graph = Some(g);
    Ok(verdict)
}

/// One edge of a witness cycle, by transaction and label names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EdgeRecord {
    pub from: String,
    pub to: String,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GateRecord {
    pub internal_inconsistencies: usize,
    pub aborted_reads: usize,
    pub intermediate_reads: usize,
    pub future_reads: usize,
}

/// The machine-readable verdict. Field order is the output order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerdictRecord {
    pub verdict: &'static str,
    pub classification: Option<Anomaly>,
    pub minimal: Option<bool>,
    pub gate: GateRecord,
    pub stats: CheckStats,
    pub solver: Option<SolverStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<PhaseTimings>,
    pub witness_verified: Option<bool>,
    pub witness_cycle: Vec<EdgeRecord>,
}

impl Verdict {
    pub fn record(&self, with_timings: bool) -> VerdictRecord {
        let witness_cycle = match (&self.witness, &self.graph) {
            (Some(c), Some(g)) => c
                .dependencies()
                .iter()
                .map(|d| EdgeRecord {
                    from: g.vertex_name(d.edge.from),
                    to: g.vertex_name(d.edge.to),
                    label: g.label_name(d.edge.label),
                })
                .collect(),
            _ => Vec::new(),
        };
        VerdictRecord {
            verdict: if self.holds { "holds" } else { "violation" },
            classification: self.classification,
            minimal: self.counterexample.as_ref().map(|c| c.minimal),
            gate: GateRecord {
                internal_inconsistencies: self.gate.int_violations.len(),
                aborted_reads: self.gate.aborted_reads.len(),
                intermediate_reads: self.gate.intermediate_reads.len(),
                future_reads: self.gate.future_reads.len(),
            },
            stats: self.stats,
            solver: self.solver,
            timings_ms: with_timings.then_some(self.timings),
            witness_verified: self.witness_verified,
            witness_cycle,
        }
    }
}
