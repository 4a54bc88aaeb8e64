use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use si_sentinel_core::history::{History, Operation, Session, Transaction, TxnId};
use si_sentinel_core::interpreter::Anomaly;

use crate::WorkloadError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AnomalyKind {
    LostUpdate,
    LongFork,
    CausalityViolation,
    AbortedRead,
    IntermediateRead,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 5] = [
        AnomalyKind::LostUpdate,
        AnomalyKind::LongFork,
        AnomalyKind::CausalityViolation,
        AnomalyKind::AbortedRead,
        AnomalyKind::IntermediateRead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnomalyKind::LostUpdate => "lost-update",
            AnomalyKind::LongFork => "long-fork",
            AnomalyKind::CausalityViolation => "causality",
            AnomalyKind::AbortedRead => "aborted-read",
            AnomalyKind::IntermediateRead => "intermediate-read",
        }
    }

    /// The classification a checker must report for the injected pattern.
    pub fn classification(self) -> Anomaly {
        match self {
            AnomalyKind::LostUpdate => Anomaly::LostUpdate,
            AnomalyKind::LongFork => Anomaly::LongFork,
            AnomalyKind::CausalityViolation => Anomaly::CausalityViolation,
            AnomalyKind::AbortedRead => Anomaly::AbortedRead,
            AnomalyKind::IntermediateRead => Anomaly::IntermediateRead,
        }
    }

    /// Sessions the template occupies.
    pub fn sessions_needed(self) -> usize {
        template(self).iter().map(|t| t.slot).max().map_or(0, |m| m + 1)
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnomalyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "causality-violation" => Ok(AnomalyKind::CausalityViolation),
            _ => AnomalyKind::ALL
                .into_iter()
                .find(|k| k.name() == s)
                .ok_or_else(|| format!("unknown anomaly {s:?}")),
        }
    }
}

#[derive(Clone, Copy)]
enum Op {
    R(usize, i64),
    W(usize, i64),
}

struct TemplateTxn {
    /// Index among the lowest-id sessions of the host.
    slot: usize,
    committed: bool,
    ops: &'static [Op],
}

const fn txn(slot: usize, ops: &'static [Op]) -> TemplateTxn {
    TemplateTxn {
        slot,
        committed: true,
        ops,
    }
}

use Op::{R, W};

// Keys are template-local indices; 0 is `x`, 1 is `y`. Transactions of one
// slot are appended in listed order.
fn template(kind: AnomalyKind) -> &'static [TemplateTxn] {
    const LOST_UPDATE: &[TemplateTxn] = &[
        txn(0, &[W(0, 1)]),
        txn(0, &[R(0, 1), W(0, 2)]),
        txn(1, &[R(0, 1), W(0, 3)]),
    ];
    const LONG_FORK: &[TemplateTxn] = &[
        txn(0, &[W(0, 1), W(1, 1)]),
        txn(1, &[W(0, 2)]),
        txn(2, &[W(1, 2)]),
        txn(1, &[R(0, 2), R(1, 1)]),
        txn(2, &[R(1, 2), R(0, 1)]),
        txn(0, &[W(0, 3)]),
    ];
    const CAUSALITY: &[TemplateTxn] = &[
        txn(0, &[W(0, 1)]),
        txn(0, &[W(1, 1)]),
        txn(1, &[R(1, 1), R(0, 0)]),
    ];
    const ABORTED_READ: &[TemplateTxn] = &[
        TemplateTxn {
            slot: 0,
            committed: false,
            ops: &[W(0, 1)],
        },
        txn(0, &[R(0, 1)]),
    ];
    const INTERMEDIATE_READ: &[TemplateTxn] =
        &[txn(0, &[W(0, 1), W(0, 2)]), txn(0, &[R(0, 1)])];
    match kind {
        AnomalyKind::LostUpdate => LOST_UPDATE,
        AnomalyKind::LongFork => LONG_FORK,
        AnomalyKind::CausalityViolation => CAUSALITY,
        AnomalyKind::AbortedRead => ABORTED_READ,
        AnomalyKind::IntermediateRead => INTERMEDIATE_READ,
    }
}

/// Appends the template for `kind` to the end of the host's lowest-id
/// sessions, on keys the host never touches. Transactions placed last in
/// their sessions have no outgoing dependencies into the host.
pub fn inject(h: &History, kind: AnomalyKind, seed: u64) -> Result<History, WorkloadError> {
    let needed = kind.sessions_needed();
    let mut sessions: Vec<Session> = h.sessions().to_vec();
    if sessions.len() < needed {
        return Err(WorkloadError::UnsupportedShape {
            kind,
            needed,
            available: sessions.len(),
        });
    }
    let used: BTreeSet<&str> = h
        .transactions()
        .flat_map(|t| t.ops.iter().map(|o| o.key.as_str()))
        .collect();
    let keys: Vec<String> = ["x", "y"]
        .iter()
        .map(|k| {
            let mut name = format!("{}-{seed}-{k}", kind.name());
            while used.contains(name.as_str()) {
                name.push('\'');
            }
            name
        })
        .collect();

    let mut order: Vec<usize> = (0..sessions.len()).collect();
    order.sort_by_key(|&i| sessions[i].id);
    for t in template(kind) {
        let s = &mut sessions[order[t.slot]];
        let index = s.transactions.iter().map(|t| t.id.index + 1).max().unwrap_or(0);
        let id = TxnId::new(s.id, index);
        let ops = t
            .ops
            .iter()
            .map(|op| match *op {
                R(k, v) => Operation::read(keys[k].clone(), v),
                W(k, v) => Operation::write(keys[k].clone(), v),
            })
            .collect();
        s.transactions.push(if t.committed {
            Transaction::committed(id, ops)
        } else {
            Transaction::aborted(id, ops)
        });
    }
    History::new(sessions).map_err(|e| WorkloadError::Internal(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use si_sentinel_core::oracle::{oracle_check, OracleLimits};

    fn host(sessions: u64) -> History {
        History::new(
            (0..sessions)
                .map(|s| Session {
                    id: s,
                    transactions: vec![Transaction::committed(
                        TxnId::new(s, 0),
                        vec![Operation::write("k0", s as i64 + 1)],
                    )],
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn names_parse() {
        for k in AnomalyKind::ALL {
            assert_eq!(k.name().parse::<AnomalyKind>(), Ok(k));
        }
        assert_eq!(
            "causality-violation".parse::<AnomalyKind>(),
            Ok(AnomalyKind::CausalityViolation)
        );
    }

    #[test]
    fn too_few_sessions() {
        let err = inject(&host(2), AnomalyKind::LongFork, 0).unwrap_err();
        assert!(matches!(
            err,
            WorkloadError::UnsupportedShape { needed: 3, available: 2, .. }
        ));
        assert!(inject(&History::empty(), AnomalyKind::AbortedRead, 0).is_err());
    }

    #[test]
    fn templates_alone_violate_per_oracle() {
        for kind in AnomalyKind::ALL {
            let bare = History::new(
                (0..kind.sessions_needed() as u64)
                    .map(|id| Session {
                        id,
                        transactions: Vec::new(),
                    })
                    .collect(),
            )
            .unwrap();
            let h = inject(&bare, kind, 0).unwrap();
            let v = oracle_check(&h, &OracleLimits::default()).unwrap();
            assert!(!v.satisfies(), "{kind}");
        }
    }

    #[test]
    fn keys_avoid_host_keys() {
        let h = History::new(vec![Session {
            id: 0,
            transactions: vec![Transaction::committed(
                TxnId::new(0, 0),
                vec![Operation::write("aborted-read-0-x", 1)],
            )],
        }])
        .unwrap();
        let out = inject(&h, AnomalyKind::AbortedRead, 0).unwrap();
        let last = out.sessions()[0].transactions.last().unwrap();
        assert_eq!(last.ops[0].key, "aborted-read-0-x'");
    }

    #[test]
    fn appended_after_host() {
        let h = host(3);
        let out = inject(&h, AnomalyKind::LongFork, 9).unwrap();
        assert_eq!(out.transaction_count(), h.transaction_count() + 6);
        for (a, b) in h.sessions().iter().zip(out.sessions()) {
            assert_eq!(a.transactions[..], b.transactions[..a.transactions.len()]);
        }
    }
}
