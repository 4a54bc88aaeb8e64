//! Transactional histories: the data model, the canonical JSON format, and
//! the non-cycle completeness checks (internal consistency, aborted reads,
//! intermediate reads).
//!
//! Every key implicitly starts at the reserved value `0`, written by a
//! virtual initial transaction. Writes of `0` are rejected so that a read of
//! `0` always refers to the initial state.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Value every key holds before any transaction writes it.
pub const INITIAL_VALUE: i64 = 0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HistoryError {
    #[error("malformed history: {0}")]
    Format(String),
    #[error("value {value} is written to key {key:?} twice ({first} and {second})")]
    UniqueValue {
        key: String,
        value: i64,
        first: TxnId,
        second: TxnId,
    },
    #[error("{txn} writes the reserved initial value 0 to key {key:?}")]
    ReservedValue { txn: TxnId, key: String },
    #[error("{txn} op #{op_index} reads {key:?} = {value}, which no transaction wrote")]
    DanglingRead {
        txn: TxnId,
        op_index: usize,
        key: String,
        value: i64,
    },
}

/// Identifies a transaction as `(session id, index within session)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TxnId {
    pub session: u64,
    pub index: u64,
}

impl TxnId {
    pub const fn new(session: u64, index: u64) -> Self {
        Self { session, index }
    }
}

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T({},{})", self.session, self.index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpKind {
    #[serde(rename = "r")]
    Read,
    #[serde(rename = "w")]
    Write,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Operation {
    #[serde(rename = "t")]
    pub kind: OpKind,
    #[serde(rename = "k")]
    pub key: String,
    #[serde(rename = "v")]
    pub value: i64,
}

impl Operation {
    pub fn read(key: impl Into<String>, value: i64) -> Self {
        Self {
            kind: OpKind::Read,
            key: key.into(),
            value,
        }
    }

    pub fn write(key: impl Into<String>, value: i64) -> Self {
        Self {
            kind: OpKind::Write,
            key: key.into(),
            value,
        }
    }

    pub fn is_read(&self) -> bool {
        self.kind == OpKind::Read
    }

    pub fn is_write(&self) -> bool {
        self.kind == OpKind::Write
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxnStatus {
    Committed,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub id: TxnId,
    pub status: TxnStatus,
    /// Operations in program order.
    pub ops: Vec<Operation>,
}

impl Transaction {
    pub fn committed(id: TxnId, ops: Vec<Operation>) -> Self {
        Self {
            id,
            status: TxnStatus::Committed,
            ops,
        }
    }

    pub fn aborted(id: TxnId, ops: Vec<Operation>) -> Self {
        Self {
            id,
            status: TxnStatus::Aborted,
            ops,
        }
    }

    pub fn is_committed(&self) -> bool {
        self.status == TxnStatus::Committed
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session {
    pub id: u64,
    /// Transactions in session order.
    pub transactions: Vec<Transaction>,
}

/// A validated history. Construct with [`History::new`] or [`parse_history`].
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct History {
    sessions: Vec<Session>,
}

impl History {
    /// Validates structure and the unique-value invariant.
    pub fn new(sessions: Vec<Session>) -> Result<Self, HistoryError> {
        let mut session_ids = HashSet::new();
        let mut written: HashMap<(&str, i64), TxnId> = HashMap::new();
        for session in &sessions {
            if !session_ids.insert(session.id) {
                return Err(HistoryError::Format(format!(
                    "duplicate session id {}",
                    session.id
                )));
            }
            let mut indices = HashSet::new();
            for txn in &session.transactions {
                if txn.id.session != session.id {
                    return Err(HistoryError::Format(format!(
                        "{} listed under session {}",
                        txn.id, session.id
                    )));
                }
                if !indices.insert(txn.id.index) {
                    return Err(HistoryError::Format(format!("duplicate transaction {}", txn.id)));
                }
                if txn.ops.is_empty() {
                    return Err(HistoryError::Format(format!("{} has no operations", txn.id)));
                }
                for op in txn.ops.iter().filter(|op| op.is_write()) {
                    if op.value == INITIAL_VALUE {
                        return Err(HistoryError::ReservedValue {
                            txn: txn.id,
                            key: op.key.clone(),
                        });
                    }
                    if let Some(first) = written.insert((op.key.as_str(), op.value), txn.id) {
                        return Err(HistoryError::UniqueValue {
                            key: op.key.clone(),
                            value: op.value,
                            first,
                            second: txn.id,
                        });
                    }
                }
            }
        }
        Ok(Self { sessions })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn sessions(&self) -> &[Session] {
        &self.sessions
    }

    pub fn into_sessions(self) -> Vec<Session> {
        self.sessions
    }

    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.sessions.iter().flat_map(|s| s.transactions.iter())
    }

    pub fn committed(&self) -> impl Iterator<Item = &Transaction> {
        self.transactions().filter(|t| t.is_committed())
    }

    pub fn transaction_count(&self) -> usize {
        self.sessions.iter().map(|s| s.transactions.len()).sum()
    }

    pub fn operation_count(&self) -> usize {
        self.transactions().map(|t| t.ops.len()).sum()
    }

    pub fn transaction(&self, id: TxnId) -> Option<&Transaction> {
        self.sessions
            .iter()
            .find(|s| s.id == id.session)?
            .transactions
            .iter()
            .find(|t| t.id == id)
    }

    /// Serializes to the canonical JSON format (compact, deterministic).
    pub fn to_json(&self) -> String {
        serde_json::to_string(&RawHistory::from(self)).expect("history serialization is infallible")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&RawHistory::from(self))
            .expect("history serialization is infallible")
    }
}

/// Parses the canonical JSON history format.
pub fn parse_history(bytes: &[u8]) -> Result<History, HistoryError> {
    let raw: RawHistory =
        serde_json::from_slice(bytes).map_err(|e| HistoryError::Format(e.to_string()))?;
    let sessions = raw
        .sessions
        .into_iter()
        .map(|s| Session {
            id: s.id,
            transactions: s
                .transactions
                .into_iter()
                .map(|t| Transaction {
                    id: TxnId::new(s.id, t.index),
                    status: t.status,
                    ops: t.ops,
                })
                .collect(),
        })
        .collect();
    History::new(sessions)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHistory {
    sessions: Vec<RawSession>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSession {
    id: u64,
    transactions: Vec<RawTransaction>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransaction {
    index: u64,
    status: TxnStatus,
    ops: Vec<Operation>,
}

impl From<&History> for RawHistory {
    fn from(h: &History) -> Self {
        RawHistory {
            sessions: h
                .sessions
                .iter()
                .map(|s| RawSession {
                    id: s.id,
                    transactions: s
                        .transactions
                        .iter()
                        .map(|t| RawTransaction {
                            index: t.id.index,
                            status: t.status,
                            ops: t.ops.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Where a written value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WriteSite {
    pub txn: TxnId,
    pub op_index: usize,
    pub status: TxnStatus,
    /// Whether this is the writer's last write to the key.
    pub is_final: bool,
}

/// Maps every `(key, value)` write to the transaction that performed it.
#[derive(Debug, Default)]
pub struct WriteIndex {
    sites: HashMap<(String, i64), WriteSite>,
}

impl WriteIndex {
    pub fn build(h: &History) -> Self {
        let mut sites = HashMap::new();
        for txn in h.transactions() {
            let mut last_write: HashMap<&str, usize> = HashMap::new();
            for (i, op) in txn.ops.iter().enumerate() {
                if op.is_write() {
                    last_write.insert(op.key.as_str(), i);
                }
            }
            for (i, op) in txn.ops.iter().enumerate() {
                if op.is_write() {
                    sites.insert(
                        (op.key.clone(), op.value),
                        WriteSite {
                            txn: txn.id,
                            op_index: i,
                            status: txn.status,
                            is_final: last_write[op.key.as_str()] == i,
                        },
                    );
                }
            }
        }
        Self { sites }
    }

    pub fn lookup(&self, key: &str, value: i64) -> Option<&WriteSite> {
        self.sites.get(&(key.to_owned(), value))
    }
}

/// One flagged read: the reading transaction, the read's position, and the
/// transaction whose write it observed (when known).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ReadIssue {
    pub txn: TxnId,
    pub op_index: usize,
    pub writer: Option<TxnId>,
}

/// Result of the completeness gate. A history passes iff every list is empty.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CompletenessReport {
    pub int_violations: Vec<ReadIssue>,
    pub aborted_reads: Vec<ReadIssue>,
    pub intermediate_reads: Vec<ReadIssue>,
    /// Reads that return a value their own transaction writes only later.
    /// No write-read edge can explain them.
    pub future_reads: Vec<ReadIssue>,
}

impl CompletenessReport {
    pub fn passes(&self) -> bool {
        self.int_violations.is_empty()
            && self.aborted_reads.is_empty()
            && self.intermediate_reads.is_empty()
            && self.future_reads.is_empty()
    }

    fn merge(mut self, other: CompletenessReport) -> Self {
        self.int_violations.extend(other.int_violations);
        self.aborted_reads.extend(other.aborted_reads);
        self.intermediate_reads.extend(other.intermediate_reads);
        self.future_reads.extend(other.future_reads);
        self
    }
}

/// Flags every committed read that disagrees with the latest preceding read
/// or write of the same key in its own transaction.
pub fn check_internal_consistency(h: &History) -> CompletenessReport {
    let index = WriteIndex::build(h);
    let mut report = CompletenessReport::default();
    for txn in h.committed() {
        let mut last: HashMap<&str, i64> = HashMap::new();
        for (i, op) in txn.ops.iter().enumerate() {
            if op.is_read() {
                if let Some(&expected) = last.get(op.key.as_str()) {
                    if expected != op.value {
                        report.int_violations.push(ReadIssue {
                            txn: txn.id,
                            op_index: i,
                            writer: index.lookup(&op.key, op.value).map(|s| s.txn),
                        });
                    }
                }
            }
            last.insert(op.key.as_str(), op.value);
        }
    }
    report
}

/// Flags committed reads of aborted or non-final writes of other
/// transactions, and reads that observe the reader's own future write.
pub fn check_aborted_and_intermediate_reads(
    h: &History,
) -> Result<CompletenessReport, HistoryError> {
    let index = WriteIndex::build(h);
    let mut report = CompletenessReport::default();
    for txn in h.committed() {
        let mut touched: HashSet<&str> = HashSet::new();
        for (i, op) in txn.ops.iter().enumerate() {
            let first_access = touched.insert(op.key.as_str());
            if !op.is_read() || op.value == INITIAL_VALUE {
                continue;
            }
            let Some(site) = index.lookup(&op.key, op.value) else {
                return Err(HistoryError::DanglingRead {
                    txn: txn.id,
                    op_index: i,
                    key: op.key.clone(),
                    value: op.value,
                });
            };
            let issue = ReadIssue {
                txn: txn.id,
                op_index: i,
                writer: Some(site.txn),
            };
            if site.txn == txn.id {
                if first_access && site.op_index > i {
                    report.future_reads.push(issue);
                }
            } else if site.status == TxnStatus::Aborted {
                report.aborted_reads.push(issue);
            } else if !site.is_final {
                report.intermediate_reads.push(issue);
            }
        }
    }
    Ok(report)
}

/// Runs the full completeness gate.
pub fn check_completeness(h: &History) -> Result<CompletenessReport, HistoryError> {
    let rest = check_aborted_and_intermediate_reads(h)?;
    Ok(check_internal_consistency(h).merge(rest))
}

/// The externally visible reads and writes of one transaction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EffectiveOps {
    /// Keys read before being written, with the first read's value.
    pub reads: BTreeMap<String, i64>,
    /// Keys written, with the last written value.
    pub writes: BTreeMap<String, i64>,
}

pub fn effective_reads_writes(t: &Transaction) -> EffectiveOps {
    let mut eff = EffectiveOps::default();
    for op in &t.ops {
        match op.kind {
            OpKind::Read => {
                if !eff.writes.contains_key(&op.key) && !eff.reads.contains_key(&op.key) {
                    eff.reads.insert(op.key.clone(), op.value);
                }
            }
            OpKind::Write => {
                eff.writes.insert(op.key.clone(), op.value);
            }
        }
    }
    eff
}
