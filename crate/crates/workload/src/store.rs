//! In-memory multi-version store with snapshot reads, first-committer-wins
//! and strong session ordering.

use std::collections::{BTreeMap, HashMap};

use si_sentinel_core::history::{TxnId, INITIAL_VALUE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Version {
    pub value: i64,
    pub stamp: u64,
    pub writer: TxnId,
}

/// A transaction in flight. Writes are buffered until commit.
#[derive(Clone, Debug)]
pub struct TxnHandle {
    pub id: TxnId,
    pub snapshot: u64,
    writes: BTreeMap<String, i64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WriteConflict {
    pub stamp: u64,
    pub writer: TxnId,
}

#[derive(Debug, Default)]
pub struct MockStore {
    /// Versions per key in increasing stamp order.
    versions: HashMap<String, Vec<Version>>,
    clock: u64,
    session_last_commit: HashMap<u64, u64>,
}

impl MockStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stamp of the latest commit.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn last_commit(&self, session: u64) -> u64 {
        self.session_last_commit.get(&session).copied().unwrap_or(0)
    }

    /// Starts a transaction on the latest committed state. The snapshot is
    /// never older than the session's own last commit.
    pub fn begin(&self, id: TxnId) -> TxnHandle {
        let snapshot = self.clock;
        debug_assert!(snapshot >= self.last_commit(id.session));
        TxnHandle {
            id,
            snapshot,
            writes: BTreeMap::new(),
        }
    }

    /// Latest version of `key` with stamp at most `snapshot`.
    pub fn version_at(&self, key: &str, snapshot: u64) -> Option<&Version> {
        let list = self.versions.get(key)?;
        let n = list.partition_point(|v| v.stamp <= snapshot);
        n.checked_sub(1).map(|i| &list[i])
    }

    pub fn read(&self, txn: &TxnHandle, key: &str) -> i64 {
        if let Some(&v) = txn.writes.get(key) {
            return v;
        }
        self.version_at(key, txn.snapshot)
            .map_or(INITIAL_VALUE, |v| v.value)
    }

    pub fn write(&self, txn: &mut TxnHandle, key: &str, value: i64) {
        txn.writes.insert(key.to_owned(), value);
    }

    /// Installs the transaction's writes under a fresh stamp, or rejects it if
    /// another transaction committed a write to one of its keys after its
    /// snapshot.
    pub fn commit(&mut self, txn: TxnHandle) -> Result<u64, WriteConflict> {
        for key in txn.writes.keys() {
            if let Some(last) = self.versions.get(key).and_then(|l| l.last()) {
                if last.stamp > txn.snapshot {
                    return Err(WriteConflict {
                        stamp: last.stamp,
                        writer: last.writer,
                    });
                }
            }
        }
        self.clock += 1;
        let stamp = self.clock;
        for (key, value) in txn.writes {
            self.versions.entry(key).or_default().push(Version {
                value,
                stamp,
                writer: txn.id,
            });
        }
        self.session_last_commit.insert(txn.id.session, stamp);
        Ok(stamp)
    }
}
