use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use si_sentinel_core::history::{History, Operation, Session, Transaction, TxnId};

use crate::params::{KeySampler, Profile, WorkloadParams};
use crate::store::{MockStore, TxnHandle};
use crate::WorkloadError;

#[derive(Clone, Copy, Debug)]
enum Step {
    Read(usize),
    Write(usize),
}

struct Running {
    handle: TxnHandle,
    plan: Vec<Step>,
    done: Vec<Operation>,
}

struct SessionState {
    id: u64,
    remaining: usize,
    next_value: u64,
    current: Option<Running>,
    finished: Vec<Transaction>,
}

pub fn key_name(k: usize) -> String {
    format!("k{k}")
}

fn plan(params: &WorkloadParams, sampler: &KeySampler, rng: &mut ChaCha8Rng) -> Vec<Step> {
    let n = if rng.random_range(0..100) < params.long_txn_pct {
        params.long_ops_per_txn
    } else {
        params.ops_per_txn
    };
    if params.profile == Profile::Rmw {
        return (0..(n / 2).max(1))
            .flat_map(|_| {
                let k = sampler.sample(rng);
                [Step::Read(k), Step::Write(k)]
            })
            .collect();
    }
    let read_pct = params.effective_read_pct();
    (0..n)
        .map(|_| {
            let k = sampler.sample(rng);
            if rng.random_range(0..100) < read_pct {
                Step::Read(k)
            } else {
                Step::Write(k)
            }
        })
        .collect()
}

/// Runs the workload against a [`MockStore`] and records the resulting
/// history. At every step a seeded choice picks one session with work left,
/// which executes one operation; the final operation of a transaction
/// commits it. Transactions rejected at commit are kept as aborted.
pub fn generate(params: &WorkloadParams) -> Result<History, WorkloadError> {
    params.validate().map_err(WorkloadError::InvalidParams)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let sampler = KeySampler::new(params.dist, params.keys);
    let mut store = MockStore::new();
    let mut sessions: Vec<SessionState> = (0..params.sessions as u64)
        .map(|id| SessionState {
            id,
            remaining: params.txns_per_session,
            next_value: 1,
            current: None,
            finished: Vec::with_capacity(params.txns_per_session),
        })
        .collect();
    let mut active: Vec<usize> = (0..sessions.len())
        .filter(|&s| sessions[s].remaining > 0)
        .collect();

    while !active.is_empty() {
        let slot = rng.random_range(0..active.len());
        let s = &mut sessions[active[slot]];
        if s.current.is_none() {
            let id = TxnId::new(s.id, (params.txns_per_session - s.remaining) as u64);
            s.current = Some(Running {
                handle: store.begin(id),
                plan: plan(params, &sampler, &mut rng),
                done: Vec::new(),
            });
        }
        let run = s.current.as_mut().expect("running transaction");
        let op = match run.plan[run.done.len()] {
            Step::Read(k) => {
                let key = key_name(k);
                let value = store.read(&run.handle, &key);
                Operation::read(key, value)
            }
            Step::Write(k) => {
                let key = key_name(k);
                let value = ((s.id << 32) | s.next_value) as i64;
                s.next_value += 1;
                store.write(&mut run.handle, &key, value);
                Operation::write(key, value)
            }
        };
        run.done.push(op);
        if run.done.len() < run.plan.len() {
            continue;
        }
        let run = s.current.take().expect("running transaction");
        let id = run.handle.id;
        let txn = match store.commit(run.handle) {
            Ok(_) => Transaction::committed(id, run.done),
            Err(_) => Transaction::aborted(id, run.done),
        };
        s.finished.push(txn);
        s.remaining -= 1;
        if s.remaining == 0 {
            active.swap_remove(slot);
            active.sort_unstable();
        }
    }

    let sessions = sessions
        .into_iter()
        .map(|s| Session {
            id: s.id,
            transactions: s.finished,
        })
        .collect();
    History::new(sessions).map_err(|e| WorkloadError::Internal(e.to_string()))
}
