//! Deterministic workload generation against a simulated MVCC store, and
//! injection of known anomaly patterns into generated histories.

mod generate;
mod inject;
mod params;
pub mod store;

pub use generate::{generate, key_name};
pub use inject::{inject, AnomalyKind};
pub use params::{
    KeyDist, Profile, WorkloadParams, HOTSPOT_KEYS_PCT, HOTSPOT_OPS_PCT, ZIPF_EXPONENT,
};
pub use store::MockStore;

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("invalid workload parameters: {0}")]
    InvalidParams(String),
    #[error("{kind} needs {needed} sessions, history has {available}")]
    UnsupportedShape {
        kind: AnomalyKind,
        needed: usize,
        available: usize,
    },
    #[error("generated history is invalid: {0}")]
    Internal(String),
}
