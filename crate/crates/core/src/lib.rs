//! Black-box Snapshot Isolation checking over generalized polygraphs.

pub mod bits;
pub mod encoder;
pub mod history;
pub mod polygraph;
pub mod pruner;
pub mod solver;
pub mod oracle;
pub mod harness;
pub mod interpreter;
pub mod pipeline;
