//! Discrete-event simulation of a network of MAC engines over a shared
//! broadcast medium.
//!
//! The event loop is single-threaded. Runs are a pure function of the
//! scenario and its seed; [`sweep`] spreads independent runs over threads.
//!
//! Random streams are derived from the scenario seed with ChaCha8 stream
//! splitting: stream 0 drives the harness (event tie-breaks), stream
//! `(i << 8) | 1` drives the MAC of node `i` and stream `(i << 8) | 2` its
//! reception draws. Adding a node leaves every other node's draws unchanged.

mod metrics;
mod queue;
mod runner;
mod scenario;
mod sweep;
mod trace;

use thiserror::Error;

pub use metrics::{MetricRow, MetricsReport, NetworkMetrics, ReceiverMetrics, SessionMetrics, Utilization};
pub use queue::{EventQueue, TieBreak};
pub use runner::{node_rng, run, run_with, RunOptions, RunOutput, HARNESS_STREAM};
pub use scenario::{Destination, NodeSpec, PttAction, Scenario, ScenarioError, SleepAction, SCHEMA_VERSION};
pub use sweep::{sweep, MetricSummary, SweepReport};
pub use trace::{read_jsonl, write_jsonl, TraceRecord};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("protocol violation at {time_us} us by node {node}: {detail}")]
    ProtocolViolation { time_us: u64, node: usize, detail: String },
    #[error("frame of node {node} at {time_us} us cannot be encoded: {source}")]
    Encode { time_us: u64, node: usize, source: crate::codec::CodecError },
}
