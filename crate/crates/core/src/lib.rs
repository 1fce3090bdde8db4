//! Interference-alignment precoder and filter design by min-sum message
//! passing over a factor graph, with the iterative leakage minimization
//! baseline, leakage metrics, traffic accounting and an experiment harness.

pub mod baselines;
pub mod distsim;
pub mod error;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod messages;
pub mod metrics;
pub mod schedule;

pub use error::{Error, Result};
pub use graph::{build_graph, ChannelSet, Connectivity, FactorGraph, NodeId, NodeKind};
pub use linalg::{nu_min, seeded_stream, CMat, HermitianPsd, SimRng, TruncatedUnitary};
pub use metrics::{check_feasibility, ia_residual, leakage, total_leakage, LeakageReport};
pub use schedule::{run, InitMode, MessageFamily, MessagePassing, RunConfig, Schedule};
