//! Deterministic simulator of a multi-level, multi-layer peer-to-peer
//! overlay built from autonomous systems (ASs) with three information
//! centers each, together with the baseline topologies and unstructured
//! search algorithms it is compared against.

pub mod kernel;
pub mod ranking;
pub mod overlay;
pub mod topology;
pub mod search;
pub mod harness;
