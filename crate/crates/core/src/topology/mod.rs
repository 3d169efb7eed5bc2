//! Plain undirected graphs and the baseline topology generators.

pub mod graph;
pub mod rtpl;
pub mod sqrt;
pub mod supernode;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use graph::{degree_histogram, max_degree, DegreeEntry, EdgeListError, Graph};
pub use rtpl::{gen_rtpl, power_law_slope, rtpl_target};
pub use sqrt::{gen_squareroot, ideal_sqrt_degree, SqrtCounters, SqrtParams, SqrtWarmup};
pub use supernode::{gen_supernode, SupernodeLayout, SupernodeParams};

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("need at least {needed} nodes, got {got}")]
    TooFewNodes { needed: usize, got: usize },
    #[error("target degree {degree} cannot be met with {nodes} nodes")]
    InfeasibleDegree { degree: usize, nodes: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Mpo,
    Rtpl,
    Supernode,
    Squareroot,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 4] = [
        TopologyKind::Mpo,
        TopologyKind::Rtpl,
        TopologyKind::Supernode,
        TopologyKind::Squareroot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TopologyKind::Mpo => "mpo",
            TopologyKind::Rtpl => "rtpl",
            TopologyKind::Supernode => "supernode",
            TopologyKind::Squareroot => "squareroot",
        }
    }
}

impl std::fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TopologyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown topology {s:?} (expected mpo, rtpl, supernode or squareroot)"))
    }
}
