use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, TopologyError};
use crate::kernel::{PeerKey, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupernodeParams {
    pub min_cluster: usize,
    pub max_cluster: usize,
    /// Links each super-peer opens to other super-peers. Links are
    /// undirected, so the mean super-peer fan-out is about twice this.
    pub sp_links: usize,
}

impl Default for SupernodeParams {
    fn default() -> Self {
        Self {
            min_cluster: 5,
            max_cluster: 15,
            sp_links: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupernodeLayout {
    /// Members per cluster; the first is the super-peer, the next two its
    /// backups.
    pub clusters: Vec<Vec<PeerKey>>,
}

impl SupernodeLayout {
    pub fn super_peers(&self) -> impl Iterator<Item = PeerKey> + '_ {
        self.clusters.iter().map(|c| c[0])
    }
}

/// Cluster sizes drawn uniformly from the allowed range; the last cluster
/// takes the remainder, which always stays in range.
fn cluster_sizes(n: usize, p: &SupernodeParams, rng: &mut SimRng) -> Vec<usize> {
    let mut left = n;
    let mut out = Vec::new();
    while left > p.max_cluster {
        let hi = p.max_cluster.min(left - p.min_cluster);
        let s = rng.gen_range(p.min_cluster..=hi);
        out.push(s);
        left -= s;
    }
    out.push(left);
    out
}

/// Two-tier topology: clusters of one super-peer, two backups and leaves.
/// Leaves hang off their super-peer only; backups link to the super-peer
/// and to each other; super-peers link to random other super-peers.
pub fn gen_supernode(
    n: usize,
    params: &SupernodeParams,
    rng: &mut SimRng,
) -> Result<(Graph, SupernodeLayout), TopologyError> {
    if params.min_cluster < 3 || params.min_cluster > params.max_cluster || params.max_cluster < 2 * params.min_cluster - 1 {
        return Err(TopologyError::InvalidParameter(format!(
            "cluster size range [{}, {}]",
            params.min_cluster, params.max_cluster
        )));
    }
    if n < params.min_cluster {
        return Err(TopologyError::TooFewNodes {
            needed: params.min_cluster,
            got: n,
        });
    }
    let mut g = Graph::new(n);
    let mut clusters = Vec::new();
    let mut next = 0 as PeerKey;
    for size in cluster_sizes(n, params, rng) {
        let members: Vec<PeerKey> = (next..next + size as PeerKey).collect();
        next += size as PeerKey;
        let sp = members[0];
        for &m in &members[1..] {
            g.add_edge(sp, m);
        }
        g.add_edge(members[1], members[2]);
        clusters.push(members);
    }
    let sps: Vec<PeerKey> = clusters.iter().map(|c| c[0]).collect();
    let k = params.sp_links.min(sps.len().saturating_sub(1));
    for (i, &sp) in sps.iter().enumerate() {
        for j in index::sample(rng, sps.len() - 1, k) {
            let j = if j >= i { j + 1 } else { j };
            g.add_edge(sp, sps[j]);
        }
    }
    let is_sp: std::collections::BTreeSet<PeerKey> = sps.iter().copied().collect();
    g.repair_connectivity_via(rng, |k| is_sp.contains(&k));
    Ok((g, SupernodeLayout { clusters }))
}
