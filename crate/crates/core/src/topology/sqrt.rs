use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, TopologyError};
use crate::kernel::{sample_query_file, FileCatalog, FileIndex, PeerKey, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqrtParams {
    pub d_max: u32,
    pub d_min: u32,
    /// Starting degree of every node.
    pub d0: u32,
}

impl SqrtParams {
    /// Published settings per network size: `d_max` 40, 80, 100, 160 for 500,
    /// 1000, 1500, 2000 nodes, with `d_min = 3`, `d0 = 4`. Other sizes take the
    /// nearest listed size.
    pub fn for_size(n: usize) -> Self {
        let table = [(500usize, 40u32), (1000, 80), (1500, 100), (2000, 160)];
        let (_, d_max) = table
            .iter()
            .min_by_key(|(size, _)| size.abs_diff(n))
            .copied()
            .unwrap();
        Self { d_max, d_min: 3, d0: 4 }
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.d_min == 0 || self.d_min > self.d0 || self.d0 > self.d_max {
            return Err(TopologyError::InvalidParameter(format!(
                "need 0 < d_min <= d0 <= d_max, got {} / {} / {}",
                self.d_min, self.d0, self.d_max
            )));
        }
        Ok(())
    }
}

/// Degree a peer aims for: `round(d_max · √(Q_match / Q_total))`, never below
/// `d_min`; `d0` while the peer has seen no query.
pub fn ideal_sqrt_degree(q_match: u64, q_total: u64, p: &SqrtParams) -> u32 {
    if q_total == 0 {
        return p.d0;
    }
    let g = q_match as f64 / q_total as f64;
    let ideal = (f64::from(p.d_max) * g.sqrt()).round() as u32;
    ideal.clamp(p.d_min, p.d_max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqrtWarmup {
    pub queries: usize,
    /// Queries between two degree recomputations.
    pub batch: usize,
    pub walks: usize,
    pub ttl: u32,
}

impl Default for SqrtWarmup {
    fn default() -> Self {
        Self {
            queries: 10_000,
            batch: 100,
            walks: 4,
            ttl: 64,
        }
    }
}

/// Per-node query counters collected while the topology adapts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SqrtCounters {
    pub q_total: Vec<u64>,
    pub q_match: Vec<u64>,
    /// `Σ |d_k − ideal_k|` after each recomputation round.
    pub deviation: Vec<u64>,
}

/// Adaptive topology whose degrees track `√g_k`, the share of queries a
/// node's content matches. Starts from a random graph of degree `d0`. During
/// warmup, random-walk queries count visits (`Q_total`) and matches
/// (`Q_match`) at every node they pass; after each batch every node moves
/// its degree toward its ideal, preferring partners that want to move the
/// same way so the total distance to the ideals never grows.
pub fn gen_squareroot(
    n: usize,
    params: &SqrtParams,
    warmup: &SqrtWarmup,
    catalog: &FileCatalog,
    files_by_host: &[Vec<FileIndex>],
    rng: &mut SimRng,
) -> Result<(Graph, SqrtCounters), TopologyError> {
    params.validate()?;
    if n <= params.d0 as usize {
        return Err(TopologyError::TooFewNodes {
            needed: params.d0 as usize + 1,
            got: n,
        });
    }
    let mut g = initial_graph(n, params.d0 as usize, rng);
    let mut c = SqrtCounters {
        q_total: vec![0; n],
        q_match: vec![0; n],
        deviation: Vec::new(),
    };
    let batch = warmup.batch.max(1);
    let mut done = 0;
    while done < warmup.queries {
        let this = batch.min(warmup.queries - done);
        for _ in 0..this {
            let file = sample_query_file(catalog, rng);
            let source = rng.gen_range(0..n) as PeerKey;
            walk_and_count(&g, source, file, warmup, files_by_host, &mut c, rng);
        }
        done += this;
        adapt(&mut g, params, &c, rng);
        c.deviation.push(total_deviation(&g, params, &c));
    }
    g.repair_connectivity(rng);
    Ok((g, c))
}

fn initial_graph(n: usize, d0: usize, rng: &mut SimRng) -> Graph {
    let mut g = Graph::new(n);
    let mut stubs: Vec<PeerKey> = (0..n as PeerKey).flat_map(|k| std::iter::repeat(k).take(d0)).collect();
    for _ in 0..8 {
        stubs.shuffle(rng);
        let mut left = Vec::new();
        for pair in stubs.chunks(2) {
            if pair.len() < 2 || !g.add_edge(pair[0], pair[1]) {
                left.extend_from_slice(pair);
            }
        }
        stubs = left;
        if stubs.len() < 2 {
            break;
        }
    }
    g.repair_connectivity(rng);
    g
}

fn walk_and_count(
    g: &Graph,
    source: PeerKey,
    file: FileIndex,
    w: &SqrtWarmup,
    files: &[Vec<FileIndex>],
    c: &mut SqrtCounters,
    rng: &mut SimRng,
) {
    let hosts = |k: PeerKey| files[k as usize].binary_search(&file).is_ok();
    let visit = |k: PeerKey, c: &mut SqrtCounters| {
        c.q_total[k as usize] += 1;
        if hosts(k) {
            c.q_match[k as usize] += 1;
            true
        } else {
            false
        }
    };
    if visit(source, c) {
        return;
    }
    let mut walkers: Vec<(PeerKey, Option<PeerKey>)> = vec![(source, None); w.walks.max(1)];
    for _ in 0..w.ttl {
        let mut found = false;
        for (at, prev) in walkers.iter_mut() {
            let nbrs = g.neighbors(*at);
            if nbrs.is_empty() {
                continue;
            }
            let next = super::super::search::step_choice(nbrs, *prev, true, rng);
            *prev = Some(*at);
            *at = next;
            found |= visit(next, c);
        }
        if found {
            return;
        }
    }
}

fn ideal(k: PeerKey, p: &SqrtParams, c: &SqrtCounters) -> usize {
    ideal_sqrt_degree(c.q_match[k as usize], c.q_total[k as usize], p) as usize
}

fn total_deviation(g: &Graph, p: &SqrtParams, c: &SqrtCounters) -> u64 {
    g.live_nodes()
        .map(|k| g.degree(k).abs_diff(ideal(k, p, c)) as u64)
        .sum()
}

/// One recomputation round. Additions pair a node below its ideal with a
/// partner below its own ideal when one exists, otherwise with any partner
/// under `d_max`; removals mirror this. Either way the total deviation from
/// the ideals does not grow.
fn adapt(g: &mut Graph, p: &SqrtParams, c: &SqrtCounters, rng: &mut SimRng) {
    let n = g.slots();
    let ideals: Vec<usize> = (0..n as PeerKey).map(|k| ideal(k, p, c)).collect();
    let mut order: Vec<PeerKey> = (0..n as PeerKey).collect();
    order.shuffle(rng);
    let (d_min, d_max) = (p.d_min as usize, p.d_max as usize);
    for &k in &order {
        let want = ideals[k as usize];
        while g.degree(k) < want {
            let open = |o: PeerKey| o != k && !g.has_edge(k, o) && g.degree(o) < d_max;
            let mut pool: Vec<PeerKey> = (0..n as PeerKey)
                .filter(|&o| open(o) && g.degree(o) < ideals[o as usize])
                .collect();
            if pool.is_empty() {
                pool = (0..n as PeerKey).filter(|&o| open(o)).collect();
            }
            let Some(&o) = pool.choose(rng) else { break };
            g.add_edge(k, o);
        }
        while g.degree(k) > want {
            let nbrs = g.neighbors(k).to_vec();
            let mut pool: Vec<PeerKey> = nbrs
                .iter()
                .copied()
                .filter(|&o| g.degree(o) > ideals[o as usize])
                .collect();
            if pool.is_empty() {
                pool = nbrs.into_iter().filter(|&o| g.degree(o) > d_min).collect();
            }
            let Some(&o) = pool.choose(rng) else { break };
            g.remove_edge(k, o);
        }
    }
}
