//! Unstructured search over any graph: flooding with and without duplicate
//! suppression, and k-walker random walks, with per-query message and
//! disturbance accounting.
//!
//! A node answers a query when it hosts the file or when it indexes a peer
//! that does (see [`Graph::covers`]). Flooding is breadth-synchronous and
//! runs to the hop budget; a query with budget `t` is a prefix of the same
//! query with a larger budget, which lets one traversal serve a whole TTL
//! sweep. A random walk stops once `stop_after` results are found.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernel::{derive_seed, make_rng, sample_query_file, FileCatalog, FileIndex, PeerKey, SimRng};
use crate::topology::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    FloodRepeated,
    FloodUnrepeated,
    RandomWalk,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [
        Algorithm::FloodRepeated,
        Algorithm::FloodUnrepeated,
        Algorithm::RandomWalk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FloodRepeated => "flood_repeated",
            Algorithm::FloodUnrepeated => "flood_unrepeated",
            Algorithm::RandomWalk => "random_walk",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            format!("unknown algorithm {s:?} (expected flood_repeated, flood_unrepeated or random_walk)")
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchOptions {
    pub walks: usize,
    pub stop_after: usize,
    /// Walkers avoid stepping straight back unless stuck.
    pub no_backtrack: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            walks: 4,
            stop_after: 1,
            no_backtrack: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub source: PeerKey,
    pub target_file: FileIndex,
    pub ttl: u32,
    pub algorithm: Algorithm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub success: bool,
    pub hops_to_first_hit: Option<u32>,
    pub messages_sent: u64,
    /// Times each node processed the query.
    pub nodes_disturbed: BTreeMap<PeerKey, u64>,
    pub results_found: u64,
}

/// Which files every node can answer for, and which neighbors a node does
/// not need to forward to.
#[derive(Debug, Clone)]
pub struct SearchIndex {
    answers: Vec<Vec<FileIndex>>,
    /// Per node, sorted neighbors that are indexed by the node and have no
    /// other neighbor, so a message to them could only come back.
    pruned: Vec<Vec<PeerKey>>,
}

impl SearchIndex {
    pub fn new(g: &Graph, files_by_host: &[Vec<FileIndex>]) -> Self {
        let own = |k: PeerKey| files_by_host.get(k as usize).map(Vec::as_slice).unwrap_or(&[]);
        let mut answers = vec![Vec::new(); g.slots()];
        let mut pruned = vec![Vec::new(); g.slots()];
        for k in g.live_nodes() {
            let mut files = own(k).to_vec();
            for &c in g.covers(k) {
                files.extend_from_slice(own(c));
            }
            files.sort_unstable();
            files.dedup();
            answers[k as usize] = files;
            pruned[k as usize] = g
                .neighbors(k)
                .iter()
                .copied()
                .filter(|&v| g.degree(v) == 1 && g.covers(k).binary_search(&v).is_ok())
                .collect();
        }
        Self { answers, pruned }
    }

    pub fn answers(&self, k: PeerKey, file: FileIndex) -> bool {
        self.answers[k as usize].binary_search(&file).is_ok()
    }

    fn skip(&self, from: PeerKey, to: PeerKey) -> bool {
        self.pruned[from as usize].binary_search(&to).is_ok()
    }
}

/// Outcome of one query traced up to a hop budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub first_hit: Option<u32>,
    /// `messages[h]`: messages sent in hops `1..=h`, for `h` up to the
    /// budget. Entry 0 is always 0.
    pub messages: Vec<u64>,
    pub results: u64,
}

impl Trace {
    pub fn success(&self, ttl: u32) -> bool {
        self.first_hit.is_some_and(|h| h <= ttl)
    }

    pub fn messages_at(&self, ttl: u32) -> u64 {
        self.messages[(ttl as usize).min(self.messages.len() - 1)]
    }
}

/// Breadth-synchronous flood. Without repeats a node is sent the message
/// only once; with repeats every node that received it during a hop passes
/// it on to all neighbors except those it came from in that hop.
/// `disturb`, indexed by node key, collects receipts.
pub fn flood_trace(
    g: &Graph,
    idx: &SearchIndex,
    source: PeerKey,
    file: FileIndex,
    ttl: u32,
    repeated: bool,
    mut disturb: Option<&mut [u64]>,
) -> Trace {
    let mut trace = Trace {
        first_hit: None,
        messages: vec![0; ttl as usize + 1],
        results: 0,
    };
    if idx.answers(source, file) {
        trace.first_hit = Some(0);
        trace.results = 1;
    }
    let n = g.slots();
    let mut holding = vec![false; n];
    let mut answered = vec![false; n];
    holding[source as usize] = true;
    answered[source as usize] = trace.results > 0;
    // Senders of the hop a node last received in; only kept with repeats.
    let mut senders: Vec<Vec<PeerKey>> = if repeated { vec![Vec::new(); n] } else { Vec::new() };
    let mut next_senders = senders.clone();
    let mut arrived = vec![false; n];
    let mut frontier = vec![source];
    let mut next = Vec::new();
    let mut sent = 0u64;
    for hop in 1..=ttl {
        for &u in &frontier {
            for &v in g.neighbors(u) {
                if idx.skip(u, v) || (repeated && senders[u as usize].contains(&v)) {
                    continue;
                }
                if !repeated {
                    if holding[v as usize] {
                        continue;
                    }
                    holding[v as usize] = true;
                } else {
                    next_senders[v as usize].push(u);
                }
                sent += 1;
                if let Some(d) = disturb.as_deref_mut() {
                    d[v as usize] += 1;
                }
                if !arrived[v as usize] {
                    arrived[v as usize] = true;
                    next.push(v);
                }
            }
        }
        for &v in &next {
            arrived[v as usize] = false;
            if !answered[v as usize] && idx.answers(v, file) {
                answered[v as usize] = true;
                trace.results += 1;
                trace.first_hit.get_or_insert(hop);
            }
        }
        if repeated {
            for &u in &frontier {
                senders[u as usize].clear();
            }
            std::mem::swap(&mut senders, &mut next_senders);
        }
        trace.messages[hop as usize] = sent;
        std::mem::swap(&mut frontier, &mut next);
        next.clear();
        if frontier.is_empty() {
            for h in hop as usize + 1..=ttl as usize {
                trace.messages[h] = sent;
            }
            break;
        }
    }
    trace
}

/// Next node for a walker at a node with neighbors `nbrs`, having arrived
/// from `prev`.
pub fn step_choice(nbrs: &[PeerKey], prev: Option<PeerKey>, no_backtrack: bool, rng: &mut SimRng) -> PeerKey {
    match prev {
        Some(p) if no_backtrack && nbrs.len() > 1 => {
            let i = rng.gen_range(0..nbrs.len() - 1);
            if nbrs[i] == p {
                nbrs[nbrs.len() - 1]
            } else {
                nbrs[i]
            }
        }
        _ => *nbrs.choose(rng).expect("non-empty neighbor list"),
    }
}

/// `walks` walkers step in lockstep; each step of each walker is one
/// message and one disturbance.
pub fn walk_trace(
    g: &Graph,
    idx: &SearchIndex,
    source: PeerKey,
    file: FileIndex,
    ttl: u32,
    opts: &SearchOptions,
    rng: &mut SimRng,
    mut disturb: Option<&mut [u64]>,
) -> Trace {
    let mut trace = Trace {
        first_hit: None,
        messages: vec![0; ttl as usize + 1],
        results: 0,
    };
    if idx.answers(source, file) {
        trace.first_hit = Some(0);
        trace.results = 1;
    }
    let need = opts.stop_after.max(1) as u64;
    let mut walkers: Vec<(PeerKey, Option<PeerKey>)> = vec![(source, None); opts.walks.max(1)];
    let mut sent = 0u64;
    let mut done = trace.results >= need;
    for hop in 1..=ttl {
        if !done {
            for (at, prev) in walkers.iter_mut() {
                let all = g.neighbors(*at);
                let open: Vec<PeerKey> = all.iter().copied().filter(|&v| !idx.skip(*at, v)).collect();
                let choices = if open.is_empty() { all } else { &open[..] };
                if choices.is_empty() {
                    continue;
                }
                let next = step_choice(choices, *prev, opts.no_backtrack, rng);
                *prev = Some(*at);
                *at = next;
                sent += 1;
                if let Some(d) = disturb.as_deref_mut() {
                    d[next as usize] += 1;
                }
                if idx.answers(next, file) {
                    trace.results += 1;
                    trace.first_hit.get_or_insert(hop);
                    if trace.results >= need {
                        done = true;
                        break;
                    }
                }
            }
        }
        trace.messages[hop as usize] = sent;
    }
    trace
}

fn result_from(trace: Trace, ttl: u32, counts: Vec<u64>) -> SearchResult {
    let disturbed = counts
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .map(|(k, c)| (k as PeerKey, c))
        .collect();
    SearchResult {
        success: trace.success(ttl),
        hops_to_first_hit: trace.first_hit.filter(|&h| h <= ttl),
        messages_sent: trace.messages_at(ttl),
        nodes_disturbed: disturbed,
        results_found: trace.results,
    }
}

pub fn flood(g: &Graph, idx: &SearchIndex, req: &SearchRequest) -> SearchResult {
    let mut d = vec![0; g.slots()];
    let repeated = req.algorithm == Algorithm::FloodRepeated;
    let t = flood_trace(g, idx, req.source, req.target_file, req.ttl, repeated, Some(&mut d));
    result_from(t, req.ttl, d)
}

pub fn random_walk(g: &Graph, idx: &SearchIndex, req: &SearchRequest, opts: &SearchOptions, rng: &mut SimRng) -> SearchResult {
    let mut d = vec![0; g.slots()];
    let t = walk_trace(g, idx, req.source, req.target_file, req.ttl, opts, rng, Some(&mut d));
    result_from(t, req.ttl, d)
}

pub fn search(g: &Graph, idx: &SearchIndex, req: &SearchRequest, opts: &SearchOptions, rng: &mut SimRng) -> SearchResult {
    match req.algorithm {
        Algorithm::RandomWalk => random_walk(g, idx, req, opts, rng),
        _ => flood(g, idx, req),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub source: PeerKey,
    pub file: FileIndex,
}

/// Uniform random sources among `live`, Zipf-distributed files.
pub fn make_workload(live: &[PeerKey], catalog: &FileCatalog, n: usize, rng: &mut SimRng) -> Vec<Query> {
    (0..n)
        .map(|_| {
            let source = live[rng.gen_range(0..live.len())];
            Query {
                source,
                file: sample_query_file(catalog, rng),
            }
        })
        .collect()
}

/// Aggregates for one hop budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtlPoint {
    pub ttl: u32,
    pub queries: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub total_messages: u64,
    /// Messages per query, the system cost.
    pub mean_messages: f64,
    /// Mean hops to the first hit over successful queries.
    pub mean_hops: Option<f64>,
}

fn trace_one(
    g: &Graph,
    idx: &SearchIndex,
    q: &Query,
    i: usize,
    algorithm: Algorithm,
    ttl: u32,
    opts: &SearchOptions,
    seed: u64,
) -> Trace {
    match algorithm {
        Algorithm::FloodRepeated => flood_trace(g, idx, q.source, q.file, ttl, true, None),
        Algorithm::FloodUnrepeated => flood_trace(g, idx, q.source, q.file, ttl, false, None),
        Algorithm::RandomWalk => {
            let mut rng = make_rng(derive_seed(seed, &format!("walk/{i}")));
            walk_trace(g, idx, q.source, q.file, ttl, opts, &mut rng, None)
        }
    }
}

/// Runs every query once with the largest budget and reads off the
/// aggregates for each budget in `ttls`. Walk randomness is derived from
/// `seed` and the query position, so results do not depend on threading.
pub fn sweep(
    g: &Graph,
    idx: &SearchIndex,
    queries: &[Query],
    algorithm: Algorithm,
    ttls: &[u32],
    opts: &SearchOptions,
    seed: u64,
) -> Vec<TtlPoint> {
    let max_ttl = ttls.iter().copied().max().unwrap_or(0);
    let run = |(i, q): (usize, &Query)| trace_one(g, idx, q, i, algorithm, max_ttl, opts, seed);
    #[cfg(feature = "parallel")]
    let traces: Vec<Trace> = queries.par_iter().enumerate().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let traces: Vec<Trace> = queries.iter().enumerate().map(run).collect();
    ttls.iter()
        .map(|&ttl| {
            let mut successes = 0u64;
            let mut hops = 0u64;
            let mut messages = 0u64;
            for t in &traces {
                messages += t.messages_at(ttl);
                if t.success(ttl) {
                    successes += 1;
                    hops += u64::from(t.first_hit.unwrap());
                }
            }
            let n = traces.len().max(1) as f64;
            TtlPoint {
                ttl,
                queries: traces.len() as u64,
                successes,
                success_rate: successes as f64 / n,
                total_messages: messages,
                mean_messages: messages as f64 / n,
                mean_hops: (successes > 0).then(|| hops as f64 / successes as f64),
            }
        })
        .collect()
}

/// Receipts per node slot over a whole workload at one budget.
pub fn disturbance(
    g: &Graph,
    idx: &SearchIndex,
    queries: &[Query],
    algorithm: Algorithm,
    ttl: u32,
    opts: &SearchOptions,
    seed: u64,
) -> Vec<u64> {
    let mut total = vec![0u64; g.slots()];
    for (i, q) in queries.iter().enumerate() {
        match algorithm {
            Algorithm::RandomWalk => {
                let mut rng = make_rng(derive_seed(seed, &format!("walk/{i}")));
                walk_trace(g, idx, q.source, q.file, ttl, opts, &mut rng, Some(&mut total));
            }
            a => {
                flood_trace(g, idx, q.source, q.file, ttl, a == Algorithm::FloodRepeated, Some(&mut total));
            }
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSample {
    pub point: TtlPoint,
    pub disturbance: Vec<u64>,
}

/// `n_queries` random queries at a single budget.
pub fn batch_search(
    g: &Graph,
    idx: &SearchIndex,
    catalog: &FileCatalog,
    n_queries: usize,
    ttl: u32,
    algorithm: Algorithm,
    opts: &SearchOptions,
    rng: &mut SimRng,
) -> MetricsSample {
    let live: Vec<PeerKey> = g.live_nodes().collect();
    let queries = make_workload(&live, catalog, n_queries, rng);
    let seed = rng.gen();
    let point = sweep(g, idx, &queries, algorithm, &[ttl], opts, seed).remove(0);
    MetricsSample {
        point,
        disturbance: disturbance(g, idx, &queries, algorithm, ttl, opts, seed),
    }
}
