use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{PeerKey, SimRng};

#[derive(Debug, Error, PartialEq)]
pub enum EdgeListError {
    #[error("line {line}: expected two integer ids, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: self-loop on node {node}")]
    SelfLoop { line: usize, node: u32 },
}

/// Simple undirected graph over peer keys `0..n`. Removed peers stay as
/// dead slots so keys keep their meaning across churn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    alive: Vec<bool>,
    adj: Vec<Vec<PeerKey>>,
    /// Peers whose content a node can answer for besides its own.
    covers: Vec<Vec<PeerKey>>,
    repair_edges: usize,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Self {
            alive: vec![true; n],
            adj: vec![Vec::new(); n],
            covers: vec![Vec::new(); n],
            repair_edges: 0,
        }
    }

    /// A graph over `n` key slots where only `live` keys exist.
    pub fn with_live(n: usize, live: impl IntoIterator<Item = PeerKey>) -> Self {
        let mut g = Self::new(n);
        g.alive.iter_mut().for_each(|a| *a = false);
        for k in live {
            g.alive[k as usize] = true;
        }
        g
    }

    pub fn slots(&self) -> usize {
        self.adj.len()
    }

    pub fn is_alive(&self, k: PeerKey) -> bool {
        self.alive.get(k as usize).copied().unwrap_or(false)
    }

    pub fn live_nodes(&self) -> impl Iterator<Item = PeerKey> + '_ {
        (0..self.adj.len() as PeerKey).filter(|&k| self.alive[k as usize])
    }

    pub fn live_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn neighbors(&self, k: PeerKey) -> &[PeerKey] {
        &self.adj[k as usize]
    }

    pub fn degree(&self, k: PeerKey) -> usize {
        self.adj[k as usize].len()
    }

    pub fn has_edge(&self, a: PeerKey, b: PeerKey) -> bool {
        self.adj[a as usize].binary_search(&b).is_ok()
    }

    /// Adds `a–b`; returns false for self-loops, duplicates and dead ends.
    pub fn add_edge(&mut self, a: PeerKey, b: PeerKey) -> bool {
        if a == b || !self.is_alive(a) || !self.is_alive(b) {
            return false;
        }
        match self.adj[a as usize].binary_search(&b) {
            Ok(_) => false,
            Err(pos) => {
                self.adj[a as usize].insert(pos, b);
                let pos_b = self.adj[b as usize].binary_search(&a).unwrap_err();
                self.adj[b as usize].insert(pos_b, a);
                true
            }
        }
    }

    pub fn remove_edge(&mut self, a: PeerKey, b: PeerKey) -> bool {
        match self.adj[a as usize].binary_search(&b) {
            Ok(pos) => {
                self.adj[a as usize].remove(pos);
                let pos_b = self.adj[b as usize].binary_search(&a).unwrap();
                self.adj[b as usize].remove(pos_b);
                true
            }
            Err(_) => false,
        }
    }

    /// Deletes a peer and all its edges.
    pub fn remove_node(&mut self, k: PeerKey) {
        let nbrs = std::mem::take(&mut self.adj[k as usize]);
        for n in nbrs {
            let pos = self.adj[n as usize].binary_search(&k).unwrap();
            self.adj[n as usize].remove(pos);
        }
        self.alive[k as usize] = false;
        self.covers[k as usize].clear();
        for c in &mut self.covers {
            c.retain(|&x| x != k);
        }
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges with `a < b`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (PeerKey, PeerKey)> + '_ {
        self.adj.iter().enumerate().flat_map(|(a, ns)| {
            ns.iter()
                .filter(move |&&b| (a as PeerKey) < b)
                .map(move |&b| (a as PeerKey, b))
        })
    }

    pub fn covers(&self, k: PeerKey) -> &[PeerKey] {
        &self.covers[k as usize]
    }

    pub fn set_covers(&mut self, k: PeerKey, mut covered: Vec<PeerKey>) {
        covered.retain(|&c| c != k);
        covered.sort_unstable();
        covered.dedup();
        self.covers[k as usize] = covered;
    }

    pub fn repair_edges(&self) -> usize {
        self.repair_edges
    }

    /// Connected components over live peers, each sorted, ordered by their
    /// smallest member.
    pub fn components(&self) -> Vec<Vec<PeerKey>> {
        let mut seen = vec![false; self.adj.len()];
        let mut out = Vec::new();
        for start in self.live_nodes() {
            if seen[start as usize] {
                continue;
            }
            let mut comp = vec![start];
            seen[start as usize] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &self.adj[u as usize] {
                    if !seen[v as usize] {
                        seen[v as usize] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Joins every component to the largest one with a single edge between
    /// random members. Returns the number of edges added.
    pub fn repair_connectivity(&mut self, rng: &mut SimRng) -> usize {
        self.repair_connectivity_via(rng, |_| true)
    }

    /// Like [`Graph::repair_connectivity`], with bridge endpoints drawn only
    /// from peers accepted by `eligible` (falling back to any member of a
    /// component that has none).
    pub fn repair_connectivity_via(&mut self, rng: &mut SimRng, eligible: impl Fn(PeerKey) -> bool) -> usize {
        let mut comps = self.components();
        if comps.len() <= 1 {
            return 0;
        }
        let main_idx = (0..comps.len())
            .max_by(|&a, &b| comps[a].len().cmp(&comps[b].len()).then(b.cmp(&a)))
            .unwrap();
        let main = comps.swap_remove(main_idx);
        let mut added = 0;
        let pick = |c: &[PeerKey], rng: &mut SimRng| {
            let ok: Vec<PeerKey> = c.iter().copied().filter(|&k| eligible(k)).collect();
            let pool = if ok.is_empty() { c } else { &ok[..] };
            pool[rng.gen_range(0..pool.len())]
        };
        for comp in comps {
            let a = pick(&comp, rng);
            let b = pick(&main, rng);
            if self.add_edge(a, b) {
                added += 1;
            }
        }
        self.repair_edges += added;
        added
    }

    /// One edge per line as two integer ids, preceded by a `# nodes N`
    /// header so isolated peers survive a round trip.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# nodes {}", self.adj.len());
        for (a, b) in self.edges() {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self, EdgeListError> {
        let mut declared = 0usize;
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(n) = rest.trim().strip_prefix("nodes") {
                    declared = n.trim().parse().unwrap_or(0);
                }
                continue;
            }
            let malformed = || EdgeListError::Malformed {
                line: i + 1,
                text: raw.to_string(),
            };
            let mut it = line.split_whitespace();
            let a: u32 = it.next().and_then(|s| s.parse().ok()).ok_or_else(malformed)?;
            let b: u32 = it.next().and_then(|s| s.parse().ok()).ok_or_else(malformed)?;
            if it.next().is_some() {
                return Err(malformed());
            }
            if a == b {
                return Err(EdgeListError::SelfLoop { line: i + 1, node: a });
            }
            edges.push((a, b));
        }
        let n = edges
            .iter()
            .map(|&(a, b)| a.max(b) as usize + 1)
            .max()
            .unwrap_or(0)
            .max(declared);
        let mut g = Graph::new(n);
        for (a, b) in edges {
            g.add_edge(a, b);
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeEntry {
    pub node: PeerKey,
    pub degree: usize,
}

/// Live peers with their degrees, highest degree first (ties by key).
pub fn degree_histogram(g: &Graph) -> Vec<DegreeEntry> {
    let mut out: Vec<DegreeEntry> = g
        .live_nodes()
        .map(|node| DegreeEntry {
            node,
            degree: g.degree(node),
        })
        .collect();
    out.sort_by(|a, b| b.degree.cmp(&a.degree).then(a.node.cmp(&b.node)));
    out
}

pub fn max_degree(g: &Graph) -> usize {
    g.live_nodes().map(|k| g.degree(k)).max().unwrap_or(0)
}
