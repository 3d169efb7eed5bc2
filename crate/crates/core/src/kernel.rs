//! Deterministic simulation kernel: seeded random streams, planar placement
//! relative to the origin node, the Zipf file/query workload and churn
//! scenarios.

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a peer inside one trial. Stable for the lifetime of the trial,
/// independent of where the peer currently sits in any topology.
pub type PeerKey = u32;

/// Zero-based file index; index 0 is the most popular file.
pub type FileIndex = u32;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("catalog needs at least one file")]
    EmptyCatalog,
    #[error("total replicas {total} is smaller than the file count {files}")]
    TooFewReplicas { total: u32, files: u32 },
    #[error("catalog needs at least one host")]
    NoHosts,
    #[error("fraction {0} is outside [0, 1]")]
    InvalidFraction(f64),
    #[error("zipf exponent must be finite and non-negative, got {0}")]
    InvalidExponent(f64),
}

/// Seeded ChaCha8 stream. ChaCha output is specified bit-for-bit, so a seed
/// yields the same draws on every platform.
#[derive(Debug, Clone)]
pub struct SimRng {
    seed: u64,
    inner: ChaCha8Rng,
}

pub fn make_rng(seed: u64) -> SimRng {
    SimRng::new(seed)
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream for one subsystem (topology, workload, churn, ...),
    /// derived from the root seed and a label only.
    pub fn fork(&self, label: &str) -> SimRng {
        SimRng::new(derive_seed(self.seed, label))
    }
}

impl RngCore for SimRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the parent seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}

/// A point in the virtual plane. The origin node sits at (0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Coordinate {
    pub x: f64,
    pub y: f64,
}

impl Coordinate {
    pub const ORIGIN: Coordinate = Coordinate { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Euclidean distance.
pub fn distance(a: Coordinate, b: Coordinate) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// `n` coordinates drawn uniformly from `[-spread, spread]²`.
pub fn place_nodes(n: usize, rng: &mut SimRng, spread: f64) -> Vec<Coordinate> {
    assert!(spread > 0.0 && spread.is_finite(), "spread must be positive");
    (0..n)
        .map(|_| Coordinate {
            x: rng.gen_range(-spread..=spread),
            y: rng.gen_range(-spread..=spread),
        })
        .collect()
}

/// Categorical region of a point: the index of its cell when
/// `[-spread, spread]²` is cut into `cells × cells` squares. Stands in for an
/// IP prefix group.
pub fn region_label(c: Coordinate, spread: f64, cells: u32) -> u32 {
    let cells = cells.max(1);
    let cell = |v: f64| {
        let t = ((v + spread) / (2.0 * spread) * f64::from(cells)).floor();
        (t.max(0.0) as u32).min(cells - 1)
    };
    cell(c.y) * cells + cell(c.x)
}

/// Files, their Zipf query popularity and where every replica lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileCatalog {
    pub alpha: f64,
    pub query_weights: Vec<f64>,
    pub replica_counts: Vec<u32>,
    pub total_replicas: u32,
    /// `placement[i]` lists the hosts of file `i`.
    pub placement: Vec<Vec<PeerKey>>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl FileCatalog {
    pub fn file_count(&self) -> usize {
        self.query_weights.len()
    }

    /// Files hosted per peer, for `n_keys` peer keys.
    pub fn files_by_host(&self, n_keys: usize) -> Vec<Vec<FileIndex>> {
        let mut out = vec![Vec::new(); n_keys];
        for (file, hosts) in self.placement.iter().enumerate() {
            for &h in hosts {
                if let Some(slot) = out.get_mut(h as usize) {
                    slot.push(file as FileIndex);
                }
            }
        }
        for files in &mut out {
            files.sort_unstable();
            files.dedup();
        }
        out
    }

    fn rebuild_cumulative(&mut self) {
        let mut acc = 0.0;
        self.cumulative = self
            .query_weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
    }
}

/// Zipf weights `q_i ∝ 1/i^alpha` for ranks `1..=m`, normalized to sum 1.
pub fn zipf_weights(m: usize, alpha: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=m).map(|i| (i as f64).powf(-alpha)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Replica counts proportional to `weights`, each at least one, summing to
/// `total` exactly and non-increasing in rank.
pub fn apportion_replicas(weights: &[f64], total: u32) -> Vec<u32> {
    let m = weights.len();
    let ideal: Vec<f64> = weights.iter().map(|w| w * f64::from(total)).collect();
    let mut counts: Vec<u32> = ideal.iter().map(|x| (x.floor() as u32).max(1)).collect();
    let mut assigned: i64 = counts.iter().map(|&c| i64::from(c)).sum();

    // Largest remainder for the deficit; clamped entries are not eligible.
    let mut order: Vec<usize> = (0..m).filter(|&i| ideal[i] >= 1.0).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    if order.is_empty() {
        order = (0..m).collect();
    }
    let mut cursor = 0;
    while assigned < i64::from(total) {
        counts[order[cursor % order.len()]] += 1;
        assigned += 1;
        cursor += 1;
    }
    // Surplus from the floor-at-one clamp: trim the tail.
    while assigned > i64::from(total) {
        let Some(i) = (0..m).rev().find(|&i| counts[i] > 1) else {
            break;
        };
        counts[i] -= 1;
        assigned -= 1;
    }
    // Cyclic padding can leave a local inversion; restore the ordering.
    counts.sort_unstable_by(|a, b| b.cmp(a));
    counts
}

pub fn build_catalog(
    m: u32,
    alpha: f64,
    total_replicas: u32,
    hosts: &[PeerKey],
    rng: &mut SimRng,
) -> Result<FileCatalog, KernelError> {
    if m == 0 {
        return Err(KernelError::EmptyCatalog);
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(KernelError::InvalidExponent(alpha));
    }
    if total_replicas < m {
        return Err(KernelError::TooFewReplicas {
            total: total_replicas,
            files: m,
        });
    }
    if hosts.is_empty() {
        return Err(KernelError::NoHosts);
    }
    let query_weights = zipf_weights(m as usize, alpha);
    let replica_counts = apportion_replicas(&query_weights, total_replicas);
    let placement = replica_counts
        .iter()
        .map(|&r| place_replicas(r as usize, hosts, rng))
        .collect();
    let mut catalog = FileCatalog {
        alpha,
        query_weights,
        replica_counts,
        total_replicas,
        placement,
        cumulative: Vec::new(),
    };
    catalog.rebuild_cumulative();
    Ok(catalog)
}

fn place_replicas(r: usize, hosts: &[PeerKey], rng: &mut SimRng) -> Vec<PeerKey> {
    let n = hosts.len();
    let mut out: Vec<PeerKey> = index::sample(rng, n, r.min(n))
        .into_iter()
        .map(|i| hosts[i])
        .collect();
    // More copies than hosts: the surplus lands on random hosts again.
    for _ in n..r {
        out.push(hosts[rng.gen_range(0..n)]);
    }
    out
}

/// Draws a file index with probability `q_i`.
pub fn sample_query_file(catalog: &FileCatalog, rng: &mut SimRng) -> FileIndex {
    let u: f64 = rng.gen::<f64>() * catalog.cumulative.last().copied().unwrap_or(1.0);
    let i = catalog.cumulative.partition_point(|&c| c <= u);
    i.min(catalog.file_count() - 1) as FileIndex
}

impl FileCatalog {
    /// Restores derived sampling tables after deserialization.
    pub fn restore(mut self) -> Self {
        self.rebuild_cumulative();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChurnMode {
    Graceful,
    Crash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChurnScenario {
    pub leave_fraction: f64,
    pub leave_order: Vec<PeerKey>,
    pub mode: ChurnMode,
}

/// Uniformly random subset of `round(fraction × N)` nodes, in random order.
pub fn make_churn(
    nodes: &[PeerKey],
    fraction: f64,
    mode: ChurnMode,
    rng: &mut SimRng,
) -> Result<ChurnScenario, KernelError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(KernelError::InvalidFraction(fraction));
    }
    let count = (fraction * nodes.len() as f64).round() as usize;
    let leave_order = index::sample(rng, nodes.len(), count.min(nodes.len()))
        .into_iter()
        .map(|i| nodes[i])
        .collect();
    Ok(ChurnScenario {
        leave_fraction: fraction,
        leave_order,
        mode,
    })
}
