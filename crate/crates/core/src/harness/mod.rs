//! Experiment driver: builds every configured topology per seed over a
//! shared catalog and workload, runs the searches and churn sweep, checks
//! the overlay structure, and aggregates across seeds.

mod build;
mod config;
mod report;

use std::collections::BTreeMap;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use build::{build, build_mpo, reference_max_degree, resolve, Built, CalibrationNote, Resolved, World};
pub use config::{ConfigError, ExperimentConfig};
pub use report::{csv_tables, emit_report, read_report, ReportError, CSV_FILES, REPORT_FILE};

use crate::kernel::{derive_seed, make_churn, make_rng, ChurnMode, KernelError, PeerKey};
use crate::overlay::OverlayError;
use crate::search::{disturbance, make_workload, sweep, Algorithm, Query, SearchIndex, SearchOptions, TtlPoint};
use crate::topology::{Graph, TopologyError, TopologyKind};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("catalog: {0}")]
    Kernel(#[from] KernelError),
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("overlay: {0}")]
    Overlay(#[from] OverlayError),
}

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }

    fn of_some(xs: &[Option<f64>]) -> Option<Self> {
        let v: Vec<f64> = xs.iter().flatten().copied().collect();
        (!v.is_empty()).then(|| Self::of(&v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchCell {
    pub algorithm: Algorithm,
    pub ttl: u32,
    /// Queries over all seeds.
    pub queries: u64,
    pub success_rate: Stat,
    /// Messages per query.
    pub mean_messages: Stat,
    /// Over successful queries; absent when none succeeded.
    pub mean_hops: Option<Stat>,
    pub total_messages: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeSummary {
    pub max: Stat,
    pub mean: Stat,
    /// Bridges added to make the generated graph connected.
    pub repair_edges: Stat,
    /// Degrees of the first seed's network, highest first.
    pub ranked: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSummary {
    pub algorithm: Algorithm,
    pub ttl: u32,
    /// Receipts per node key, summed over seeds.
    pub per_node: Vec<u64>,
    /// Largest single-seed receipt count of any node.
    pub max: Stat,
    /// Nodes never disturbed, per seed.
    pub zero_nodes: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSummary {
    pub d: u32,
    pub degree_bound: usize,
    pub max_degree: usize,
    pub max_as_count: usize,
    pub max_layers: u32,
    pub max_levels_per_layer: u32,
    /// Violations found in any seed, prefixed by the seed and phase.
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChurnCell {
    pub fraction: f64,
    pub algorithm: Algorithm,
    pub ttl: u32,
    pub live_nodes: Stat,
    pub success_rate: Stat,
    pub mean_hops: Option<Stat>,
    pub mean_messages: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub topology: TopologyKind,
    pub degrees: DegreeSummary,
    pub search: Vec<SearchCell>,
    pub disturbance: Option<DisturbanceSummary>,
    pub churn: Vec<ChurnCell>,
    /// Overlay only.
    pub structure: Option<StructureSummary>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub seeds: Vec<u64>,
    pub n_queries: usize,
    /// What the cost columns measure.
    pub cost_metric: String,
    pub calibration: Option<Resolved>,
    pub topologies: Vec<TopologyReport>,
}

impl MetricsReport {
    pub fn topology(&self, kind: TopologyKind) -> Option<&TopologyReport> {
        self.topologies.iter().find(|t| t.topology == kind)
    }

    /// Canonical JSON: object keys sorted, fixed float formatting.
    pub fn to_canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("report serializes");
        let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
        s.push('\n');
        s
    }
}

impl TopologyReport {
    pub fn cell(&self, algorithm: Algorithm, ttl: u32) -> Option<&SearchCell> {
        self.search.iter().find(|c| c.algorithm == algorithm && c.ttl == ttl)
    }
}

/// One seed's measurements for one topology.
struct Trial {
    max_degree: usize,
    mean_degree: f64,
    repair_edges: usize,
    ranked: Vec<usize>,
    search: BTreeMap<Algorithm, Vec<TtlPoint>>,
    disturbance: Option<Vec<u64>>,
    churn: Vec<(usize, TtlPoint)>,
    structure: Option<(usize, usize, u32, u32, Vec<String>)>,
}

fn options(cfg: &ExperimentConfig) -> SearchOptions {
    SearchOptions {
        walks: cfg.walks,
        stop_after: cfg.stop_after,
        no_backtrack: cfg.no_backtrack,
    }
}

fn workload(cfg: &ExperimentConfig, world: &World, live: &[PeerKey], seed: u64) -> Vec<Query> {
    if live.is_empty() {
        return Vec::new();
    }
    make_workload(live, &world.catalog, cfg.n_queries, &mut make_rng(derive_seed(seed, "workload")))
}

fn live_files(world: &World, g: &Graph) -> Vec<Vec<u32>> {
    (0..g.slots() as PeerKey)
        .map(|k| {
            if g.is_alive(k) {
                world.files_by_host[k as usize].clone()
            } else {
                Vec::new()
            }
        })
        .collect()
}

fn run_trial(
    kind: TopologyKind,
    cfg: &ExperimentConfig,
    res: &Resolved,
    seed: u64,
    searches: bool,
) -> Result<Trial, HarnessError> {
    let world = World::new(cfg, seed)?;
    let built = build(kind, cfg, res, &world, seed)?;
    let g = &built.graph;
    let opts = options(cfg);
    let search_seed = derive_seed(seed, "search");
    let live: Vec<PeerKey> = g.live_nodes().collect();
    let mut degs: Vec<usize> = live.iter().map(|&k| g.degree(k)).collect();
    degs.sort_unstable_by(|a, b| b.cmp(a));
    let mut trial = Trial {
        max_degree: degs.first().copied().unwrap_or(0),
        mean_degree: degs.iter().sum::<usize>() as f64 / degs.len().max(1) as f64,
        repair_edges: g.repair_edges(),
        ranked: degs,
        search: BTreeMap::new(),
        disturbance: None,
        churn: Vec::new(),
        structure: None,
    };
    let mut violations = Vec::new();
    if let Some(ov) = &built.overlay {
        let rep = ov.check_structure();
        violations.extend(rep.violations.iter().map(|v| format!("seed {seed}, built: {v}")));
        let levels = rep.levels_per_layer.iter().copied().max().unwrap_or(0);
        trial.structure = Some((rep.max_degree, rep.as_count, rep.layer_count, levels, Vec::new()));
    }
    if searches {
        let idx = SearchIndex::new(g, &world.files_by_host);
        let queries = workload(cfg, &world, &live, seed);
        for &algo in &cfg.algorithms {
            trial
                .search
                .insert(algo, sweep(g, &idx, &queries, algo, &cfg.ttls, &opts, search_seed));
        }
        trial.disturbance = Some(disturbance(
            g,
            &idx,
            &queries,
            cfg.disturbance_algorithm,
            cfg.disturbance_ttl,
            &opts,
            search_seed,
        ));
    }
    for (i, &fraction) in cfg.churn_fractions.iter().enumerate() {
        let mut rng = make_rng(derive_seed(seed, &format!("churn/{i}")));
        let scenario = make_churn(&live, fraction, ChurnMode::Crash, &mut rng)?;
        let left = scenario.leave_order;
        let churned = if left.len() == live.len() {
            Graph::with_live(g.slots(), std::iter::empty())
        } else if let Some(ov) = &built.overlay {
            let mut ov = ov.clone();
            if !left.is_empty() {
                ov.crash(&left)?;
            }
            let rep = ov.check_structure();
            violations.extend(rep.violations.iter().map(|v| format!("seed {seed}, churn {fraction}: {v}")));
            if let Some(s) = &mut trial.structure {
                s.0 = s.0.max(rep.max_degree);
            }
            ov.as_graph()
        } else {
            let mut c = g.clone();
            for &k in &left {
                c.remove_node(k);
            }
            c
        };
        let remaining: Vec<PeerKey> = churned.live_nodes().collect();
        let idx = SearchIndex::new(&churned, &live_files(&world, &churned));
        let queries = workload(cfg, &world, &remaining, seed);
        let point = sweep(
            &churned,
            &idx,
            &queries,
            cfg.churn_algorithm,
            &[cfg.churn_ttl],
            &opts,
            search_seed,
        )
        .remove(0);
        trial.churn.push((remaining.len(), point));
    }
    if let Some(s) = &mut trial.structure {
        s.4 = violations;
    }
    Ok(trial)
}

fn aggregate(kind: TopologyKind, cfg: &ExperimentConfig, res: &Resolved, trials: &[Trial]) -> TopologyReport {
    let stat = |f: &dyn Fn(&Trial) -> f64| Stat::of(&trials.iter().map(f).collect::<Vec<_>>());
    let degrees = DegreeSummary {
        max: stat(&|t| t.max_degree as f64),
        mean: stat(&|t| t.mean_degree),
        repair_edges: stat(&|t| t.repair_edges as f64),
        ranked: trials[0].ranked.clone(),
    };
    let mut search = Vec::new();
    for &algo in &cfg.algorithms {
        for (j, &ttl) in cfg.ttls.iter().enumerate() {
            let pts: Vec<&TtlPoint> = trials.iter().filter_map(|t| t.search.get(&algo).map(|s| &s[j])).collect();
            if pts.is_empty() {
                continue;
            }
            search.push(SearchCell {
                algorithm: algo,
                ttl,
                queries: pts.iter().map(|p| p.queries).sum(),
                success_rate: Stat::of(&pts.iter().map(|p| p.success_rate).collect::<Vec<_>>()),
                mean_messages: Stat::of(&pts.iter().map(|p| p.mean_messages).collect::<Vec<_>>()),
                mean_hops: Stat::of_some(&pts.iter().map(|p| p.mean_hops).collect::<Vec<_>>()),
                total_messages: pts.iter().map(|p| p.total_messages).sum(),
            });
        }
    }
    let disturbance = trials[0].disturbance.as_ref().map(|first| {
        let mut per_node = vec![0u64; first.len()];
        for t in trials {
            for (acc, &v) in per_node.iter_mut().zip(t.disturbance.as_ref().unwrap()) {
                *acc += v;
            }
        }
        DisturbanceSummary {
            algorithm: cfg.disturbance_algorithm,
            ttl: cfg.disturbance_ttl,
            per_node,
            max: stat(&|t| t.disturbance.as_ref().unwrap().iter().copied().max().unwrap_or(0) as f64),
            zero_nodes: stat(&|t| t.disturbance.as_ref().unwrap().iter().filter(|&&v| v == 0).count() as f64),
        }
    });
    let churn = cfg
        .churn_fractions
        .iter()
        .enumerate()
        .map(|(i, &fraction)| {
            let pts: Vec<&(usize, TtlPoint)> = trials.iter().map(|t| &t.churn[i]).collect();
            ChurnCell {
                fraction,
                algorithm: cfg.churn_algorithm,
                ttl: cfg.churn_ttl,
                live_nodes: Stat::of(&pts.iter().map(|p| p.0 as f64).collect::<Vec<_>>()),
                success_rate: Stat::of(&pts.iter().map(|p| p.1.success_rate).collect::<Vec<_>>()),
                mean_hops: Stat::of_some(&pts.iter().map(|p| p.1.mean_hops).collect::<Vec<_>>()),
                mean_messages: Stat::of(&pts.iter().map(|p| p.1.mean_messages).collect::<Vec<_>>()),
            }
        })
        .collect();
    let structure = trials[0].structure.as_ref().map(|_| {
        let s: Vec<_> = trials.iter().filter_map(|t| t.structure.as_ref()).collect();
        StructureSummary {
            d: res.mpo_d,
            degree_bound: res.mpo_d as usize + 4,
            max_degree: s.iter().map(|x| x.0).max().unwrap_or(0),
            max_as_count: s.iter().map(|x| x.1).max().unwrap_or(0),
            max_layers: s.iter().map(|x| x.2).max().unwrap_or(0),
            max_levels_per_layer: s.iter().map(|x| x.3).max().unwrap_or(0),
            violations: s.iter().flat_map(|x| x.4.iter().cloned()).collect(),
        }
    });
    TopologyReport {
        topology: kind,
        degrees,
        search,
        disturbance,
        churn,
        structure,
    }
}

fn execute(cfg: &ExperimentConfig, searches: bool) -> Result<MetricsReport, HarnessError> {
    cfg.validate()?;
    let res = resolve(cfg)?;
    let jobs: Vec<(TopologyKind, u64)> = cfg
        .topologies
        .iter()
        .flat_map(|&k| cfg.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let run = |&(k, s): &(TopologyKind, u64)| run_trial(k, cfg, &res, s, searches);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<Trial, HarnessError>> = jobs.par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<Trial, HarnessError>> = jobs.iter().map(run).collect();
    let mut results = results.into_iter();
    let mut topologies = Vec::new();
    for &kind in &cfg.topologies {
        let trials: Vec<Trial> = results.by_ref().take(cfg.seeds.len()).collect::<Result<_, _>>()?;
        topologies.push(aggregate(kind, cfg, &res, &trials));
    }
    Ok(MetricsReport {
        n: cfg.n,
        seeds: cfg.seeds.clone(),
        n_queries: cfg.n_queries,
        cost_metric: "messages per query".to_string(),
        calibration: Some(res),
        topologies,
    })
}

/// Full experiment: degrees, every configured search at every budget, the
/// per-node load, and the churn sweep.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport, HarnessError> {
    execute(cfg, true)
}

/// Churn sweep only; the search and load sections stay empty.
pub fn churn_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport, HarnessError> {
    execute(cfg, false)
}
