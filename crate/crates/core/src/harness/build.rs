use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError};
use crate::kernel::{build_catalog, derive_seed, make_rng, place_nodes, region_label, FileCatalog, FileIndex, PeerKey};
use crate::overlay::{NewPeer, Overlay, OverlayParams, WarmupConfig};
use crate::ranking::QueryVector;
use crate::topology::{
    gen_rtpl, gen_squareroot, gen_supernode, max_degree, Graph, SqrtParams, SqrtWarmup, SupernodeParams, TopologyKind,
};

/// Generator constants after filling in whatever the config left open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub mpo_d: u32,
    pub rtpl_omega: f64,
    pub supernode_sp_links: usize,
    pub sqrt_d_max: u32,
    pub notes: Vec<CalibrationNote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationNote {
    pub topology: TopologyKind,
    pub parameter: String,
    pub value: f64,
    /// False when the value came from the config.
    pub fitted: bool,
    pub target_max_degree: f64,
    /// Mean over the calibration networks.
    pub realized_max_degree: f64,
}

/// Reference maximum degree per topology at 500 and 2000 nodes; other sizes
/// interpolate linearly and clamp at the ends.
pub fn reference_max_degree(kind: TopologyKind, n: usize) -> f64 {
    let (small, large) = match kind {
        TopologyKind::Mpo => (11.0, 18.0),
        TopologyKind::Rtpl => (18.0, 36.0),
        TopologyKind::Supernode => (25.0, 32.0),
        TopologyKind::Squareroot => (8.0, 22.0),
    };
    let t = ((n as f64 - 500.0) / 1500.0).clamp(0.0, 1.0);
    small + t * (large - small)
}

/// Catalog and per-host files for one seed; the same for every topology.
pub struct World {
    pub catalog: FileCatalog,
    pub files_by_host: Vec<Vec<FileIndex>>,
}

impl World {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self, HarnessError> {
        let hosts: Vec<PeerKey> = (0..cfg.n as PeerKey).collect();
        let mut rng = make_rng(derive_seed(seed, "catalog"));
        let catalog = build_catalog(cfg.files, cfg.zipf_alpha, cfg.replicas, &hosts, &mut rng)?;
        let files_by_host = catalog.files_by_host(cfg.n);
        Ok(Self { catalog, files_by_host })
    }
}

pub struct Built {
    pub graph: Graph,
    pub overlay: Option<Overlay>,
}

pub fn build_mpo(cfg: &ExperimentConfig, d: u32, world: &World, seed: u64, warm: bool) -> Result<Overlay, HarnessError> {
    let mut rng = make_rng(derive_seed(seed, "mpo"));
    let spread = cfg.plane_spread;
    let coords = place_nodes(cfg.n, &mut rng, spread);
    let peers = coords
        .iter()
        .enumerate()
        .map(|(k, &c)| NewPeer {
            key: k as PeerKey,
            coord: c,
            region: region_label(c, spread, cfg.region_cells),
            tolerance: 4.0 * spread,
            files: world.files_by_host[k].clone(),
        })
        .collect();
    let params = OverlayParams {
        max_levels_per_layer: cfg.mpo_max_levels,
        ..OverlayParams::with_d(d)
    };
    let mut ov = Overlay::bootstrap(params, peers)?;
    if warm {
        let wc = WarmupConfig {
            exchanges: cfg.mpo_warmup_exchanges,
            free_rider_fraction: cfg.mpo_free_rider_fraction,
            ..WarmupConfig::default()
        };
        let vectors: Vec<QueryVector> = (0..cfg.files)
            .map(|_| QueryVector::random(wc.universe, wc.query_density, &mut rng))
            .collect();
        ov.warmup(&wc, &vectors, &mut rng);
    }
    Ok(ov)
}

fn supernode_params(cfg: &ExperimentConfig, sp_links: usize) -> SupernodeParams {
    SupernodeParams {
        min_cluster: cfg.supernode_min_cluster,
        max_cluster: cfg.supernode_max_cluster,
        sp_links,
    }
}

fn sqrt_params(cfg: &ExperimentConfig, d_max: u32) -> (SqrtParams, SqrtWarmup) {
    (
        SqrtParams {
            d_max,
            d_min: cfg.sqrt_d_min,
            d0: cfg.sqrt_d0,
        },
        SqrtWarmup {
            queries: cfg.sqrt_warmup_queries,
            batch: cfg.sqrt_batch,
            walks: cfg.walks,
            ..SqrtWarmup::default()
        },
    )
}

pub fn build(
    kind: TopologyKind,
    cfg: &ExperimentConfig,
    res: &Resolved,
    world: &World,
    seed: u64,
) -> Result<Built, HarnessError> {
    let mut rng = make_rng(derive_seed(seed, kind.name()));
    Ok(match kind {
        TopologyKind::Mpo => {
            let ov = build_mpo(cfg, res.mpo_d, world, seed, true)?;
            Built {
                graph: ov.as_graph(),
                overlay: Some(ov),
            }
        }
        TopologyKind::Rtpl => Built {
            graph: gen_rtpl(cfg.n, res.rtpl_omega, cfg.rtpl_alpha, &mut rng)?,
            overlay: None,
        },
        TopologyKind::Supernode => Built {
            graph: gen_supernode(cfg.n, &supernode_params(cfg, res.supernode_sp_links), &mut rng)?.0,
            overlay: None,
        },
        TopologyKind::Squareroot => {
            let (p, w) = sqrt_params(cfg, res.sqrt_d_max);
            let (g, _) = gen_squareroot(cfg.n, &p, &w, &world.catalog, &world.files_by_host, &mut rng)?;
            Built { graph: g, overlay: None }
        }
    })
}

/// Mean realized maximum degree over the calibration networks.
fn realized_max(
    kind: TopologyKind,
    cfg: &ExperimentConfig,
    res: &Resolved,
    worlds: &[(u64, World)],
) -> Result<f64, HarnessError> {
    let mut total = 0.0;
    for (seed, world) in worlds {
        let g = match kind {
            TopologyKind::Mpo => build_mpo(cfg, res.mpo_d, world, *seed, false)?.as_graph(),
            _ => build(kind, cfg, res, world, *seed)?.graph,
        };
        total += max_degree(&g) as f64;
    }
    Ok(total / worlds.len() as f64)
}

/// Smallest integer in `lo..=hi` whose realized maximum reaches the target,
/// or its predecessor when that lands closer. Realized maxima grow with the
/// parameter, so doubling from `lo` and then bisecting suffices; doubling
/// keeps the expensive large candidates out of the search.
fn fit_integer(
    lo: u32,
    hi: u32,
    target: f64,
    mut eval: impl FnMut(u32) -> Result<f64, HarnessError>,
) -> Result<(u32, f64), HarnessError> {
    let (mut a, mut b) = (lo, hi);
    let mut cache = std::collections::BTreeMap::new();
    let mut at = |v: u32, cache: &mut std::collections::BTreeMap<u32, f64>| -> Result<f64, HarnessError> {
        if let Some(&r) = cache.get(&v) {
            return Ok(r);
        }
        let r = eval(v)?;
        cache.insert(v, r);
        Ok(r)
    };
    let mut step = 1;
    while a + step < b {
        if at(a + step, &mut cache)? >= target {
            b = a + step;
            break;
        }
        a += step;
        step *= 2;
    }
    while a < b {
        let mid = a + (b - a) / 2;
        if at(mid, &mut cache)? >= target {
            b = mid;
        } else {
            a = mid + 1;
        }
    }
    let r = at(a, &mut cache)?;
    if a > lo {
        let below = at(a - 1, &mut cache)?;
        if (target - below).abs() < (r - target).abs() {
            return Ok((a - 1, below));
        }
    }
    Ok((a, r))
}

/// Fills in every generator constant the config leaves unset so that the
/// realized maximum degree matches the reference value for the network
/// size. Only topologies listed in the config are fitted.
pub fn resolve(cfg: &ExperimentConfig) -> Result<Resolved, HarnessError> {
    let worlds: Vec<(u64, World)> = (0..cfg.calibration_seeds as u64)
        .map(|i| {
            let seed = derive_seed(i, "calibration");
            World::new(cfg, seed).map(|w| (seed, w))
        })
        .collect::<Result<_, _>>()?;
    let n = cfg.n;
    let mut res = Resolved {
        mpo_d: cfg.mpo_d.unwrap_or(2),
        rtpl_omega: cfg.rtpl_omega.unwrap_or(1.0),
        supernode_sp_links: cfg.supernode_sp_links.unwrap_or(1),
        sqrt_d_max: cfg.sqrt_d_max.unwrap_or(cfg.sqrt_d0),
        notes: Vec::new(),
    };
    for &kind in &cfg.topologies {
        let target = reference_max_degree(kind, n);
        let (param, value, fitted, realized) = match kind {
            TopologyKind::Mpo => {
                let fitted = cfg.mpo_d.is_none();
                if fitted {
                    let hi = (n as u32 / 4).max(2);
                    let (d, _) = fit_integer(2, hi, target, |d| {
                        realized_max(kind, cfg, &Resolved { mpo_d: d, ..res.clone() }, &worlds)
                    })?;
                    res.mpo_d = d;
                }
                ("d", f64::from(res.mpo_d), fitted, realized_max(kind, cfg, &res, &worlds)?)
            }
            TopologyKind::Rtpl => {
                let fitted = cfg.rtpl_omega.is_none();
                if fitted {
                    // Integer search over tenths of omega.
                    let hi = ((n - 1) as u32) * 10;
                    let (w, _) = fit_integer(10, hi, target, |w| {
                        let r = Resolved {
                            rtpl_omega: f64::from(w) / 10.0,
                            ..res.clone()
                        };
                        realized_max(kind, cfg, &r, &worlds)
                    })?;
                    res.rtpl_omega = f64::from(w) / 10.0;
                }
                ("omega", res.rtpl_omega, fitted, realized_max(kind, cfg, &res, &worlds)?)
            }
            TopologyKind::Supernode => {
                let fitted = cfg.supernode_sp_links.is_none();
                if fitted {
                    let clusters = n / cfg.supernode_min_cluster.max(1);
                    let (k, _) = fit_integer(1, clusters.max(1) as u32, target, |k| {
                        let r = Resolved {
                            supernode_sp_links: k as usize,
                            ..res.clone()
                        };
                        realized_max(kind, cfg, &r, &worlds)
                    })?;
                    res.supernode_sp_links = k as usize;
                }
                (
                    "sp_links",
                    res.supernode_sp_links as f64,
                    fitted,
                    realized_max(kind, cfg, &res, &worlds)?,
                )
            }
            TopologyKind::Squareroot => {
                let fitted = cfg.sqrt_d_max.is_none();
                if fitted {
                    let (m, _) = fit_integer(cfg.sqrt_d0, (n - 1) as u32, target, |m| {
                        realized_max(kind, cfg, &Resolved { sqrt_d_max: m, ..res.clone() }, &worlds)
                    })?;
                    res.sqrt_d_max = m;
                }
                ("d_max", f64::from(res.sqrt_d_max), fitted, realized_max(kind, cfg, &res, &worlds)?)
            }
        };
        res.notes.push(CalibrationNote {
            topology: kind,
            parameter: param.to_string(),
            value,
            fitted,
            target_max_degree: target,
            realized_max_degree: realized,
        });
    }
    Ok(res)
}
