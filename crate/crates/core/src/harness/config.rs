use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search::Algorithm;
use crate::topology::TopologyKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// One experiment. Read from a flat TOML file; every key is optional and
/// unknown keys are rejected. Generator constants left unset are fitted to
/// the reference degree maxima before the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topologies: Vec<TopologyKind>,
    /// Network size.
    pub n: usize,
    pub seeds: Vec<u64>,
    pub ttls: Vec<u32>,
    pub algorithms: Vec<Algorithm>,
    pub n_queries: usize,

    /// Catalog: file count, Zipf exponent and total replicas.
    pub files: u32,
    pub zipf_alpha: f64,
    pub replicas: u32,

    pub walks: usize,
    pub stop_after: usize,
    pub no_backtrack: bool,

    /// Which search and budget the per-node load figure uses.
    pub disturbance_algorithm: Algorithm,
    pub disturbance_ttl: u32,

    /// Leave fractions for the churn sweep, and the search it measures.
    pub churn_fractions: Vec<f64>,
    pub churn_algorithm: Algorithm,
    pub churn_ttl: u32,

    pub mpo_d: Option<u32>,
    /// Cap on levels per layer; unset lets height balancing decide.
    pub mpo_max_levels: Option<u32>,
    pub mpo_warmup_exchanges: usize,
    pub mpo_free_rider_fraction: f64,
    pub plane_spread: f64,
    pub region_cells: u32,

    pub rtpl_omega: Option<f64>,
    pub rtpl_alpha: f64,

    pub supernode_sp_links: Option<usize>,
    pub supernode_min_cluster: usize,
    pub supernode_max_cluster: usize,

    pub sqrt_d_max: Option<u32>,
    pub sqrt_d_min: u32,
    pub sqrt_d0: u32,
    pub sqrt_warmup_queries: usize,
    pub sqrt_batch: usize,

    /// Networks built per candidate while fitting generator constants.
    pub calibration_seeds: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            topologies: TopologyKind::ALL.to_vec(),
            n: 500,
            seeds: (1..=10).collect(),
            ttls: (0..=6).collect(),
            algorithms: Algorithm::ALL.to_vec(),
            n_queries: 12_000,
            files: 300,
            zipf_alpha: 0.726,
            replicas: 4162,
            walks: 4,
            stop_after: 1,
            no_backtrack: true,
            disturbance_algorithm: Algorithm::FloodRepeated,
            disturbance_ttl: 4,
            churn_fractions: (0..=9).map(|i| f64::from(i) / 10.0).collect(),
            churn_algorithm: Algorithm::FloodUnrepeated,
            churn_ttl: 4,
            mpo_d: None,
            mpo_max_levels: None,
            mpo_warmup_exchanges: 20_000,
            mpo_free_rider_fraction: 0.1,
            plane_spread: 1000.0,
            region_cells: 4,
            rtpl_omega: None,
            rtpl_alpha: 0.5,
            supernode_sp_links: None,
            supernode_min_cluster: 5,
            supernode_max_cluster: 15,
            sqrt_d_max: None,
            sqrt_d_min: 3,
            sqrt_d0: 4,
            sqrt_warmup_queries: 10_000,
            sqrt_batch: 100,
            calibration_seeds: 4,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.topologies.is_empty() {
            return Err(invalid("topologies", "must list at least one topology"));
        }
        if self.n < 20 {
            return Err(invalid("n", format!("need at least 20 nodes, got {}", self.n)));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "must list at least one seed"));
        }
        if self.ttls.is_empty() {
            return Err(invalid("ttls", "must list at least one budget"));
        }
        if self.algorithms.is_empty() {
            return Err(invalid("algorithms", "must list at least one algorithm"));
        }
        if self.n_queries == 0 {
            return Err(invalid("n_queries", "must be at least 1"));
        }
        if self.files == 0 {
            return Err(invalid("files", "must be at least 1"));
        }
        if !(self.zipf_alpha.is_finite() && self.zipf_alpha >= 0.0) {
            return Err(invalid("zipf_alpha", format!("must be finite and >= 0, got {}", self.zipf_alpha)));
        }
        if self.replicas < self.files {
            return Err(invalid(
                "replicas",
                format!("need at least one replica per file ({} < {})", self.replicas, self.files),
            ));
        }
        if self.walks == 0 {
            return Err(invalid("walks", "must be at least 1"));
        }
        if self.stop_after == 0 {
            return Err(invalid("stop_after", "must be at least 1"));
        }
        if let Some(f) = self.churn_fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(invalid("churn_fractions", format!("{f} is outside [0, 1]")));
        }
        if let Some(d) = self.mpo_d {
            if d < 2 {
                return Err(invalid("mpo_d", format!("must be at least 2, got {d}")));
            }
        }
        if self.mpo_max_levels == Some(0) {
            return Err(invalid("mpo_max_levels", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.mpo_free_rider_fraction) {
            return Err(invalid("mpo_free_rider_fraction", "must be in [0, 1]"));
        }
        if !(self.plane_spread.is_finite() && self.plane_spread > 0.0) {
            return Err(invalid("plane_spread", "must be positive"));
        }
        if self.region_cells == 0 {
            return Err(invalid("region_cells", "must be at least 1"));
        }
        if let Some(w) = self.rtpl_omega {
            if !(w.is_finite() && w > 0.0) {
                return Err(invalid("rtpl_omega", "must be positive"));
            }
            if w.round() as usize > self.n - 1 {
                return Err(invalid("rtpl_omega", format!("hub degree {w} exceeds n - 1")));
            }
        }
        if !(self.rtpl_alpha.is_finite() && self.rtpl_alpha >= 0.0) {
            return Err(invalid("rtpl_alpha", "must be finite and >= 0"));
        }
        if self.supernode_sp_links == Some(0) {
            return Err(invalid("supernode_sp_links", "must be at least 1"));
        }
        let (lo, hi) = (self.supernode_min_cluster, self.supernode_max_cluster);
        if lo < 3 || hi < 2 * lo - 1 {
            return Err(invalid(
                "supernode_max_cluster",
                format!("cluster range [{lo}, {hi}] needs min >= 3 and max >= 2 * min - 1"),
            ));
        }
        if self.sqrt_d_min == 0 || self.sqrt_d_min > self.sqrt_d0 {
            return Err(invalid("sqrt_d0", "need 0 < sqrt_d_min <= sqrt_d0"));
        }
        if let Some(m) = self.sqrt_d_max {
            if m < self.sqrt_d0 {
                return Err(invalid("sqrt_d_max", format!("must be at least sqrt_d0 = {}", self.sqrt_d0)));
            }
        }
        if self.sqrt_batch == 0 {
            return Err(invalid("sqrt_batch", "must be at least 1"));
        }
        if self.calibration_seeds == 0 {
            return Err(invalid("calibration_seeds", "must be at least 1"));
        }
        Ok(())
    }
}
