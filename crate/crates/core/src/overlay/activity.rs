//! Status changes and the SR-building exchanges between AS members.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NodeStatus, Overlay, OverlayError};
use crate::kernel::{PeerKey, SimRng};
use crate::ranking::{query_similarity, source_rank, QueryVector};

/// Information exchange between a peer that just became free and its
/// IC_local.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeEvent {
    pub node: PeerKey,
    pub ic_local: Option<PeerKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WarmupConfig {
    pub exchanges: usize,
    /// Share of peers that never answer.
    pub free_rider_fraction: f64,
    /// Size of the requirement universe.
    pub universe: usize,
    /// Probability that a query asks for a given requirement.
    pub query_density: f64,
}

impl Default for WarmupConfig {
    fn default() -> Self {
        Self {
            exchanges: 20_000,
            free_rider_fraction: 0.1,
            universe: 16,
            query_density: 0.25,
        }
    }
}

impl Overlay {
    /// Sets a peer's status. Becoming free after being busy or normal
    /// triggers one exchange with IC_local, which refreshes the AS backup.
    pub fn burst_update(&mut self, key: PeerKey, status: NodeStatus) -> Result<Vec<ExchangeEvent>, OverlayError> {
        let p = self.live(key)?;
        let old = p.status;
        let slot = p.slot;
        self.peer_mut(key).status = status;
        if status == NodeStatus::Free && old != NodeStatus::Free {
            self.refresh_backup(slot);
            return Ok(vec![ExchangeEvent {
                node: key,
                ic_local: self.ases[slot].ics[1],
            }]);
        }
        Ok(Vec::new())
    }

    /// Random query/answer exchanges inside ASs. Each answer is scored by the
    /// best similarity between the query and a file the answerer hosts, SR
    /// values are refreshed as exchanges complete, and ICs are re-elected at
    /// the end. `file_vectors[f]` is the requirement vector of file `f`.
    /// Returns the designated free riders.
    pub fn warmup(
        &mut self,
        cfg: &WarmupConfig,
        file_vectors: &[QueryVector],
        rng: &mut SimRng,
    ) -> BTreeSet<PeerKey> {
        let keys = self.live_keys();
        let riders = ((cfg.free_rider_fraction.clamp(0.0, 1.0) * keys.len() as f64).round() as usize).min(keys.len());
        let free_riders: BTreeSet<PeerKey> = index::sample(rng, keys.len(), riders)
            .into_iter()
            .map(|i| keys[i])
            .collect();
        if keys.is_empty() {
            return free_riders;
        }
        let alpha = self.params.alpha_sim;
        for _ in 0..cfg.exchanges {
            let from = keys[rng.gen_range(0..keys.len())];
            let slot = self.peer(from).unwrap().slot;
            let members = self.ases[slot].members.clone();
            if members.len() < 2 {
                continue;
            }
            let mut to = members[rng.gen_range(0..members.len() - 1)];
            if to == from {
                to = *members.last().unwrap();
            }
            let q = QueryVector::random(cfg.universe, cfg.query_density, rng);
            let duration: f64 = rng.gen_range(0.5..1.5);
            let best = if free_riders.contains(&to) {
                None
            } else {
                self.peer(to)
                    .unwrap()
                    .files
                    .iter()
                    .filter_map(|&f| file_vectors.get(f as usize))
                    .filter_map(|v| query_similarity(&q, v).ok())
                    .max_by(f64::total_cmp)
            };
            match best {
                Some(sim) => self.history.record_exchange(from, to, sim, duration),
                None => self.history.record_unanswered(from, to, duration),
            }
            self.clock += duration;
            let sr = {
                let coords = |k: PeerKey| self.coord(k);
                source_rank(to, &members, &self.history, &coords, alpha)
            };
            let clock = self.clock;
            let p = self.peer_mut(to);
            p.sr.sr = sr;
            p.sr.last_updated = clock;
        }
        self.reelect_all();
        free_riders
    }
}
