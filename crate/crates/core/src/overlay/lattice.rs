//! Placement order of AS slots over layers and levels, and the inter-AS
//! links implied by slot positions.
//!
//! Inside a layer, level `j` holds at most `AN_j` ASs (default `d^(j+1)`).
//! AS `k` of level `j > 0` hangs below AS `k / d` of level `j - 1`. Positions
//! in a layer run level by level; the AS at position `p` of layer `i` hangs
//! below position `p / d` of layer `i + 1`. Level-0 ASs of the top layer are
//! chained to each other through their layer links, which keeps the lattice
//! connected without exceeding `d + 4` links at any IC.
//!
//! Slots are handed out greedily: the next AS goes where the resulting
//! height (max of layer count and levels per layer) is smallest, preferring
//! lower layers and then shallower levels. Live ASs always occupy a prefix
//! of this order, so the shape is a function of the AS count alone.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AsId {
    pub layer: u32,
    pub level: u32,
    pub index: u32,
}

impl std::fmt::Display for AsId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "AS[{}/{}/{}]", self.layer, self.level, self.index)
    }
}

#[derive(Debug, Clone)]
pub struct Lattice {
    d: u32,
    capacities: Option<Vec<u64>>,
    max_levels: Option<u32>,
    order: Vec<AsId>,
    lookup: HashMap<AsId, usize>,
    /// Level occupancy per layer after the last generated slot.
    shape: Vec<Vec<u64>>,
    /// `layers_at[m]`: layer count of the first `m + 1` slots.
    layers_at: Vec<u32>,
}

impl Lattice {
    pub fn new(d: u32, capacities: Option<Vec<u64>>, max_levels: Option<u32>) -> Self {
        assert!(d >= 2, "d must be at least 2");
        Self {
            d,
            capacities: capacities.filter(|c| !c.is_empty()),
            max_levels,
            order: Vec::new(),
            lookup: HashMap::new(),
            shape: Vec::new(),
            layers_at: Vec::new(),
        }
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    /// `AN_j`: AS capacity of level `j`.
    pub fn level_capacity(&self, level: u32) -> u64 {
        match &self.capacities {
            Some(c) => c[(level as usize).min(c.len() - 1)],
            None => u64::from(self.d).saturating_pow(level + 1),
        }
    }

    fn position_offset(&self, level: u32) -> u64 {
        (0..level).fold(0u64, |acc, j| acc.saturating_add(self.level_capacity(j)))
    }

    /// Position of an AS within its layer, counted level by level.
    pub fn layer_position(&self, id: AsId) -> u64 {
        self.position_offset(id.level) + u64::from(id.index)
    }

    fn at_position(&self, layer: u32, pos: u64) -> AsId {
        let mut level = 0;
        let mut start = 0u64;
        loop {
            let cap = self.level_capacity(level);
            if pos < start.saturating_add(cap) {
                return AsId {
                    layer,
                    level,
                    index: (pos - start) as u32,
                };
            }
            start = start.saturating_add(cap);
            level += 1;
        }
    }

    fn height(shape: &[Vec<u64>]) -> usize {
        shape
            .iter()
            .map(Vec::len)
            .max()
            .unwrap_or(0)
            .max(shape.len())
    }

    fn extend_one(&mut self) {
        let mut best: Option<((usize, u32, u32), AsId)> = None;
        for (layer, levels) in self.shape.iter().enumerate() {
            let deepest = levels.len() as u32 - 1;
            let candidate = if levels[deepest as usize] < self.level_capacity(deepest) {
                deepest
            } else if self.max_levels.map_or(true, |l| deepest + 1 < l) {
                deepest + 1
            } else {
                continue;
            };
            let mut trial = self.shape.clone();
            if candidate as usize == trial[layer].len() {
                trial[layer].push(0);
            }
            let key = (Self::height(&trial), layer as u32, candidate);
            let index = if candidate as usize == levels.len() { 0 } else { levels[candidate as usize] as u32 };
            if best.as_ref().map_or(true, |(k, _)| key < *k) {
                best = Some((
                    key,
                    AsId {
                        layer: layer as u32,
                        level: candidate,
                        index,
                    },
                ));
            }
        }
        let new_layer = self.shape.len() as u32;
        let key = (Self::height(&self.shape).max(self.shape.len() + 1), new_layer, 0);
        if best.as_ref().map_or(true, |(k, _)| key < *k) {
            best = Some((
                key,
                AsId {
                    layer: new_layer,
                    level: 0,
                    index: 0,
                },
            ));
        }
        let (_, id) = best.expect("at least the new-layer candidate exists");
        if id.layer as usize == self.shape.len() {
            self.shape.push(Vec::new());
        }
        let levels = &mut self.shape[id.layer as usize];
        if id.level as usize == levels.len() {
            levels.push(0);
        }
        levels[id.level as usize] += 1;
        self.lookup.insert(id, self.order.len());
        self.order.push(id);
        self.layers_at.push(self.shape.len() as u32);
    }

    /// Makes sure the first `m` slots are generated.
    pub fn ensure(&mut self, m: usize) {
        while self.order.len() < m {
            self.extend_one();
        }
    }

    pub fn slot_id(&self, slot: usize) -> AsId {
        self.order[slot]
    }

    /// Slot of an AS id if it is among the first `m` slots.
    pub fn slot_of(&self, id: AsId, m: usize) -> Option<usize> {
        self.lookup.get(&id).copied().filter(|&s| s < m)
    }

    pub fn layer_count(&self, m: usize) -> u32 {
        if m == 0 {
            0
        } else {
            self.layers_at[m - 1]
        }
    }

    /// Number of levels in use per layer for the first `m` slots.
    pub fn levels_per_layer(&self, m: usize) -> Vec<u32> {
        let mut out = vec![0u32; self.layer_count(m) as usize];
        for id in &self.order[..m] {
            let l = &mut out[id.layer as usize];
            *l = (*l).max(id.level + 1);
        }
        out
    }

    pub fn upper_level(&self, slot: usize, m: usize) -> Option<usize> {
        let id = self.order[slot];
        if id.level == 0 {
            return None;
        }
        self.slot_of(
            AsId {
                layer: id.layer,
                level: id.level - 1,
                index: id.index / self.d,
            },
            m,
        )
    }

    pub fn lower_levels(&self, slot: usize, m: usize) -> Vec<usize> {
        let id = self.order[slot];
        (0..self.d)
            .filter_map(|c| {
                let index = u64::from(id.index) * u64::from(self.d) + u64::from(c);
                let index = u32::try_from(index).ok()?;
                self.slot_of(
                    AsId {
                        layer: id.layer,
                        level: id.level + 1,
                        index,
                    },
                    m,
                )
            })
            .collect()
    }

    pub fn upper_layer(&self, slot: usize, m: usize) -> Option<usize> {
        let id = self.order[slot];
        let layers = self.layer_count(m);
        if id.layer + 1 < layers {
            let pos = self.layer_position(id) / u64::from(self.d);
            self.slot_of(self.at_position(id.layer + 1, pos), m)
        } else if id.level == 0 && id.index > 0 {
            self.slot_of(AsId { index: id.index - 1, ..id }, m)
        } else {
            None
        }
    }

    pub fn lower_layers(&self, slot: usize, m: usize) -> Vec<usize> {
        let id = self.order[slot];
        let layers = self.layer_count(m);
        let mut out = Vec::new();
        if id.layer > 0 {
            let base = self.layer_position(id).saturating_mul(u64::from(self.d));
            for c in 0..u64::from(self.d) {
                if let Some(s) = self.slot_of(self.at_position(id.layer - 1, base + c), m) {
                    out.push(s);
                }
            }
        }
        if id.layer + 1 == layers && id.level == 0 {
            if let Some(s) = self.slot_of(AsId { index: id.index + 1, ..id }, m) {
                out.push(s);
            }
        }
        out
    }
}
