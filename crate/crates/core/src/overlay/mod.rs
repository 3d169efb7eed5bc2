//! The overlay itself: ASs of at most `d + 3` peers, each headed by three
//! information centers (ICs), arranged in levels and layers.

mod activity;
pub mod id;
mod join;
pub mod lattice;
mod leave;
pub mod snapshot;
pub mod structure;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{distance, Coordinate, FileIndex, PeerKey};
use crate::ranking::{ExchangeHistory, SrRecord};
use crate::topology::Graph;

pub use activity::{ExchangeEvent, WarmupConfig};
pub use id::NodeId;
pub use join::JoinOutcome;
pub use lattice::{AsId, Lattice};
pub use leave::{BackupSource, FullRecovery, LeaveOutcome, RecoveryReport};
pub use snapshot::{check_snapshot, OverlaySnapshot};
pub use structure::{threshold_distance, StructureReport};

#[derive(Debug, Error, PartialEq)]
pub enum OverlayError {
    #[error("id field {field} = {value} does not fit in 32 bits")]
    IdFieldOverflow { field: &'static str, value: u64 },
    #[error("peer {0} is not live")]
    NotLive(PeerKey),
    #[error("peer {0} is already live")]
    AlreadyLive(PeerKey),
    #[error("no live AS {0}")]
    UnknownAs(AsId),
    #[error("every IC role is vacant in one of the ASs")]
    AllRolesVacant,
    #[error("invalid overlay parameters: {0}")]
    InvalidParams(String),
    #[error("overlay needs at least one peer")]
    NoPeers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverlayParams {
    /// Fan-out `d`: NNs per AS and links per IC direction.
    pub d: u32,
    /// Per-level AS capacities `AN_j`; the last entry repeats. `None` means
    /// `d^(j+1)`.
    pub level_capacity: Option<Vec<u64>>,
    /// Hard cap on levels per layer. `None` lets height balancing decide.
    pub max_levels_per_layer: Option<u32>,
    /// Threshold-distance weights in the order local, level, layer.
    pub ic_weights: [f64; 3],
    pub alpha_sim: f64,
    pub load_factor: f64,
}

impl Default for OverlayParams {
    fn default() -> Self {
        Self {
            d: 2,
            level_capacity: None,
            max_levels_per_layer: None,
            ic_weights: [1.0, 1.0, 1.0],
            alpha_sim: 2.0,
            load_factor: 0.1,
        }
    }
}

impl OverlayParams {
    pub fn with_d(d: u32) -> Self {
        Self {
            d,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), OverlayError> {
        let bad = |m: String| Err(OverlayError::InvalidParams(m));
        if self.d < 2 {
            return bad(format!("d must be at least 2, got {}", self.d));
        }
        if let Some(c) = &self.level_capacity {
            if c.is_empty() || c.contains(&0) {
                return bad("level capacities must be non-empty and positive".into());
            }
        }
        if self.max_levels_per_layer == Some(0) {
            return bad("max_levels_per_layer must be positive".into());
        }
        if self.ic_weights.iter().any(|w| !w.is_finite() || *w < 0.0) || self.ic_weights.iter().sum::<f64>() <= 0.0 {
            return bad("ic weights must be non-negative with a positive sum".into());
        }
        if !(self.alpha_sim >= 1.0 && self.alpha_sim.is_finite()) {
            return bad(format!("alpha_sim must be >= 1, got {}", self.alpha_sim));
        }
        if !(self.load_factor >= 0.0 && self.load_factor.is_finite()) {
            return bad(format!("load_factor must be >= 0, got {}", self.load_factor));
        }
        Ok(())
    }

    pub fn max_as_size(&self) -> usize {
        self.d as usize + 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Nn,
    IcLocal,
    IcLevel,
    IcLayer,
}

/// IC roles in election priority order.
pub const IC_PRIORITY: [Role; 3] = [Role::IcLevel, Role::IcLocal, Role::IcLayer];

fn role_slot(role: Role) -> Option<usize> {
    IC_PRIORITY.iter().position(|&r| r == role)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Free,
    Busy,
    Normal,
}

/// What a peer brings when it enters the overlay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewPeer {
    pub key: PeerKey,
    pub coord: Coordinate,
    /// Region label standing in for the common IP prefix.
    pub region: u32,
    /// `R_x`: farthest distance at which this peer accepts an AS.
    pub tolerance: f64,
    pub files: Vec<FileIndex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerState {
    pub key: PeerKey,
    pub id: NodeId,
    pub coord: Coordinate,
    pub region: u32,
    pub role: Role,
    pub status: NodeStatus,
    pub sr: SrRecord,
    pub tolerance: f64,
    pub files: Vec<FileIndex>,
    #[serde(skip)]
    slot: usize,
}

/// Replicated per-member data kept by the ICs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub id: NodeId,
    pub region: u32,
    pub sr: f64,
    pub files: Vec<FileIndex>,
    pub status: NodeStatus,
}

pub type BackupTable = BTreeMap<PeerKey, MemberRecord>;

/// Archive of a departed peer, consulted when it comes back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetiredRecord {
    pub last_id: NodeId,
    pub region: u32,
    pub sr: SrRecord,
}

#[derive(Debug, Clone, PartialEq)]
struct AsState {
    members: Vec<PeerKey>,
    /// ICs in `IC_PRIORITY` order.
    ics: [Option<PeerKey>; 3],
    next_node: u32,
    backup: BackupTable,
    /// IC departures waiting their turn, first come first served.
    fafl: VecDeque<PeerKey>,
}

impl AsState {
    fn empty() -> Self {
        Self {
            members: Vec::new(),
            ics: [None; 3],
            next_node: 0,
            backup: BackupTable::new(),
            fafl: VecDeque::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Overlay {
    params: OverlayParams,
    lattice: Lattice,
    ases: Vec<AsState>,
    peers: Vec<Option<PeerState>>,
    retired: BTreeMap<PeerKey, RetiredRecord>,
    history: ExchangeHistory,
    /// Copy of each AS's backup table held by its guardian neighbor.
    replicas: Vec<BackupTable>,
    defunct: Vec<AsId>,
    clock: f64,
}

impl Overlay {
    pub fn new(params: OverlayParams) -> Result<Self, OverlayError> {
        params.validate()?;
        let lattice = Lattice::new(params.d, params.level_capacity.clone(), params.max_levels_per_layer);
        Ok(Self {
            params,
            lattice,
            ases: Vec::new(),
            peers: Vec::new(),
            retired: BTreeMap::new(),
            history: ExchangeHistory::new(),
            replicas: Vec::new(),
            defunct: Vec::new(),
            clock: 0.0,
        })
    }

    /// Initial overlay around the origin node. Peers are grouped by region,
    /// groups are taken in order of their member closest to the origin, and
    /// each group is cut into ASs of `d + 3` in distance order. Every SR starts
    /// at zero, so first elections fall back to the id tie-break.
    pub fn bootstrap(params: OverlayParams, peers: Vec<NewPeer>) -> Result<Self, OverlayError> {
        if peers.is_empty() {
            return Err(OverlayError::NoPeers);
        }
        let mut ov = Self::new(params)?;
        let from_origin = |p: &NewPeer| distance(p.coord, Coordinate::ORIGIN);
        let mut groups: BTreeMap<u32, Vec<NewPeer>> = BTreeMap::new();
        for p in peers {
            groups.entry(p.region).or_default().push(p);
        }
        let mut groups: Vec<Vec<NewPeer>> = groups.into_values().collect();
        for g in &mut groups {
            g.sort_by(|a, b| from_origin(a).total_cmp(&from_origin(b)).then(a.key.cmp(&b.key)));
        }
        groups.sort_by(|a, b| from_origin(&a[0]).total_cmp(&from_origin(&b[0])).then(a[0].key.cmp(&b[0].key)));
        let size = ov.params.max_as_size();
        for g in groups {
            for chunk in g.chunks(size) {
                let slot = ov.open_slot();
                for p in chunk {
                    ov.insert_peer(slot, p.clone(), SrRecord::default())?;
                }
                ov.elect(slot);
            }
        }
        Ok(ov)
    }

    pub fn params(&self) -> &OverlayParams {
        &self.params
    }

    pub fn d(&self) -> u32 {
        self.params.d
    }

    /// `M`: number of live ASs.
    pub fn as_count(&self) -> usize {
        self.ases.len()
    }

    pub fn layer_count(&self) -> u32 {
        self.lattice.layer_count(self.ases.len())
    }

    pub fn levels_per_layer(&self) -> Vec<u32> {
        self.lattice.levels_per_layer(self.ases.len())
    }

    pub fn as_ids(&self) -> Vec<AsId> {
        (0..self.ases.len()).map(|s| self.lattice.slot_id(s)).collect()
    }

    pub fn peer(&self, key: PeerKey) -> Option<&PeerState> {
        self.peers.get(key as usize).and_then(Option::as_ref)
    }

    pub fn is_live(&self, key: PeerKey) -> bool {
        self.peer(key).is_some()
    }

    pub fn live_keys(&self) -> Vec<PeerKey> {
        self.peers.iter().flatten().map(|p| p.key).collect()
    }

    pub fn live_count(&self) -> usize {
        self.peers.iter().flatten().count()
    }

    /// One past the largest key ever seen.
    pub fn key_space(&self) -> usize {
        self.peers.len()
    }

    pub fn as_of(&self, key: PeerKey) -> Option<AsId> {
        self.peer(key).map(|p| self.lattice.slot_id(p.slot))
    }

    pub fn members(&self, as_id: AsId) -> Result<&[PeerKey], OverlayError> {
        Ok(&self.ases[self.slot(as_id)?].members)
    }

    /// ICs of an AS as `[IC_level, IC_local, IC_layer]`.
    pub fn ics(&self, as_id: AsId) -> Result<[Option<PeerKey>; 3], OverlayError> {
        Ok(self.ases[self.slot(as_id)?].ics)
    }

    pub fn ic(&self, as_id: AsId, role: Role) -> Option<PeerKey> {
        let slot = self.slot(as_id).ok()?;
        role_slot(role).and_then(|r| self.ases[slot].ics[r])
    }

    pub fn backup(&self, as_id: AsId) -> Result<&BackupTable, OverlayError> {
        Ok(&self.ases[self.slot(as_id)?].backup)
    }

    pub fn retired(&self, key: PeerKey) -> Option<&RetiredRecord> {
        self.retired.get(&key)
    }

    pub fn history(&self) -> &ExchangeHistory {
        &self.history
    }

    /// ASs that lost every member, in the order they disappeared.
    pub fn defunct(&self) -> &[AsId] {
        &self.defunct
    }

    pub fn find_id(&self, id: NodeId) -> Option<PeerKey> {
        self.peers.iter().flatten().find(|p| p.id == id).map(|p| p.key)
    }

    pub fn coord(&self, key: PeerKey) -> Coordinate {
        self.peer(key).map(|p| p.coord).unwrap_or_default()
    }

    pub fn upper_level(&self, as_id: AsId) -> Option<AsId> {
        let s = self.slot(as_id).ok()?;
        self.lattice.upper_level(s, self.ases.len()).map(|u| self.lattice.slot_id(u))
    }

    pub fn lower_levels(&self, as_id: AsId) -> Vec<AsId> {
        self.slot(as_id)
            .map(|s| self.ids(self.lattice.lower_levels(s, self.ases.len())))
            .unwrap_or_default()
    }

    pub fn upper_layer(&self, as_id: AsId) -> Option<AsId> {
        let s = self.slot(as_id).ok()?;
        self.lattice.upper_layer(s, self.ases.len()).map(|u| self.lattice.slot_id(u))
    }

    pub fn lower_layers(&self, as_id: AsId) -> Vec<AsId> {
        self.slot(as_id)
            .map(|s| self.ids(self.lattice.lower_layers(s, self.ases.len())))
            .unwrap_or_default()
    }

    fn ids(&self, slots: Vec<usize>) -> Vec<AsId> {
        slots.into_iter().map(|s| self.lattice.slot_id(s)).collect()
    }

    fn slot(&self, as_id: AsId) -> Result<usize, OverlayError> {
        self.lattice
            .slot_of(as_id, self.ases.len())
            .ok_or(OverlayError::UnknownAs(as_id))
    }

    fn live(&self, key: PeerKey) -> Result<&PeerState, OverlayError> {
        self.peer(key).ok_or(OverlayError::NotLive(key))
    }

    fn peer_mut(&mut self, key: PeerKey) -> &mut PeerState {
        self.peers[key as usize].as_mut().expect("live peer")
    }

    fn open_slot(&mut self) -> usize {
        let slot = self.ases.len();
        self.lattice.ensure(slot + 1);
        self.ases.push(AsState::empty());
        self.replicas.push(BackupTable::new());
        slot
    }

    fn alloc_id(&mut self, slot: usize) -> NodeId {
        let a = self.lattice.slot_id(slot);
        let t = self.ases[slot].next_node;
        self.ases[slot].next_node += 1;
        NodeId::new(a.layer, a.level, a.index, t)
    }

    fn insert_peer(&mut self, slot: usize, p: NewPeer, sr: SrRecord) -> Result<NodeId, OverlayError> {
        if self.is_live(p.key) {
            return Err(OverlayError::AlreadyLive(p.key));
        }
        let id = self.alloc_id(slot);
        let idx = p.key as usize;
        if self.peers.len() <= idx {
            self.peers.resize(idx + 1, None);
        }
        self.peers[idx] = Some(PeerState {
            key: p.key,
            id,
            coord: p.coord,
            region: p.region,
            role: Role::Nn,
            status: NodeStatus::Normal,
            sr,
            tolerance: p.tolerance,
            files: p.files,
            slot,
        });
        self.ases[slot].members.push(p.key);
        Ok(id)
    }

    /// Moves a live peer to another AS under a fresh id.
    fn transfer(&mut self, key: PeerKey, to: usize) -> NodeId {
        let from = self.peer(key).expect("live peer").slot;
        self.detach(from, key);
        let id = self.alloc_id(to);
        let p = self.peer_mut(key);
        p.id = id;
        p.slot = to;
        p.role = Role::Nn;
        self.ases[to].members.push(key);
        id
    }

    /// Takes `key` out of its AS's member list and IC table.
    fn detach(&mut self, slot: usize, key: PeerKey) {
        let a = &mut self.ases[slot];
        a.members.retain(|&m| m != key);
        for ic in a.ics.iter_mut() {
            if *ic == Some(key) {
                *ic = None;
            }
        }
        a.fafl.retain(|&m| m != key);
    }

    /// Removes a live peer from the overlay and archives its identity and SR.
    fn retire(&mut self, key: PeerKey) -> PeerState {
        let slot = self.peer(key).expect("live peer").slot;
        self.detach(slot, key);
        let p = self.peers[key as usize].take().expect("live peer");
        self.retired.insert(
            key,
            RetiredRecord {
                last_id: p.id,
                region: p.region,
                sr: p.sr,
            },
        );
        p
    }

    /// Ordering used by every election: higher SR first, then smaller id.
    fn rank_order(&self, a: PeerKey, b: PeerKey) -> std::cmp::Ordering {
        let (pa, pb) = (self.peer(a).unwrap(), self.peer(b).unwrap());
        pb.sr.sr.total_cmp(&pa.sr.sr).then(pa.id.cmp(&pb.id))
    }

    fn nns(&self, slot: usize) -> Vec<PeerKey> {
        let a = &self.ases[slot];
        a.members
            .iter()
            .copied()
            .filter(|m| !a.ics.contains(&Some(*m)))
            .collect()
    }

    fn best_nn(&self, slot: usize) -> Option<PeerKey> {
        self.nns(slot).into_iter().min_by(|&a, &b| self.rank_order(a, b))
    }

    /// Fresh election: top three SR values become IC_level, IC_local and
    /// IC_layer.
    fn elect(&mut self, slot: usize) {
        let mut ranked = self.ases[slot].members.clone();
        ranked.sort_by(|&a, &b| self.rank_order(a, b));
        let mut ics = [None; 3];
        for (r, k) in ranked.iter().take(3).enumerate() {
            ics[r] = Some(*k);
        }
        self.ases[slot].ics = ics;
        self.sync_roles(slot);
        self.refresh_backup(slot);
    }

    pub fn reelect_all(&mut self) {
        for s in 0..self.ases.len() {
            self.elect(s);
        }
    }

    /// Fills vacant IC roles in priority order: the best NN is promoted, and
    /// only when no NN is left does a lower-priority IC move up.
    fn repair_roles(&mut self, slot: usize) -> Vec<(Role, PeerKey)> {
        let mut promoted = Vec::new();
        for r in 0..3 {
            if self.ases[slot].ics[r].is_some() {
                continue;
            }
            if let Some(nn) = self.best_nn(slot) {
                self.ases[slot].ics[r] = Some(nn);
                promoted.push((IC_PRIORITY[r], nn));
            } else if let Some(s) = (r + 1..3).find(|&s| self.ases[slot].ics[s].is_some()) {
                let k = self.ases[slot].ics[s].take();
                self.ases[slot].ics[r] = k;
                promoted.push((IC_PRIORITY[r], k.unwrap()));
            }
        }
        self.sync_roles(slot);
        promoted
    }

    fn sync_roles(&mut self, slot: usize) {
        let a = self.ases[slot].clone();
        for &m in &a.members {
            let role = a
                .ics
                .iter()
                .position(|&ic| ic == Some(m))
                .map_or(Role::Nn, |r| IC_PRIORITY[r]);
            self.peer_mut(m).role = role;
        }
    }

    /// Rebuilds an AS's backup table from its members and pushes the copy
    /// to its guardian.
    fn refresh_backup(&mut self, slot: usize) {
        let backup: BackupTable = self.ases[slot]
            .members
            .iter()
            .map(|&m| {
                let p = self.peer(m).unwrap();
                (
                    m,
                    MemberRecord {
                        id: p.id,
                        region: p.region,
                        sr: p.sr.sr,
                        files: p.files.clone(),
                        status: p.status,
                    },
                )
            })
            .collect();
        self.replicas[slot] = backup.clone();
        self.ases[slot].backup = backup;
    }

    /// Drops emptied ASs. The last AS moves into each hole so live ASs keep
    /// filling a prefix of the slot order; its members are re-identified.
    fn compact(&mut self) {
        let mut empty: Vec<usize> = (0..self.ases.len())
            .filter(|&s| self.ases[s].members.is_empty())
            .collect();
        empty.reverse();
        for hole in empty {
            let last = self.ases.len() - 1;
            self.ases.swap(hole, last);
            self.replicas.swap(hole, last);
            self.ases.pop();
            self.replicas.pop();
            if hole != last {
                self.reidentify(hole);
            }
        }
    }

    fn reidentify(&mut self, slot: usize) {
        let a = self.lattice.slot_id(slot);
        for m in self.ases[slot].members.clone() {
            let p = self.peer_mut(m);
            let (_, _, _, t) = p.id.decode();
            p.id = NodeId::new(a.layer, a.level, a.index, t);
            p.slot = slot;
        }
        self.refresh_backup(slot);
    }

    /// Weighted mean distance from `at` to the ICs of an AS, over the roles
    /// in `roles` (ordered local, level, layer) that the AS has filled.
    fn ic_distance(&self, slot: usize, at: Coordinate, weights: [f64; 3]) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for (w, role) in weights.iter().zip([Role::IcLocal, Role::IcLevel, Role::IcLayer]) {
            let r = role_slot(role).unwrap();
            if let Some(k) = self.ases[slot].ics[r] {
                if *w > 0.0 {
                    num += w * distance(at, self.coord(k));
                    den += w;
                }
            }
        }
        (den > 0.0).then(|| num / den)
    }

    /// `D_avg`: plain mean distance from `at` to the AS's present ICs.
    pub fn d_avg(&self, as_id: AsId, at: Coordinate) -> Option<f64> {
        self.ic_distance(self.slot(as_id).ok()?, at, [1.0; 3])
    }

    /// Undirected graph of the overlay: NN to IC_local, the IC triangle,
    /// IC_level to the IC_level one level up, IC_layer to the IC_layer one
    /// layer up. Every IC answers for the members of its AS, and an IC_level
    /// also for the members of the ASs one level below it.
    pub fn as_graph(&self) -> Graph {
        let mut g = Graph::with_live(self.peers.len(), self.live_keys());
        let m = self.ases.len();
        for (s, a) in self.ases.iter().enumerate() {
            let [level, local, layer] = a.ics;
            let present: Vec<PeerKey> = a.ics.iter().flatten().copied().collect();
            for i in 0..present.len() {
                for j in i + 1..present.len() {
                    g.add_edge(present[i], present[j]);
                }
            }
            if let Some(l) = local {
                for nn in self.nns(s) {
                    g.add_edge(nn, l);
                }
            }
            if let (Some(lv), Some(u)) = (level, self.lattice.upper_level(s, m)) {
                if let Some(ul) = self.ases[u].ics[0] {
                    g.add_edge(lv, ul);
                }
            }
            if let (Some(ly), Some(u)) = (layer, self.lattice.upper_layer(s, m)) {
                if let Some(ul) = self.ases[u].ics[2] {
                    g.add_edge(ly, ul);
                }
            }
            for &ic in &present {
                let mut covered = a.members.clone();
                if Some(ic) == level {
                    for c in self.lattice.lower_levels(s, m) {
                        covered.extend(&self.ases[c].members);
                    }
                }
                g.set_covers(ic, covered);
            }
        }
        g
    }
}
