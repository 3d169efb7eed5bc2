use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AsId, BackupTable, MemberRecord, NodeId, Overlay, OverlayError, Role};
use crate::kernel::PeerKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaveOutcome {
    pub key: PeerKey,
    pub departed: NodeId,
    pub as_id: AsId,
    pub role: Role,
    /// Holder of the vacated IC role after substitution.
    pub substitute: Option<NodeId>,
    /// Peers told about the substitute (or, for an NN, its IC_local).
    pub notified: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackupSource {
    /// Full copy kept by a level neighbor's IC_level.
    LevelPath,
    /// Identity and SR from a layer neighbor's IC_layer; file lists are
    /// collected again from the surviving members.
    LayerPath,
    /// No neighbor: survivors report their own records.
    Members,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullRecovery {
    pub as_id: AsId,
    pub guardian: Option<AsId>,
    pub source: BackupSource,
    /// New `[IC_level, IC_local, IC_layer]`.
    pub new_ics: [Option<NodeId>; 3],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub crashed: Vec<NodeId>,
    /// ASs that lost some ICs, with the promotions made by the survivors.
    pub partial_recoveries: Vec<(AsId, Vec<(Role, NodeId)>)>,
    pub full_recoveries: Vec<FullRecovery>,
    pub defunct: Vec<AsId>,
    /// ASs moved into the slots freed by defunct ones, `(old, new)`.
    pub relocated: Vec<(AsId, AsId)>,
}

impl Overlay {
    /// Graceful departure of one peer.
    pub fn leave(&mut self, key: PeerKey) -> Result<LeaveOutcome, OverlayError> {
        Ok(self.request_leave(&[key])?.remove(0))
    }

    /// Graceful departure of several peers. IC departures from one AS are
    /// queued and handled one at a time in request order, so an AS never has
    /// two roles vacated by leaving at once.
    pub fn request_leave(&mut self, keys: &[PeerKey]) -> Result<Vec<LeaveOutcome>, OverlayError> {
        let mut seen = BTreeSet::new();
        for &k in keys {
            self.live(k)?;
            if !seen.insert(k) {
                return Err(OverlayError::NotLive(k));
            }
            let p = self.peer(k).unwrap();
            if p.role != Role::Nn {
                let slot = p.slot;
                self.ases[slot].fafl.push_back(k);
            }
        }
        let mut out = Vec::with_capacity(keys.len());
        for &k in keys {
            let slot = self.peer(k).unwrap().slot;
            let next = match self.ases[slot].fafl.front() {
                Some(&front) if front == k => self.ases[slot].fafl.pop_front().unwrap(),
                _ => k,
            };
            out.push(self.depart(next));
        }
        Ok(out)
    }

    fn depart(&mut self, key: PeerKey) -> LeaveOutcome {
        let p = self.peer(key).unwrap().clone();
        let slot = p.slot;
        let as_id = self.lattice.slot_id(slot);
        let mut outcome = LeaveOutcome {
            key,
            departed: p.id,
            as_id,
            role: p.role,
            substitute: None,
            notified: Vec::new(),
        };
        if p.role == Role::Nn {
            let local = self.ases[slot].ics[1];
            self.retire(key);
            outcome.notified = local.map(|k| self.peer(k).unwrap().id).into_iter().collect();
            self.refresh_backup(slot);
            return outcome;
        }
        let r = super::role_slot(p.role).unwrap();
        let substitute = self.best_nn(slot);
        self.retire(key);
        self.ases[slot].ics[r] = substitute;
        self.repair_roles(slot);
        if self.ases[slot].members.is_empty() {
            self.defunct.push(as_id);
            self.compact();
            return outcome;
        }
        self.refresh_backup(slot);
        outcome.substitute = self.ases[slot].ics[r].map(|k| self.peer(k).unwrap().id);
        outcome.notified = self.broadcast_list(slot, p.role);
        outcome
    }

    /// Who learns about a new holder of `role` in AS `slot`.
    fn broadcast_list(&self, slot: usize, role: Role) -> Vec<NodeId> {
        let m = self.ases.len();
        let a = &self.ases[slot];
        let mut keys: Vec<PeerKey> = Vec::new();
        let own = |r: usize| a.ics[r];
        match role {
            Role::IcLevel => {
                keys.extend([own(1), own(2)].into_iter().flatten());
                for c in self.lattice.lower_levels(slot, m) {
                    keys.extend(self.ases[c].ics[0]);
                }
                if let Some(u) = self.lattice.upper_level(slot, m) {
                    keys.extend(self.ases[u].ics[0]);
                }
            }
            Role::IcLocal => {
                keys.extend([own(0), own(2)].into_iter().flatten());
                keys.extend(self.nns(slot));
            }
            Role::IcLayer => {
                keys.extend([own(0), own(1)].into_iter().flatten());
                if let Some(u) = self.lattice.upper_layer(slot, m) {
                    keys.extend(self.ases[u].ics[2]);
                }
                for c in self.lattice.lower_layers(slot, m) {
                    keys.extend(self.ases[c].ics[2]);
                }
            }
            Role::Nn => {}
        }
        keys.into_iter().map(|k| self.peer(k).unwrap().id).collect()
    }

    /// Abnormal departure: every listed peer disappears at once without
    /// notice. Records of crashed peers are kept. Survivors of an AS that
    /// lost only some ICs promote their best NNs. An AS that lost all three
    /// ICs is rebuilt by a guardian neighbor from its replica of the backup
    /// table. An AS with no survivor is dropped.
    pub fn crash(&mut self, keys: &[PeerKey]) -> Result<RecoveryReport, OverlayError> {
        let mut set = BTreeSet::new();
        for &k in keys {
            self.live(k)?;
            set.insert(k);
        }
        let mut report = RecoveryReport::default();
        let mut before: BTreeMap<usize, [Option<PeerKey>; 3]> = BTreeMap::new();
        for &k in &set {
            let slot = self.peer(k).unwrap().slot;
            before.entry(slot).or_insert(self.ases[slot].ics);
        }
        for &k in &set {
            report.crashed.push(self.retire(k).id);
        }
        for (&slot, old) in &before {
            let as_id = self.lattice.slot_id(slot);
            if self.ases[slot].members.is_empty() {
                self.defunct.push(as_id);
                report.defunct.push(as_id);
                continue;
            }
            let lost_all = old.iter().all(|ic| ic.is_some_and(|k| set.contains(&k)));
            if lost_all {
                report.full_recoveries.push(self.recover_full(slot));
            } else if old.iter().flatten().any(|k| set.contains(k)) {
                let promoted = self
                    .repair_roles(slot)
                    .into_iter()
                    .map(|(r, k)| (r, self.peer(k).unwrap().id))
                    .collect();
                self.refresh_backup(slot);
                report.partial_recoveries.push((as_id, promoted));
            } else {
                self.refresh_backup(slot);
            }
        }
        let old_ids = self.as_ids();
        let moved_from: Vec<(usize, AsId)> = (0..self.ases.len())
            .rev()
            .filter(|&s| !self.ases[s].members.is_empty())
            .map(|s| (s, old_ids[s]))
            .collect();
        let first_keys: Vec<Option<PeerKey>> = moved_from
            .iter()
            .map(|&(s, _)| self.ases[s].members.first().copied())
            .collect();
        self.compact();
        for ((_, old), k) in moved_from.into_iter().zip(first_keys) {
            if let Some(new) = k.and_then(|k| self.as_of(k)) {
                if new != old {
                    report.relocated.push((old, new));
                }
            }
        }
        Ok(report)
    }

    /// Guardian preference: level parent, layer parent, first level child,
    /// first layer child.
    fn guardian(&self, slot: usize) -> Option<(usize, BackupSource)> {
        let m = self.ases.len();
        let alive = |s: &usize| !self.ases[*s].members.is_empty();
        self.lattice
            .upper_level(slot, m)
            .filter(alive)
            .map(|s| (s, BackupSource::LevelPath))
            .or_else(|| {
                self.lattice
                    .upper_layer(slot, m)
                    .filter(alive)
                    .map(|s| (s, BackupSource::LayerPath))
            })
            .or_else(|| {
                self.lattice
                    .lower_levels(slot, m)
                    .into_iter()
                    .find(alive)
                    .map(|s| (s, BackupSource::LevelPath))
            })
            .or_else(|| {
                self.lattice
                    .lower_layers(slot, m)
                    .into_iter()
                    .find(alive)
                    .map(|s| (s, BackupSource::LayerPath))
            })
    }

    fn recover_full(&mut self, slot: usize) -> FullRecovery {
        let as_id = self.lattice.slot_id(slot);
        let guardian = self.guardian(slot);
        let source = guardian.map_or(BackupSource::Members, |(_, src)| src);
        let survivors = self.ases[slot].members.clone();
        let replica = &self.replicas[slot];
        let restored: BackupTable = survivors
            .iter()
            .map(|&k| {
                let live = self.peer(k).unwrap();
                let rec = match (source, replica.get(&k)) {
                    (BackupSource::LevelPath, Some(r)) => r.clone(),
                    (BackupSource::LayerPath, Some(r)) => MemberRecord {
                        files: live.files.clone(),
                        ..r.clone()
                    },
                    _ => MemberRecord {
                        id: live.id,
                        region: live.region,
                        sr: live.sr.sr,
                        files: live.files.clone(),
                        status: live.status,
                    },
                };
                (k, rec)
            })
            .collect();
        // New IC_level is the best NN; it appoints the other two the same way.
        self.ases[slot].ics = [None; 3];
        self.repair_roles(slot);
        self.replicas[slot] = restored.clone();
        self.ases[slot].backup = restored;
        let ics = self.ases[slot].ics;
        FullRecovery {
            as_id,
            guardian: guardian.map(|(s, _)| self.lattice.slot_id(s)),
            source,
            new_ics: ics.map(|k| k.map(|k| self.peer(k).unwrap().id)),
        }
    }
}
