use serde::{Deserialize, Serialize};

use super::{AsId, NewPeer, NodeId, Overlay, OverlayError, Role};
use crate::kernel::{distance, Coordinate, PeerKey};
use crate::ranking::{min_ef, SrRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum JoinOutcome {
    /// Placed in the nearest candidate AS, or in a freshly opened one.
    Accepted { as_id: AsId, id: NodeId },
    /// Placed in a candidate other than the nearest.
    Redirected { as_id: AsId, id: NodeId },
    /// The chosen AS lies beyond the threshold distance from the nearest AS.
    RejectedWhitewasher { target: AsId, nearest: AsId },
    /// Placed in a full AS after one member made room. A dropped free rider
    /// leaves the overlay; a displaced far member is moved to `relocated`.
    DroppedExisting {
        as_id: AsId,
        id: NodeId,
        dropped: PeerKey,
        relocated: Option<AsId>,
    },
}

impl JoinOutcome {
    pub fn placed(&self) -> Option<(AsId, NodeId)> {
        match *self {
            JoinOutcome::Accepted { as_id, id }
            | JoinOutcome::Redirected { as_id, id }
            | JoinOutcome::DroppedExisting { as_id, id, .. } => Some((as_id, id)),
            JoinOutcome::RejectedWhitewasher { .. } => None,
        }
    }
}

enum Admission {
    Room(NodeId),
    FreeRider(NodeId, PeerKey),
    Displaced(NodeId, PeerKey, usize),
}

impl Overlay {
    /// Admits a newcomer. Candidates are ASs holding a member of the same
    /// region within the newcomer's tolerance radius, visited by increasing
    /// mean distance to their ICs. A full AS makes room by dropping a free
    /// rider, or by moving out its farthest NN when that one is farther from
    /// the ICs than the newcomer. Without any candidate the newcomer opens a
    /// new AS. A returning peer resumes its archived SR.
    pub fn join(&mut self, p: NewPeer) -> Result<JoinOutcome, OverlayError> {
        if self.is_live(p.key) {
            return Err(OverlayError::AlreadyLive(p.key));
        }
        let sr = self.resumed_sr(p.key);
        if self.ases.is_empty() {
            return self.seed(p, sr);
        }
        let candidates = self.candidates(&p);
        for (i, s) in candidates.into_iter().enumerate() {
            if let Some(adm) = self.admit(s, p.clone(), sr)? {
                return Ok(self.outcome(s, adm, i == 0));
            }
        }
        self.seed(p, sr)
    }

    /// A join aimed at one specific AS, as a whitewasher would attempt. Unless
    /// the target is the AS nearest to the newcomer, the newcomer's distance
    /// to the target may not exceed the threshold distance between the target
    /// and that nearest AS. An accepted target is tried first and the
    /// ordinary procedure takes over if it cannot make room.
    pub fn join_targeted(&mut self, p: NewPeer, target: AsId) -> Result<JoinOutcome, OverlayError> {
        if self.is_live(p.key) {
            return Err(OverlayError::AlreadyLive(p.key));
        }
        let s = self.slot(target)?;
        let nearest = self.nearest_slot(p.coord).expect("target exists");
        if !self.within_threshold(p.coord, s, nearest) {
            return Ok(self.rejection(s, nearest));
        }
        let sr = self.resumed_sr(p.key);
        match self.admit(s, p.clone(), sr)? {
            Some(adm) => Ok(self.outcome(s, adm, true)),
            None => self.join(p),
        }
    }

    fn resumed_sr(&self, key: PeerKey) -> SrRecord {
        self.retired.get(&key).map(|r| r.sr).unwrap_or_default()
    }

    fn rejection(&self, s: usize, nearest: usize) -> JoinOutcome {
        JoinOutcome::RejectedWhitewasher {
            target: self.lattice.slot_id(s),
            nearest: self.lattice.slot_id(nearest),
        }
    }

    fn outcome(&self, s: usize, adm: Admission, first: bool) -> JoinOutcome {
        let as_id = self.lattice.slot_id(s);
        match adm {
            Admission::Room(id) if first => JoinOutcome::Accepted { as_id, id },
            Admission::Room(id) => JoinOutcome::Redirected { as_id, id },
            Admission::FreeRider(id, dropped) => JoinOutcome::DroppedExisting {
                as_id,
                id,
                dropped,
                relocated: None,
            },
            Admission::Displaced(id, dropped, to) => JoinOutcome::DroppedExisting {
                as_id,
                id,
                dropped,
                relocated: Some(self.lattice.slot_id(to)),
            },
        }
    }

    fn seed(&mut self, p: NewPeer, sr: SrRecord) -> Result<JoinOutcome, OverlayError> {
        let s = self.open_slot();
        let id = self.insert_peer(s, p, sr)?;
        self.repair_roles(s);
        self.refresh_backup(s);
        Ok(JoinOutcome::Accepted {
            as_id: self.lattice.slot_id(s),
            id,
        })
    }

    fn nearest_slot(&self, at: Coordinate) -> Option<usize> {
        (0..self.ases.len())
            .filter_map(|s| Some((s, self.ic_distance(s, at, [1.0; 3])?)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(s, _)| s)
    }

    fn candidates(&self, p: &NewPeer) -> Vec<usize> {
        let mut c: Vec<(usize, f64)> = (0..self.ases.len())
            .filter(|&s| {
                self.ases[s].members.iter().any(|&m| {
                    let q = self.peer(m).unwrap();
                    q.region == p.region && distance(q.coord, p.coord) <= p.tolerance
                })
            })
            .filter_map(|s| Some((s, self.ic_distance(s, p.coord, [1.0; 3])?)))
            .collect();
        c.sort_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then_with(|| self.lattice.slot_id(a.0).cmp(&self.lattice.slot_id(b.0)))
        });
        c.into_iter().map(|(s, _)| s).collect()
    }

    /// Whitewasher test, both sides weighted per IC role and restricted to
    /// roles filled in both ASs.
    fn within_threshold(&self, at: Coordinate, target: usize, nearest: usize) -> bool {
        if target == nearest {
            return true;
        }
        let (mut to_target, mut t_dist) = (0.0, 0.0);
        for (w, role) in self.params.ic_weights.iter().zip([Role::IcLocal, Role::IcLevel, Role::IcLayer]) {
            let r = super::role_slot(role).unwrap();
            if let (Some(a), Some(b)) = (self.ases[target].ics[r], self.ases[nearest].ics[r]) {
                to_target += w * distance(at, self.coord(a));
                t_dist += w * distance(self.coord(a), self.coord(b));
            }
        }
        to_target <= t_dist
    }

    fn admit(&mut self, s: usize, p: NewPeer, sr: SrRecord) -> Result<Option<Admission>, OverlayError> {
        let adm = if self.ases[s].members.len() < self.params.max_as_size() {
            Admission::Room(self.insert_peer(s, p, sr)?)
        } else if let Some(fr) = self.free_rider(s) {
            self.retire(fr);
            Admission::FreeRider(self.insert_peer(s, p, sr)?, fr)
        } else if let Some(far) = self.displaceable(s, p.coord) {
            let to = self.relocation_target(s, far);
            self.transfer(far, to);
            self.repair_roles(to);
            self.refresh_backup(to);
            Admission::Displaced(self.insert_peer(s, p, sr)?, far, to)
        } else {
            return Ok(None);
        };
        self.repair_roles(s);
        self.refresh_backup(s);
        Ok(Some(adm))
    }

    /// The NN with the lowest SR, if it falls below the AS threshold.
    fn free_rider(&self, s: usize) -> Option<PeerKey> {
        let srs: Vec<f64> = self.ases[s]
            .members
            .iter()
            .map(|&m| self.peer(m).unwrap().sr.sr)
            .collect();
        let threshold = min_ef(&srs, self.params.load_factor);
        self.nns(s)
            .into_iter()
            .filter(|&m| self.peer(m).unwrap().sr.sr < threshold)
            .max_by(|&a, &b| self.rank_order(a, b))
    }

    /// The NN farthest from the AS's ICs, if it is farther than `at`.
    fn displaceable(&self, s: usize, at: Coordinate) -> Option<PeerKey> {
        let own = self.ic_distance(s, at, [1.0; 3])?;
        let (far, dist) = self
            .nns(s)
            .into_iter()
            .map(|m| (m, self.ic_distance(s, self.coord(m), [1.0; 3]).unwrap()))
            .max_by(|a, b| {
                a.1.total_cmp(&b.1)
                    .then_with(|| self.peer(b.0).unwrap().id.cmp(&self.peer(a.0).unwrap().id))
            })?;
        (dist > own).then_some(far)
    }

    /// Nearest other AS with room for a displaced member, else a new AS.
    fn relocation_target(&mut self, from: usize, key: PeerKey) -> usize {
        let at = self.coord(key);
        let cap = self.params.max_as_size();
        let best = (0..self.ases.len())
            .filter(|&s| s != from && self.ases[s].members.len() < cap)
            .filter_map(|s| Some((s, self.ic_distance(s, at, [1.0; 3])?)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        match best {
            Some((s, _)) => s,
            None => self.open_slot(),
        }
    }
}
