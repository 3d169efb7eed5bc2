//! JSON snapshot of an overlay and a structural checker that works on the
//! snapshot alone, so saved or hand-edited files can be verified.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::structure::{degree_bound, height_within_bound, StructureReport};
use super::{NodeId, NodeStatus, Overlay, Role};
use crate::kernel::PeerKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotNode {
    pub key: PeerKey,
    /// 32 hex digits.
    pub id: NodeId,
    pub layer: u32,
    pub level: u32,
    pub as_index: u32,
    pub node_index: u32,
    pub role: Role,
    pub status: NodeStatus,
    pub sr: f64,
    pub x: f64,
    pub y: f64,
    pub region: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotAs {
    pub layer: u32,
    pub level: u32,
    pub index: u32,
    pub members: Vec<PeerKey>,
    pub ic_level: Option<PeerKey>,
    pub ic_local: Option<PeerKey>,
    pub ic_layer: Option<PeerKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlaySnapshot {
    pub d: u32,
    pub nodes: Vec<SnapshotNode>,
    pub edges: Vec<[PeerKey; 2]>,
    pub ases: Vec<SnapshotAs>,
}

impl OverlaySnapshot {
    pub fn capture(ov: &Overlay) -> Self {
        let nodes = ov
            .peers
            .iter()
            .flatten()
            .map(|p| {
                let (layer, level, as_index, node_index) = p.id.decode();
                SnapshotNode {
                    key: p.key,
                    id: p.id,
                    layer,
                    level,
                    as_index,
                    node_index,
                    role: p.role,
                    status: p.status,
                    sr: p.sr.sr,
                    x: p.coord.x,
                    y: p.coord.y,
                    region: p.region,
                }
            })
            .collect();
        let edges = ov.as_graph().edges().map(|(a, b)| [a, b]).collect();
        let ases = ov
            .ases
            .iter()
            .enumerate()
            .map(|(s, a)| {
                let id = ov.lattice.slot_id(s);
                SnapshotAs {
                    layer: id.layer,
                    level: id.level,
                    index: id.index,
                    members: a.members.clone(),
                    ic_level: a.ics[0],
                    ic_local: a.ics[1],
                    ic_layer: a.ics[2],
                }
            })
            .collect();
        Self {
            d: ov.d(),
            nodes,
            edges,
            ases,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Degree bounds per role, AS size, IC table consistency, membership
/// partition, id uniqueness and both height bounds.
pub fn check_snapshot(snap: &OverlaySnapshot) -> StructureReport {
    let d = snap.d;
    let mut v = Vec::new();
    let nodes: BTreeMap<PeerKey, &SnapshotNode> = snap.nodes.iter().map(|n| (n.key, n)).collect();
    if nodes.len() != snap.nodes.len() {
        v.push("duplicate node keys".to_string());
    }

    let mut degree: BTreeMap<PeerKey, usize> = nodes.keys().map(|&k| (k, 0)).collect();
    let mut seen_edges = BTreeSet::new();
    for &[a, b] in &snap.edges {
        if a == b {
            v.push(format!("self-loop on {a}"));
            continue;
        }
        if !seen_edges.insert((a.min(b), a.max(b))) {
            v.push(format!("duplicate edge {a}-{b}"));
            continue;
        }
        for k in [a, b] {
            match degree.get_mut(&k) {
                Some(c) => *c += 1,
                None => v.push(format!("edge endpoint {k} is not a live node")),
            }
        }
    }
    let global = d as usize + 4;
    for (&k, &deg) in &degree {
        let n = nodes[&k];
        let bound = degree_bound(n.role, d);
        if deg > bound || deg > global {
            v.push(format!("node {} ({:?}) has degree {deg} > {}", n.id, n.role, bound.min(global)));
        }
    }
    let max_degree = degree.values().copied().max().unwrap_or(0);

    let mut owner: BTreeMap<PeerKey, usize> = BTreeMap::new();
    for (i, a) in snap.ases.iter().enumerate() {
        let label = format!("AS[{}/{}/{}]", a.layer, a.level, a.index);
        if a.members.is_empty() || a.members.len() > d as usize + 3 {
            v.push(format!("{label} has {} members", a.members.len()));
        }
        for &m in &a.members {
            if owner.insert(m, i).is_some() {
                v.push(format!("node {m} belongs to two ASs"));
            }
            match nodes.get(&m) {
                Some(n) if (n.layer, n.level, n.as_index) != (a.layer, a.level, a.index) => {
                    v.push(format!("node {} carries an id outside {label}", n.id))
                }
                None => v.push(format!("{label} lists unknown node {m}")),
                _ => {}
            }
        }
        let ics = [a.ic_level, a.ic_local, a.ic_layer];
        let present: Vec<PeerKey> = ics.iter().flatten().copied().collect();
        if present.iter().collect::<BTreeSet<_>>().len() != present.len() {
            v.push(format!("{label} has one peer in two IC roles"));
        }
        if present.iter().any(|k| !a.members.contains(k)) {
            v.push(format!("{label} has an IC outside its members"));
        }
        let filled_prefix = ics.iter().take_while(|k| k.is_some()).count();
        if filled_prefix != present.len() || present.len() != a.members.len().min(3) {
            v.push(format!("{label} leaves an IC role vacant out of priority order"));
        }
        for (role, ic) in [Role::IcLevel, Role::IcLocal, Role::IcLayer].into_iter().zip(ics) {
            if let Some(n) = ic.and_then(|k| nodes.get(&k)) {
                if n.role != role {
                    v.push(format!("node {} listed as {role:?} but marked {:?}", n.id, n.role));
                }
            }
        }
    }
    for (&k, n) in &nodes {
        if !owner.contains_key(&k) {
            v.push(format!("node {} belongs to no AS", n.id));
        }
    }
    let ids: BTreeSet<NodeId> = snap.nodes.iter().map(|n| n.id).collect();
    if ids.len() != snap.nodes.len() {
        v.push("node ids are not unique".to_string());
    }

    let m = snap.ases.len();
    let layer_count = snap.ases.iter().map(|a| a.layer + 1).max().unwrap_or(0);
    let mut levels_per_layer = vec![0u32; layer_count as usize];
    for a in &snap.ases {
        let l = &mut levels_per_layer[a.layer as usize];
        *l = (*l).max(a.level + 1);
    }
    if m >= d as usize {
        if !height_within_bound(layer_count, m, d) {
            v.push(format!("{layer_count} layers for M = {m}, d = {d}"));
        }
        let levels = levels_per_layer.iter().copied().max().unwrap_or(0);
        if !height_within_bound(levels, m, d) {
            v.push(format!("{levels} levels in a layer for M = {m}, d = {d}"));
        }
    }

    StructureReport {
        d,
        max_degree,
        as_count: m,
        layer_count,
        levels_per_layer,
        violations: v,
    }
}
