use serde::{Deserialize, Serialize};

use super::snapshot::{check_snapshot, OverlaySnapshot};
use super::{AsId, Overlay, OverlayError, Role};
use crate::kernel::distance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub d: u32,
    pub max_degree: usize,
    /// `M`: live AS count.
    pub as_count: usize,
    pub layer_count: u32,
    pub levels_per_layer: Vec<u32>,
    pub violations: Vec<String>,
}

impl StructureReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Degree allowed for a role: NN 1, IC_local `d+2`, IC_level `d+3`,
/// IC_layer `d+4`.
pub fn degree_bound(role: Role, d: u32) -> usize {
    d as usize
        + match role {
            Role::Nn => return 1,
            Role::IcLocal => 2,
            Role::IcLevel => 3,
            Role::IcLayer => 4,
        }
}

/// Strict height bound `H < log_d(M) + 1`, evaluated exactly as
/// `d^(H-1) < M`.
pub fn height_within_bound(height: u32, as_count: usize, d: u32) -> bool {
    if height == 0 {
        return true;
    }
    let mut p: u128 = 1;
    for _ in 1..height {
        p = p.saturating_mul(u128::from(d));
        if p >= as_count as u128 {
            return false;
        }
    }
    p < as_count as u128
}

/// Weighted mean of per-role IC distances, roles ordered local, level,
/// layer. Roles given as `None` (vacant in either AS) are left out.
pub fn threshold_distance(dists: [Option<f64>; 3], weights: [f64; 3]) -> Result<f64, OverlayError> {
    let (num, den) = dists
        .iter()
        .zip(weights)
        .filter_map(|(d, w)| d.map(|d| (d * w, w)))
        .fold((0.0, 0.0), |(n, s), (dw, w)| (n + dw, s + w));
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(OverlayError::AllRolesVacant)
    }
}

impl Overlay {
    /// Threshold distance between two live ASs.
    pub fn t_dist(&self, a: AsId, b: AsId) -> Result<f64, OverlayError> {
        let dists = [Role::IcLocal, Role::IcLevel, Role::IcLayer].map(|r| {
            let (x, y) = (self.ic(a, r)?, self.ic(b, r)?);
            Some(distance(self.coord(x), self.coord(y)))
        });
        self.slot(a)?;
        self.slot(b)?;
        threshold_distance(dists, self.params.ic_weights)
    }

    pub fn check_structure(&self) -> StructureReport {
        let snap = OverlaySnapshot::capture(self);
        let mut report = check_snapshot(&snap);
        let live = self.live_count();
        let placed: usize = self.ases.iter().map(|a| a.members.len()).sum();
        if placed != live {
            report
                .violations
                .push(format!("{placed} AS memberships for {live} live peers"));
        }
        for (s, a) in self.ases.iter().enumerate() {
            for &m in &a.members {
                if self.peer(m).map(|p| p.slot) != Some(s) {
                    report
                        .violations
                        .push(format!("peer {m} listed in {} but placed elsewhere", self.lattice.slot_id(s)));
                }
            }
        }
        report
    }
}
