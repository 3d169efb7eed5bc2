use rand::seq::SliceRandom;
use rand::Rng;

use super::{Graph, TopologyError};
use crate::kernel::{PeerKey, SimRng};

/// Target degree of the rank-`i` node (1-based): `max(1, round(ω / i^α))`.
pub fn rtpl_target(rank: usize, omega: f64, alpha: f64) -> usize {
    ((omega / (rank as f64).powf(alpha)).round() as usize).max(1)
}

/// Random graph whose `i`-th most connected node aims for `ω / i^α`
/// neighbors. Node `k` holds rank `k + 1`. Stubs are paired at random;
/// self-loops and repeated pairs are rejected and their stubs reshuffled a
/// few times before being given up. Components are then bridged.
pub fn gen_rtpl(n: usize, omega: f64, alpha: f64, rng: &mut SimRng) -> Result<Graph, TopologyError> {
    if n < 2 {
        return Err(TopologyError::TooFewNodes { needed: 2, got: n });
    }
    if !(omega > 0.0 && omega.is_finite() && alpha >= 0.0 && alpha.is_finite()) {
        return Err(TopologyError::InvalidParameter(format!("omega = {omega}, alpha = {alpha}")));
    }
    let targets: Vec<usize> = (1..=n).map(|i| rtpl_target(i, omega, alpha)).collect();
    if targets[0] > n - 1 {
        return Err(TopologyError::InfeasibleDegree {
            degree: targets[0],
            nodes: n,
        });
    }
    let mut stubs: Vec<PeerKey> = targets
        .iter()
        .enumerate()
        .flat_map(|(k, &t)| std::iter::repeat(k as PeerKey).take(t))
        .collect();
    if stubs.len() % 2 == 1 {
        stubs.pop();
    }
    let mut g = Graph::new(n);
    for _ in 0..8 {
        if stubs.len() < 2 {
            break;
        }
        stubs.shuffle(rng);
        let mut left = Vec::new();
        for pair in stubs.chunks(2) {
            if pair.len() < 2 || !g.add_edge(pair[0], pair[1]) {
                left.extend_from_slice(pair);
            }
        }
        stubs = left;
    }
    bridge(&mut g, &targets, rng);
    Ok(g)
}

/// Merges components one at a time, largest first. Each newcomer attaches to
/// a node already merged, drawn in proportion to its target degree, so the
/// extra edges scale with the targets and the rank-degree shape survives.
fn bridge(g: &mut Graph, targets: &[usize], rng: &mut SimRng) {
    let mut comps = g.components();
    if comps.len() <= 1 {
        return;
    }
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    let mut merged: Vec<PeerKey> = Vec::new();
    let mut cum: Vec<f64> = Vec::new();
    let mut total = 0.0;
    let mut absorb = |c: &[PeerKey], merged: &mut Vec<PeerKey>, cum: &mut Vec<f64>| {
        for &k in c {
            total += targets[k as usize] as f64;
            merged.push(k);
            cum.push(total);
        }
    };
    absorb(&comps[0], &mut merged, &mut cum);
    for c in &comps[1..] {
        let x = rng.gen_range(0.0..*cum.last().unwrap());
        let b = merged[cum.partition_point(|&w| w <= x)];
        let a = c[rng.gen_range(0..c.len())];
        g.add_edge(a, b);
        absorb(c, &mut merged, &mut cum);
    }
}

/// Least-squares slope of `ln(degree)` against `ln(rank)` over the ranks
/// whose target degree is at least 4; below that, connectivity repair and
/// rounding flatten the curve.
pub fn power_law_slope(g: &Graph, omega: f64, alpha: f64) -> f64 {
    let mut degs: Vec<usize> = g.live_nodes().map(|k| g.degree(k)).collect();
    degs.sort_unstable_by(|a, b| b.cmp(a));
    let pts: Vec<(f64, f64)> = degs
        .iter()
        .enumerate()
        .filter(|(i, &d)| d > 0 && omega / ((i + 1) as f64).powf(alpha) >= 4.0)
        .map(|(i, &d)| (((i + 1) as f64).ln(), (d as f64).ln()))
        .collect();
    slope(&pts)
}

pub(crate) fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::make_rng;

    #[test]
    fn two_nodes_make_one_edge() {
        let g = gen_rtpl(2, 1.0, 1.0, &mut make_rng(1)).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn infeasible_hub_is_rejected() {
        assert!(matches!(
            gen_rtpl(5, 10.0, 0.5, &mut make_rng(1)),
            Err(TopologyError::InfeasibleDegree { degree: 10, nodes: 5 })
        ));
    }

    #[test]
    fn simple_and_connected() {
        for seed in 0..5 {
            let g = gen_rtpl(500, 18.0, 0.5, &mut make_rng(seed));
            let g = g.unwrap();
            assert!(g.is_connected());
            for k in g.live_nodes() {
                assert!(!g.neighbors(k).contains(&k));
            }
        }
    }

    #[test]
    fn rank_degree_slope_matches_alpha() {
        for (n, omega, alpha) in [(500, 18.0, 0.5), (2000, 36.0, 0.5), (2000, 60.0, 0.8)] {
            let g = gen_rtpl(n, omega, alpha, &mut make_rng(3)).unwrap();
            let s = power_law_slope(&g, omega, alpha);
            assert!((s + alpha).abs() <= 0.15, "n={n} alpha={alpha} slope={s}");
        }
    }
}
