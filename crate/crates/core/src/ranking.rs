//! Source ranking: query similarity, pairwise peer evaluation, the
//! distance-weighted source rank of a peer inside its AS, and free-rider
//! classification.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{distance, Coordinate, PeerKey, SimRng};

#[derive(Debug, Error, PartialEq)]
pub enum RankingError {
    #[error("query vector has no nonzero entry")]
    ZeroVector,
    #[error("query vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("peer {0} is not a member of the AS")]
    NotMember(PeerKey),
}

/// The ordered requirement set `L`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementUniverse {
    labels: Vec<String>,
}

impl RequirementUniverse {
    /// Returns `None` when labels repeat.
    pub fn new(labels: Vec<String>) -> Option<Self> {
        let mut seen = labels.clone();
        seen.sort();
        seen.dedup();
        (seen.len() == labels.len()).then_some(Self { labels })
    }

    pub fn anonymous(size: usize) -> Self {
        Self {
            labels: (0..size).map(|i| format!("r{i}")).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Builds the 0/1 vector for a set of labels; unknown labels are ignored.
    pub fn query<S: AsRef<str>>(&self, wanted: &[S]) -> QueryVector {
        QueryVector {
            bits: self
                .labels
                .iter()
                .map(|l| wanted.iter().any(|w| w.as_ref() == l))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryVector {
    pub bits: Vec<bool>,
}

impl QueryVector {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Random nonzero vector with each requirement set with probability `p`.
    pub fn random(dim: usize, p: f64, rng: &mut SimRng) -> Self {
        assert!(dim > 0);
        let mut bits: Vec<bool> = (0..dim).map(|_| rng.gen_bool(p)).collect();
        if !bits.iter().any(|&b| b) {
            bits[rng.gen_range(0..dim)] = true;
        }
        Self { bits }
    }
}

/// Cosine of the angle between two 0/1 requirement vectors.
pub fn query_similarity(q: &QueryVector, q2: &QueryVector) -> Result<f64, RankingError> {
    if q.bits.len() != q2.bits.len() {
        return Err(RankingError::DimensionMismatch(q.bits.len(), q2.bits.len()));
    }
    let (a, b) = (q.ones(), q2.ones());
    if a == 0 || b == 0 {
        return Err(RankingError::ZeroVector);
    }
    let dot = q.bits.iter().zip(&q2.bits).filter(|(x, y)| **x && **y).count();
    Ok(dot as f64 / ((a * b) as f64).sqrt())
}

/// Accumulators for one ordered pair (querier, answerer).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairHistory {
    pub answered_similarities: Vec<f64>,
    pub n_exchanges: u64,
    pub exchange_time: f64,
}

/// Exchange records keyed by ordered pair `(from, to)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExchangeHistory {
    pairs: BTreeMap<(PeerKey, PeerKey), PairHistory>,
}

impl ExchangeHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pair(&self, from: PeerKey, to: PeerKey) -> Option<&PairHistory> {
        self.pairs.get(&(from, to))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Records an exchange where `to` answered `from` with similarity `qsim`.
    pub fn record_exchange(&mut self, from: PeerKey, to: PeerKey, qsim: f64, duration: f64) {
        assert!((0.0..=1.0).contains(&qsim), "qsim out of range: {qsim}");
        assert!(duration > 0.0, "duration must be positive");
        let h = self.pairs.entry((from, to)).or_default();
        h.answered_similarities.push(qsim);
        h.n_exchanges += 1;
        h.exchange_time += duration;
    }

    /// Records an exchange that `to` did not answer.
    pub fn record_unanswered(&mut self, from: PeerKey, to: PeerKey, duration: f64) {
        assert!(duration > 0.0, "duration must be positive");
        let h = self.pairs.entry((from, to)).or_default();
        h.n_exchanges += 1;
        h.exchange_time += duration;
    }

    /// Drops every record involving `peer`.
    pub fn forget(&mut self, peer: PeerKey) {
        self.pairs.retain(|&(a, b), _| a != peer && b != peer);
    }
}

/// Evaluation of `to` by `from`: `Σ Qsim^α · N / T` over answered queries.
/// Zero for a pair that never exchanged.
pub fn evaluate_peer(history: &ExchangeHistory, from: PeerKey, to: PeerKey, alpha_sim: f64) -> f64 {
    match history.pair(from, to) {
        Some(h) if h.n_exchanges > 0 && h.exchange_time > 0.0 => {
            let sum: f64 = h
                .answered_similarities
                .iter()
                .map(|s| s.powf(alpha_sim))
                .sum();
            sum * h.n_exchanges as f64 / h.exchange_time
        }
        _ => 0.0,
    }
}

/// Proximity weight: bounded, positive and finite at zero distance.
pub fn proximity_weight(dist: f64) -> f64 {
    1.0 / (1.0 + dist)
}

/// Distance-weighted mean of the evaluations `target` received from the
/// other members of its AS.
pub fn source_rank(
    target: PeerKey,
    as_members: &[PeerKey],
    histories: &ExchangeHistory,
    coords: &dyn Fn(PeerKey) -> Coordinate,
    alpha_sim: f64,
) -> f64 {
    let target_at = coords(target);
    let (num, den) = as_members
        .iter()
        .filter(|&&m| m != target)
        .fold((0.0, 0.0), |(num, den), &m| {
            let w = proximity_weight(distance(coords(m), target_at));
            (num + evaluate_peer(histories, m, target, alpha_sim) * w, den + w)
        });
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrRecord {
    pub sr: f64,
    pub last_updated: f64,
}

impl Default for SrRecord {
    fn default() -> Self {
        Self {
            sr: 0.0,
            last_updated: 0.0,
        }
    }
}

/// Free-rider threshold of an AS: `load_factor × mean SR`. Zero for an AS
/// without SR records.
pub fn min_ef(member_srs: &[f64], load_factor: f64) -> f64 {
    if member_srs.is_empty() {
        return 0.0;
    }
    load_factor * member_srs.iter().sum::<f64>() / member_srs.len() as f64
}

/// Strictly below the AS threshold.
pub fn is_free_rider(
    node: PeerKey,
    members: &[(PeerKey, f64)],
    load_factor: f64,
) -> Result<bool, RankingError> {
    let own = members
        .iter()
        .find(|(k, _)| *k == node)
        .map(|(_, sr)| *sr)
        .ok_or(RankingError::NotMember(node))?;
    let srs: Vec<f64> = members.iter().map(|(_, sr)| *sr).collect();
    Ok(own < min_ef(&srs, load_factor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::make_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn abcd() -> RequirementUniverse {
        RequirementUniverse::new(vec!["A".into(), "B".into(), "C".into(), "D".into()]).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let l = abcd();
        let ab = l.query(&["A", "B"]);
        let bc = l.query(&["B", "C"]);
        assert_eq!(ab.bits, vec![true, true, false, false]);
        assert!((query_similarity(&ab, &bc).unwrap() - 0.5).abs() < 1e-15);
        assert!((query_similarity(&ab, &ab).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            query_similarity(&l.query(&["A"]), &l.query(&["B"])).unwrap(),
            0.0
        );
        assert_eq!(
            query_similarity(&l.query::<&str>(&[]), &ab),
            Err(RankingError::ZeroVector)
        );
    }

    #[test]
    fn universe_rejects_duplicates() {
        assert!(RequirementUniverse::new(vec!["a".into(), "a".into()]).is_none());
    }

    #[test]
    fn similarity_exhaustive_small_universe() {
        for dim in 1..=6usize {
            let all: Vec<QueryVector> = (1u32..(1 << dim))
                .map(|m| QueryVector::from_bits((0..dim).map(|i| m >> i & 1 == 1).collect()))
                .collect();
            for a in &all {
                for b in &all {
                    let s = query_similarity(a, b).unwrap();
                    assert_eq!(s, query_similarity(b, a).unwrap());
                    assert!((0.0..=1.0 + 1e-15).contains(&s));
                }
            }
        }
    }

    #[test]
    fn evaluation_examples() {
        let mut h = ExchangeHistory::new();
        assert_eq!(evaluate_peer(&h, 1, 2, 2.0), 0.0);

        h.record_exchange(1, 2, 1.0, 1.0);
        assert!((evaluate_peer(&h, 1, 2, 2.0) - 1.0).abs() < 1e-15);

        // Qsim {1, 0.5}, N = 4, T = 2: (1 + 0.25) * 4 / 2.
        let mut h = ExchangeHistory::new();
        h.record_exchange(1, 2, 1.0, 0.5);
        h.record_exchange(1, 2, 0.5, 0.5);
        h.record_unanswered(1, 2, 0.5);
        h.record_unanswered(1, 2, 0.5);
        assert!((evaluate_peer(&h, 1, 2, 2.0) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn record_accumulates() {
        let mut h = ExchangeHistory::new();
        h.record_exchange(3, 4, 0.2, 1.0);
        assert_eq!(h.pair(3, 4).unwrap().n_exchanges, 1);
        assert_eq!(h.pair(3, 4).unwrap().exchange_time, 1.0);
        h.record_exchange(3, 4, 0.2, 2.0);
        assert_eq!(h.pair(3, 4).unwrap().n_exchanges, 2);
        assert_eq!(h.pair(3, 4).unwrap().exchange_time, 3.0);
    }

    #[test]
    fn incremental_matches_recomputation() {
        let mut r = make_rng(12);
        let mut h = ExchangeHistory::new();
        let mut raw = Vec::new();
        let mut t = 0.0;
        for _ in 0..1000 {
            let s: f64 = r.gen();
            let d: f64 = r.gen_range(0.1..3.0);
            h.record_exchange(0, 1, s, d);
            raw.push(s);
            t += d;
        }
        let oracle = raw.iter().map(|s| s * s).sum::<f64>() * raw.len() as f64 / t;
        let got = evaluate_peer(&h, 0, 1, 2.0);
        assert!((got - oracle).abs() <= 1e-12 * oracle);
    }

    fn rank_with(evals: &[(f64, f64)]) -> f64 {
        // Each evaluator i sits at distance evals[i].1 from the target (key 0)
        // and has a single exchange giving E = evals[i].0.
        let mut h = ExchangeHistory::new();
        let mut coords = vec![Coordinate::ORIGIN];
        let mut members = vec![0];
        for (i, &(e, dist)) in evals.iter().enumerate() {
            let key = i as PeerKey + 1;
            if e > 0.0 {
                h.record_exchange(key, 0, 1.0, 1.0 / e);
            }
            coords.push(Coordinate::new(dist, 0.0));
            members.push(key);
        }
        source_rank(0, &members, &h, &|k| coords[k as usize], 2.0)
    }

    #[test]
    fn source_rank_examples() {
        assert!((rank_with(&[(3.0, 5.0)]) - 3.0).abs() < 1e-12);
        assert!((rank_with(&[(2.0, 4.0), (4.0, 4.0)]) - 3.0).abs() < 1e-12);
        let expected = (0.0 * 0.5 + 10.0 * 0.1) / (0.5 + 0.1);
        assert!((rank_with(&[(0.0, 1.0), (10.0, 9.0)]) - expected).abs() < 1e-12);
        assert!((expected - 1.667).abs() < 1e-3);
        assert_eq!(rank_with(&[]), 0.0);
    }

    #[test]
    fn min_ef_examples() {
        assert_eq!(min_ef(&[0.0, 0.0, 0.0], 0.1), 0.0);
        assert!((min_ef(&[10.0, 10.0, 10.0, 0.0], 0.1) - 0.75).abs() < 1e-15);
        assert_eq!(min_ef(&[], 0.1), 0.0);
    }

    #[test]
    fn free_rider_examples() {
        let members = [(1, 0.0), (2, 10.0), (3, 10.0), (4, 10.0)];
        assert!(is_free_rider(1, &members, 0.1).unwrap());
        assert!(!is_free_rider(2, &members, 0.1).unwrap());
        // SR equal to the threshold is not below it: mean 4, factor 0.5 -> 2.
        let members = [(1, 2.0), (2, 2.0), (3, 8.0), (4, 4.0)];
        assert!(!is_free_rider(1, &members, 0.5).unwrap());
        assert_eq!(
            is_free_rider(9, &members, 0.5),
            Err(RankingError::NotMember(9))
        );
    }

    proptest! {
        #[test]
        fn evaluation_monotone(
            sims in proptest::collection::vec(0.0f64..=1.0, 0..20),
            extra in 0.01f64..=1.0,
            t in 0.5f64..10.0,
            dt in 0.0f64..10.0,
        ) {
            // Fixed N and T: an extra positive similarity never lowers E.
            let n = sims.len() as f64 + 1.0;
            let e = |s: &[f64], t: f64| s.iter().map(|x| x * x).sum::<f64>() * n / t;
            let mut more = sims.clone();
            more.push(extra);
            prop_assert!(e(&more, t) >= e(&sims, t));
            prop_assert!(e(&sims, t + dt) <= e(&sims, t));
        }

        #[test]
        fn source_rank_is_convex_and_scale_free(
            evals in proptest::collection::vec((0.0f64..50.0, 0.0f64..100.0), 1..8),
        ) {
            let sr = rank_with(&evals);
            let lo = evals.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
            let hi = evals.iter().map(|e| e.0).fold(0.0, f64::max);
            prop_assert!(sr >= lo - 1e-9 && sr <= hi + 1e-9);
            // Scaling all weights by the same constant leaves the ratio unchanged.
            let w: Vec<f64> = evals.iter().map(|e| proximity_weight(e.1)).collect();
            let num: f64 = evals.iter().zip(&w).map(|(e, w)| e.0 * w * 3.7).sum();
            let den: f64 = w.iter().map(|w| w * 3.7).sum();
            prop_assert!((num / den - sr).abs() <= 1e-9 * sr.max(1.0));
        }

        #[test]
        fn maximum_holder_never_free_rider(srs in proptest::collection::vec(0.0f64..100.0, 1..12), factor in 0.0f64..1.0) {
            prop_assume!(srs.iter().any(|&s| s > 0.0));
            let members: Vec<(PeerKey, f64)> = srs.iter().enumerate().map(|(i, &s)| (i as PeerKey, s)).collect();
            let top = members.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
            prop_assert!(!is_free_rider(top, &members, factor).unwrap());
        }
    }
}
