//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails. Runs as a plain binary (harness off)
//! so the lines are always visible.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use mpo_sim::harness::{run_experiment, ExperimentConfig, MetricsReport, TopologyReport};
use mpo_sim::kernel::{distance, make_rng, place_nodes, region_label, Coordinate, PeerKey, SimRng};
use mpo_sim::overlay::{
    threshold_distance, JoinOutcome, NewPeer, Overlay, OverlayParams, Role, WarmupConfig,
};
use mpo_sim::ranking::{
    evaluate_peer, min_ef, query_similarity, source_rank, ExchangeHistory, QueryVector,
};
use mpo_sim::search::Algorithm;
use mpo_sim::topology::{ideal_sqrt_degree, SqrtParams, TopologyKind};
use rand::seq::SliceRandom;
use rand::Rng;

const SPREAD: f64 = 1000.0;
const REL_TOL: f64 = 1e-12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- overlays

fn newcomer(key: PeerKey, c: Coordinate, files: Vec<u32>) -> NewPeer {
    NewPeer {
        key,
        coord: c,
        region: region_label(c, SPREAD, 4),
        tolerance: 4.0 * SPREAD,
        files,
    }
}

fn random_overlay(d: u32, n: usize, rng: &mut SimRng) -> Overlay {
    let peers = place_nodes(n, rng, SPREAD)
        .into_iter()
        .enumerate()
        .map(|(k, c)| newcomer(k as PeerKey, c, vec![k as u32 % 50, rng.gen_range(0..50)]))
        .collect();
    Overlay::bootstrap(OverlayParams::with_d(d), peers).expect("bootstrap")
}

fn random_coord(rng: &mut SimRng) -> Coordinate {
    Coordinate::new(rng.gen_range(-SPREAD..=SPREAD), rng.gen_range(-SPREAD..=SPREAD))
}

/// Degree of every live node from the edge list, checked against `d + 4`.
fn degree_violations(ov: &Overlay) -> Vec<String> {
    let g = ov.as_graph();
    let bound = ov.d() as usize + 4;
    g.live_nodes()
        .filter(|&k| g.degree(k) > bound)
        .map(|k| format!("node {k} has degree {} > {bound}", g.degree(k)))
        .collect()
}

/// `H < log_d(M) + 1` for the layer count and every layer's level count,
/// whenever `M >= d`. Checked in exact integer arithmetic as `d^(H-1) < M`.
fn height_violations(ov: &Overlay) -> Vec<String> {
    let (m, d) = (ov.as_count() as u128, u128::from(ov.d()));
    if m < d {
        return Vec::new();
    }
    let ok = |h: u32| h == 0 || d.checked_pow(h - 1).is_some_and(|p| p < m);
    let mut v = Vec::new();
    let layers = ov.layer_count();
    if !ok(layers) {
        v.push(format!("{layers} layers with M = {m}, d = {d}"));
    }
    for (i, &l) in ov.levels_per_layer().iter().enumerate() {
        if !ok(l) {
            v.push(format!("layer {i} has {l} levels with M = {m}, d = {d}"));
        }
    }
    v
}

// ------------------------------------------------------------ criteria 1-2

struct FuzzStats {
    sequences: usize,
    ops: usize,
    max_n: usize,
    degree: Vec<String>,
    height: Vec<String>,
    errors: Vec<String>,
}

fn fuzz(sequences: usize) -> FuzzStats {
    let mut st = FuzzStats {
        sequences,
        ops: 0,
        max_n: 0,
        degree: Vec::new(),
        height: Vec::new(),
        errors: Vec::new(),
    };
    for i in 0..sequences {
        let mut rng = make_rng(0xF022 + i as u64);
        let d = 2 + (i % 3) as u32;
        let n0 = if i % 100 == 0 {
            rng.gen_range(1000..=2000)
        } else {
            rng.gen_range(1..=120)
        };
        let mut ov = random_overlay(d, n0, &mut rng);
        let mut next_key = n0 as PeerKey;
        let record = |ov: &Overlay, st: &mut FuzzStats, what: &str| {
            st.max_n = st.max_n.max(ov.live_count());
            for v in degree_violations(ov) {
                st.degree.push(format!("seq {i} after {what}: {v}"));
            }
            for v in height_violations(ov) {
                st.height.push(format!("seq {i} after {what}: {v}"));
            }
        };
        record(&ov, &mut st, "bootstrap");
        for _ in 0..8 {
            st.ops += 1;
            let live = ov.live_keys();
            let op = rng.gen_range(0..6);
            let res = match op {
                0..=1 => {
                    // Fresh peer, or a departed one coming back.
                    let key = if op == 1 && live.len() < ov.key_space() {
                        let gone: Vec<PeerKey> = (0..ov.key_space() as PeerKey).filter(|&k| !ov.is_live(k)).collect();
                        *gone.choose(&mut rng).unwrap()
                    } else {
                        next_key += 1;
                        next_key - 1
                    };
                    let c = random_coord(&mut rng);
                    ov.join(newcomer(key, c, vec![rng.gen_range(0..50)])).map(|_| "join")
                }
                2..=3 if live.len() > 1 => {
                    let k = rng.gen_range(1..=3.min(live.len() - 1));
                    let keys: Vec<PeerKey> = live.choose_multiple(&mut rng, k).copied().collect();
                    ov.request_leave(&keys).map(|_| "leave")
                }
                4 if live.len() > 1 => {
                    let k = rng.gen_range(1..=5.min(live.len() - 1));
                    let keys: Vec<PeerKey> = live.choose_multiple(&mut rng, k).copied().collect();
                    ov.crash(&keys).map(|_| "crash")
                }
                5 if live.len() > 3 => {
                    let ids = ov.as_ids();
                    let a = *ids.choose(&mut rng).unwrap();
                    let ics: Vec<PeerKey> = ov.ics(a).unwrap().iter().flatten().copied().collect();
                    if ics.len() < live.len() {
                        ov.crash(&ics).map(|_| "tri-ic crash")
                    } else {
                        Ok("skip")
                    }
                }
                _ => Ok("skip"),
            };
            match res {
                Ok(what) => record(&ov, &mut st, what),
                Err(e) => st.errors.push(format!("seq {i}: {e}")),
            }
        }
    }
    st
}

// ------------------------------------------------------------- criterion 3

fn criterion_3(runs: &[&MetricsReport]) -> Outcome {
    let reference = |kind: TopologyKind, n: usize| -> f64 {
        let pick = |a: f64, b: f64| if n == 500 { a } else { b };
        match kind {
            TopologyKind::Mpo => pick(11.0, 18.0),
            TopologyKind::Rtpl => pick(18.0, 36.0),
            TopologyKind::Supernode => pick(25.0, 32.0),
            TopologyKind::Squareroot => pick(8.0, 22.0),
        }
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        for t in &r.topologies {
            let want = reference(t.topology, r.n);
            let got = t.degrees.max.mean;
            let rel = (got - want) / want;
            pass &= rel.abs() <= 0.20;
            parts.push(format!("{}@{} {got:.1}/{want} ({:+.0}%)", t.topology, r.n, rel * 100.0));
            if let Some(s) = &t.structure {
                pass &= s.max_degree <= s.degree_bound;
                parts.push(format!("mpo@{} d={} max {} <= {}", r.n, s.d, s.max_degree, s.degree_bound));
            }
        }
    }
    outcome(pass, parts.join(", "))
}

// --------------------------------------------------------- criteria 4-9

fn topo(r: &MetricsReport, kind: TopologyKind) -> &TopologyReport {
    r.topology(kind).expect("topology in report")
}

fn success(t: &TopologyReport, a: Algorithm, ttl: u32) -> f64 {
    t.cell(a, ttl).expect("search cell").success_rate.mean
}

fn criterion_4(runs: &[&MetricsReport]) -> Outcome {
    let mut bad = Vec::new();
    let mut min_queries = u64::MAX;
    for r in runs {
        for t in &r.topologies {
            for ttl in 1..=5 {
                let rep = success(t, Algorithm::FloodRepeated, ttl);
                let unrep = success(t, Algorithm::FloodUnrepeated, ttl);
                let walk = success(t, Algorithm::RandomWalk, ttl);
                min_queries = min_queries.min(t.cell(Algorithm::RandomWalk, ttl).unwrap().queries);
                if rep < unrep - 0.01 || unrep < walk {
                    bad.push(format!("{}@{} ttl{ttl}: {rep:.3}/{unrep:.3}/{walk:.3}", t.topology, r.n));
                }
            }
        }
    }
    let pass = bad.is_empty() && min_queries >= 10_000;
    let detail = if bad.is_empty() {
        format!("all cells ordered, >= {min_queries} queries per cell")
    } else {
        bad.join("; ")
    };
    outcome(pass, detail)
}

fn criterion_5(r: &MetricsReport) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [TopologyKind::Supernode, TopologyKind::Squareroot, TopologyKind::Mpo] {
        let s = success(topo(r, kind), Algorithm::FloodUnrepeated, 4);
        pass &= s >= 0.95;
        parts.push(format!("{kind} {s:.3}"));
    }
    outcome(pass, format!("ttl4 N={}: {} (need >= 0.95)", r.n, parts.join(", ")))
}

fn criterion_6(runs: &[&MetricsReport]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        for ttl in 0..=1 {
            let mpo = success(topo(r, TopologyKind::Mpo), Algorithm::FloodUnrepeated, ttl);
            let best_other = r
                .topologies
                .iter()
                .filter(|t| t.topology != TopologyKind::Mpo)
                .map(|t| success(t, Algorithm::FloodUnrepeated, ttl))
                .fold(0.0, f64::max);
            pass &= mpo > best_other;
            parts.push(format!("N={} ttl{ttl} mpo {mpo:.3} vs {best_other:.3}", r.n));
        }
    }
    outcome(pass, parts.join(", "))
}

fn criterion_7(r: &MetricsReport) -> Outcome {
    let cost = |kind, ttl| {
        topo(r, kind)
            .cell(Algorithm::FloodUnrepeated, ttl)
            .unwrap()
            .mean_messages
            .mean
    };
    let mpo4 = cost(TopologyKind::Mpo, 4);
    let sn4 = cost(TopologyKind::Supernode, 4);
    let sq4 = cost(TopologyKind::Squareroot, 4);
    let mpo_rise = cost(TopologyKind::Mpo, 6) - cost(TopologyKind::Mpo, 1);
    let sn_rise = cost(TopologyKind::Supernode, 6) - cost(TopologyKind::Supernode, 1);
    let pass = mpo4 < sn4 && mpo4 < sq4 && mpo_rise < 0.5 * sn_rise;
    outcome(
        pass,
        format!(
            "N={} ttl4 msgs mpo {mpo4:.1} supernode {sn4:.1} squareroot {sq4:.1}; rise 1->6 mpo {mpo_rise:.1} vs supernode {sn_rise:.1}",
            r.n
        ),
    )
}

fn criterion_8(runs: &[&MetricsReport]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        let m = topo(r, TopologyKind::Mpo).disturbance.as_ref().unwrap();
        let s = topo(r, TopologyKind::Supernode).disturbance.as_ref().unwrap();
        let m_max = m.per_node.iter().copied().max().unwrap_or(0);
        let s_max = s.per_node.iter().copied().max().unwrap_or(0);
        let zeros = m.zero_nodes.mean;
        pass &= m_max < s_max && zeros > 0.0;
        parts.push(format!("N={} max mpo {m_max} vs supernode {s_max}, mpo zero nodes {zeros:.0}", r.n));
    }
    outcome(pass, parts.join(", "))
}

fn criterion_9(runs: &[&MetricsReport]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        let mpo = &topo(r, TopologyKind::Mpo).churn;
        let base = mpo[0].mean_hops.as_ref().map(|s| s.mean).unwrap_or(f64::NAN);
        let worst = mpo
            .iter()
            .filter(|c| c.fraction <= 0.5 + 1e-9)
            .map(|c| c.mean_hops.as_ref().map(|s| s.mean).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        pass &= worst <= base * 1.10;
        let sq: Vec<f64> = topo(r, TopologyKind::Squareroot)
            .churn
            .iter()
            .filter(|c| c.fraction >= 0.1 - 1e-9)
            .map(|c| c.success_rate.mean)
            .collect();
        let decreasing = sq.len() >= 9 && sq.windows(2).all(|w| w[1] < w[0]);
        pass &= decreasing;
        parts.push(format!(
            "N={} mpo hops {base:.2} -> max {worst:.2} ({:+.1}%), squareroot decreasing {decreasing}",
            r.n,
            (worst / base - 1.0) * 100.0
        ));
    }
    outcome(pass, parts.join(", "))
}

// ------------------------------------------------------------ criterion 10

fn rel_eq(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= REL_TOL * a.abs().max(b.abs())
}

fn criterion_10() -> Outcome {
    let mut rng = make_rng(10);
    let mut fails = Vec::new();
    let instances = 200;
    for i in 0..instances {
        // Cosine of 0/1 vectors with separate norms.
        let dim = rng.gen_range(1..40);
        let a = QueryVector::random(dim, 0.4, &mut rng);
        let b = QueryVector::random(dim, 0.4, &mut rng);
        let (ab, aa, bb) = (0..dim).fold((0.0, 0.0, 0.0), |(ab, aa, bb), j| {
            let (x, y) = (f64::from(u8::from(a.bits[j])), f64::from(u8::from(b.bits[j])));
            (ab + x * y, aa + x * x, bb + y * y)
        });
        match query_similarity(&a, &b) {
            Ok(s) if aa > 0.0 && bb > 0.0 && rel_eq(s, ab / (aa.sqrt() * bb.sqrt())) => {}
            Err(_) if aa == 0.0 || bb == 0.0 => {}
            other => fails.push(format!("qsim #{i}: {other:?}")),
        }

        // Evaluations and source rank from a recorded history.
        let members: Vec<PeerKey> = (0..rng.gen_range(2..7)).collect();
        let coords: Vec<Coordinate> = members.iter().map(|_| random_coord(&mut rng)).collect();
        let alpha = rng.gen_range(1.0..4.0);
        let mut hist = ExchangeHistory::new();
        // (from, to) -> (answered sims, exchanges, time)
        let mut mine = std::collections::BTreeMap::<(PeerKey, PeerKey), (Vec<f64>, u64, f64)>::new();
        for _ in 0..rng.gen_range(0..40) {
            let from = *members.choose(&mut rng).unwrap();
            let to = *members.choose(&mut rng).unwrap();
            let dur = rng.gen_range(0.1..3.0);
            let e = mine.entry((from, to)).or_default();
            e.1 += 1;
            e.2 += dur;
            if rng.gen_bool(0.7) {
                let s = rng.gen_range(0.0..=1.0);
                e.0.push(s);
                hist.record_exchange(from, to, s, dur);
            } else {
                hist.record_unanswered(from, to, dur);
            }
        }
        let eval = |from: PeerKey, to: PeerKey| match mine.get(&(from, to)) {
            Some((sims, n, t)) => {
                let mut acc = 0.0;
                for s in sims {
                    acc += s.powf(alpha);
                }
                acc * *n as f64 / t
            }
            None => 0.0,
        };
        for &f in &members {
            for &t in &members {
                let got = evaluate_peer(&hist, f, t, alpha);
                if !rel_eq(got, eval(f, t)) {
                    fails.push(format!("evaluate #{i} {f}->{t}: {got} vs {}", eval(f, t)));
                }
            }
        }
        let target = *members.choose(&mut rng).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for &m in &members {
            if m != target {
                let dx = coords[m as usize].x - coords[target as usize].x;
                let dy = coords[m as usize].y - coords[target as usize].y;
                let w = 1.0 / (1.0 + (dx * dx + dy * dy).sqrt());
                num += w * eval(m, target);
                den += w;
            }
        }
        let want = if den > 0.0 { num / den } else { 0.0 };
        let got = source_rank(target, &members, &hist, &|k| coords[k as usize], alpha);
        if !rel_eq(got, want) {
            fails.push(format!("source_rank #{i}: {got} vs {want}"));
        }

        // Threshold distance with some roles vacant.
        let dists: [Option<f64>; 3] = std::array::from_fn(|_| rng.gen_bool(0.8).then(|| rng.gen_range(0.0..500.0)));
        let weights: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..3.0));
        let mut pairs = Vec::new();
        for j in 0..3 {
            if let Some(x) = dists[j] {
                pairs.push((x, weights[j]));
            }
        }
        let wsum: f64 = pairs.iter().map(|p| p.1).sum();
        let wsd: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
        match threshold_distance(dists, weights) {
            Ok(t) if wsum > 0.0 && rel_eq(t, wsd / wsum) => {}
            Err(_) if wsum == 0.0 => {}
            other => fails.push(format!("t_dist #{i}: {other:?} vs {}", wsd / wsum)),
        }

        // Square-root degree in exact integer arithmetic: round(x) = k iff
        // (2k-1)^2 <= 4x^2 < (2k+1)^2, with x^2 = d_max^2 * match / total.
        let p = SqrtParams {
            d_max: rng.gen_range(4..200),
            d_min: rng.gen_range(1..4),
            d0: 4,
        };
        let total: u64 = rng.gen_range(0..5000);
        let matched = if total == 0 { 0 } else { rng.gen_range(0..=total) };
        let want = if total == 0 {
            p.d0
        } else {
            let lhs = 4 * u128::from(p.d_max).pow(2) * u128::from(matched);
            let mut k = 0u32;
            while u128::from(2 * k + 1).pow(2) * u128::from(total) <= lhs {
                k += 1;
            }
            k.clamp(p.d_min, p.d_max)
        };
        let got = ideal_sqrt_degree(matched, total, &p);
        if got != want {
            fails.push(format!("sqrt degree #{i} ({matched}/{total}, {p:?}): {got} vs {want}"));
        }
    }
    let detail = if fails.is_empty() {
        format!("{instances} instances per formula, rel tol {REL_TOL:e}")
    } else {
        format!("{} mismatches, first: {}", fails.len(), fails[0])
    };
    outcome(fails.is_empty(), detail)
}

// ------------------------------------------------------------ criterion 11

fn criterion_11() -> Outcome {
    let mut fails = Vec::new();
    let mut done = 0;
    let mut seed = 0u64;
    while done < 100 && seed < 10_000 {
        seed += 1;
        let mut rng = make_rng(0x11C0 + seed);
        let d = 3 + (seed % 2) as u32;
        let mut ov = random_overlay(d, rng.gen_range(80..400), &mut rng);
        // Three distinct ICs afterwards need at least three survivors.
        let pool: Vec<_> = ov
            .as_ids()
            .into_iter()
            .filter(|&a| ov.members(a).unwrap().len() >= 6)
            .collect();
        let Some(&a) = pool.choose(&mut rng) else { continue };
        done += 1;
        let ics: Vec<PeerKey> = ov.ics(a).unwrap().iter().flatten().copied().collect();
        let survivors: BTreeSet<PeerKey> = ov.members(a).unwrap().iter().copied().filter(|k| !ics.contains(k)).collect();
        let files_before: Vec<(PeerKey, Vec<u32>)> = survivors.iter().map(|&k| (k, ov.peer(k).unwrap().files.clone())).collect();
        let backup_before = ov.backup(a).unwrap().clone();
        let report = match ov.crash(&ics) {
            Ok(r) => r,
            Err(e) => {
                fails.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        let mut problems = Vec::new();
        if !report.full_recoveries.iter().any(|r| r.as_id == a) {
            problems.push("no full recovery reported".to_string());
        }
        let now = ov.ics(a).unwrap();
        let new: BTreeSet<PeerKey> = now.iter().flatten().copied().collect();
        if new.len() != 3 || !new.is_subset(&survivors) {
            problems.push(format!("ICs after recovery {now:?}"));
        }
        // File index: the backup still lists every survivor with its files
        // and every IC answers for all other survivors (its own files it
        // hosts).
        let backup = ov.backup(a).unwrap();
        for (k, files) in &files_before {
            match backup.get(k) {
                Some(rec) if &rec.files == files && backup_before.get(k).map(|b| &b.files) == Some(files) => {}
                _ => problems.push(format!("backup lost peer {k}")),
            }
        }
        if backup.keys().copied().collect::<BTreeSet<_>>() != survivors {
            problems.push("backup member set differs from survivors".into());
        }
        let g = ov.as_graph();
        for &ic in &new {
            if !survivors.iter().all(|&s| s == ic || g.covers(ic).contains(&s)) {
                problems.push(format!("IC {ic} does not index every survivor"));
            }
        }
        // Neighbor links in all four directions. A neighbor with fewer than
        // three members has no IC_layer, so there is nothing to link to.
        let role_link = |x: mpo_sim::overlay::AsId, y: mpo_sim::overlay::AsId, role: Role| match (ov.ic(x, role), ov.ic(y, role)) {
            (Some(p), Some(q)) => g.has_edge(p, q),
            (Some(_), None) => true,
            _ => false,
        };
        if let Some(u) = ov.upper_level(a) {
            if !role_link(a, u, Role::IcLevel) {
                problems.push("upper-level link missing".into());
            }
        }
        for c in ov.lower_levels(a) {
            if !role_link(a, c, Role::IcLevel) {
                problems.push("lower-level link missing".into());
            }
        }
        if let Some(u) = ov.upper_layer(a) {
            if !role_link(a, u, Role::IcLayer) {
                problems.push("upper-layer link missing".into());
            }
        }
        for c in ov.lower_layers(a) {
            if !role_link(a, c, Role::IcLayer) {
                problems.push("lower-layer link missing".into());
            }
        }
        problems.extend(degree_violations(&ov));
        problems.extend(height_violations(&ov));
        if !problems.is_empty() {
            fails.push(format!("seed {seed}: {}", problems.join("; ")));
        }
    }
    let pass = done == 100 && fails.is_empty();
    let detail = if fails.is_empty() {
        format!("{done} recoveries checked")
    } else {
        format!("{} of {done} failed, first: {}", fails.len(), fails[0])
    };
    outcome(pass, detail)
}

// ------------------------------------------------------------ criterion 12

fn warmed_overlay(seed: u64, riders: f64) -> Overlay {
    let mut rng = make_rng(seed);
    let mut ov = random_overlay(3, 200, &mut rng);
    let vectors: Vec<QueryVector> = (0..50).map(|_| QueryVector::random(16, 0.3, &mut rng)).collect();
    let cfg = WarmupConfig {
        exchanges: 4000,
        free_rider_fraction: riders,
        ..WarmupConfig::default()
    };
    ov.warmup(&cfg, &vectors, &mut rng);
    ov
}

fn criterion_12() -> Outcome {
    let mut fails = Vec::new();

    // Targeted joins: rejected exactly when the newcomer lies beyond the
    // threshold distance between the target and its nearest AS.
    let (mut rejected, mut checked) = (0, 0);
    for seed in 0..40u64 {
        let mut rng = make_rng(0x1200 + seed);
        let base = random_overlay(3, rng.gen_range(30..200), &mut rng);
        for t in 0..10 {
            let mut ov = base.clone();
            let at = random_coord(&mut rng);
            let ids = ov.as_ids();
            let target = *ids.choose(&mut rng).unwrap();
            let nearest = *ids
                .iter()
                .min_by(|&&x, &&y| ov.d_avg(x, at).unwrap().total_cmp(&ov.d_avg(y, at).unwrap()))
                .unwrap();
            let w = ov.params().ic_weights;
            let (mut num, mut den) = (0.0, 0.0);
            for (j, role) in [Role::IcLocal, Role::IcLevel, Role::IcLayer].into_iter().enumerate() {
                if let (Some(p), Some(_)) = (ov.ic(target, role), ov.ic(nearest, role)) {
                    num += w[j] * distance(at, ov.coord(p));
                    den += w[j];
                }
            }
            let beyond = target != nearest && num / den > ov.t_dist(target, nearest).unwrap();
            let key = ov.key_space() as PeerKey;
            let out = ov.join_targeted(newcomer(key, at, vec![0]), target);
            checked += 1;
            match out {
                Ok(JoinOutcome::RejectedWhitewasher { .. }) if beyond => rejected += 1,
                Ok(o) if !beyond && o.placed().is_some() => {}
                other => fails.push(format!("whitewasher seed {seed}/{t}: beyond={beyond}, got {other:?}")),
            }
        }
    }

    // Joins into a full AS holding a free rider drop that free rider.
    let mut drops = 0;
    for seed in 0..200u64 {
        if drops >= 100 {
            break;
        }
        let mut ov = warmed_overlay(0x12F0 + seed, 0.3);
        let full: Vec<_> = ov
            .as_ids()
            .into_iter()
            .filter(|&a| ov.members(a).unwrap().len() == ov.params().max_as_size())
            .collect();
        for a in full {
            let members = ov.members(a).unwrap().to_vec();
            let srs: Vec<f64> = members.iter().map(|&m| ov.peer(m).unwrap().sr.sr).collect();
            let threshold = min_ef(&srs, ov.params().load_factor);
            let riders: Vec<(PeerKey, f64)> = members
                .iter()
                .map(|&m| (m, ov.peer(m).unwrap()))
                .filter(|(_, p)| p.role == Role::Nn && p.sr.sr < threshold)
                .map(|(m, p)| (m, p.sr.sr))
                .collect();
            let Some(lowest) = riders.iter().map(|r| r.1).min_by(f64::total_cmp) else { continue };
            let mut trial = ov.clone();
            let at = trial.coord(trial.ic(a, Role::IcLocal).unwrap());
            let key = trial.key_space() as PeerKey;
            let out = trial.join_targeted(newcomer(key, at, vec![1]), a);
            if matches!(out, Ok(JoinOutcome::RejectedWhitewasher { .. })) {
                continue;
            }
            drops += 1;
            let ok = match out {
                Ok(JoinOutcome::DroppedExisting { as_id, dropped, relocated: None, .. }) => {
                    let remaining: BTreeSet<PeerKey> = trial.members(a).unwrap().iter().copied().collect();
                    let expected: BTreeSet<PeerKey> =
                        members.iter().copied().filter(|&m| m != dropped).chain([key]).collect();
                    as_id == a
                        && riders.iter().any(|&(m, sr)| m == dropped && sr == lowest)
                        && !trial.is_live(dropped)
                        && remaining == expected
                }
                _ => false,
            };
            if !ok {
                fails.push(format!("free rider seed {seed}: riders {riders:?}, got {out:?}"));
            }
            ov = trial;
            if drops >= 100 {
                break;
            }
        }
    }

    // A departed peer that comes back resumes its archived SR.
    let mut rejoins = 0;
    for seed in 0..10u64 {
        let mut ov = warmed_overlay(0x12A0 + seed, 0.1);
        let mut rng = make_rng(seed);
        for _ in 0..10 {
            let live = ov.live_keys();
            let k = *live.choose(&mut rng).unwrap();
            let (sr, c) = (ov.peer(k).unwrap().sr.sr, ov.coord(k));
            let left = if rng.gen_bool(0.5) { ov.leave(k).map(|_| ()) } else { ov.crash(&[k]).map(|_| ()) };
            let back = left.and_then(|_| ov.join(newcomer(k, c, vec![2])));
            rejoins += 1;
            match back {
                Ok(_) if ov.peer(k).map(|p| p.sr.sr) == Some(sr) => {}
                other => fails.push(format!("rejoin seed {seed} key {k}: sr {sr}, got {other:?}")),
            }
        }
    }

    let pass = fails.is_empty() && drops >= 100 && rejected > 0;
    let detail = if fails.is_empty() {
        format!("{checked} targeted joins ({rejected} rejected), {drops} free-rider drops, {rejoins} rejoins")
    } else {
        format!("{} failures, first: {}", fails.len(), fails[0])
    };
    outcome(pass, detail)
}

// ------------------------------------------------------------ criterion 13

fn criterion_13() -> Outcome {
    let cfg = ExperimentConfig {
        n: 150,
        seeds: vec![3, 4],
        n_queries: 1500,
        calibration_seeds: 2,
        ..ExperimentConfig::default()
    };
    let a = run_experiment(&cfg).map(|r| r.to_canonical_json());
    let b = run_experiment(&cfg).map(|r| r.to_canonical_json());
    match (a, b) {
        (Ok(a), Ok(b)) => outcome(a == b, format!("two runs, {} vs {} bytes, identical {}", a.len(), b.len(), a == b)),
        (Err(e), _) | (_, Err(e)) => outcome(false, format!("run failed: {e}")),
    }
}

// ------------------------------------------------------------------ driver

fn experiment(n: usize) -> MetricsReport {
    let cfg = ExperimentConfig {
        n,
        seeds: vec![1, 2],
        n_queries: 12_000,
        ..ExperimentConfig::default()
    };
    let t = Instant::now();
    let r = run_experiment(&cfg).expect("experiment runs");
    eprintln!("experiment N={n}: {:.0?}", t.elapsed());
    r
}

fn main() -> ExitCode {
    let mut lines: Vec<(usize, Outcome)> = Vec::new();

    let t = Instant::now();
    let st = fuzz(10_000);
    let secs = t.elapsed().as_secs_f64();
    eprintln!("fuzz: {secs:.0}s");
    let head = format!(
        "{} sequences, {} ops, d in 2..=4, N up to {}, {secs:.0}s",
        st.sequences, st.ops, st.max_n
    );
    let first = |v: &[String]| v.first().map(|s| format!(", first: {s}")).unwrap_or_default();
    lines.push((
        1,
        outcome(
            st.degree.is_empty() && st.errors.is_empty() && secs < 300.0,
            format!("{head}; {} degree violations, {} op errors{}{}", st.degree.len(), st.errors.len(), first(&st.degree), first(&st.errors)),
        ),
    ));
    lines.push((
        2,
        outcome(
            st.height.is_empty() && st.errors.is_empty(),
            format!("{head}; {} height violations{}", st.height.len(), first(&st.height)),
        ),
    ));

    let small = experiment(500);
    let large = experiment(2000);
    let both = [&small, &large];
    lines.push((3, criterion_3(&both)));
    lines.push((4, criterion_4(&both)));
    lines.push((5, criterion_5(&large)));
    lines.push((6, criterion_6(&both)));
    lines.push((7, criterion_7(&large)));
    lines.push((8, criterion_8(&both)));
    lines.push((9, criterion_9(&both)));
    lines.push((10, criterion_10()));
    lines.push((11, criterion_11()));
    lines.push((12, criterion_12()));
    lines.push((13, criterion_13()));

    let names = [
        "",
        "degree bound under churn",
        "height bound under churn",
        "calibrated max degrees",
        "search algorithm ordering",
        "ttl=4 saturation",
        "one-hop advantage",
        "cost ordering",
        "load balance",
        "churn robustness",
        "formula oracles",
        "tri-IC recovery",
        "whitewasher / free rider / rejoin",
        "determinism",
    ];
    let mut failed = 0;
    for (i, o) in &lines {
        failed += usize::from(!o.pass);
        println!(
            "criterion {i:>2} {}: {} ({})",
            if o.pass { "PASS" } else { "FAIL" },
            names[*i],
            o.detail
        );
    }
    println!("{} of {} criteria pass", lines.len() - failed, lines.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
