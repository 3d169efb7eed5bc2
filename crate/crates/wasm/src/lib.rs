//! A small overlay in the browser. The page asks for a JSON view after
//! every operation and draws it; all state lives here.

use mpo_sim::kernel::{make_rng, place_nodes, region_label, Coordinate, PeerKey, SimRng};
use mpo_sim::overlay::{OverlayParams, NewPeer, Overlay, OverlaySnapshot, Role};
use mpo_sim::search::{flood, Algorithm, SearchIndex, SearchRequest};
use rand::Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const SPREAD: f64 = 100.0;
const FILES: u32 = 40;

#[wasm_bindgen]
pub struct Demo {
    overlay: Overlay,
    rng: SimRng,
    next_key: PeerKey,
    /// Files per peer key, grown as peers join.
    files: Vec<Vec<u32>>,
    /// Nodes reached by the last search, hit nodes last.
    reached: Vec<PeerKey>,
    hits: Vec<PeerKey>,
    log: String,
}

#[derive(Serialize)]
struct View<'a> {
    snapshot: OverlaySnapshot,
    reached: &'a [PeerKey],
    hits: &'a [PeerKey],
    violations: Vec<String>,
    max_degree: usize,
    bound: u32,
    log: &'a str,
}

fn new_peer(key: PeerKey, c: Coordinate, files: Vec<u32>) -> NewPeer {
    NewPeer {
        key,
        coord: c,
        region: region_label(c, SPREAD, 2),
        tolerance: 4.0 * SPREAD,
        files,
    }
}

#[wasm_bindgen]
impl Demo {
    /// `n` peers placed at random, fan-out `d`.
    #[wasm_bindgen(constructor)]
    pub fn new(n: u32, d: u32, seed: u32) -> Result<Demo, JsError> {
        let mut rng = make_rng(u64::from(seed));
        let coords = place_nodes(n.max(1) as usize, &mut rng, SPREAD);
        let mut files = Vec::new();
        let peers = coords
            .into_iter()
            .enumerate()
            .map(|(k, c)| {
                let f = vec![rng.gen_range(0..FILES), rng.gen_range(0..FILES)];
                files.push(f.clone());
                new_peer(k as PeerKey, c, f)
            })
            .collect();
        let overlay = Overlay::bootstrap(OverlayParams::with_d(d.max(2)), peers)?;
        Ok(Demo {
            overlay,
            rng,
            next_key: n.max(1),
            files,
            reached: Vec::new(),
            hits: Vec::new(),
            log: format!("{n} peers, d = {}", d.max(2)),
        })
    }

    /// Adds a peer at plane position (x, y), each in [-100, 100].
    pub fn join(&mut self, x: f64, y: f64) -> Result<(), JsError> {
        let key = self.next_key;
        self.next_key += 1;
        let f = vec![self.rng.gen_range(0..FILES)];
        self.files.push(f.clone());
        let out = self.overlay.join(new_peer(key, Coordinate::new(x, y), f))?;
        self.log = format!("join #{key}: {}", serde_json::to_string(&out)?);
        self.reached.clear();
        self.hits.clear();
        Ok(())
    }

    /// Crashes all three ICs of the AS holding `key` at once.
    pub fn crash_ics(&mut self, key: u32) -> Result<(), JsError> {
        let as_id = self.overlay.as_of(key).ok_or_else(|| JsError::new("not a live peer"))?;
        let ics: Vec<PeerKey> = self.overlay.ics(as_id)?.into_iter().flatten().collect();
        let rep = self.overlay.crash(&ics)?;
        self.log = format!(
            "crashed {:?} in {as_id}: {} full recoveries, {} partial",
            ics,
            rep.full_recoveries.len(),
            rep.partial_recoveries.len()
        );
        self.reached.clear();
        self.hits.clear();
        Ok(())
    }

    /// Floods a query for `file` from `source` and remembers who saw it.
    pub fn search(&mut self, source: u32, file: u32, ttl: u32) -> Result<(), JsError> {
        if !self.overlay.is_live(source) {
            return Err(JsError::new("not a live peer"));
        }
        let g = self.overlay.as_graph();
        let idx = SearchIndex::new(&g, &self.files_for(&g));
        let req = SearchRequest {
            source,
            target_file: file % FILES,
            ttl,
            algorithm: Algorithm::FloodUnrepeated,
        };
        let r = flood(&g, &idx, &req);
        self.reached = std::iter::once(source).chain(r.nodes_disturbed.keys().copied()).collect();
        self.hits = self
            .reached
            .iter()
            .copied()
            .filter(|&k| idx.answers(k, req.target_file))
            .collect();
        self.log = format!(
            "file {} from #{source}, ttl {ttl}: {}, {} messages, first hit at {:?}",
            req.target_file,
            if r.success { "found" } else { "not found" },
            r.messages_sent,
            r.hops_to_first_hit
        );
        Ok(())
    }

    /// Everything the page draws, as JSON.
    pub fn view(&self) -> Result<String, JsError> {
        let snapshot = OverlaySnapshot::capture(&self.overlay);
        let rep = self.overlay.check_structure();
        Ok(serde_json::to_string(&View {
            snapshot,
            reached: &self.reached,
            hits: &self.hits,
            violations: rep.violations,
            max_degree: rep.max_degree,
            bound: rep.d + 4,
            log: &self.log,
        })?)
    }

    pub fn is_ic(&self, key: u32) -> bool {
        self.overlay.peer(key).is_some_and(|p| p.role != Role::Nn)
    }
}

impl Demo {
    fn files_for(&self, g: &mpo_sim::topology::Graph) -> Vec<Vec<u32>> {
        (0..g.slots())
            .map(|k| self.files.get(k).cloned().unwrap_or_default())
            .collect()
    }
}
