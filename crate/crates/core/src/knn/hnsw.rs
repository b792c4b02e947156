//! Hierarchical navigable small world graph.
//!
//! Nodes are inserted sequentially in row order; each draws its top layer
//! from a geometric distribution driven by a ChaCha8 stream seeded from the
//! index config, so a given (points, config) pair always builds the same
//! graph. Neighbor lists are pruned with the diversity heuristic of the
//! original construction.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::PointMatrix;

use super::{squared_distance, IndexConfig, NeighborSet};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    id: u32,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.id.cmp(&other.id))
    }
}

struct Visited {
    bits: Vec<u64>,
}

impl Visited {
    fn new(n: usize) -> Self {
        Visited {
            bits: vec![0; n.div_ceil(64)],
        }
    }

    /// Marks `id`; returns false if it was already marked.
    fn insert(&mut self, id: u32) -> bool {
        let (w, b) = (id as usize / 64, id as usize % 64);
        let fresh = self.bits[w] & (1 << b) == 0;
        self.bits[w] |= 1 << b;
        fresh
    }
}

#[derive(Debug, Clone)]
pub struct HnswIndex {
    points: PointMatrix,
    m: usize,
    ef_construction: usize,
    ef_search: usize,
    /// `links[node][layer]`
    links: Vec<Vec<Vec<u32>>>,
    entry: u32,
    max_layer: usize,
}

impl HnswIndex {
    pub(crate) fn build(points: PointMatrix, cfg: &IndexConfig) -> Self {
        let n = points.rows();
        let mut index = HnswIndex {
            points,
            m: cfg.hnsw_m,
            ef_construction: cfg.hnsw_ef_construction.max(cfg.hnsw_m),
            ef_search: cfg.hnsw_ef_search,
            links: Vec::with_capacity(n),
            entry: 0,
            max_layer: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let level_mult = 1.0 / (cfg.hnsw_m as f64).ln();
        for i in 0..n {
            // 1 - u lies in (0, 1], so the log is finite.
            let u: f64 = rng.random();
            let layer = (-(1.0 - u).ln() * level_mult).floor() as usize;
            index.insert(i as u32, layer.min(32));
        }
        index
    }

    pub fn points(&self) -> &PointMatrix {
        &self.points
    }

    fn dist(&self, a: u32, q: &[f32]) -> f64 {
        squared_distance(self.points.row(a as usize), q)
    }

    fn max_degree(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }

    fn insert(&mut self, id: u32, layer: usize) {
        self.links.push(vec![Vec::new(); layer + 1]);
        if id == 0 {
            self.entry = 0;
            self.max_layer = layer;
            return;
        }
        let q = self.points.row(id as usize).to_vec();
        let mut ep = Candidate {
            dist: self.dist(self.entry, &q),
            id: self.entry,
        };
        for l in (layer + 1..=self.max_layer).rev() {
            ep = self.greedy(&q, ep, l);
        }
        let mut entry_points = vec![ep];
        for l in (0..=layer.min(self.max_layer)).rev() {
            let found = self.search_layer(&q, &entry_points, self.ef_construction, l);
            let chosen = self.select_neighbors(&found, self.m);
            self.links[id as usize][l] = chosen.clone();
            for nb in chosen {
                self.connect(nb, id, l);
            }
            entry_points = found;
        }
        if layer > self.max_layer {
            self.max_layer = layer;
            self.entry = id;
        }
    }

    /// Adds `new` to `node`'s list on `layer`, re-pruning on overflow.
    fn connect(&mut self, node: u32, new: u32, layer: usize) {
        let cap = self.max_degree(layer);
        let list = &mut self.links[node as usize][layer];
        list.push(new);
        if list.len() <= cap {
            return;
        }
        let base = self.points.row(node as usize);
        let mut cands: Vec<Candidate> = self.links[node as usize][layer]
            .iter()
            .map(|&c| Candidate {
                dist: squared_distance(self.points.row(c as usize), base),
                id: c,
            })
            .collect();
        cands.sort_unstable();
        let pruned = self.select_neighbors(&cands, cap);
        self.links[node as usize][layer] = pruned;
    }

    /// Diversity heuristic: keep a candidate only if it is closer to the
    /// base than to every neighbor already kept. `sorted` is ascending.
    fn select_neighbors(&self, sorted: &[Candidate], m: usize) -> Vec<u32> {
        let mut kept: Vec<u32> = Vec::with_capacity(m);
        for c in sorted {
            if kept.len() >= m {
                break;
            }
            let row = self.points.row(c.id as usize);
            let diverse = kept
                .iter()
                .all(|&k| squared_distance(self.points.row(k as usize), row) > c.dist);
            if diverse {
                kept.push(c.id);
            }
        }
        kept
    }

    fn greedy(&self, q: &[f32], mut best: Candidate, layer: usize) -> Candidate {
        loop {
            let mut moved = false;
            for &nb in &self.links[best.id as usize][layer] {
                let c = Candidate {
                    dist: self.dist(nb, q),
                    id: nb,
                };
                if c < best {
                    best = c;
                    moved = true;
                }
            }
            if !moved {
                return best;
            }
        }
    }

    /// Best-first beam search on one layer; returns up to `ef` candidates
    /// in ascending order.
    fn search_layer(
        &self,
        q: &[f32],
        entry: &[Candidate],
        ef: usize,
        layer: usize,
    ) -> Vec<Candidate> {
        let mut visited = Visited::new(self.points.rows());
        let mut frontier: BinaryHeap<Reverse<Candidate>> = BinaryHeap::new();
        let mut results: BinaryHeap<Candidate> = BinaryHeap::new();
        for &c in entry {
            if visited.insert(c.id) {
                frontier.push(Reverse(c));
                results.push(c);
            }
        }
        while results.len() > ef {
            results.pop();
        }
        while let Some(Reverse(cur)) = frontier.pop() {
            let worst = results.peek().map_or(f64::INFINITY, |w| w.dist);
            if cur.dist > worst && results.len() >= ef {
                break;
            }
            for &nb in &self.links[cur.id as usize][layer] {
                if !visited.insert(nb) {
                    continue;
                }
                let c = Candidate {
                    dist: self.dist(nb, q),
                    id: nb,
                };
                if results.len() < ef || c < *results.peek().unwrap() {
                    frontier.push(Reverse(c));
                    results.push(c);
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        results.into_sorted_vec()
    }

    pub(crate) fn query(&self, x: &[f32], k: usize) -> NeighborSet {
        let mut ep = Candidate {
            dist: self.dist(self.entry, x),
            id: self.entry,
        };
        for l in (1..=self.max_layer).rev() {
            ep = self.greedy(x, ep, l);
        }
        let found = self.search_layer(x, &[ep], self.ef_search.max(k), 0);
        let cands = found.into_iter().map(|c| (c.dist, c.id as usize)).collect();
        NeighborSet::from_candidates(cands, k)
    }
}
