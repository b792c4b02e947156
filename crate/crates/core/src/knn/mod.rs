//! K-nearest-neighbor retrieval over training embeddings.
//!
//! Two backends answer the same query contract: [`Backend::Exact`] scans
//! every row, [`Backend::Hnsw`] walks a layered proximity graph. Distances
//! are Euclidean; equal distances order by lower row index.

mod exact;
mod hnsw;

use std::fmt;
use std::str::FromStr;

use crate::dataset::PointMatrix;
use crate::error::{NuqError, Result};

pub use exact::ExactIndex;
pub use hnsw::HnswIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    Exact,
    Hnsw,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Exact => "exact",
            Backend::Hnsw => "hnsw",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backend {
    type Err = NuqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Backend::Exact),
            "hnsw" => Ok(Backend::Hnsw),
            other => Err(NuqError::config(format!(
                "unknown knn backend {other:?} (expected exact or hnsw)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexConfig {
    /// Neighbors retrieved per query; clamped to the dataset size.
    pub neighbors: usize,
    pub backend: Backend,
    /// Graph degree on the upper layers; layer 0 allows `2 * m`.
    pub hnsw_m: usize,
    pub hnsw_ef_construction: usize,
    pub hnsw_ef_search: usize,
    /// Seeds the level assignment of the graph build.
    pub seed: u64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            neighbors: 32,
            backend: Backend::Exact,
            hnsw_m: 16,
            hnsw_ef_construction: 200,
            hnsw_ef_search: 128,
            seed: 0,
        }
    }
}

impl IndexConfig {
    pub fn exact(neighbors: usize) -> Self {
        IndexConfig {
            neighbors,
            ..IndexConfig::default()
        }
    }

    pub fn hnsw(neighbors: usize) -> Self {
        IndexConfig {
            neighbors,
            backend: Backend::Hnsw,
            ..IndexConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.neighbors == 0 {
            return Err(NuqError::config("knn.k must be at least 1"));
        }
        if self.backend == Backend::Hnsw {
            if self.hnsw_m < 2 {
                return Err(NuqError::config("knn.m must be at least 2"));
            }
            if self.hnsw_ef_construction == 0 {
                return Err(NuqError::config("knn.ef_construction must be at least 1"));
            }
            if self.hnsw_ef_search < self.neighbors {
                return Err(NuqError::config(format!(
                    "knn.ef_search ({}) must be at least knn.k ({})",
                    self.hnsw_ef_search, self.neighbors
                )));
            }
        }
        Ok(())
    }
}

/// Retrieved neighbors, ascending by distance.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub ids: Vec<usize>,
    pub distances: Vec<f64>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Sorts `(squared_distance, id)` pairs, truncates to `k` and takes roots.
    pub(crate) fn from_candidates(mut cands: Vec<(f64, usize)>, k: usize) -> Self {
        let k = k.min(cands.len());
        if k < cands.len() {
            cands.select_nth_unstable_by(k, cmp_candidate);
            cands.truncate(k);
        }
        cands.sort_unstable_by(cmp_candidate);
        NeighborSet {
            ids: cands.iter().map(|&(_, i)| i).collect(),
            distances: cands.iter().map(|&(d, _)| d.sqrt()).collect(),
        }
    }
}

fn cmp_candidate(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

pub(crate) fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

/// A built, immutable neighbor index.
#[derive(Debug, Clone)]
pub enum Index {
    Exact(ExactIndex),
    Hnsw(HnswIndex),
}

impl Index {
    pub fn build(points: &PointMatrix, cfg: &IndexConfig) -> Result<Index> {
        cfg.validate()?;
        if points.is_empty() {
            return Err(NuqError::input("cannot index an empty dataset"));
        }
        if points.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(NuqError::input("points contain non-finite values"));
        }
        Ok(match cfg.backend {
            Backend::Exact => Index::Exact(ExactIndex::new(points.clone())),
            Backend::Hnsw => Index::Hnsw(HnswIndex::build(points.clone(), cfg)),
        })
    }

    pub fn len(&self) -> usize {
        self.points().rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points().dim()
    }

    pub fn points(&self) -> &PointMatrix {
        match self {
            Index::Exact(e) => e.points(),
            Index::Hnsw(h) => h.points(),
        }
    }

    /// The `min(k, N)` nearest training rows to `x`.
    pub fn query(&self, x: &[f32], k: usize) -> Result<NeighborSet> {
        if x.len() != self.dim() {
            return Err(NuqError::input(format!(
                "query has dimension {}, index has {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NuqError::input("query contains non-finite values"));
        }
        if k == 0 {
            return Err(NuqError::input("k must be at least 1"));
        }
        Ok(match self {
            Index::Exact(e) => e.query(x, k),
            Index::Hnsw(h) => h.query(x, k),
        })
    }
}
