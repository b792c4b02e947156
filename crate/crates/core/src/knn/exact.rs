use crate::dataset::PointMatrix;

use super::{squared_distance, NeighborSet};

/// Brute-force scan over every training row.
#[derive(Debug, Clone)]
pub struct ExactIndex {
    points: PointMatrix,
}

impl ExactIndex {
    pub fn new(points: PointMatrix) -> Self {
        ExactIndex { points }
    }

    pub fn points(&self) -> &PointMatrix {
        &self.points
    }

    pub(crate) fn query(&self, x: &[f32], k: usize) -> NeighborSet {
        let cands = self
            .points
            .iter_rows()
            .enumerate()
            .map(|(i, row)| (squared_distance(row, x), i))
            .collect();
        NeighborSet::from_candidates(cands, k)
    }
}
