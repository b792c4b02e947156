//! Row-major point matrices and labeled embedding datasets.

use crate::error::{NuqError, Result};

/// Dense `n x dim` matrix of 32-bit embeddings, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl PointMatrix {
    /// Wraps `data` as rows of length `dim`. Rejects ragged buffers and
    /// non-finite entries.
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(NuqError::input("embedding dimension must be at least 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(NuqError::input(format!(
                "buffer of {} values is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(NuqError::input(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(PointMatrix { dim, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| NuqError::input("cannot infer dimension from zero rows"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(NuqError::input(format!(
                    "row {i} has length {}, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        PointMatrix::new(dim, data)
    }

    /// An empty matrix with the given row width.
    pub fn empty(dim: usize) -> Self {
        PointMatrix {
            dim: dim.max(1),
            data: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> PointMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        PointMatrix {
            dim: self.dim,
            data,
        }
    }
}

/// Labeled training embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    points: PointMatrix,
    labels: Vec<u32>,
    num_classes: usize,
}

impl EmbeddingDataset {
    pub fn new(points: PointMatrix, labels: Vec<u32>, num_classes: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(NuqError::input("dataset has no points"));
        }
        if labels.len() != points.rows() {
            return Err(NuqError::input(format!(
                "{} labels for {} points",
                labels.len(),
                points.rows()
            )));
        }
        if num_classes == 0 {
            return Err(NuqError::input("dataset needs at least one class"));
        }
        if let Some((i, &y)) = labels
            .iter()
            .enumerate()
            .find(|(_, &y)| y as usize >= num_classes)
        {
            return Err(NuqError::input(format!(
                "label {y} at row {i} is not below class count {num_classes}"
            )));
        }
        Ok(EmbeddingDataset {
            points,
            labels,
            num_classes,
        })
    }

    /// Infers the class count as `max(label) + 1`.
    pub fn with_inferred_classes(points: PointMatrix, labels: Vec<u32>) -> Result<Self> {
        let c = labels.iter().copied().max().map_or(1, |m| m as usize + 1);
        EmbeddingDataset::new(points, labels, c)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn points(&self) -> &PointMatrix {
        &self.points
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y as usize] += 1;
        }
        counts
    }

    /// Subset at `indices`, keeping the class count.
    pub fn select(&self, indices: &[usize]) -> Result<EmbeddingDataset> {
        EmbeddingDataset::new(
            self.points.select(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.num_classes,
        )
    }

    pub fn into_parts(self) -> (PointMatrix, Vec<u32>, usize) {
        (self.points, self.labels, self.num_classes)
    }
}
