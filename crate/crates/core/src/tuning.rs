//! Bandwidth selection by stratified k-fold cross-validated accuracy of
//! the kernel classifier.

use rayon::prelude::*;

use crate::dataset::EmbeddingDataset;
use crate::error::{NuqError, Result};
use crate::kernels::{KernelKind, KernelSpec};
use crate::knn::{squared_distance, IndexConfig};
use crate::model::{FitOptions, NuqModel};
use crate::rng::CounterRng;

/// Rows used to estimate the median pairwise distance.
const MEDIAN_SUBSAMPLE: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthGrid {
    Explicit(Vec<f64>),
    LogSpaced {
        min: f64,
        max: f64,
        size: usize,
    },
    /// `size` log-spaced values in `[0.05 m, 5 m]`, `m` the median pairwise
    /// distance of a subsample.
    MedianScaled {
        size: usize,
    },
}

impl Default for BandwidthGrid {
    fn default() -> Self {
        BandwidthGrid::MedianScaled { size: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    pub grid: BandwidthGrid,
    pub folds: usize,
    pub neighbors: usize,
    pub kernel: KernelKind,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            grid: BandwidthGrid::default(),
            folds: 5,
            neighbors: 32,
            kernel: KernelKind::Gaussian,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best_bandwidth: f64,
    pub best_accuracy: f64,
    /// `(bandwidth, accuracy)` for every grid value, ascending bandwidth.
    pub table: Vec<(f64, f64)>,
}

fn log_spaced(min: f64, max: f64, size: usize) -> Vec<f64> {
    if size == 1 {
        return vec![min];
    }
    let (a, b) = (min.ln(), max.ln());
    (0..size)
        .map(|i| (a + (b - a) * i as f64 / (size - 1) as f64).exp())
        .collect()
}

/// Median Euclidean distance over all pairs of a seeded subsample.
pub fn median_pairwise_distance(dataset: &EmbeddingDataset, seed: u64) -> f64 {
    let mut rows: Vec<usize> = (0..dataset.len()).collect();
    if rows.len() > MEDIAN_SUBSAMPLE {
        CounterRng::new(seed).shuffle(&mut rows);
        rows.truncate(MEDIAN_SUBSAMPLE);
    }
    let pts = dataset.points();
    let mut dists = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            dists.push(squared_distance(pts.row(i), pts.row(j)).sqrt());
        }
    }
    if dists.is_empty() {
        return 0.0;
    }
    let mid = dists.len() / 2;
    let (_, m, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

impl BandwidthGrid {
    pub fn resolve(&self, dataset: &EmbeddingDataset, seed: u64) -> Result<Vec<f64>> {
        let grid = match self {
            BandwidthGrid::Explicit(v) => v.clone(),
            &BandwidthGrid::LogSpaced { min, max, size } => {
                if size == 0 || !(min > 0.0 && max >= min && max.is_finite()) {
                    return Err(NuqError::config(format!(
                        "invalid grid: min {min}, max {max}, size {size}"
                    )));
                }
                log_spaced(min, max, size)
            }
            &BandwidthGrid::MedianScaled { size } => {
                let m = median_pairwise_distance(dataset, seed);
                if m.is_nan() || m <= 0.0 {
                    return Err(NuqError::input(
                        "median pairwise distance is zero; supply an explicit grid",
                    ));
                }
                log_spaced(0.05 * m, 5.0 * m, size)
            }
        };
        if grid.is_empty() {
            return Err(NuqError::input("bandwidth grid is empty"));
        }
        if grid.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(NuqError::config(
                "bandwidth grid values must be positive and finite",
            ));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(NuqError::config(
                "bandwidth grid must be strictly increasing",
            ));
        }
        Ok(grid)
    }
}

/// Stratified fold id per row: rows of each class are shuffled, then dealt
/// round-robin with a counter that runs across classes.
pub fn stratified_folds(dataset: &EmbeddingDataset, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = CounterRng::new(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes()];
    for (i, &y) in dataset.labels().iter().enumerate() {
        by_class[y as usize].push(i);
    }
    let mut assignment = vec![0; dataset.len()];
    let mut counter = 0;
    for rows in &mut by_class {
        rng.shuffle(rows);
        for &i in rows.iter() {
            assignment[i] = counter % folds;
            counter += 1;
        }
    }
    assignment
}

fn check(dataset: &EmbeddingDataset, cfg: &TuneConfig) -> Result<()> {
    if cfg.folds < 2 {
        return Err(NuqError::config("folds must be at least 2"));
    }
    if cfg.folds > dataset.len() {
        return Err(NuqError::config(format!(
            "{} folds for {} points",
            cfg.folds,
            dataset.len()
        )));
    }
    if cfg.neighbors == 0 {
        return Err(NuqError::config("neighbors must be at least 1"));
    }
    Ok(())
}

fn cv_with_folds(
    dataset: &EmbeddingDataset,
    h: f64,
    cfg: &TuneConfig,
    assignment: &[usize],
) -> Result<f64> {
    let kernel = KernelSpec::new(cfg.kernel, h, dataset.dim())?;
    let opts = FitOptions {
        index: IndexConfig::exact(cfg.neighbors),
        ..FitOptions::default()
    };
    let mut acc_sum = 0.0;
    for fold in 0..cfg.folds {
        let (held, train): (Vec<usize>, Vec<usize>) =
            (0..dataset.len()).partition(|&i| assignment[i] == fold);
        let model = NuqModel::fit(dataset.select(&train)?, kernel, opts)?;
        let mut correct = 0usize;
        for &i in &held {
            let pred = model.predict(dataset.points().row(i))?;
            if pred == dataset.labels()[i] as usize {
                correct += 1;
            }
        }
        acc_sum += correct as f64 / held.len() as f64;
    }
    Ok(acc_sum / cfg.folds as f64)
}

/// Mean held-out accuracy across stratified folds at bandwidth `h`.
pub fn cv_accuracy(dataset: &EmbeddingDataset, h: f64, cfg: &TuneConfig) -> Result<f64> {
    check(dataset, cfg)?;
    let assignment = stratified_folds(dataset, cfg.folds, cfg.seed);
    cv_with_folds(dataset, h, cfg, &assignment)
}

/// Grid bandwidth with the highest cross-validated accuracy; ties go to
/// the smallest bandwidth.
pub fn tune_bandwidth(dataset: &EmbeddingDataset, cfg: &TuneConfig) -> Result<TuneResult> {
    check(dataset, cfg)?;
    let grid = cfg.grid.resolve(dataset, cfg.seed)?;
    let assignment = stratified_folds(dataset, cfg.folds, cfg.seed);
    let table: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&h| cv_with_folds(dataset, h, cfg, &assignment).map(|a| (h, a)))
        .collect::<Result<_>>()?;
    let (best_bandwidth, best_accuracy) =
        table
            .iter()
            .copied()
            .fold((f64::NAN, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
    Ok(TuneResult {
        best_bandwidth,
        best_accuracy,
        table,
    })
}
