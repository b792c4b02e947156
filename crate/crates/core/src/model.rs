//! The fitted estimator: Nadaraya-Watson class probabilities over the
//! retrieved neighbors, the asymptotic deviation `tau`, and the
//! aleatoric/epistemic split of the total uncertainty.

use rayon::prelude::*;

use crate::dataset::{EmbeddingDataset, PointMatrix};
use crate::density::{
    kde_from_weight_sum, ClassGaussians, DensityMode, DensityModel, GaussianFit, DENSITY_FLOOR,
};
use crate::error::{NuqError, Result};
use crate::kernels::KernelSpec;
use crate::knn::{Index, IndexConfig, NeighborSet};

/// `2 * sqrt(2 / pi)`: turns `tau` into the expected absolute deviation
/// bound on the misclassification risk.
pub const EPISTEMIC_SCALE: f64 = 1.595_769_121_605_730_7;

/// Kernel-weighted label frequencies at one query.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbabilities {
    pub probs: Vec<f64>,
    /// Sum of the neighbor weights; zero means every weight underflowed.
    pub weight_sum: f64,
}

impl ClassProbabilities {
    /// Normalizes `(weight, label)` pairs into class frequencies; uniform
    /// when the weights sum to zero.
    pub fn from_weights(weights: impl IntoIterator<Item = (f64, u32)>, num_classes: usize) -> Self {
        let mut per_class = vec![0.0; num_classes];
        let mut total = 0.0;
        for (w, y) in weights {
            per_class[y as usize] += w;
            total += w;
        }
        if total > 0.0 {
            per_class.iter_mut().for_each(|p| *p /= total);
        } else {
            per_class.fill(1.0 / num_classes as f64);
        }
        ClassProbabilities {
            probs: per_class,
            weight_sum: total,
        }
    }

    pub fn out_of_support(&self) -> bool {
        self.weight_sum == 0.0
    }

    /// Index of the largest probability, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (c, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = c;
            }
        }
        best
    }

    /// `min_c (1 - p_c)`, the plug-in Bayes risk.
    pub fn aleatoric(&self) -> f64 {
        1.0 - self.probs[self.argmax()]
    }

    /// `max_c p_c (1 - p_c)`
    pub fn max_variance(&self) -> f64 {
        self.probs
            .iter()
            .map(|&p| p * (1.0 - p))
            .fold(0.0, f64::max)
    }
}

/// Per-query output of the estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport {
    pub predicted_class: usize,
    pub probs: ClassProbabilities,
    pub aleatoric: f64,
    pub epistemic: f64,
    pub total: f64,
    pub tau: f64,
    pub density: f64,
    pub out_of_support: bool,
}

impl UncertaintyReport {
    pub fn p_max(&self) -> f64 {
        self.probs.probs[self.predicted_class]
    }
}

/// Column-per-field view of a batch of reports.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreColumns {
    pub pred: Vec<u32>,
    pub p_max: Vec<f64>,
    pub aleatoric: Vec<f64>,
    pub epistemic: Vec<f64>,
    pub total: Vec<f64>,
    pub tau: Vec<f64>,
    pub density: Vec<f64>,
    pub out_of_support: Vec<bool>,
}

impl ScoreColumns {
    pub fn from_reports(reports: &[UncertaintyReport]) -> Self {
        let mut cols = ScoreColumns::default();
        for r in reports {
            cols.pred.push(r.predicted_class as u32);
            cols.p_max.push(r.p_max());
            cols.aleatoric.push(r.aleatoric);
            cols.epistemic.push(r.epistemic);
            cols.total.push(r.total);
            cols.tau.push(r.tau);
            cols.density.push(r.density);
            cols.out_of_support.push(r.out_of_support);
        }
        cols
    }

    pub fn len(&self) -> usize {
        self.pred.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pred.is_empty()
    }
}

/// Everything [`NuqModel::fit`] needs besides the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub index: IndexConfig,
    pub density: DensityMode,
    pub gaussian: GaussianFit,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            index: IndexConfig::default(),
            density: DensityMode::Kde,
            gaussian: GaussianFit::default(),
        }
    }
}

/// Immutable fitted model. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct NuqModel {
    dataset: EmbeddingDataset,
    kernel: KernelSpec,
    index: Index,
    options: FitOptions,
    density: DensityModel,
}

impl NuqModel {
    pub fn fit(dataset: EmbeddingDataset, kernel: KernelSpec, options: FitOptions) -> Result<Self> {
        if kernel.dim() != dataset.dim() {
            return Err(NuqError::input(format!(
                "kernel dimension {} does not match data dimension {}",
                kernel.dim(),
                dataset.dim()
            )));
        }
        let index = Index::build(dataset.points(), &options.index)?;
        let density = match options.density {
            DensityMode::Kde => DensityModel::Kde(kernel),
            DensityMode::Gmm => {
                DensityModel::ClassGaussians(ClassGaussians::fit(&dataset, &options.gaussian)?)
            }
        };
        Ok(NuqModel {
            dataset,
            kernel,
            index,
            options,
            density,
        })
    }

    pub fn dataset(&self) -> &EmbeddingDataset {
        &self.dataset
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn options(&self) -> &FitOptions {
        &self.options
    }

    pub fn index(&self) -> &Index {
        &self.index
    }

    pub fn density_model(&self) -> &DensityModel {
        &self.density
    }

    pub fn num_classes(&self) -> usize {
        self.dataset.num_classes()
    }

    pub fn dim(&self) -> usize {
        self.dataset.dim()
    }

    fn neighbors(&self, x: &[f32]) -> Result<NeighborSet> {
        if x.len() != self.dim() {
            return Err(NuqError::input(format!(
                "query has dimension {}, model has {}",
                x.len(),
                self.dim()
            )));
        }
        self.index.query(x, self.options.index.neighbors)
    }

    fn probs_over(&self, x: &[f32], neighbors: &NeighborSet) -> ClassProbabilities {
        let points = self.dataset.points();
        let labels = self.dataset.labels();
        ClassProbabilities::from_weights(
            neighbors
                .ids
                .iter()
                .map(|&i| (self.kernel.weight_between(points.row(i), x), labels[i])),
            self.num_classes(),
        )
    }

    pub fn conditional_probs(&self, x: &[f32]) -> Result<ClassProbabilities> {
        let ns = self.neighbors(x)?;
        Ok(self.probs_over(x, &ns))
    }

    pub fn predict(&self, x: &[f32]) -> Result<usize> {
        Ok(self.conditional_probs(x)?.argmax())
    }

    /// Class probabilities and marginal density from a single neighbor query.
    pub fn probs_and_density(&self, x: &[f32]) -> Result<(ClassProbabilities, f64)> {
        let ns = self.neighbors(x)?;
        let probs = self.probs_over(x, &ns);
        let density = match &self.density {
            DensityModel::Kde(spec) => {
                kde_from_weight_sum(spec, probs.weight_sum, self.dataset.len())
            }
            DensityModel::ClassGaussians(g) => g.density(x),
        };
        Ok((probs, density))
    }

    pub fn density(&self, x: &[f32]) -> Result<f64> {
        Ok(self.probs_and_density(x)?.1)
    }

    /// `sqrt(||K||^2 * max_c var_c / (N h^d p))`; zero with no label
    /// variance, infinite at zero density.
    pub fn tau(&self, probs: &ClassProbabilities, density: f64) -> f64 {
        tau_value(
            &self.kernel,
            self.dataset.len(),
            probs.max_variance(),
            density,
        )
    }

    pub fn uncertainties(&self, x: &[f32]) -> Result<UncertaintyReport> {
        let (probs, density) = self.probs_and_density(x)?;
        let out_of_support = probs.out_of_support();
        let tau = if out_of_support {
            f64::INFINITY
        } else {
            self.tau(&probs, density)
        };
        let aleatoric = probs.aleatoric();
        let epistemic = EPISTEMIC_SCALE * tau;
        Ok(UncertaintyReport {
            predicted_class: probs.argmax(),
            aleatoric,
            epistemic,
            total: aleatoric + epistemic,
            tau,
            density,
            out_of_support,
            probs,
        })
    }

    /// [`NuqModel::uncertainties`] over every row, in row order.
    pub fn score_batch(&self, queries: &PointMatrix) -> Result<Vec<UncertaintyReport>> {
        if queries.is_empty() {
            return Ok(Vec::new());
        }
        if queries.dim() != self.dim() {
            return Err(NuqError::input(format!(
                "queries have dimension {}, model has {}",
                queries.dim(),
                self.dim()
            )));
        }
        (0..queries.rows())
            .into_par_iter()
            .map(|i| self.uncertainties(queries.row(i)))
            .collect()
    }

    pub fn score_columns(&self, queries: &PointMatrix) -> Result<ScoreColumns> {
        Ok(ScoreColumns::from_reports(&self.score_batch(queries)?))
    }
}

pub(crate) fn tau_value(kernel: &KernelSpec, n: usize, max_variance: f64, density: f64) -> f64 {
    if max_variance <= 0.0 {
        return 0.0;
    }
    if density <= DENSITY_FLOOR {
        return f64::INFINITY;
    }
    (kernel.norm_sq() * max_variance / (n as f64 * kernel.bandwidth_volume() * density)).sqrt()
}
