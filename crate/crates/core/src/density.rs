//! Marginal density of the embeddings: truncated KDE or one Gaussian per
//! class mixed by class frequency (no EM).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::dataset::{EmbeddingDataset, PointMatrix};
use crate::error::{NuqError, Result};
use crate::kernels::KernelSpec;
use crate::knn::NeighborSet;

/// Densities at or below this count as zero density.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Times a failed ridge is multiplied by 10 before giving up.
const RIDGE_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DensityMode {
    Kde,
    Gmm,
}

impl DensityMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DensityMode::Kde => "kde",
            DensityMode::Gmm => "gmm",
        }
    }
}

impl fmt::Display for DensityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DensityMode {
    type Err = NuqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kde" => Ok(DensityMode::Kde),
            "gmm" => Ok(DensityMode::Gmm),
            other => Err(NuqError::config(format!(
                "unknown density mode {other:?} (expected kde or gmm)"
            ))),
        }
    }
}

/// Covariance regularization added to each class covariance.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Ridge {
    /// `1e-6 * trace(cov) / d`, per class.
    #[default]
    Auto,
    Fixed(f64),
}

impl Ridge {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Ridge::Fixed(r) if !(r.is_finite() && r >= 0.0) => Err(NuqError::config(format!(
                "density.ridge must be a nonnegative finite number, got {r}"
            ))),
            _ => Ok(()),
        }
    }
}

impl FromStr for Ridge {
    type Err = NuqError;

    /// `auto` or a nonnegative number.
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Ridge::Auto);
        }
        let r = s.parse::<f64>().map(Ridge::Fixed).map_err(|_| {
            NuqError::config(format!("ridge must be `auto` or a number, got {s:?}"))
        })?;
        r.validate()?;
        Ok(r)
    }
}

/// Options for the class-Gaussian density.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GaussianFit {
    pub ridge: Ridge,
    /// Diagonal covariances instead of full ones.
    pub diagonal: bool,
}

/// `(1 / (N h^d)) * sum_k W(x_k - x)` over the retrieved neighbors.
pub fn kde_density(
    spec: &KernelSpec,
    points: &PointMatrix,
    neighbors: &NeighborSet,
    n_total: usize,
    x: &[f32],
) -> Result<f64> {
    if x.len() != spec.dim() || points.dim() != spec.dim() {
        return Err(NuqError::input(format!(
            "query dimension {} / point dimension {} do not match kernel dimension {}",
            x.len(),
            points.dim(),
            spec.dim()
        )));
    }
    let sum: f64 = neighbors
        .ids
        .iter()
        .map(|&i| spec.weight_between(points.row(i), x))
        .sum();
    Ok(kde_from_weight_sum(spec, sum, n_total))
}

pub(crate) fn kde_from_weight_sum(spec: &KernelSpec, weight_sum: f64, n_total: usize) -> f64 {
    weight_sum / (n_total as f64 * spec.bandwidth_volume())
}

#[derive(Debug, Clone)]
enum Factor {
    /// Lower Cholesky factor of the regularized covariance.
    Full(DMatrix<f64>),
    Diagonal(Vec<f64>),
}

#[derive(Debug, Clone)]
struct Component {
    mean: Vec<f64>,
    log_weight: f64,
    factor: Factor,
    /// `d ln(2 pi) + ln det(cov)`
    log_norm: f64,
    ridge: f64,
}

impl Component {
    fn log_pdf(&self, x: &[f32]) -> f64 {
        let mut r: Vec<f64> = x
            .iter()
            .zip(&self.mean)
            .map(|(&xi, &mi)| f64::from(xi) - mi)
            .collect();
        let maha = match &self.factor {
            Factor::Full(l) => {
                // forward substitution L y = r, in place
                let d = r.len();
                for i in 0..d {
                    let mut acc = r[i];
                    for j in 0..i {
                        acc -= l[(i, j)] * r[j];
                    }
                    r[i] = acc / l[(i, i)];
                }
                r.iter().map(|v| v * v).sum::<f64>()
            }
            Factor::Diagonal(var) => r.iter().zip(var).map(|(v, s)| v * v / s).sum(),
        };
        -0.5 * (self.log_norm + maha)
    }
}

/// One Gaussian per class, weighted by class frequency.
#[derive(Debug, Clone)]
pub struct ClassGaussians {
    dim: usize,
    /// `None` for classes with no training points.
    components: Vec<Option<Component>>,
}

impl ClassGaussians {
    pub fn fit(dataset: &EmbeddingDataset, opts: &GaussianFit) -> Result<Self> {
        opts.ridge.validate()?;
        let d = dataset.dim();
        let n = dataset.len();
        let counts = dataset.class_counts();
        let points = dataset.points();

        let mut members: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes()];
        for (i, &y) in dataset.labels().iter().enumerate() {
            members[y as usize].push(i);
        }

        let all: Vec<usize> = (0..n).collect();
        let global_mean = mean_of(points, &all);
        let global_cov = covariance_of(points, &all, &global_mean);
        let global_scale = trace(&global_cov) / d as f64;

        let mut components = Vec::with_capacity(members.len());
        for (class, rows) in members.iter().enumerate() {
            if rows.is_empty() {
                components.push(None);
                continue;
            }
            let mean = mean_of(points, rows);
            let cov = if rows.len() < 2 {
                warn!(
                    "class {class} has {} point(s); using the global covariance",
                    rows.len()
                );
                global_cov.clone()
            } else {
                covariance_of(points, rows, &mean)
            };
            let ridge = match opts.ridge {
                Ridge::Fixed(r) => r,
                Ridge::Auto => {
                    let class_scale = trace(&cov) / d as f64;
                    let scale = if class_scale > 0.0 {
                        class_scale
                    } else if global_scale > 0.0 {
                        global_scale
                    } else {
                        1.0
                    };
                    1e-6 * scale
                }
            };
            let log_weight = (counts[class] as f64 / n as f64).ln();
            components.push(Some(regularize(
                class,
                mean,
                cov,
                ridge,
                log_weight,
                opts.diagonal,
            )?));
        }
        Ok(ClassGaussians { dim: d, components })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Ridge actually applied to `class` after any escalation.
    pub fn ridge(&self, class: usize) -> Option<f64> {
        self.components.get(class)?.as_ref().map(|c| c.ridge)
    }

    pub fn mean(&self, class: usize) -> Option<&[f64]> {
        self.components
            .get(class)?
            .as_ref()
            .map(|c| c.mean.as_slice())
    }

    /// Mixture weight of `class`.
    pub fn weight(&self, class: usize) -> f64 {
        self.components
            .get(class)
            .and_then(|c| c.as_ref())
            .map_or(0.0, |c| c.log_weight.exp())
    }

    /// Regularized covariance of `class`, reassembled from its factor.
    pub fn covariance(&self, class: usize) -> Option<DMatrix<f64>> {
        let c = self.components.get(class)?.as_ref()?;
        Some(match &c.factor {
            Factor::Full(l) => l * l.transpose(),
            Factor::Diagonal(v) => DMatrix::from_diagonal(&DVector::from_column_slice(v)),
        })
    }

    /// `log sum_c w_c N(x; mu_c, cov_c)` via log-sum-exp.
    pub fn log_density(&self, x: &[f32]) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .flatten()
            .map(|c| c.log_weight + c.log_pdf(x))
            .collect();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    }

    pub fn density(&self, x: &[f32]) -> f64 {
        self.log_density(x).exp()
    }
}

fn regularize(
    class: usize,
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    ridge: f64,
    log_weight: f64,
    diagonal: bool,
) -> Result<Component> {
    let d = mean.len();
    let mut r = ridge;
    for attempt in 0..=RIDGE_RETRIES {
        if attempt > 0 {
            warn!("class {class}: covariance not positive-definite, raising ridge to {r:e}");
        }
        if diagonal {
            let var: Vec<f64> = (0..d).map(|i| cov[(i, i)] + r).collect();
            if var.iter().all(|&v| v > 0.0 && v.is_finite()) {
                let log_det: f64 = var.iter().map(|v| v.ln()).sum();
                return Ok(Component {
                    mean,
                    log_weight,
                    factor: Factor::Diagonal(var),
                    log_norm: d as f64 * (2.0 * PI).ln() + log_det,
                    ridge: r,
                });
            }
        } else {
            let reg = &cov + DMatrix::<f64>::identity(d, d) * r;
            if let Some(chol) = reg.cholesky() {
                let l = chol.unpack();
                let log_det = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
                if log_det.is_finite() {
                    return Ok(Component {
                        mean,
                        log_weight,
                        factor: Factor::Full(l),
                        log_norm: d as f64 * (2.0 * PI).ln() + log_det,
                        ridge: r,
                    });
                }
            }
        }
        r *= 10.0;
    }
    Err(NuqError::Numerical(format!(
        "class {class}: covariance is not positive-definite even with ridge {:e}",
        r / 10.0
    )))
}

fn mean_of(points: &PointMatrix, rows: &[usize]) -> Vec<f64> {
    let d = points.dim();
    let mut m = vec![0.0; d];
    for &i in rows {
        for (acc, &v) in m.iter_mut().zip(points.row(i)) {
            *acc += f64::from(v);
        }
    }
    let n = rows.len() as f64;
    m.iter_mut().for_each(|v| *v /= n);
    m
}

/// Maximum-likelihood covariance (divisor `n`).
fn covariance_of(points: &PointMatrix, rows: &[usize], mean: &[f64]) -> DMatrix<f64> {
    let d = points.dim();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut r = vec![0.0; d];
    for &i in rows {
        for ((ri, &v), &m) in r.iter_mut().zip(points.row(i)).zip(mean) {
            *ri = f64::from(v) - m;
        }
        for a in 0..d {
            for b in 0..=a {
                cov[(a, b)] += r[a] * r[b];
            }
        }
    }
    let n = rows.len() as f64;
    for a in 0..d {
        for b in 0..=a {
            let v = cov[(a, b)] / n;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    cov
}

fn trace(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// Fitted marginal density model.
#[derive(Debug, Clone)]
pub enum DensityModel {
    /// Shares the regressor's kernel and neighbor set.
    Kde(KernelSpec),
    ClassGaussians(ClassGaussians),
}

impl DensityModel {
    pub fn mode(&self) -> DensityMode {
        match self {
            DensityModel::Kde(_) => DensityMode::Kde,
            DensityModel::ClassGaussians(_) => DensityMode::Gmm,
        }
    }
}

/// Fits the class-Gaussian variant.
pub fn fit_class_gaussians(dataset: &EmbeddingDataset, opts: &GaussianFit) -> Result<DensityModel> {
    Ok(DensityModel::ClassGaussians(ClassGaussians::fit(
        dataset, opts,
    )?))
}

/// Evaluates a class-Gaussian model; errors for the KDE variant, which
/// needs a neighbor set.
pub fn gmm_density(model: &DensityModel, x: &[f32]) -> Result<f64> {
    match model {
        DensityModel::ClassGaussians(g) => {
            if x.len() != g.dim() {
                return Err(NuqError::input(format!(
                    "query has dimension {}, density has {}",
                    x.len(),
                    g.dim()
                )));
            }
            Ok(g.density(x))
        }
        DensityModel::Kde(_) => Err(NuqError::input("gmm_density called on a KDE model")),
    }
}
