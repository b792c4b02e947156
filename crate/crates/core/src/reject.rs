//! Classification with a reject option.
//!
//! A query is accepted when the marginal density is positive and the
//! upper confidence bound on its misclassification risk,
//! `U_a + z * tau`, stays within the rejection price `lambda`. With
//! `z = 0` this is the plug-in Chow rule.

use rayon::prelude::*;

use crate::dataset::{EmbeddingDataset, PointMatrix};
use crate::density::DENSITY_FLOOR;
use crate::error::{NuqError, Result};
use crate::kernels::{KernelKind, KernelSpec};
use crate::knn::IndexConfig;
use crate::model::{FitOptions, NuqModel, UncertaintyReport};

#[allow(clippy::excessive_precision)]
const AS241_CENTRAL: ([f64; 8], [f64; 8]) = (
    [
        3.3871328727963665,
        133.14166789178438,
        1971.5909503065514,
        13731.693765509461,
        45921.95393154987,
        67265.7709270087,
        33430.575583588128,
        2509.0809287301227,
    ],
    [
        1.0,
        42.31333070160091,
        687.1870074920579,
        5394.196021424751,
        21213.794301586597,
        39307.89580009271,
        28729.085735721943,
        5226.495278852546,
    ],
);

#[allow(clippy::excessive_precision)]
const AS241_NEAR: ([f64; 8], [f64; 8]) = (
    [
        1.4234371107496835,
        4.630337846156545,
        5.769497221460691,
        3.6478483247632045,
        1.2704582524523684,
        0.2417807251774506,
        0.022723844989269184,
        7.745450142783414e-4,
    ],
    [
        1.0,
        2.053191626637759,
        1.6763848301838038,
        0.6897673349851,
        0.14810397642748008,
        0.015198666563616457,
        5.475938084995345e-4,
        1.0507500716444169e-9,
    ],
);

#[allow(clippy::excessive_precision)]
const AS241_FAR: ([f64; 8], [f64; 8]) = (
    [
        6.657904643501103,
        5.463784911164114,
        1.7848265399172913,
        0.2965605718285049,
        0.026532189526576124,
        0.0012426609473880784,
        2.7115555687434876e-5,
        2.0103343992922881e-7,
    ],
    [
        1.0,
        0.5998322065558879,
        0.1369298809227358,
        0.014875361290850615,
        7.868691311456133e-4,
        1.8463183175100548e-5,
        1.421511758316446e-7,
        2.0442631033899397e-15,
    ],
);

fn rational(coeffs: &([f64; 8], [f64; 8]), r: f64) -> f64 {
    let horner = |c: &[f64; 8]| c.iter().rev().fold(0.0, |acc, &a| acc * r + a);
    horner(&coeffs.0) / horner(&coeffs.1)
}

/// Inverse of the standard normal CDF (Wichura's AS241, PPND16).
pub fn normal_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(NuqError::input(format!(
            "quantile level {q} is outside (0, 1)"
        )));
    }
    let dev = q - 0.5;
    if dev.abs() <= 0.425 {
        return Ok(dev * rational(&AS241_CENTRAL, 0.180625 - dev * dev));
    }
    let tail = if dev < 0.0 { q } else { 1.0 - q };
    let r = (-tail.ln()).sqrt();
    let z = if r <= 5.0 {
        rational(&AS241_NEAR, r - 1.6)
    } else {
        rational(&AS241_FAR, r - 5.0)
    };
    Ok(if dev < 0.0 { -z } else { z })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RejectConfig {
    /// Price paid per rejection, in `(0, 1)`.
    pub lambda: f64,
    /// Confidence level, in `(0, 0.5]`.
    pub beta: f64,
    /// Split `beta` across classes (`z_{1 - beta / C}`).
    pub per_class_correction: bool,
}

impl RejectConfig {
    /// Class-count dependent default: the per-class split is on only for
    /// more than two classes.
    pub fn new(lambda: f64, beta: f64, num_classes: usize) -> Result<Self> {
        let cfg = RejectConfig {
            lambda,
            beta,
            per_class_correction: num_classes > 2,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(NuqError::config(format!(
                "lambda must lie in (0, 1), got {}",
                self.lambda
            )));
        }
        if !(self.beta > 0.0 && self.beta <= 0.5) {
            return Err(NuqError::config(format!(
                "beta must lie in (0, 0.5], got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Normal quantile multiplying `tau` in the acceptance test.
    pub fn z_value(&self, num_classes: usize) -> Result<f64> {
        self.validate()?;
        let level = if self.per_class_correction {
            self.beta / num_classes as f64
        } else {
            self.beta
        };
        normal_quantile(1.0 - level)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Predict(usize),
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RejectDecision {
    pub action: Action,
    /// `U_a + z * tau`, compared against `lambda`.
    pub u_beta: f64,
    pub density_gate_failed: bool,
}

impl RejectDecision {
    pub fn is_reject(&self) -> bool {
        self.action == Action::Reject
    }

    pub fn predicted(&self) -> Option<usize> {
        match self.action {
            Action::Predict(c) => Some(c),
            Action::Reject => None,
        }
    }
}

/// Applies the acceptance test with quantile `z` to a scored query.
pub fn decide(report: &UncertaintyReport, z: f64, lambda: f64) -> RejectDecision {
    // z = 0 drops the confidence term even when tau is infinite.
    let margin = if z == 0.0 { 0.0 } else { z * report.tau };
    let u_beta = report.aleatoric + margin;
    let density_gate_failed = report.density <= DENSITY_FLOOR;
    let action = if !density_gate_failed && u_beta <= lambda {
        Action::Predict(report.predicted_class)
    } else {
        Action::Reject
    };
    RejectDecision {
        action,
        u_beta,
        density_gate_failed,
    }
}

pub fn abstain(model: &NuqModel, x: &[f32], cfg: &RejectConfig) -> Result<RejectDecision> {
    let z = cfg.z_value(model.num_classes())?;
    Ok(decide(&model.uncertainties(x)?, z, cfg.lambda))
}

/// Plug-in Chow rule: accept iff `U_a <= lambda` (and the density gate holds).
pub fn chow_plugin_abstain(model: &NuqModel, x: &[f32], lambda: f64) -> Result<RejectDecision> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(NuqError::config(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )));
    }
    Ok(decide(&model.uncertainties(x)?, 0.0, lambda))
}

/// [`abstain`] over every row, in row order.
pub fn abstain_batch(
    model: &NuqModel,
    queries: &PointMatrix,
    cfg: &RejectConfig,
) -> Result<Vec<RejectDecision>> {
    let z = cfg.z_value(model.num_classes())?;
    Ok(model
        .score_batch(queries)?
        .iter()
        .map(|r| decide(r, z, cfg.lambda))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChowRisk {
    /// `(errors among accepted + lambda * rejected) / n`
    pub risk: f64,
    pub abstain_rate: f64,
    /// `None` when nothing was accepted.
    pub accepted_error_rate: Option<f64>,
}

pub fn evaluate_chow_risk(
    decisions: &[RejectDecision],
    labels: &[u32],
    lambda: f64,
) -> Result<ChowRisk> {
    if decisions.len() != labels.len() {
        return Err(NuqError::input(format!(
            "{} decisions for {} labels",
            decisions.len(),
            labels.len()
        )));
    }
    if decisions.is_empty() {
        return Err(NuqError::input("no decisions to evaluate"));
    }
    let mut rejected = 0usize;
    let mut errors = 0usize;
    for (d, &y) in decisions.iter().zip(labels) {
        match d.action {
            Action::Reject => rejected += 1,
            Action::Predict(c) if c != y as usize => errors += 1,
            Action::Predict(_) => {}
        }
    }
    let n = decisions.len() as f64;
    let accepted = decisions.len() - rejected;
    Ok(ChowRisk {
        risk: (errors as f64 + lambda * rejected as f64) / n,
        abstain_rate: rejected as f64 / n,
        accepted_error_rate: (accepted > 0).then(|| errors as f64 / accepted as f64),
    })
}

/// A binary problem with a known regression function `eta(x) = P(Y = 1 | x)`.
pub trait BinaryProblem: Sync {
    fn eta(&self, x: &[f32]) -> f64;
    fn sample(&self, n: usize, seed: u64) -> Result<EmbeddingDataset>;
}

/// Optimal Chow risk `min(eta, 1 - eta, lambda)`.
pub fn bayes_chow_risk(eta: f64, lambda: f64) -> f64 {
    eta.min(1.0 - eta).min(lambda)
}

/// Risk of `action` at a point whose true class-1 probability is `eta`.
pub fn pointwise_chow_risk(action: Action, eta: f64, lambda: f64) -> f64 {
    match action {
        Action::Reject => lambda,
        Action::Predict(1) => 1.0 - eta,
        Action::Predict(_) => eta,
    }
}

#[derive(Debug, Clone)]
pub struct ExcessRiskConfig {
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Evaluation points, one row each.
    pub grid: PointMatrix,
    pub kernel: KernelKind,
    /// `h = bandwidth_scale * N^(-1/5)`
    pub bandwidth_scale: f64,
    pub index: IndexConfig,
    pub reject: RejectConfig,
}

/// Seed-averaged excess risk of one rule.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleExcess {
    pub per_point_mean: Vec<f64>,
    pub per_point_se: Vec<f64>,
    /// Grid-averaged excess, averaged over seeds.
    pub mean: f64,
    /// Standard error of `mean` across seeds.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcessRiskAtN {
    pub n: usize,
    pub bandwidth: f64,
    pub nuq: RuleExcess,
    pub plugin: RuleExcess,
}

/// Monte-Carlo estimate of the pointwise excess Chow risk of the NUQ rule
/// and of the plug-in rule for each training-set size.
pub fn excess_risk_curve(
    problem: &dyn BinaryProblem,
    cfg: &ExcessRiskConfig,
) -> Result<Vec<ExcessRiskAtN>> {
    cfg.reject.validate()?;
    if cfg.seeds.is_empty() || cfg.sizes.is_empty() {
        return Err(NuqError::config(
            "excess risk curve needs at least one size and one seed",
        ));
    }
    let lambda = cfg.reject.lambda;
    let optimal: Vec<f64> = cfg
        .grid
        .iter_rows()
        .map(|x| bayes_chow_risk(problem.eta(x), lambda))
        .collect();

    cfg.sizes
        .iter()
        .map(|&n| {
            let h = cfg.bandwidth_scale * (n as f64).powf(-0.2);
            // per seed: (nuq excess per point, plug-in excess per point)
            let runs: Vec<(Vec<f64>, Vec<f64>)> = cfg
                .seeds
                .par_iter()
                .map(|&seed| -> Result<(Vec<f64>, Vec<f64>)> {
                    let data = problem.sample(n, seed)?;
                    let kernel = KernelSpec::new(cfg.kernel, h, data.dim())?;
                    let opts = FitOptions {
                        index: cfg.index,
                        ..FitOptions::default()
                    };
                    let model = NuqModel::fit(data, kernel, opts)?;
                    let z = cfg.reject.z_value(model.num_classes())?;
                    let mut nuq = Vec::with_capacity(cfg.grid.rows());
                    let mut plug = Vec::with_capacity(cfg.grid.rows());
                    for (x, opt) in cfg.grid.iter_rows().zip(&optimal) {
                        let eta = problem.eta(x);
                        let report = model.uncertainties(x)?;
                        let a = decide(&report, z, lambda).action;
                        let b = decide(&report, 0.0, lambda).action;
                        nuq.push(pointwise_chow_risk(a, eta, lambda) - opt);
                        plug.push(pointwise_chow_risk(b, eta, lambda) - opt);
                    }
                    Ok((nuq, plug))
                })
                .collect::<Result<_>>()?;
            let nuq: Vec<&[f64]> = runs.iter().map(|r| r.0.as_slice()).collect();
            let plug: Vec<&[f64]> = runs.iter().map(|r| r.1.as_slice()).collect();
            Ok(ExcessRiskAtN {
                n,
                bandwidth: h,
                nuq: summarize(&nuq),
                plugin: summarize(&plug),
            })
        })
        .collect()
}

fn mean_se(values: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn summarize(runs: &[&[f64]]) -> RuleExcess {
    let points = runs[0].len();
    let (per_point_mean, per_point_se) = (0..points)
        .map(|j| mean_se(runs.iter().map(|r| r[j])))
        .unzip();
    let (mean, se) = mean_se(runs.iter().map(|r| r.iter().sum::<f64>() / points as f64));
    RuleExcess {
        per_point_mean,
        per_point_se,
        mean,
        se,
    }
}
