//! Synthetic problems with known ground truth.
//!
//! All generators draw from [`CounterRng`](crate::rng::CounterRng), so a
//! `(generator, parameters, seed)` triple reproduces the same bytes.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::dataset::{EmbeddingDataset, PointMatrix};
use crate::error::{NuqError, Result};
use crate::reject::BinaryProblem;
use crate::rng::CounterRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyName {
    TwoMoons,
    Gauss3,
    StepReject,
    RingOod,
}

impl ToyName {
    pub fn as_str(self) -> &'static str {
        match self {
            ToyName::TwoMoons => "two_moons",
            ToyName::Gauss3 => "gauss3_1d",
            ToyName::StepReject => "step_reject",
            ToyName::RingOod => "ring_ood",
        }
    }
}

impl fmt::Display for ToyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToyName {
    type Err = NuqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_moons" => Ok(ToyName::TwoMoons),
            "gauss3_1d" | "gauss3" => Ok(ToyName::Gauss3),
            "step_reject" | "step" => Ok(ToyName::StepReject),
            "ring_ood" | "ring" => Ok(ToyName::RingOod),
            other => Err(NuqError::config(format!(
                "unknown toy {other:?} (expected two_moons, gauss3_1d, step_reject or ring_ood)"
            ))),
        }
    }
}

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Interleaved half circles of radius 1: class 0 is the upper arc
/// `(cos t, sin t)`, class 1 the lower arc `(1 - cos t, 0.5 - sin t)`, with
/// `t` evenly spaced in `[0, pi]` and isotropic Gaussian noise added.
pub fn gen_two_moons(n: usize, noise: f64, seed: u64) -> Result<EmbeddingDataset> {
    if n < 2 {
        return Err(NuqError::input("two moons needs at least 2 points"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(NuqError::config(format!(
            "noise must be nonnegative, got {noise}"
        )));
    }
    let n_upper = n / 2;
    let n_lower = n - n_upper;
    let arc = |k: usize, m: usize| {
        if m <= 1 {
            0.0
        } else {
            PI * k as f64 / (m - 1) as f64
        }
    };
    let mut rng = CounterRng::new(seed);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for k in 0..n_upper {
        let t = arc(k, n_upper);
        data.push((t.cos() + noise * rng.standard_normal()) as f32);
        data.push((t.sin() + noise * rng.standard_normal()) as f32);
        labels.push(0);
    }
    for k in 0..n_lower {
        let t = arc(k, n_lower);
        data.push((1.0 - t.cos() + noise * rng.standard_normal()) as f32);
        data.push((0.5 - t.sin() + noise * rng.standard_normal()) as f32);
        labels.push(1);
    }
    EmbeddingDataset::new(PointMatrix::new(2, data)?, labels, 2)
}

/// Equal-weight mixture of three 1-D Gaussians; components 0 and 2 carry
/// label 0, component 1 label 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Gauss3 {
    pub means: [f64; 3],
    pub scales: [f64; 3],
    pub classes: [u32; 3],
}

impl Default for Gauss3 {
    fn default() -> Self {
        Gauss3 {
            means: [-1.0, 0.0, 1.5],
            scales: [0.4, 0.4, 0.6],
            classes: [0, 1, 0],
        }
    }
}

impl Gauss3 {
    /// Marginal density `p(x)`.
    pub fn density(&self, x: f64) -> f64 {
        (0..3)
            .map(|k| normal_pdf(x, self.means[k], self.scales[k]) / 3.0)
            .sum()
    }

    /// `P(Y = 1 | X = x)` by Bayes' rule over the components.
    pub fn eta_at(&self, x: f64) -> f64 {
        let mut class1 = 0.0;
        let mut total = 0.0;
        for k in 0..3 {
            let w = normal_pdf(x, self.means[k], self.scales[k]);
            total += w;
            if self.classes[k] == 1 {
                class1 += w;
            }
        }
        if total > 0.0 {
            class1 / total
        } else {
            0.0
        }
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<EmbeddingDataset> {
        if n < 3 {
            return Err(NuqError::input("gauss3 needs at least 3 points"));
        }
        let mut rng = CounterRng::new(seed);
        let mut data = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let k = rng.below(3) as usize;
            data.push(rng.normal(self.means[k], self.scales[k]) as f32);
            labels.push(self.classes[k]);
        }
        EmbeddingDataset::new(PointMatrix::new(1, data)?, labels, 2)
    }
}

impl BinaryProblem for Gauss3 {
    fn eta(&self, x: &[f32]) -> f64 {
        self.eta_at(f64::from(x[0]))
    }

    fn sample(&self, n: usize, seed: u64) -> Result<EmbeddingDataset> {
        self.generate(n, seed)
    }
}

/// Dataset and ground-truth evaluator of the three-Gaussian toy.
pub fn gen_gauss3_1d(n: usize, seed: u64) -> Result<(EmbeddingDataset, Gauss3)> {
    let toy = Gauss3::default();
    Ok((toy.generate(n, seed)?, toy))
}

/// `X ~ N(0.5, 0.2^2)`, `P(Y = 1 | x) = logistic((x - 0.5) / s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepToy {
    pub smoothing: f64,
}

impl StepToy {
    pub const MEAN: f64 = 0.5;
    pub const SD: f64 = 0.2;

    pub fn new(smoothing: f64) -> Result<Self> {
        if !(smoothing > 0.0 && smoothing.is_finite()) {
            return Err(NuqError::config(format!(
                "step smoothing must be positive, got {smoothing}"
            )));
        }
        Ok(StepToy { smoothing })
    }

    pub fn eta_at(&self, x: f64) -> f64 {
        logistic((x - Self::MEAN) / self.smoothing)
    }

    pub fn density(&self, x: f64) -> f64 {
        normal_pdf(x, Self::MEAN, Self::SD)
    }

    /// Bayes risk `min(eta, 1 - eta)`.
    pub fn bayes_risk(&self, x: f64) -> f64 {
        let e = self.eta_at(x);
        e.min(1.0 - e)
    }

    /// Optimal Chow risk `min(eta, 1 - eta, lambda)`.
    pub fn chow_risk(&self, x: f64, lambda: f64) -> f64 {
        self.bayes_risk(x).min(lambda)
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<EmbeddingDataset> {
        if n == 0 {
            return Err(NuqError::input("step toy needs at least 1 point"));
        }
        let mut rng = CounterRng::new(seed);
        let mut data = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x = rng.normal(Self::MEAN, Self::SD);
            labels.push(u32::from(rng.bernoulli(self.eta_at(x))));
            data.push(x as f32);
        }
        EmbeddingDataset::new(PointMatrix::new(1, data)?, labels, 2)
    }
}

impl Default for StepToy {
    fn default() -> Self {
        StepToy { smoothing: 0.05 }
    }
}

impl BinaryProblem for StepToy {
    fn eta(&self, x: &[f32]) -> f64 {
        self.eta_at(f64::from(x[0]))
    }

    fn sample(&self, n: usize, seed: u64) -> Result<EmbeddingDataset> {
        self.generate(n, seed)
    }
}

pub fn gen_step_reject(n: usize, smoothing: f64, seed: u64) -> Result<(EmbeddingDataset, StepToy)> {
    let toy = StepToy::new(smoothing)?;
    Ok((toy.generate(n, seed)?, toy))
}

/// Points uniform on the annulus `r_min <= |x - center| <= r_max` in 2-D.
pub fn gen_ring_ood(
    n: usize,
    r_min: f64,
    r_max: f64,
    center: [f64; 2],
    seed: u64,
) -> Result<PointMatrix> {
    if !(r_min > 0.0 && r_max > r_min && r_max.is_finite()) {
        return Err(NuqError::config(format!(
            "ring radii must satisfy 0 < r_min < r_max, got {r_min}, {r_max}"
        )));
    }
    let mut rng = CounterRng::new(seed);
    let mut data = Vec::with_capacity(2 * n);
    let (a, b) = (r_min * r_min, r_max * r_max);
    for _ in 0..n {
        let r = rng.uniform_range(a, b).sqrt();
        let theta = rng.uniform_range(0.0, 2.0 * PI);
        data.push((center[0] + r * theta.cos()) as f32);
        data.push((center[1] + r * theta.sin()) as f32);
    }
    PointMatrix::new(2, data)
}

/// Mean of the per-column values, as f64.
pub fn centroid(points: &PointMatrix) -> Vec<f64> {
    let mut c = vec![0.0; points.dim()];
    for row in points.iter_rows() {
        for (acc, &v) in c.iter_mut().zip(row) {
            *acc += f64::from(v);
        }
    }
    let n = points.rows().max(1) as f64;
    c.iter_mut().for_each(|v| *v /= n);
    c
}
