//! Kernel profiles and separable product kernels over `R^d`.
//!
//! A [`KernelSpec`] evaluates the unnormalized product weight
//! `W(u) = prod_i K(u_i / h)`; the `1 / h^d` factor is applied by the
//! density and variance formulas that need it.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{NuqError, Result};

/// Product weights below this are flushed to exactly zero.
pub const WEIGHT_FLOOR: f64 = 1e-300;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// One-dimensional kernel profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    /// Standard normal density.
    Gaussian,
    /// `(2/pi) / (e^-z + e^z)`
    Sigmoid,
    /// `1 / (e^-z + 2 + e^z)`
    Logistic,
}

impl KernelKind {
    pub const ALL: [KernelKind; 3] = [
        KernelKind::Gaussian,
        KernelKind::Sigmoid,
        KernelKind::Logistic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Sigmoid => "sigmoid",
            KernelKind::Logistic => "logistic",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            KernelKind::Gaussian => 0,
            KernelKind::Sigmoid => 1,
            KernelKind::Logistic => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(KernelKind::Gaussian),
            1 => Some(KernelKind::Sigmoid),
            2 => Some(KernelKind::Logistic),
            _ => None,
        }
    }

    /// Profile value `K(z)`.
    pub fn eval(self, z: f64) -> f64 {
        // |z| keeps the sigmoid/logistic forms symmetric bit-for-bit.
        let a = z.abs();
        match self {
            KernelKind::Gaussian => INV_SQRT_2PI * (-0.5 * a * a).exp(),
            KernelKind::Sigmoid => {
                // 2/pi * e^-a / (1 + e^-2a)
                let e = (-a).exp();
                (2.0 / PI) * e / (1.0 + e * e)
            }
            KernelKind::Logistic => {
                let e = (-a).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
        }
    }

    /// Closed form of `int K(z)^2 dz` for the one-dimensional profile.
    pub fn square_integral(self) -> f64 {
        match self {
            KernelKind::Gaussian => 1.0 / (2.0 * PI.sqrt()),
            KernelKind::Sigmoid => 2.0 / (PI * PI),
            KernelKind::Logistic => 1.0 / 6.0,
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = NuqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelKind::Gaussian),
            "sigmoid" => Ok(KernelKind::Sigmoid),
            "logistic" => Ok(KernelKind::Logistic),
            other => Err(NuqError::config(format!(
                "unknown kernel {other:?} (expected gaussian, sigmoid or logistic)"
            ))),
        }
    }
}

/// Kernel family, bandwidth and dimension of a product kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    kind: KernelKind,
    bandwidth: f64,
    dim: usize,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, bandwidth: f64, dim: usize) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(NuqError::config(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        if dim == 0 {
            return Err(NuqError::config("kernel dimension must be at least 1"));
        }
        Ok(KernelSpec {
            kind,
            bandwidth,
            dim,
        })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `W(u) = prod_i K(u_i / h)`, flushed to zero below [`WEIGHT_FLOOR`].
    pub fn eval_product(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.dim {
            return Err(NuqError::input(format!(
                "offset has length {}, kernel dimension is {}",
                u.len(),
                self.dim
            )));
        }
        Ok(self.product_unchecked(u.iter().copied()))
    }

    /// Product weight of `point - query` without materializing the offset.
    pub(crate) fn weight_between(&self, point: &[f32], query: &[f32]) -> f64 {
        debug_assert_eq!(point.len(), query.len());
        self.product_unchecked(
            point
                .iter()
                .zip(query)
                .map(|(&p, &q)| f64::from(p) - f64::from(q)),
        )
    }

    fn product_unchecked(&self, u: impl Iterator<Item = f64>) -> f64 {
        let inv_h = 1.0 / self.bandwidth;
        let w = match self.kind {
            // One exp for the whole product, otherwise the per-factor exps
            // underflow long before the product would.
            KernelKind::Gaussian => {
                let sq: f64 = u.map(|ui| ui * inv_h).map(|z| z * z).sum();
                INV_SQRT_2PI.powi(self.dim as i32) * (-0.5 * sq).exp()
            }
            kind => {
                let mut w = 1.0;
                for ui in u {
                    w *= kind.eval(ui * inv_h);
                    if w < WEIGHT_FLOOR {
                        return 0.0;
                    }
                }
                w
            }
        };
        if w < WEIGHT_FLOOR {
            0.0
        } else {
            w
        }
    }

    /// `||K||_2^2 = c_K^d` for the separable product kernel.
    pub fn norm_sq(&self) -> f64 {
        self.kind.square_integral().powi(self.dim as i32)
    }

    /// `h^d`
    pub fn bandwidth_volume(&self) -> f64 {
        self.bandwidth.powi(self.dim as i32)
    }
}

/// Free-function form of [`KernelKind::eval`].
pub fn eval_profile(kind: KernelKind, z: f64) -> f64 {
    kind.eval(z)
}

/// Free-function form of [`KernelKind::square_integral`].
pub fn square_integral_per_dim(kind: KernelKind) -> f64 {
    kind.square_integral()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = if n.is_multiple_of(2) { n } else { n + 1 };
        let step = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let x = a + step * i as f64;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        acc * step / 3.0
    }

    #[test]
    fn profile_values() {
        assert_eq!(eval_profile(KernelKind::Logistic, 0.0), 0.25);
        assert!((eval_profile(KernelKind::Sigmoid, 0.0) - 1.0 / PI).abs() < 1e-15);
        let g = eval_profile(KernelKind::Gaussian, 1.5);
        let oracle = (-1.125f64).exp() / (2.0 * PI).sqrt();
        assert!((g - oracle).abs() < 1e-15);
        assert!((g - 0.129518).abs() < 1e-6);
    }

    #[test]
    fn profiles_are_densities_and_match_square_integrals() {
        for kind in KernelKind::ALL {
            let mass = simpson(|z| kind.eval(z), -40.0, 40.0, 200_000);
            assert!((mass - 1.0).abs() < 1e-6, "{kind}: mass {mass}");
            let sq = simpson(|z| kind.eval(z).powi(2), -40.0, 40.0, 200_000);
            assert!((sq - kind.square_integral()).abs() < 1e-6, "{kind}: {sq}");
        }
    }

    #[test]
    fn square_integral_constants() {
        assert!((square_integral_per_dim(KernelKind::Gaussian) - 0.282095).abs() < 1e-6);
        assert!((square_integral_per_dim(KernelKind::Sigmoid) - 0.202642).abs() < 1e-6);
        assert!((square_integral_per_dim(KernelKind::Logistic) - 0.166667).abs() < 1e-6);
    }

    #[test]
    fn product_examples() {
        let g = KernelSpec::new(KernelKind::Gaussian, 1.0, 2).unwrap();
        assert!((g.eval_product(&[0.0, 0.0]).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let l = KernelSpec::new(KernelKind::Logistic, 2.0, 3).unwrap();
        assert_eq!(l.eval_product(&[0.0, 0.0, 0.0]).unwrap(), 0.015625);
        let g = KernelSpec::new(KernelKind::Gaussian, 0.5, 1).unwrap();
        let w = g.eval_product(&[0.5]).unwrap();
        assert!((w - eval_profile(KernelKind::Gaussian, 1.0)).abs() < 1e-15);
        assert!((w - 0.241971).abs() < 1e-6);
    }

    #[test]
    fn product_dimension_mismatch() {
        let g = KernelSpec::new(KernelKind::Gaussian, 1.0, 2).unwrap();
        assert!(matches!(g.eval_product(&[0.0]), Err(NuqError::Input(_))));
    }

    #[test]
    fn norm_sq_examples() {
        let g1 = KernelSpec::new(KernelKind::Gaussian, 1.0, 1).unwrap();
        assert!((g1.norm_sq() - 0.282095).abs() < 1e-6);
        let l2 = KernelSpec::new(KernelKind::Logistic, 1.0, 2).unwrap();
        assert!((l2.norm_sq() - 1.0 / 36.0).abs() < 1e-15);
        let g3 = KernelSpec::new(KernelKind::Gaussian, 1.0, 3).unwrap();
        assert!((g3.norm_sq() - 0.022449).abs() < 1e-6);
    }

    #[test]
    fn norm_sq_matches_3d_quadrature() {
        // Separable integrand: a 3-D Simpson rule on a tensor grid.
        let n = 200;
        let (a, b) = (-9.0, 9.0);
        let step = (b - a) / n as f64;
        let wts: Vec<f64> = (0..=n)
            .map(|i| {
                if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                }
            })
            .collect();
        let spec = KernelSpec::new(KernelKind::Gaussian, 1.0, 3).unwrap();
        let mut acc = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let u = [
                        a + step * i as f64,
                        a + step * j as f64,
                        a + step * k as f64,
                    ];
                    acc += wts[i] * wts[j] * wts[k] * spec.eval_product(&u).unwrap().powi(2);
                }
            }
        }
        acc *= (step / 3.0).powi(3);
        assert!((acc - spec.norm_sq()).abs() < 1e-9);
    }

    #[test]
    fn underflow_flush() {
        for kind in KernelKind::ALL {
            let spec = KernelSpec::new(kind, 1.0, 2).unwrap();
            assert_eq!(spec.eval_product(&[1e4, 1e4]).unwrap(), 0.0);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(KernelSpec::new(KernelKind::Gaussian, 0.0, 1).is_err());
        assert!(KernelSpec::new(KernelKind::Gaussian, f64::NAN, 1).is_err());
        assert!(KernelSpec::new(KernelKind::Gaussian, 1.0, 0).is_err());
        assert!("rbf".parse::<KernelKind>().is_err());
        assert_eq!(
            "sigmoid".parse::<KernelKind>().unwrap(),
            KernelKind::Sigmoid
        );
    }

    #[test]
    fn monotone_in_abs_z() {
        for kind in [KernelKind::Gaussian, KernelKind::Logistic] {
            let mut prev = kind.eval(0.0);
            for i in 1..400 {
                let v = kind.eval(i as f64 * 0.05);
                assert!(v < prev, "{kind} not decreasing at step {i}");
                prev = v;
            }
        }
    }
}
