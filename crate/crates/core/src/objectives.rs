//! Differentiable test functions with analytic gradients and known optima.
//!
//! Three families are provided:
//!
//! - [`Objective::bowl`]: `1 - cos(|x|^2)` in two dimensions. Its minimum at
//!   the origin sits in a basin that ends where `|x|^2 = pi`, and the
//!   one-point-convexity ratio `2 sin(|x|^2)` vanishes at both ends of the
//!   basin, so the convex region is an annulus rather than a ball.
//! - [`Objective::opc_quadratic`]: `(c/2)|x - x*|^2`, one-point strongly
//!   convex for every `delta < c` everywhere.
//! - [`Objective::anisotropic_quadratic`]: `(1/2) sum d_i x_i^2` with a known
//!   smoothness constant `max d_i`.
//!
//! Stochastic gradients come only from [`NoisyObjective`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamVector, Rng, ScalarFn};

/// One-point-convexity level used for the bowl when none is given.
pub const DEFAULT_BOWL_DELTA: f64 = 0.5;

/// Where an objective is `delta`-one-point strongly convex: the closed
/// annulus `r_min <= |x - center| <= r_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpcRegion {
    pub center: ParamVector,
    pub r_min: f64,
    pub r_max: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Bowl,
    OpcQuadratic { c: f64, x_star: ParamVector },
    Anisotropic { diag: ParamVector },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    name: &'static str,
    dim: usize,
    kind: Kind,
    optimum: Option<ParamVector>,
    opc_region: Option<OpcRegion>,
}

impl Objective {
    /// `f(x1, x2) = 1 - cos(x1^2 + x2^2)` with the default convexity level.
    pub fn bowl() -> Self {
        Self::bowl_with_delta(DEFAULT_BOWL_DELTA).expect("default delta is in range")
    }

    /// The bowl, with its convexity region recorded for the given `delta`.
    ///
    /// The ratio `<-grad f(x), -x> / |x|^2 = 2 sin(r^2)` exceeds `delta`
    /// exactly for `asin(delta/2) < r^2 < pi - asin(delta/2)`, so `delta`
    /// must lie in `(0, 2)`.
    pub fn bowl_with_delta(delta: f64) -> Result<Self> {
        let (r2_min, r2_max) = bowl_opc_annulus(delta)?;
        let origin = ParamVector::zeros(2);
        Ok(Self {
            name: "bowl",
            dim: 2,
            kind: Kind::Bowl,
            optimum: Some(origin.clone()),
            opc_region: Some(OpcRegion {
                center: origin,
                r_min: r2_min.sqrt(),
                r_max: r2_max.sqrt(),
                delta,
            }),
        })
    }

    pub fn opc_quadratic(c: f64, x_star: ParamVector) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("curvature c must be > 0, got {c}")));
        }
        Ok(Self {
            name: "opc_quadratic",
            dim: x_star.dim(),
            optimum: Some(x_star.clone()),
            // any delta < c holds on the whole space; record the supremum
            opc_region: Some(OpcRegion {
                center: x_star.clone(),
                r_min: 0.0,
                r_max: f64::INFINITY,
                delta: c,
            }),
            kind: Kind::OpcQuadratic { c, x_star },
        })
    }

    pub fn anisotropic_quadratic(diag: ParamVector) -> Result<Self> {
        if let Some(i) = diag.iter().position(|&d| d <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "diagonal entry {i} must be > 0, got {}",
                diag[i]
            )));
        }
        let origin = ParamVector::zeros(diag.dim());
        Ok(Self {
            name: "aniso_quadratic",
            dim: diag.dim(),
            optimum: Some(origin.clone()),
            opc_region: Some(OpcRegion {
                center: origin,
                r_min: 0.0,
                r_max: f64::INFINITY,
                delta: diag.min(),
            }),
            kind: Kind::Anisotropic { diag },
        })
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn optimum(&self) -> Option<&ParamVector> {
        self.optimum.as_ref()
    }

    pub fn opc_region(&self) -> Option<&OpcRegion> {
        self.opc_region.as_ref()
    }

    /// Global gradient-Lipschitz constant, where one is known in closed form.
    pub fn smoothness(&self) -> Option<f64> {
        match &self.kind {
            Kind::Bowl => None,
            Kind::OpcQuadratic { c, .. } => Some(*c),
            Kind::Anisotropic { diag } => Some(diag.max()),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                left: x.len(),
                right: self.dim,
            });
        }
        Ok(())
    }

    fn raw_value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Bowl => 1.0 - (x[0] * x[0] + x[1] * x[1]).cos(),
            Kind::OpcQuadratic { c, x_star } => {
                let d2: f64 = x.iter().zip(x_star).map(|(a, b)| (a - b) * (a - b)).sum();
                0.5 * c * d2
            }
            Kind::Anisotropic { diag } => {
                0.5 * x.iter().zip(diag).map(|(xi, di)| di * xi * xi).sum::<f64>()
            }
        }
    }

    fn raw_gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Bowl => {
                let s = (x[0] * x[0] + x[1] * x[1]).sin();
                vec![2.0 * x[0] * s, 2.0 * x[1] * s]
            }
            Kind::OpcQuadratic { c, x_star } => {
                x.iter().zip(x_star).map(|(a, b)| c * (a - b)).collect()
            }
            Kind::Anisotropic { diag } => x.iter().zip(diag).map(|(xi, di)| di * xi).collect(),
        }
    }

    pub fn eval(&self, x: &ParamVector) -> Result<f64> {
        self.check_dim(x.as_slice())?;
        let v = self.raw_value(x.as_slice());
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteEvaluation)
        }
    }

    pub fn grad(&self, x: &ParamVector) -> Result<ParamVector> {
        self.check_dim(x.as_slice())?;
        ParamVector::new(self.raw_gradient(x.as_slice())).map_err(|_| Error::NonFiniteEvaluation)
    }
}

impl ScalarFn for Objective {
    fn value_at(&self, x: &[f64]) -> f64 {
        if x.len() != self.dim {
            return f64::NAN;
        }
        self.raw_value(x)
    }
}

/// Closed `r^2` interval on which the bowl is `delta`-one-point strongly
/// convex, endpoints excluded by the strict inequality.
pub fn bowl_opc_annulus(delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta < 2.0) {
        return Err(Error::InvalidParameter(format!(
            "bowl convexity level must lie in (0, 2), got {delta}"
        )));
    }
    let lo = (delta / 2.0).asin();
    Ok((lo, PI - lo))
}

/// Radius of the bowl's basin: beyond `|x|^2 = pi` the gradient points away
/// from the origin.
pub fn bowl_basin_radius() -> f64 {
    PI.sqrt()
}

/// Source of gradients for an optimizer run.
///
/// `gradient` draws a fresh sample at `x`. `gradient_same_draw` re-evaluates
/// at a new point using the randomness of the most recent draw, which is
/// what a minibatch method sees when it evaluates the same minibatch twice.
pub trait GradientSource {
    fn dim(&self) -> usize;
    fn value(&self, x: &ParamVector) -> Result<f64>;
    fn gradient(&mut self, x: &ParamVector) -> Result<ParamVector>;
    fn gradient_same_draw(&self, x: &ParamVector) -> Result<ParamVector>;
    /// `true` when repeated calls at the same point always agree.
    fn is_deterministic(&self) -> bool;
}

impl GradientSource for Objective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &ParamVector) -> Result<f64> {
        self.eval(x)
    }

    fn gradient(&mut self, x: &ParamVector) -> Result<ParamVector> {
        self.grad(x)
    }

    fn gradient_same_draw(&self, x: &ParamVector) -> Result<ParamVector> {
        self.grad(x)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Adds i.i.d. Gaussian noise to every gradient coordinate; values are exact.
#[derive(Clone, Debug)]
pub struct NoisyObjective {
    base: Objective,
    noise_sigma: f64,
    rng: Rng,
    last_noise: Option<Vec<f64>>,
}

impl NoisyObjective {
    pub fn new(base: Objective, noise_sigma: f64, rng: Rng) -> Result<Self> {
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise sigma must be >= 0, got {noise_sigma}"
            )));
        }
        Ok(Self {
            base,
            noise_sigma,
            rng,
            last_noise: None,
        })
    }

    pub fn base(&self) -> &Objective {
        &self.base
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    fn perturb(&self, clean: ParamVector, noise: &[f64]) -> Result<ParamVector> {
        let v: Vec<f64> = clean.iter().zip(noise).map(|(g, n)| g + n).collect();
        ParamVector::new(v).map_err(|_| Error::NonFiniteEvaluation)
    }
}

impl GradientSource for NoisyObjective {
    fn dim(&self) -> usize {
        self.base.dim
    }

    fn value(&self, x: &ParamVector) -> Result<f64> {
        self.base.eval(x)
    }

    fn gradient(&mut self, x: &ParamVector) -> Result<ParamVector> {
        let clean = self.base.grad(x)?;
        if self.noise_sigma == 0.0 {
            return Ok(clean);
        }
        let noise: Vec<f64> = (0..clean.dim())
            .map(|_| self.noise_sigma * self.rng.normal())
            .collect();
        let g = self.perturb(clean, &noise)?;
        self.last_noise = Some(noise);
        Ok(g)
    }

    fn gradient_same_draw(&self, x: &ParamVector) -> Result<ParamVector> {
        let clean = self.base.grad(x)?;
        match &self.last_noise {
            Some(noise) if self.noise_sigma > 0.0 => self.perturb(clean, noise),
            _ => Ok(clean),
        }
    }

    fn is_deterministic(&self) -> bool {
        self.noise_sigma == 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_slice(v).unwrap()
    }

    #[test]
    fn bowl_at_origin() {
        let f = Objective::bowl();
        assert_eq!(f.eval(&pv(&[0., 0.])).unwrap(), 0.0);
        assert_eq!(f.grad(&pv(&[0., 0.])).unwrap(), pv(&[0., 0.]));
    }

    #[test]
    fn bowl_at_start_point() {
        // 40-digit evaluation of the closed form
        let f = Objective::bowl();
        let x = pv(&[1.0, 0.3]);
        assert!((f.eval(&x).unwrap() - 0.537_514_633_124_699_1).abs() < 1e-14);
        let g = f.grad(&x).unwrap();
        assert!((g[0] - 1.773_253_828_898_974_5).abs() < 1e-14);
        assert!((g[1] - 0.531_976_148_669_692_3).abs() < 1e-14);
    }

    #[test]
    fn bowl_region_is_an_annulus() {
        let f = Objective::bowl_with_delta(0.5).unwrap();
        let r = f.opc_region().unwrap();
        assert!((r.r_min * r.r_min - 0.252_680_255_142_078_65).abs() < 1e-15);
        assert!((r.r_max * r.r_max - 2.888_912_398_447_714_6).abs() < 1e-14);
        assert!(r.r_max < bowl_basin_radius());
        assert!(Objective::bowl_with_delta(2.0).is_err());
        assert!(Objective::bowl_with_delta(0.0).is_err());
    }

    #[test]
    fn opc_quadratic_examples() {
        let f = Objective::opc_quadratic(1.0, pv(&[0., 0.])).unwrap();
        assert_eq!(f.grad(&pv(&[2., 0.])).unwrap(), pv(&[2., 0.]));

        let f = Objective::opc_quadratic(4.0, pv(&[1., 0.])).unwrap();
        assert_eq!(f.eval(&pv(&[3., 0.])).unwrap(), 8.0);

        let f = Objective::opc_quadratic(2.0, pv(&[0., 0.])).unwrap();
        let x = pv(&[1., 1.]);
        let g = f.grad(&x).unwrap();
        let ratio = g.dot(&x).unwrap() / x.dot(&x).unwrap();
        assert_eq!(ratio, 2.0);

        assert!(matches!(
            Objective::opc_quadratic(0.0, pv(&[0.])),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn anisotropic_examples() {
        let f = Objective::anisotropic_quadratic(pv(&[4., 1.])).unwrap();
        assert_eq!(f.grad(&pv(&[1., 0.])).unwrap(), pv(&[4., 0.]));
        assert_eq!(f.smoothness(), Some(4.0));
        let g1 = f.grad(&pv(&[1., 0.])).unwrap();
        let g2 = f.grad(&pv(&[2., 0.])).unwrap();
        let l = g2.sub(&g1).unwrap().norm2() / pv(&[1., 0.]).norm2();
        assert_eq!(l, 4.0);
        assert!(Objective::anisotropic_quadratic(pv(&[1., 0.])).is_err());
        assert!(Objective::anisotropic_quadratic(pv(&[1., -2.])).is_err());
    }

    #[test]
    fn wrong_dimension_is_an_error() {
        let f = Objective::bowl();
        assert!(matches!(
            f.grad(&pv(&[1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn noiseless_wrapper_is_transparent() {
        let mut noisy = NoisyObjective::new(Objective::bowl(), 0.0, Rng::new(3)).unwrap();
        let f = Objective::bowl();
        let x = pv(&[0.4, -1.2]);
        assert_eq!(noisy.gradient(&x).unwrap(), f.grad(&x).unwrap());
        assert!(noisy.is_deterministic());
    }

    #[test]
    fn same_draw_reuses_noise() {
        let mut noisy = NoisyObjective::new(
            Objective::opc_quadratic(1.0, pv(&[0., 0.])).unwrap(),
            0.3,
            Rng::new(11),
        )
        .unwrap();
        let x = pv(&[1.0, 2.0]);
        let y = pv(&[0.5, 1.0]);
        let gx = noisy.gradient(&x).unwrap();
        let gy = noisy.gradient_same_draw(&y).unwrap();
        // noise cancels in the difference: (x - y) * c
        let diff = gx.sub(&gy).unwrap();
        assert!((diff[0] - 0.5).abs() < 1e-15 && (diff[1] - 1.0).abs() < 1e-15);
        let gx2 = noisy.gradient(&x).unwrap();
        assert_ne!(gx, gx2);
        assert_eq!(noisy.value(&x).unwrap(), 2.5);
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(NoisyObjective::new(Objective::bowl(), -1.0, Rng::new(0)).is_err());
    }
}
