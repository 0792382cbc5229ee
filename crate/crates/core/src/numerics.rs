//! Dense real vectors, seeded randomness and finite-difference gradients.

use std::fmt;
use std::ops::Index;

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative central-difference step: coordinate `i` is probed at
/// `x[i] ± DEFAULT_FD_STEP * max(1, |x[i]|)`.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// A dense, finite, non-empty vector of `f64`.
///
/// Every constructor and every arithmetic operation rejects NaN and
/// infinities, so a value of this type is always finite.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(Vec<f64>);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElemOp {
    Add,
    Sub,
    Mul,
    Div,
    Max,
}

impl ParamVector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyVector);
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(Self(data))
    }

    pub fn from_slice(data: &[f64]) -> Result<Self> {
        Self::new(data.to_vec())
    }

    /// # Panics
    ///
    /// Panics if `dim == 0`.
    pub fn zeros(dim: usize) -> Self {
        Self::filled(dim, 0.0)
    }

    /// # Panics
    ///
    /// Panics if `dim == 0` or `value` is not finite.
    pub fn filled(dim: usize, value: f64) -> Self {
        assert!(dim >= 1, "ParamVector needs dim >= 1");
        assert!(value.is_finite(), "ParamVector entries must be finite");
        Self(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Builds a vector coordinate by coordinate, failing on the first
    /// non-finite entry.
    pub fn try_from_fn(dim: usize, mut f: impl FnMut(usize) -> f64) -> Result<Self> {
        Self::new((0..dim).map(&mut f).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        self.map(|v| c * v)
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        check_dims(self, other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm2(&self) -> f64 {
        norm2(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        elementwise(ElemOp::Add, self, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        elementwise(ElemOp::Sub, self, other)
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        check_dims(self, other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

impl fmt::Debug for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(data: Vec<f64>) -> Result<Self> {
        Self::new(data)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(v: ParamVector) -> Self {
        v.0
    }
}

impl<'a> IntoIterator for &'a ParamVector {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

fn check_dims(a: &ParamVector, b: &ParamVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

/// Applies `op` coordinate by coordinate.
pub fn elementwise(op: ElemOp, a: &ParamVector, b: &ParamVector) -> Result<ParamVector> {
    check_dims(a, b)?;
    let mut out = Vec::with_capacity(a.dim());
    for (index, (&x, &y)) in a.0.iter().zip(&b.0).enumerate() {
        let r = match op {
            ElemOp::Add => x + y,
            ElemOp::Sub => x - y,
            ElemOp::Mul => x * y,
            ElemOp::Div => {
                if y == 0.0 {
                    return Err(Error::DivisionByZero { index });
                }
                x / y
            }
            ElemOp::Max => x.max(y),
        };
        out.push(r);
    }
    ParamVector::new(out)
}

pub fn norm2(a: &ParamVector) -> f64 {
    a.0.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Anything that maps a point to a scalar; the input to [`fd_gradient`].
pub trait ScalarFn {
    fn value_at(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> ScalarFn for F {
    fn value_at(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Central-difference gradient with per-coordinate step `h * max(1, |x[i]|)`.
pub fn fd_gradient(f: &impl ScalarFn, x: &ParamVector, h: f64) -> Result<ParamVector> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut probe = x.as_slice().to_vec();
    let mut grad = Vec::with_capacity(x.dim());
    for i in 0..x.dim() {
        let xi = x[i];
        let step = h * xi.abs().max(1.0);
        probe[i] = xi + step;
        let fp = f.value_at(&probe);
        probe[i] = xi - step;
        let fm = f.value_at(&probe);
        probe[i] = xi;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteEvaluation);
        }
        // divide by the realised step, not the nominal one
        grad.push((fp - fm) / ((xi + step) - (xi - step)));
    }
    ParamVector::new(grad).map_err(|_| Error::NonFiniteEvaluation)
}

/// Seeded generator; equal seeds give bit-identical streams.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn normal_vector(&mut self, dim: usize) -> ParamVector {
        ParamVector((0..dim).map(|_| self.normal()).collect())
    }

    /// Uniformly distributed direction on the unit sphere.
    pub fn unit_vector(&mut self, dim: usize) -> ParamVector {
        loop {
            let v = self.normal_vector(dim);
            let n = v.norm2();
            if n > 1e-12 {
                return ParamVector(v.0.into_iter().map(|c| c / n).collect());
            }
        }
    }

    /// Derives an independent child generator, e.g. one per parallel case.
    pub fn fork(&mut self) -> Rng {
        Rng::new(self.inner.random())
    }
}
