//! Recede bound, one-point-convexity checks, smoothness estimation and
//! escape detection.
//!
//! The recede bound answers: for an iterate `x` inside a region where
//! `<-grad f(x), x* - x> > delta |x - x*|^2`, how small may
//! `s = sqrt(max_i v_i)` be before one adaptive step
//! `x - eta diag(v)^{-1/2} grad f(x)` is no longer guaranteed to keep the
//! distance to `x*` from shrinking? The guarantee is the scalar inequality
//!
//! ```text
//! -2 eta delta D^2 + eta^2 G^2 / s >= s D^2,    D = |x - x*|, G = |grad f(x)|
//! ```
//!
//! whose positive root is `s* = eta (sqrt(delta^2 + G^2/D^2) - delta)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamVector, Rng};
use crate::objectives::Objective;

/// Relative slack for the non-strict distance comparison in [`verify_recede`].
pub const DISTANCE_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecedeBoundInput {
    pub x: ParamVector,
    pub x_star: ParamVector,
    /// Gradient at `x`.
    pub g: ParamVector,
    pub delta: f64,
    pub eta: f64,
}

/// Which closed form [`recede_bound`] evaluates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundForm {
    /// Positive root of the scalar inequality.
    #[default]
    Exact,
    /// `eta (sqrt(delta^2 D^2 + G^2) / D^2 - delta)`, the expression as
    /// usually printed; it agrees with the root only at `D = 1`.
    Literal,
}

/// Reduced scalar form of a recede-bound problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecedeScalars {
    pub dist: f64,
    pub grad_norm: f64,
    pub delta: f64,
    pub eta: f64,
}

impl RecedeBoundInput {
    pub fn scalars(&self) -> Result<RecedeScalars> {
        let dist = self.x.distance(&self.x_star)?;
        if self.g.dim() != self.x.dim() {
            return Err(Error::DimensionMismatch {
                left: self.x.dim(),
                right: self.g.dim(),
            });
        }
        Ok(RecedeScalars {
            dist,
            grad_norm: self.g.norm2(),
            delta: self.delta,
            eta: self.eta,
        })
    }
}

pub fn recede_bound(input: &RecedeBoundInput, form: BoundForm) -> Result<f64> {
    recede_bound_scalar(&input.scalars()?, form)
}

pub fn recede_bound_scalar(p: &RecedeScalars, form: BoundForm) -> Result<f64> {
    let RecedeScalars {
        dist,
        grad_norm,
        delta,
        eta,
    } = *p;
    if !(dist > 0.0) {
        return Err(Error::DegenerateInput("x coincides with x*".into()));
    }
    if !(eta > 0.0) || delta < 0.0 || !grad_norm.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need eta > 0 and delta >= 0, got eta={eta}, delta={delta}"
        )));
    }
    let ratio2 = (grad_norm / dist).powi(2);
    Ok(match form {
        // rationalised to avoid cancellation when G/D << delta
        BoundForm::Exact => eta * ratio2 / ((delta * delta + ratio2).sqrt() + delta),
        BoundForm::Literal => {
            let d2 = dist * dist;
            eta * ((delta * delta * d2 + grad_norm * grad_norm).sqrt() / d2 - delta)
        }
    })
}

/// `-2 eta delta D^2 + eta^2 G^2 / s >= s D^2` for `s > 0`.
pub fn recede_inequality_holds(s: f64, p: &RecedeScalars) -> bool {
    let d2 = p.dist * p.dist;
    let lhs = -2.0 * p.eta * p.delta * d2 + p.eta * p.eta * p.grad_norm * p.grad_norm / s;
    lhs >= s * d2
}

/// `<-grad f(x), x* - x>` and `|x* - x|^2`.
fn opc_terms(g: &ParamVector, x: &ParamVector, x_star: &ParamVector) -> Result<(f64, f64)> {
    let to_star = x_star.sub(x)?;
    let inner = -g.dot(&to_star)?;
    Ok((inner, to_star.dot(&to_star)?))
}

/// Takes one step `x' = x - eta diag(v)^{-1/2} grad f(x)` and reports
/// whether `|x' - x*|^2 >= |x - x*|^2` (up to [`DISTANCE_SLACK`]).
///
/// The strict one-point-convexity inequality is checked at `x` first.
pub fn verify_recede(
    f: &Objective,
    x: &ParamVector,
    v_diag: &ParamVector,
    delta: f64,
    eta: f64,
) -> Result<bool> {
    let x_star = f
        .optimum()
        .ok_or_else(|| Error::InvalidParameter("objective has no known optimum".into()))?;
    if v_diag.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            left: x.dim(),
            right: v_diag.dim(),
        });
    }
    if let Some(i) = v_diag.iter().position(|&v| v < 0.0) {
        return Err(Error::InvalidParameter(format!("v_diag[{i}] is negative")));
    }
    let g = f.grad(x)?;
    let (inner, d2) = opc_terms(&g, x, x_star)?;
    if d2 == 0.0 {
        return Err(Error::DegenerateInput("x coincides with x*".into()));
    }
    let required = delta * d2;
    if !(inner > required) {
        return Err(Error::HypothesisViolated { inner, required });
    }

    let mut new_d2 = 0.0;
    for i in 0..x.dim() {
        let step = if g[i] == 0.0 {
            0.0
        } else {
            eta * g[i] / v_diag[i].sqrt()
        };
        let diff = x[i] - step - x_star[i];
        new_d2 += diff * diff;
    }
    // an infinite step (v_i = 0, g_i != 0) moves arbitrarily far away
    if new_d2.is_nan() {
        return Err(Error::NonFiniteEvaluation);
    }
    Ok(new_d2 >= d2 - DISTANCE_SLACK * d2)
}

/// Annulus `r_min <= |x - x*| <= r_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub r_min: f64,
    pub r_max: f64,
}

impl Annulus {
    pub fn new(r_min: f64, r_max: f64) -> Result<Self> {
        let a = Self { r_min, r_max };
        a.validate()?;
        Ok(a)
    }

    /// Annulus given by squared radii.
    pub fn from_squared(r2_min: f64, r2_max: f64) -> Result<Self> {
        if r2_min < 0.0 {
            return Err(Error::InvalidRegion {
                r_min: r2_min,
                r_max: r2_max,
            });
        }
        Self::new(r2_min.sqrt(), r2_max.sqrt())
    }

    fn validate(&self) -> Result<()> {
        if !(self.r_min >= 0.0 && self.r_min < self.r_max && self.r_max.is_finite()) {
            return Err(Error::InvalidRegion {
                r_min: self.r_min,
                r_max: self.r_max,
            });
        }
        Ok(())
    }

    /// Uniform in `r^2`, uniform in direction.
    pub fn sample(&self, center: &ParamVector, rng: &mut Rng) -> Result<ParamVector> {
        let r2 = rng.uniform_in(self.r_min * self.r_min, self.r_max * self.r_max);
        let r = r2.sqrt();
        let u = rng.unit_vector(center.dim());
        ParamVector::try_from_fn(center.dim(), |i| center[i] + r * u[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OpcCheck {
    pub holds: bool,
    pub violations: Vec<ParamVector>,
}

fn sample_ratios(
    f: &Objective,
    x_star: &ParamVector,
    region: Annulus,
    n_samples: usize,
    rng: &mut Rng,
    mut visit: impl FnMut(&ParamVector, f64, f64),
) -> Result<()> {
    region.validate()?;
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be >= 1".into()));
    }
    for _ in 0..n_samples {
        let x = region.sample(x_star, rng)?;
        let g = f.grad(&x)?;
        let (inner, d2) = opc_terms(&g, &x, x_star)?;
        if d2 > 0.0 {
            visit(&x, inner, d2);
        }
    }
    Ok(())
}

/// Samples the annulus and collects every point where
/// `<-grad f(x), x* - x> > delta |x* - x|^2` fails.
pub fn check_opc(
    f: &Objective,
    x_star: &ParamVector,
    delta: f64,
    region: Annulus,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<OpcCheck> {
    let mut violations = Vec::new();
    sample_ratios(f, x_star, region, n_samples, rng, |x, inner, d2| {
        if !(inner > delta * d2) {
            violations.push(x.clone());
        }
    })?;
    Ok(OpcCheck {
        holds: violations.is_empty(),
        violations,
    })
}

/// Smallest sampled `<-grad f(x), x* - x> / |x* - x|^2`.
pub fn estimate_delta(
    f: &Objective,
    x_star: &ParamVector,
    region: Annulus,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let mut best = f64::INFINITY;
    sample_ratios(f, x_star, region, n_samples, rng, |_, inner, d2| {
        best = best.min(inner / d2);
    })?;
    Ok(best)
}

/// Largest `|g_{k+1} - g_k| / |x_{k+1} - x_k|` over consecutive
/// `(x, g)` pairs, skipping pairs that did not move.
pub fn estimate_l<'a, I>(points: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a ParamVector, &'a ParamVector)>,
{
    let mut iter = points.into_iter();
    let Some(mut prev) = iter.next() else {
        return Err(Error::InsufficientData("empty trajectory".into()));
    };
    let mut pairs = 0usize;
    let mut best = 0.0f64;
    for cur in iter {
        pairs += 1;
        let dx = cur.0.distance(prev.0)?;
        if dx > 0.0 {
            let q = cur.1.distance(prev.1)? / dx;
            if q.is_finite() {
                best = best.max(q);
            }
        }
        prev = cur;
    }
    if pairs == 0 {
        return Err(Error::InsufficientData("need at least two points".into()));
    }
    Ok(best)
}

/// `eta / (sqrt(v_hat_i) + epsilon)` per coordinate.
pub fn effective_lr(v_hat: &ParamVector, eta: f64, epsilon: f64) -> Result<ParamVector> {
    if let Some(i) = v_hat.iter().position(|&v| v < 0.0) {
        return Err(Error::InvalidParameter(format!("v_hat[{i}] is negative")));
    }
    ParamVector::try_from_fn(v_hat.dim(), |i| eta / (v_hat[i].sqrt() + epsilon))
        .map_err(|_| Error::DivisionByZero { index: 0 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeReport {
    pub escaped: bool,
    pub first_escape_step: Option<usize>,
    pub min_distance: f64,
    pub min_distance_step: usize,
}

/// An escape is a distance above `radius` after the sequence has first been
/// within `radius`. Indices are positions in `distances`.
pub fn detect_escape_in_distances(distances: &[f64], radius: f64) -> Result<EscapeReport> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be > 0, got {radius}")));
    }
    if distances.is_empty() {
        return Err(Error::InsufficientData("empty trajectory".into()));
    }
    let mut entered = false;
    let mut first_escape_step = None;
    let (mut min_distance, mut min_distance_step) = (f64::INFINITY, 0);
    for (i, &d) in distances.iter().enumerate() {
        if d < min_distance {
            min_distance = d;
            min_distance_step = i;
        }
        if d <= radius {
            entered = true;
        } else if entered && first_escape_step.is_none() {
            first_escape_step = Some(i);
        }
    }
    Ok(EscapeReport {
        escaped: first_escape_step.is_some(),
        first_escape_step,
        min_distance,
        min_distance_step,
    })
}

pub fn detect_escape<'a, I>(positions: I, x_star: &ParamVector, radius: f64) -> Result<EscapeReport>
where
    I: IntoIterator<Item = &'a ParamVector>,
{
    let distances = positions
        .into_iter()
        .map(|x| x.distance(x_star))
        .collect::<Result<Vec<_>>>()?;
    detect_escape_in_distances(&distances, radius)
}
