//! Step functions for SGD with momentum, Adam, AMSGrad, AdaBound and AdaFix.
//!
//! Every optimizer is a pure function `(x, g, state, hyper) -> StepResult`:
//! the input state is never mutated and the returned state is the one to feed
//! into the next step. All adaptive methods divide by `sqrt(v_hat) + epsilon`
//! with Adam-style bias correction.
//!
//! AdaFix updates the second moment only while the largest gradient
//! coordinate is at least `L * eta`, where `L` is a running estimate of the
//! gradient Lipschitz constant built from the quotient
//! `|g(x_next) - g(x)| / |x_next - x|` seen at each step. While the gate is
//! closed the bias-corrected second moment captured at the last open step is
//! reused verbatim.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ParamVector;
use crate::objectives::GradientSource;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgdm,
    Adam,
    AmsGrad,
    AdaBound,
    AdaFix,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        OptimizerKind::Sgdm,
        OptimizerKind::Adam,
        OptimizerKind::AmsGrad,
        OptimizerKind::AdaBound,
        OptimizerKind::AdaFix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgdm => "sgdm",
            OptimizerKind::Adam => "adam",
            OptimizerKind::AmsGrad => "amsgrad",
            OptimizerKind::AdaBound => "adabound",
            OptimizerKind::AdaFix => "adafix",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown optimizer '{s}'")))
    }
}

/// AdaBound's per-coordinate learning-rate band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundSchedule {
    /// `lower(t) = c (1 - 1/((1-beta2) t + 1))`,
    /// `upper(t) = c (1 + 1/((1-beta2) t))`; both tend to `c`.
    Converging { final_lr: f64 },
    Constant { lower: f64, upper: f64 },
}

impl Default for BoundSchedule {
    fn default() -> Self {
        BoundSchedule::Converging { final_lr: 0.1 }
    }
}

impl BoundSchedule {
    /// `(lower, upper)` at step `t >= 1`.
    pub fn at(&self, t: u64, beta2: f64) -> (f64, f64) {
        match *self {
            BoundSchedule::Converging { final_lr } => {
                let gamma_t = (1.0 - beta2) * t as f64;
                (
                    final_lr * (1.0 - 1.0 / (gamma_t + 1.0)),
                    final_lr * (1.0 + 1.0 / gamma_t),
                )
            }
            BoundSchedule::Constant { lower, upper } => (lower, upper),
        }
    }

    pub fn checked_at(&self, t: u64, beta2: f64) -> Result<(f64, f64)> {
        let (lower, upper) = self.at(t, beta2);
        if !(lower <= upper) || lower < 0.0 {
            return Err(Error::InvalidSchedule { t, lower, upper });
        }
        Ok((lower, upper))
    }
}

/// How AdaFix compares the gradient against `L * eta`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateRule {
    /// `max_i |g_i|`.
    #[default]
    Absolute,
    /// `max_i g_i`, signs kept.
    Signed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Heavy-ball momentum for SGDM.
    pub mu: f64,
    pub bounds: BoundSchedule,
    /// AdaFix initial smoothness estimate.
    pub l0: f64,
    pub gate: GateRule,
    /// AdaFix: once the gate closes, keep it closed.
    pub freeze_permanent: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            eta: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            mu: 0.9,
            bounds: BoundSchedule::default(),
            l0: 0.0,
            gate: GateRule::Absolute,
            freeze_permanent: false,
        }
    }
}

impl HyperParams {
    pub fn with_eta(eta: f64) -> Self {
        Self {
            eta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must lie in [0, 1), got {v}")))
            }
        };
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        unit("mu", self.mu)?;
        if !(self.l0 >= 0.0 && self.l0.is_finite()) {
            return Err(Error::InvalidParameter(format!("L0 must be >= 0, got {}", self.l0)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    /// Number of steps taken so far.
    pub t: u64,
    /// First moment; the velocity for SGDM.
    pub m: ParamVector,
    /// Raw second moment.
    pub v: ParamVector,
    /// AMSGrad running maximum of the bias-corrected second moment.
    pub v_hat_max: ParamVector,
    /// AdaFix running smoothness estimate.
    pub l_est: f64,
    /// AdaFix bias-corrected second moment captured at the last open gate.
    pub v_frozen_hat: Option<ParamVector>,
    /// AdaFix with `freeze_permanent`: the gate has closed once.
    pub frozen: bool,
}

impl OptimizerState {
    pub fn new(dim: usize, l0: f64) -> Self {
        Self {
            t: 0,
            m: ParamVector::zeros(dim),
            v: ParamVector::zeros(dim),
            v_hat_max: ParamVector::zeros(dim),
            l_est: l0,
            v_frozen_hat: None,
            frozen: false,
        }
    }

    pub fn for_params(dim: usize, hp: &HyperParams) -> Self {
        Self::new(dim, hp.l0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    /// Second moment in the denominator; `None` for SGDM.
    pub v_hat_used: Option<ParamVector>,
    /// Per-coordinate multiplier applied to the first moment.
    pub effective_lr: ParamVector,
    pub gate_open: Option<bool>,
    pub l_t: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub x_next: ParamVector,
    pub state: OptimizerState,
    pub diagnostics: StepDiagnostics,
    /// AdaFix evaluates the gradient at `x_next`; it is returned so a
    /// deterministic driver can reuse it as the next step's gradient.
    pub grad_at_next: Option<ParamVector>,
}

fn check_inputs(x: &ParamVector, g: &ParamVector, s: &OptimizerState) -> Result<()> {
    for other in [g, &s.m, &s.v] {
        if other.dim() != x.dim() {
            return Err(Error::DimensionMismatch {
                left: x.dim(),
                right: other.dim(),
            });
        }
    }
    Ok(())
}

fn finite(v: Vec<f64>, step: u64) -> Result<ParamVector> {
    ParamVector::new(v).map_err(|_| Error::NonFiniteIterate { step })
}

fn ema(prev: &ParamVector, g: &ParamVector, beta: f64, square: bool) -> Vec<f64> {
    prev.iter()
        .zip(g)
        .map(|(&p, &gi)| beta * p + (1.0 - beta) * if square { gi * gi } else { gi })
        .collect()
}

fn bias_correct(v: &[f64], beta: f64, t: u64) -> Vec<f64> {
    let c = 1.0 - beta.powf(t as f64);
    v.iter().map(|x| x / c).collect()
}

fn effective_lr(v_hat: &[f64], eta: f64, epsilon: f64) -> Vec<f64> {
    v_hat.iter().map(|v| eta / (v.sqrt() + epsilon)).collect()
}

fn apply(x: &ParamVector, lr: &[f64], m_hat: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(lr)
        .zip(m_hat)
        .map(|((xi, l), m)| xi - l * m)
        .collect()
}

/// `u <- mu u + g; x <- x - eta u`.
pub fn sgdm_step(
    x: &ParamVector,
    g: &ParamVector,
    s: &OptimizerState,
    h: &HyperParams,
) -> Result<StepResult> {
    check_inputs(x, g, s)?;
    let t = s.t + 1;
    let u: Vec<f64> = s.m.iter().zip(g).map(|(u, gi)| h.mu * u + gi).collect();
    let lr = vec![h.eta; x.dim()];
    let x_next = finite(apply(x, &lr, &u), t)?;
    let state = OptimizerState {
        t,
        m: finite(u, t)?,
        ..s.clone()
    };
    Ok(StepResult {
        x_next,
        state,
        diagnostics: StepDiagnostics {
            v_hat_used: None,
            effective_lr: finite(lr, t)?,
            gate_open: None,
            l_t: None,
        },
        grad_at_next: None,
    })
}

struct Moments {
    t: u64,
    m: Vec<f64>,
    m_hat: Vec<f64>,
}

fn first_moment(g: &ParamVector, s: &OptimizerState, h: &HyperParams) -> Moments {
    let t = s.t + 1;
    let m = ema(&s.m, g, h.beta1, false);
    let m_hat = bias_correct(&m, h.beta1, t);
    Moments { t, m, m_hat }
}

/// Returns `(v, v_hat)` after folding in `g` at step `t`.
fn second_moment(g: &ParamVector, s: &OptimizerState, h: &HyperParams, t: u64) -> (Vec<f64>, Vec<f64>) {
    let v = ema(&s.v, g, h.beta2, true);
    let v_hat = bias_correct(&v, h.beta2, t);
    (v, v_hat)
}

pub fn adam_step(
    x: &ParamVector,
    g: &ParamVector,
    s: &OptimizerState,
    h: &HyperParams,
) -> Result<StepResult> {
    check_inputs(x, g, s)?;
    let Moments { t, m, m_hat } = first_moment(g, s, h);
    let (v, v_hat) = second_moment(g, s, h, t);
    let lr = effective_lr(&v_hat, h.eta, h.epsilon);
    let x_next = finite(apply(x, &lr, &m_hat), t)?;
    Ok(StepResult {
        x_next,
        state: OptimizerState {
            t,
            m: finite(m, t)?,
            v: finite(v, t)?,
            ..s.clone()
        },
        diagnostics: StepDiagnostics {
            v_hat_used: Some(finite(v_hat, t)?),
            effective_lr: finite(lr, t)?,
            gate_open: None,
            l_t: None,
        },
        grad_at_next: None,
    })
}

/// Adam with the denominator taken from the running maximum of `v_hat`.
pub fn amsgrad_step(
    x: &ParamVector,
    g: &ParamVector,
    s: &OptimizerState,
    h: &HyperParams,
) -> Result<StepResult> {
    check_inputs(x, g, s)?;
    let Moments { t, m, m_hat } = first_moment(g, s, h);
    let (v, v_hat) = second_moment(g, s, h, t);
    let v_used: Vec<f64> = v_hat
        .iter()
        .zip(&s.v_hat_max)
        .map(|(a, &b)| a.max(b))
        .collect();
    let lr = effective_lr(&v_used, h.eta, h.epsilon);
    let x_next = finite(apply(x, &lr, &m_hat), t)?;
    let v_used = finite(v_used, t)?;
    Ok(StepResult {
        x_next,
        state: OptimizerState {
            t,
            m: finite(m, t)?,
            v: finite(v, t)?,
            v_hat_max: v_used.clone(),
            ..s.clone()
        },
        diagnostics: StepDiagnostics {
            v_hat_used: Some(v_used),
            effective_lr: finite(lr, t)?,
            gate_open: None,
            l_t: None,
        },
        grad_at_next: None,
    })
}

/// Adam with each coordinate's effective learning rate clipped into the
/// schedule's band at step `t`.
pub fn adabound_step(
    x: &ParamVector,
    g: &ParamVector,
    s: &OptimizerState,
    h: &HyperParams,
) -> Result<StepResult> {
    check_inputs(x, g, s)?;
    let Moments { t, m, m_hat } = first_moment(g, s, h);
    let (lower, upper) = h.bounds.checked_at(t, h.beta2)?;
    let (v, v_hat) = second_moment(g, s, h, t);
    let lr: Vec<f64> = effective_lr(&v_hat, h.eta, h.epsilon)
        .into_iter()
        .map(|l| l.clamp(lower, upper))
        .collect();
    let x_next = finite(apply(x, &lr, &m_hat), t)?;
    Ok(StepResult {
        x_next,
        state: OptimizerState {
            t,
            m: finite(m, t)?,
            v: finite(v, t)?,
            ..s.clone()
        },
        diagnostics: StepDiagnostics {
            v_hat_used: Some(finite(v_hat, t)?),
            effective_lr: finite(lr, t)?,
            gate_open: None,
            l_t: None,
        },
        grad_at_next: None,
    })
}

fn gate_statistic(g: &ParamVector, rule: GateRule) -> f64 {
    match rule {
        GateRule::Absolute => g.max_abs(),
        GateRule::Signed => g.max(),
    }
}

/// One AdaFix step. `f` supplies the gradient at `x_next` (drawn with the
/// same randomness as `g`) for the smoothness quotient.
///
/// Until a second moment has been captured the gate is treated as open, so a
/// positive `l0` cannot leave the denominator at zero.
pub fn adafix_step<F: GradientSource + ?Sized>(
    x: &ParamVector,
    g: &ParamVector,
    s: &OptimizerState,
    h: &HyperParams,
    f: &F,
) -> Result<StepResult> {
    check_inputs(x, g, s)?;
    let Moments { t, m, m_hat } = first_moment(g, s, h);

    let threshold_met = gate_statistic(g, h.gate) >= s.l_est * h.eta;
    let gate_open = s.v_frozen_hat.is_none() || (threshold_met && !s.frozen);

    let (v, v_frozen_hat) = if gate_open {
        let (v, v_hat) = second_moment(g, s, h, t);
        (finite(v, t)?, finite(v_hat, t)?)
    } else {
        let frozen = s.v_frozen_hat.clone().expect("closed gate implies a captured v_hat");
        (s.v.clone(), frozen)
    };

    let lr = effective_lr(v_frozen_hat.as_slice(), h.eta, h.epsilon);
    let x_next = finite(apply(x, &lr, &m_hat), t)?;

    let g_next = f
        .gradient_same_draw(&x_next)
        .map_err(|_| Error::NonFiniteIterate { step: t })?;
    let displacement = x_next.distance(x)?;
    let l_t = if displacement > 0.0 {
        let q = g_next.distance(g)? / displacement;
        q.is_finite().then_some(q)
    } else {
        None
    };
    let l_est = l_t.map_or(s.l_est, |l| s.l_est.max(l));

    Ok(StepResult {
        x_next,
        state: OptimizerState {
            t,
            m: finite(m, t)?,
            v,
            l_est,
            v_frozen_hat: Some(v_frozen_hat.clone()),
            frozen: s.frozen || (h.freeze_permanent && !gate_open),
            ..s.clone()
        },
        diagnostics: StepDiagnostics {
            v_hat_used: Some(v_frozen_hat),
            effective_lr: finite(lr, t)?,
            gate_open: Some(gate_open),
            l_t,
        },
        grad_at_next: Some(g_next),
    })
}

/// Dispatches to the step function for `kind`. Only AdaFix consults `f`.
pub fn step<F: GradientSource + ?Sized>(
    kind: OptimizerKind,
    x: &ParamVector,
    g: &ParamVector,
    s: &OptimizerState,
    h: &HyperParams,
    f: &F,
) -> Result<StepResult> {
    match kind {
        OptimizerKind::Sgdm => sgdm_step(x, g, s, h),
        OptimizerKind::Adam => adam_step(x, g, s, h),
        OptimizerKind::AmsGrad => amsgrad_step(x, g, s, h),
        OptimizerKind::AdaBound => adabound_step(x, g, s, h),
        OptimizerKind::AdaFix => adafix_step(x, g, s, h, f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::Objective;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_slice(v).unwrap()
    }

    /// Straight transcription of the Adam update for a single coordinate,
    /// kept apart from the library's vectorised path.
    fn reference_adam_1d(gs: &[f64], x0: f64, eta: f64, b1: f64, b2: f64, eps: f64) -> f64 {
        let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
        for (k, g) in gs.iter().enumerate() {
            let t = (k + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= eta * mh / (vh.sqrt() + eps);
        }
        x
    }

    #[test]
    fn sgdm_examples() {
        let h = HyperParams {
            eta: 0.1,
            mu: 0.0,
            ..HyperParams::default()
        };
        let s = OptimizerState::new(1, 0.0);
        let r = sgdm_step(&pv(&[1.0]), &pv(&[2.0]), &s, &h).unwrap();
        assert!((r.x_next[0] - 0.8).abs() < 1e-15);

        let h = HyperParams {
            eta: 0.1,
            mu: 0.9,
            ..HyperParams::default()
        };
        let r1 = sgdm_step(&pv(&[0.0]), &pv(&[1.0]), &s, &h).unwrap();
        let r2 = sgdm_step(&r1.x_next, &pv(&[1.0]), &r1.state, &h).unwrap();
        assert_eq!(r1.state.m[0], 1.0);
        assert!((r2.state.m[0] - 1.9).abs() < 1e-15);
        assert!((r2.x_next[0] - r1.x_next[0] + 0.19).abs() < 1e-15);

        let r = sgdm_step(&pv(&[3.0]), &pv(&[0.0]), &s, &h).unwrap();
        assert_eq!(r.x_next, pv(&[3.0]));
    }

    #[test]
    fn adam_first_step_on_square() {
        let h = HyperParams::with_eta(0.1);
        let s = OptimizerState::new(1, 0.0);
        let r = adam_step(&pv(&[1.0]), &pv(&[2.0]), &s, &h).unwrap();
        let expected = reference_adam_1d(&[2.0], 1.0, 0.1, 0.9, 0.999, 1e-8);
        assert_eq!(r.x_next[0], expected);
        assert!((r.x_next[0] - 0.9).abs() < 1e-8);
        assert!((r.diagnostics.v_hat_used.unwrap()[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn adam_matches_reference_over_many_steps() {
        let gs: Vec<f64> = (0..200).map(|k| ((k as f64) * 0.37).sin() * 3.0).collect();
        let h = HyperParams::with_eta(0.05);
        let mut s = OptimizerState::new(1, 0.0);
        let mut x = pv(&[0.5]);
        for g in &gs {
            let r = adam_step(&x, &pv(&[*g]), &s, &h).unwrap();
            x = r.x_next;
            s = r.state;
        }
        let expected = reference_adam_1d(&gs, 0.5, 0.05, 0.9, 0.999, 1e-8);
        assert!((x[0] - expected).abs() < 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn adam_zero_gradient_keeps_x() {
        let h = HyperParams::with_eta(0.1);
        let s = OptimizerState::new(2, 0.0);
        let r = adam_step(&pv(&[1.0, -2.0]), &pv(&[0.0, 0.0]), &s, &h).unwrap();
        assert_eq!(r.x_next, pv(&[1.0, -2.0]));
    }

    #[test]
    fn adam_dimension_mismatch() {
        let h = HyperParams::default();
        let s = OptimizerState::new(2, 0.0);
        assert!(matches!(
            adam_step(&pv(&[1.0, 2.0]), &pv(&[1.0]), &s, &h),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn adam_reports_non_finite_iterate() {
        let h = HyperParams {
            eta: 1e308,
            ..HyperParams::default()
        };
        let s = OptimizerState::new(1, 0.0);
        assert!(matches!(
            adam_step(&pv(&[1.5e308]), &pv(&[-1.0]), &s, &h),
            Err(Error::NonFiniteIterate { step: 1 })
        ));
    }

    #[test]
    fn amsgrad_keeps_the_max() {
        let h = HyperParams::with_eta(0.1);
        let s0 = OptimizerState::new(1, 0.0);
        let x = pv(&[0.0]);
        let a = amsgrad_step(&x, &pv(&[2.0]), &s0, &h).unwrap();
        let adam = adam_step(&x, &pv(&[2.0]), &s0, &h).unwrap();
        assert_eq!(a.x_next, adam.x_next);
        let step1 = a.diagnostics.v_hat_used.clone().unwrap()[0];
        let b = amsgrad_step(&a.x_next, &pv(&[0.1]), &a.state, &h).unwrap();
        // v_hat at step 2 would be (0.999*0.004 + 0.001*0.01)/(1-0.999^2) < 4
        let raw = (0.999 * 0.004 + 0.001 * 0.01) / (1.0 - 0.999f64.powi(2));
        assert!(raw < step1);
        assert_eq!(b.diagnostics.v_hat_used.unwrap()[0], step1);
    }

    #[test]
    fn adabound_clips_upper() {
        let h = HyperParams {
            eta: 5.0,
            epsilon: 1e-8,
            bounds: BoundSchedule::Constant { lower: 0.1, upper: 1.0 },
            ..HyperParams::default()
        };
        let s = OptimizerState::new(1, 0.0);
        // v_hat = 1 at t=1, raw effective lr ~ 5
        let r = adabound_step(&pv(&[0.0]), &pv(&[1.0]), &s, &h).unwrap();
        assert_eq!(r.diagnostics.effective_lr[0], 1.0);
        assert!((r.x_next[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn adabound_degenerate_band_is_plain_momentum() {
        let c = 0.03;
        let h = HyperParams {
            eta: 0.7,
            bounds: BoundSchedule::Constant { lower: c, upper: c },
            ..HyperParams::default()
        };
        let mut s = OptimizerState::new(2, 0.0);
        let mut x = pv(&[1.0, -1.0]);
        for k in 0..20 {
            let g = pv(&[(k as f64).cos(), 0.5]);
            let r = adabound_step(&x, &g, &s, &h).unwrap();
            let m_hat: Vec<f64> = r
                .state
                .m
                .iter()
                .map(|m| m / (1.0 - 0.9f64.powi(k + 1)))
                .collect();
            for i in 0..2 {
                assert!((r.x_next[i] - (x[i] - c * m_hat[i])).abs() < 1e-15);
            }
            x = r.x_next;
            s = r.state;
        }
    }

    #[test]
    fn adabound_default_band_tightens() {
        let b = BoundSchedule::default();
        let (l1, u1) = b.at(1, 0.999);
        let (l2, u2) = b.at(1_000_000, 0.999);
        // hand evaluation: gamma*t = 0.001 and 1000
        assert!((l1 - 0.1 * (1.0 - 1.0 / 1.001)).abs() < 1e-15);
        assert!((u1 - 0.1 * 1001.0).abs() < 1e-9);
        assert!((l2 - 0.1 * (1.0 - 1.0 / 1001.0)).abs() < 1e-15);
        assert!((u2 - 0.1 * 1.001).abs() < 1e-15);
        assert!(u2 - l2 < u1 - l1);
        assert!(l1 < l2 && u2 < u1);
    }

    #[test]
    fn adabound_rejects_inverted_band() {
        let h = HyperParams {
            bounds: BoundSchedule::Constant { lower: 1.0, upper: 0.5 },
            ..HyperParams::default()
        };
        let s = OptimizerState::new(1, 0.0);
        assert!(matches!(
            adabound_step(&pv(&[0.0]), &pv(&[1.0]), &s, &h),
            Err(Error::InvalidSchedule { t: 1, .. })
        ));
    }

    #[test]
    fn adafix_with_zero_l0_tracks_adam_while_gate_open() {
        let f = Objective::bowl();
        let h = HyperParams::with_eta(0.5);
        let mut xa = pv(&[1.0, 0.3]);
        let mut xf = xa.clone();
        let mut sa = OptimizerState::new(2, 0.0);
        let mut sf = sa.clone();
        let mut matched = 0;
        for _ in 0..50 {
            let g = f.grad(&xf).unwrap();
            let rf = adafix_step(&xf, &g, &sf, &h, &f).unwrap();
            let ra = adam_step(&xa, &f.grad(&xa).unwrap(), &sa, &h).unwrap();
            if rf.diagnostics.gate_open != Some(true) {
                break;
            }
            assert_eq!(rf.x_next, ra.x_next);
            matched += 1;
            xa = ra.x_next;
            sa = ra.state;
            xf = rf.x_next;
            sf = rf.state;
        }
        assert!(matched >= 1);
    }

    #[test]
    fn adafix_closed_gate_freezes_v() {
        let f = Objective::opc_quadratic(1.0, pv(&[0.0, 0.0])).unwrap();
        let h = HyperParams::with_eta(0.5);
        let s0 = OptimizerState::new(2, 0.0);
        let x = pv(&[0.1, 0.1]);
        let warm = adafix_step(&x, &pv(&[0.1, 0.1]), &s0, &h, &f).unwrap();
        let mut s = warm.state.clone();
        s.l_est = 1e6;
        let r = adafix_step(&warm.x_next, &pv(&[0.1, 0.1]), &s, &h, &f).unwrap();
        assert_eq!(r.diagnostics.gate_open, Some(false));
        assert_eq!(r.state.v, s.v);
        assert_eq!(r.state.v_frozen_hat, s.v_frozen_hat);
    }

    #[test]
    fn adafix_smoothness_quotient_on_quadratic() {
        let f = Objective::opc_quadratic(4.0, pv(&[0.0, 0.0])).unwrap();
        let h = HyperParams::with_eta(0.1);
        let s = OptimizerState::new(2, 0.0);
        let x = pv(&[1.0, 0.0]);
        let r = adafix_step(&x, &f.grad(&x).unwrap(), &s, &h, &f).unwrap();
        assert!((r.diagnostics.l_t.unwrap() - 4.0).abs() < 1e-12);
        assert!((r.state.l_est - 4.0).abs() < 1e-12);
        assert_eq!(r.diagnostics.gate_open, Some(true));
    }

    #[test]
    fn adafix_signed_gate_closes_on_negative_gradients() {
        let f = Objective::opc_quadratic(1.0, pv(&[0.0])).unwrap();
        let s0 = OptimizerState::new(1, 0.0);
        let warm = adafix_step(&pv(&[-1.0]), &pv(&[-1.0]), &s0, &HyperParams::with_eta(0.1), &f).unwrap();
        let mut s = warm.state;
        s.l_est = 1.0;
        let signed = HyperParams {
            eta: 0.1,
            gate: GateRule::Signed,
            ..HyperParams::default()
        };
        let abs = HyperParams::with_eta(0.1);
        let g = pv(&[-0.5]);
        let x = pv(&[-0.5]);
        assert_eq!(adafix_step(&x, &g, &s, &abs, &f).unwrap().diagnostics.gate_open, Some(true));
        assert_eq!(adafix_step(&x, &g, &s, &signed, &f).unwrap().diagnostics.gate_open, Some(false));
    }

    #[test]
    fn adafix_permanent_freeze_stays_closed() {
        let f = Objective::opc_quadratic(1.0, pv(&[0.0])).unwrap();
        let h = HyperParams {
            eta: 0.1,
            freeze_permanent: true,
            ..HyperParams::default()
        };
        let s0 = OptimizerState::new(1, 0.0);
        let warm = adafix_step(&pv(&[1.0]), &pv(&[1.0]), &s0, &h, &f).unwrap();
        let mut s = warm.state;
        s.l_est = 100.0;
        let closed = adafix_step(&pv(&[1.0]), &pv(&[0.5]), &s, &h, &f).unwrap();
        assert_eq!(closed.diagnostics.gate_open, Some(false));
        assert!(closed.state.frozen);
        let mut s = closed.state;
        s.l_est = 0.0;
        let still = adafix_step(&pv(&[1.0]), &pv(&[50.0]), &s, &h, &f).unwrap();
        assert_eq!(still.diagnostics.gate_open, Some(false));

        let reopen = HyperParams {
            freeze_permanent: false,
            ..h
        };
        let mut s = still.state;
        s.frozen = false;
        let open = adafix_step(&pv(&[1.0]), &pv(&[50.0]), &s, &reopen, &f).unwrap();
        assert_eq!(open.diagnostics.gate_open, Some(true));
    }

    #[test]
    fn adafix_positive_l0_still_captures_first_moment() {
        let f = Objective::opc_quadratic(1.0, pv(&[0.0])).unwrap();
        let h = HyperParams {
            eta: 0.1,
            l0: 1e9,
            ..HyperParams::default()
        };
        let s = OptimizerState::for_params(1, &h);
        let r = adafix_step(&pv(&[1.0]), &pv(&[1.0]), &s, &h, &f).unwrap();
        assert_eq!(r.diagnostics.gate_open, Some(true));
        assert!((r.x_next[0] - 0.9).abs() < 1e-7);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in OptimizerKind::ALL {
            assert_eq!(k.name().parse::<OptimizerKind>().unwrap(), k);
        }
        assert!("rmsprop".parse::<OptimizerKind>().is_err());
    }

    #[test]
    fn hyperparams_validation() {
        assert!(HyperParams::default().validate().is_ok());
        assert!(HyperParams::with_eta(0.0).validate().is_err());
        let bad = HyperParams {
            beta2: 1.0,
            ..HyperParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
