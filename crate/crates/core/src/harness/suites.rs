//! Randomised verification suites behind `adafix verify`.
//!
//! Each suite draws its cases from a seeded [`Rng`], so a `(kind, seed,
//! n_cases)` triple always produces the same report.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{
    recede_bound_scalar, recede_inequality_holds, verify_recede, BoundForm, RecedeScalars,
};
use crate::error::{Error, Result};
use crate::numerics::{fd_gradient, ParamVector, Rng, DEFAULT_FD_STEP};
use crate::objectives::{GradientSource, NoisyObjective, Objective};
use crate::optimizers::{step, BoundSchedule, HyperParams, OptimizerKind, OptimizerState};

/// Strictness margin for the `sqrt(max v)` samples below the recede bound.
pub const BOUND_MARGIN: f64 = 1e-9;
/// Relative offset used to probe the recede bound from both sides.
pub const SHARPNESS_OFFSET: f64 = 1e-6;
/// Gradient check tolerance.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;
/// Slack for AdaBound band containment.
pub const BAND_SLACK: f64 = 1e-12;
/// First-step magnitude slack relative to `eta`.
pub const FIRST_STEP_SLACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    Theorem31,
    Gradients,
    OptimizerProperties,
}

impl SuiteKind {
    pub fn name(self) -> &'static str {
        match self {
            SuiteKind::Theorem31 => "theorem31",
            SuiteKind::Gradients => "gradients",
            SuiteKind::OptimizerProperties => "optimizer_properties",
        }
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SuiteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SuiteKind::Theorem31, SuiteKind::Gradients, SuiteKind::OptimizerProperties]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteOptions {
    pub bound_form: BoundForm,
    /// Steps per run in the optimizer property suite.
    pub run_steps: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            bound_form: BoundForm::Exact,
            run_steps: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseReport {
    pub index: usize,
    pub config: Value,
    pub expected: Value,
    pub observed: Value,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CheckTally {
    pub passed: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub kind: SuiteKind,
    pub seed: u64,
    pub n_cases: usize,
    pub passed: usize,
    pub failed: usize,
    /// Pass/fail counts per named property.
    pub checks: BTreeMap<String, CheckTally>,
    pub cases: Vec<CaseReport>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    pub fn check(&self, name: &str) -> CheckTally {
        self.checks.get(name).copied().unwrap_or_default()
    }
}

#[derive(Default)]
struct Tallies(BTreeMap<String, CheckTally>);

impl Tallies {
    fn record(&mut self, name: &str, ok: bool) -> bool {
        let t = self.0.entry(name.to_string()).or_default();
        if ok {
            t.passed += 1;
        } else {
            t.failed += 1;
        }
        ok
    }
}

pub fn run_verification_suite(
    kind: SuiteKind,
    seed: u64,
    n_cases: usize,
    opts: &SuiteOptions,
) -> Result<SuiteReport> {
    if n_cases == 0 {
        return Err(Error::Config("n_cases must be >= 1".into()));
    }
    let mut rng = Rng::new(seed);
    let mut tallies = Tallies::default();
    let cases = match kind {
        SuiteKind::Theorem31 => theorem31_suite(&mut rng, n_cases, opts, &mut tallies)?,
        SuiteKind::Gradients => gradient_suite(&mut rng, n_cases, &mut tallies)?,
        SuiteKind::OptimizerProperties => property_suite(&mut rng, n_cases, opts, &mut tallies)?,
    };
    let passed = cases.iter().filter(|c| c.pass).count();
    Ok(SuiteReport {
        kind,
        seed,
        n_cases: cases.len(),
        passed,
        failed: cases.len() - passed,
        checks: tallies.0,
        cases,
    })
}

/// One randomised recede-bound configuration on `(c/2)|x - x*|^2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecedeCase {
    pub c: f64,
    pub x_star: ParamVector,
    pub x: ParamVector,
    pub delta: f64,
    pub eta: f64,
    pub v_diag: ParamVector,
    pub bound: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RecedeOutcome {
    /// Distance to `x*` did not shrink after one step.
    pub receded: bool,
    pub holds_below: bool,
    pub fails_above: bool,
}

impl RecedeCase {
    /// `c in [0.5, 5]`, `dim in {1, 2, 5}`, `|x - x*| in [0.1, 10]`,
    /// `delta in (0, c)`, `eta in [0.01, 1]`; one coordinate of `sqrt(v)`
    /// sits at `bound (1 - margin)`, the rest uniformly below it.
    pub fn generate(rng: &mut Rng, form: BoundForm) -> Result<Self> {
        let c = rng.uniform_in(0.5, 5.0);
        let dim = [1, 2, 5][rng.index(3)];
        let x_star = ParamVector::try_from_fn(dim, |_| rng.uniform_in(-1.0, 1.0))?;
        let dist = rng.uniform_in(0.1, 10.0);
        let dir = rng.unit_vector(dim);
        let x = ParamVector::try_from_fn(dim, |i| x_star[i] + dist * dir[i])?;
        let delta = loop {
            let u = rng.uniform();
            if u > 0.0 {
                break c * u;
            }
        };
        let eta = rng.uniform_in(0.01, 1.0);
        let f = Objective::opc_quadratic(c, x_star.clone())?;
        let scalars = RecedeScalars {
            dist: x.distance(&x_star)?,
            grad_norm: f.grad(&x)?.norm2(),
            delta,
            eta,
        };
        let bound = recede_bound_scalar(&scalars, form)?;
        let s_max = bound * (1.0 - BOUND_MARGIN);
        let pinned = rng.index(dim);
        let v_diag = ParamVector::try_from_fn(dim, |i| {
            let s = if i == pinned {
                s_max
            } else {
                s_max * (1.0 - rng.uniform())
            };
            s.max(0.0) * s.max(0.0)
        })?;
        Ok(Self {
            c,
            x_star,
            x,
            delta,
            eta,
            v_diag,
            bound,
        })
    }

    pub fn scalars(&self) -> Result<RecedeScalars> {
        let f = Objective::opc_quadratic(self.c, self.x_star.clone())?;
        Ok(RecedeScalars {
            dist: self.x.distance(&self.x_star)?,
            grad_norm: f.grad(&self.x)?.norm2(),
            delta: self.delta,
            eta: self.eta,
        })
    }

    pub fn evaluate(&self) -> Result<RecedeOutcome> {
        let f = Objective::opc_quadratic(self.c, self.x_star.clone())?;
        let receded = verify_recede(&f, &self.x, &self.v_diag, self.delta, self.eta)?;
        let p = self.scalars()?;
        Ok(RecedeOutcome {
            receded,
            holds_below: recede_inequality_holds(self.bound * (1.0 - SHARPNESS_OFFSET), &p),
            fails_above: !recede_inequality_holds(self.bound * (1.0 + SHARPNESS_OFFSET), &p),
        })
    }

    /// Squared distance to `x*` after the generic adaptive step.
    pub fn distance_after(&self) -> Result<f64> {
        let f = Objective::opc_quadratic(self.c, self.x_star.clone())?;
        let g = f.grad(&self.x)?;
        Ok((0..self.x.dim())
            .map(|i| {
                let d = self.x[i] - self.eta * g[i] / self.v_diag[i].sqrt() - self.x_star[i];
                d * d
            })
            .sum::<f64>()
            .sqrt())
    }
}

pub fn recede_cases(seed: u64, n: usize, form: BoundForm) -> Result<Vec<RecedeCase>> {
    let mut rng = Rng::new(seed);
    (0..n).map(|_| RecedeCase::generate(&mut rng, form)).collect()
}

fn theorem31_suite(
    rng: &mut Rng,
    n: usize,
    opts: &SuiteOptions,
    tallies: &mut Tallies,
) -> Result<Vec<CaseReport>> {
    let mut out = Vec::with_capacity(n);
    for index in 0..n {
        let case = RecedeCase::generate(rng, opts.bound_form)?;
        let dist_before = case.x.distance(&case.x_star)?;
        let (observed, pass) = match case.evaluate() {
            Ok(o) => {
                let ok_recede = tallies.record("recede", o.receded);
                let ok_sharp = tallies.record("bound_sharpness", o.holds_below && o.fails_above);
                (
                    json!({
                        "dist_before": dist_before,
                        "dist_after": case.distance_after()?,
                        "receded": o.receded,
                        "inequality_holds_below": o.holds_below,
                        "inequality_fails_above": o.fails_above,
                    }),
                    ok_recede && ok_sharp,
                )
            }
            Err(e) => {
                tallies.record("recede", false);
                (json!({ "error": e.to_string() }), false)
            }
        };
        out.push(CaseReport {
            index,
            config: json!({
                "c": case.c, "x_star": case.x_star, "x": case.x, "delta": case.delta,
                "eta": case.eta, "v_diag": case.v_diag,
            }),
            expected: json!({ "bound": case.bound, "receded": true }),
            observed,
            pass,
        });
    }
    Ok(out)
}

/// `|g_analytic - g_fd| / max(1, |g_analytic|)`.
pub fn gradient_error(f: &Objective, x: &ParamVector) -> Result<(ParamVector, ParamVector, f64)> {
    let analytic = f.grad(x)?;
    let numeric = fd_gradient(f, x, DEFAULT_FD_STEP)?;
    let err = analytic.distance(&numeric)? / analytic.norm2().max(1.0);
    Ok((analytic, numeric, err))
}

/// The three objective families with randomised parameters, plus a point
/// sampler for each.
fn random_objectives(rng: &mut Rng) -> Result<Vec<(Objective, f64)>> {
    let dim = 1 + rng.index(5);
    let c = rng.uniform_in(0.5, 5.0);
    let x_star = ParamVector::try_from_fn(dim, |_| rng.uniform_in(-1.0, 1.0))?;
    let diag_dim = 1 + rng.index(5);
    let diag = ParamVector::try_from_fn(diag_dim, |_| rng.uniform_in(0.1, 10.0))?;
    Ok(vec![
        (Objective::bowl(), 2.0),
        (Objective::opc_quadratic(c, x_star)?, 5.0),
        (Objective::anisotropic_quadratic(diag)?, 5.0),
    ])
}

fn point_in_ball(rng: &mut Rng, center: Option<&ParamVector>, dim: usize, radius: f64) -> Result<ParamVector> {
    let u = rng.unit_vector(dim);
    let r = radius * rng.uniform().powf(1.0 / dim as f64);
    ParamVector::try_from_fn(dim, |i| center.map_or(0.0, |c| c[i]) + r * u[i])
}

fn gradient_suite(rng: &mut Rng, n: usize, tallies: &mut Tallies) -> Result<Vec<CaseReport>> {
    let mut out = Vec::new();
    for (f, radius) in random_objectives(rng)? {
        for _ in 0..n {
            let x = point_in_ball(rng, f.optimum(), f.dim(), radius)?;
            let (analytic, numeric, err) = gradient_error(&f, &x)?;
            let pass = tallies.record(f.name(), err < GRADIENT_TOLERANCE);
            out.push(CaseReport {
                index: out.len(),
                config: json!({ "objective": f.name(), "x": x }),
                expected: json!({ "finite_difference": numeric, "max_rel_err": GRADIENT_TOLERANCE }),
                observed: json!({ "analytic": analytic, "rel_err": err }),
                pass,
            });
        }
    }
    Ok(out)
}

/// Per-run property checks; `None` means the property did not apply.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PropertyOutcome {
    pub steps: u64,
    pub v_nonnegative: bool,
    pub first_step_within_eta: Option<bool>,
    pub amsgrad_monotone: Option<bool>,
    pub adabound_in_band: Option<bool>,
    pub adafix_frozen_bits: Option<bool>,
    pub adafix_closed_steps: u64,
    pub adafix_l_monotone: Option<bool>,
    pub diverged: bool,
}

/// Drives `kind` for `steps` steps on `source` and checks every invariant
/// that applies to it along the way.
pub fn check_optimizer_run<S: GradientSource>(
    kind: OptimizerKind,
    source: &mut S,
    x0: &ParamVector,
    h: &HyperParams,
    steps: u64,
) -> Result<PropertyOutcome> {
    let adaptive_first_step = matches!(
        kind,
        OptimizerKind::Adam | OptimizerKind::AmsGrad | OptimizerKind::AdaFix
    );
    let mut out = PropertyOutcome {
        v_nonnegative: true,
        amsgrad_monotone: (kind == OptimizerKind::AmsGrad).then_some(true),
        adabound_in_band: (kind == OptimizerKind::AdaBound).then_some(true),
        adafix_frozen_bits: (kind == OptimizerKind::AdaFix).then_some(true),
        adafix_l_monotone: (kind == OptimizerKind::AdaFix).then_some(true),
        ..PropertyOutcome::default()
    };
    let mut x = x0.clone();
    let mut state = OptimizerState::for_params(x.dim(), h);
    let mut prev_v_hat: Option<ParamVector> = None;
    for t in 1..=steps {
        let g = source.gradient(&x)?;
        let r = match step(kind, &x, &g, &state, h, source) {
            Ok(r) => r,
            Err(Error::NonFiniteIterate { .. }) => {
                out.diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        out.steps = t;
        out.v_nonnegative &= r.state.v.iter().all(|&v| v >= 0.0);
        if t == 1 && adaptive_first_step {
            let ok = (0..x.dim())
                .filter(|&i| g[i] != 0.0)
                .all(|i| (r.x_next[i] - x[i]).abs() <= h.eta * (1.0 + FIRST_STEP_SLACK));
            out.first_step_within_eta = Some(ok);
        }
        let v_hat = r.diagnostics.v_hat_used.clone();
        match kind {
            OptimizerKind::AmsGrad => {
                if let (Some(prev), Some(cur)) = (&prev_v_hat, &v_hat) {
                    if prev.iter().zip(cur).any(|(a, b)| b < a) {
                        out.amsgrad_monotone = Some(false);
                    }
                }
            }
            OptimizerKind::AdaBound => {
                let (lo, hi) = h.bounds.at(t, h.beta2);
                if r
                    .diagnostics
                    .effective_lr
                    .iter()
                    .any(|&l| l < lo - BAND_SLACK || l > hi + BAND_SLACK)
                {
                    out.adabound_in_band = Some(false);
                }
            }
            OptimizerKind::AdaFix => {
                if r.diagnostics.gate_open == Some(false) {
                    out.adafix_closed_steps += 1;
                    let same_v = r.state.v.iter().zip(&state.v).all(|(a, b)| a.to_bits() == b.to_bits());
                    let same_hat = match (&r.state.v_frozen_hat, &state.v_frozen_hat) {
                        (Some(a), Some(b)) => a.iter().zip(b).all(|(p, q)| p.to_bits() == q.to_bits()),
                        _ => false,
                    };
                    if !(same_v && same_hat) {
                        out.adafix_frozen_bits = Some(false);
                    }
                }
                if r.state.l_est < state.l_est {
                    out.adafix_l_monotone = Some(false);
                }
            }
            _ => {}
        }
        prev_v_hat = v_hat;
        x = r.x_next;
        state = r.state;
    }
    Ok(out)
}

fn property_suite(
    rng: &mut Rng,
    n: usize,
    opts: &SuiteOptions,
    tallies: &mut Tallies,
) -> Result<Vec<CaseReport>> {
    let mut out = Vec::new();
    for _ in 0..n {
        let objectives = random_objectives(rng)?;
        let (base, radius) = objectives[rng.index(objectives.len())].clone();
        let x0 = point_in_ball(rng, base.optimum(), base.dim(), radius)?;
        let sigma = if rng.uniform() < 0.5 { 0.0 } else { rng.uniform_in(0.0, 1.0) };
        let mut h = HyperParams {
            eta: 10f64.powf(rng.uniform_in(-3.0, -0.3)),
            beta1: rng.uniform_in(0.0, 0.99),
            beta2: rng.uniform_in(0.9, 0.9999),
            l0: 0.0,
            bounds: if rng.uniform() < 0.5 {
                BoundSchedule::default()
            } else {
                let lo = rng.uniform_in(0.0, 0.1);
                BoundSchedule::Constant {
                    lower: lo,
                    upper: lo + rng.uniform_in(0.0, 1.0),
                }
            },
            ..HyperParams::default()
        };
        let run_seed = rng.fork();
        for kind in OptimizerKind::ALL {
            if kind == OptimizerKind::Sgdm {
                // heavy ball is stable for eta * L * (1 + mu) < 2
                let l = base.smoothness().unwrap_or(20.0);
                h.eta = h.eta.min(1.0 / (l * (1.0 + h.mu)));
            }
            let mut source = NoisyObjective::new(base.clone(), sigma, run_seed.clone())?;
            let o = check_optimizer_run(kind, &mut source, &x0, &h, opts.run_steps)?;
            let mut pass = tallies.record("v_nonnegative", o.v_nonnegative);
            pass &= tallies.record("no_divergence", !o.diverged);
            let optional = [
                ("first_step_within_eta", o.first_step_within_eta),
                ("amsgrad_monotone", o.amsgrad_monotone),
                ("adabound_in_band", o.adabound_in_band),
                ("adafix_frozen_bits", o.adafix_frozen_bits),
                ("adafix_l_monotone", o.adafix_l_monotone),
            ];
            for (name, v) in optional {
                if let Some(ok) = v {
                    pass &= tallies.record(name, ok);
                }
            }
            out.push(CaseReport {
                index: out.len(),
                config: json!({
                    "optimizer": kind, "objective": base.name(), "x0": x0,
                    "noise_sigma": sigma, "hyper": h, "steps": opts.run_steps,
                }),
                expected: json!("all applicable properties hold"),
                observed: serde_json::to_value(&o)?,
                pass,
            });
        }
    }
    Ok(out)
}
