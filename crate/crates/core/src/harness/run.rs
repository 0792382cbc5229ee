use serde::Serialize;

use crate::analysis::{detect_escape_in_distances, EscapeReport};
use crate::error::{Error, Result};
use crate::numerics::{ParamVector, Rng};
use crate::objectives::{GradientSource, NoisyObjective};
use crate::optimizers::{step, OptimizerKind, OptimizerState, StepDiagnostics};

use super::config::ExperimentConfig;
use super::record::{export_csv, Divergence, TrajectoryRecord, TrajectoryRow};

fn make_row(
    t: u64,
    x: &ParamVector,
    grad: &ParamVector,
    f: f64,
    kind: OptimizerKind,
    state: &OptimizerState,
    diag: Option<&StepDiagnostics>,
    optimum: Option<&ParamVector>,
) -> Result<TrajectoryRow> {
    let adaptive = kind != OptimizerKind::Sgdm;
    let v_hat = diag.and_then(|d| d.v_hat_used.as_ref());
    Ok(TrajectoryRow {
        t,
        x: x.clone(),
        grad: grad.clone(),
        f,
        grad_norm: grad.norm2(),
        v_norm: adaptive.then(|| state.v.norm2()),
        sqrt_vmax_hat: v_hat.map(|v| v.max().sqrt()),
        max_eff_lr: diag.map(|d| d.effective_lr.max()),
        dist_to_opt: optimum.map(|o| x.distance(o)).transpose()?,
        gate_open: diag.and_then(|d| d.gate_open),
        l_est: (kind == OptimizerKind::AdaFix).then_some(state.l_est),
    })
}

/// Runs `cfg.steps` optimizer steps and returns the recorded trajectory.
///
/// A non-finite iterate or gradient ends the run with a divergence marker
/// instead of an error. The record is written to `cfg.output` if set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let objective = cfg.objective.build()?;
    let optimum = objective.optimum().cloned();
    let mut source = NoisyObjective::new(objective, cfg.noise_sigma, Rng::new(cfg.seed))?;
    let kind = cfg.optimizer;
    let h = &cfg.hyper;

    let mut record = TrajectoryRecord::new(source.dim());
    let mut x = cfg.x0.clone();
    let mut state = OptimizerState::for_params(x.dim(), h);
    let mut g = source
        .gradient(&x)
        .map_err(|e| Error::Config(format!("gradient at x0: {e}")))?;
    let f0 = source
        .value(&x)
        .map_err(|e| Error::Config(format!("objective at x0: {e}")))?;
    record.push(make_row(0, &x, &g, f0, kind, &state, None, optimum.as_ref())?);

    for t in 1..=cfg.steps {
        let outcome = step(kind, &x, &g, &state, h, &source).and_then(|r| {
            let g_next = match (&r.grad_at_next, source.is_deterministic()) {
                (Some(cached), true) => cached.clone(),
                _ => source.gradient(&r.x_next)?,
            };
            let f = source.value(&r.x_next)?;
            Ok((r, g_next, f))
        });
        let (r, g_next, f) = match outcome {
            Ok(v) => v,
            Err(e @ (Error::NonFiniteIterate { .. } | Error::NonFiniteEvaluation)) => {
                record.divergence = Some(Divergence {
                    step: t,
                    reason: e.to_string(),
                });
                break;
            }
            Err(e) => return Err(e),
        };
        x = r.x_next;
        state = r.state;
        g = g_next;
        if t % cfg.record_every == 0 || t == cfg.steps {
            record.push(make_row(t, &x, &g, f, kind, &state, Some(&r.diagnostics), optimum.as_ref())?);
        }
    }

    if let Some(path) = &cfg.output {
        export_csv(&record, path)?;
    }
    Ok(record)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizerSummary {
    pub optimizer: OptimizerKind,
    pub steps_completed: u64,
    pub diverged: bool,
    pub final_distance: Option<f64>,
    pub min_distance: Option<f64>,
    pub min_distance_step: Option<u64>,
    pub escaped: Option<bool>,
    pub first_escape_step: Option<u64>,
    pub max_effective_lr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonSummary {
    pub objective: String,
    pub x0: ParamVector,
    pub escape_radius: Option<f64>,
    pub runs: Vec<OptimizerSummary>,
}

impl ComparisonSummary {
    pub fn get(&self, kind: OptimizerKind) -> Option<&OptimizerSummary> {
        self.runs.iter().find(|r| r.optimizer == kind)
    }
}

pub fn summarize(cfg: &ExperimentConfig, record: &TrajectoryRecord) -> Result<OptimizerSummary> {
    let distances = record.distances();
    let escape: Option<EscapeReport> = match (&distances, cfg.effective_escape_radius()) {
        (Some(d), Some(radius)) if !d.is_empty() => Some(detect_escape_in_distances(d, radius)?),
        _ => None,
    };
    let t_of = |i: usize| record.rows[i].t;
    let (min_distance, min_distance_step) = match (&escape, &distances) {
        (Some(e), _) => (Some(e.min_distance), Some(t_of(e.min_distance_step))),
        (None, Some(d)) if !d.is_empty() => {
            let (i, m) = d
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
            (Some(m), Some(t_of(i)))
        }
        _ => (None, None),
    };
    Ok(OptimizerSummary {
        optimizer: cfg.optimizer,
        steps_completed: record.rows.last().map_or(0, |r| r.t),
        diverged: record.diverged(),
        final_distance: record.rows.last().and_then(|r| r.dist_to_opt),
        min_distance,
        min_distance_step,
        escaped: escape.as_ref().map(|e| e.escaped),
        first_escape_step: escape.and_then(|e| e.first_escape_step).map(t_of),
        max_effective_lr: record.max_effective_lr(),
    })
}

/// Runs every config and summarises them side by side. All configs must
/// share one objective and starting point.
pub fn compare_optimizers(cfgs: &[ExperimentConfig]) -> Result<ComparisonSummary> {
    if cfgs.len() < 2 {
        return Err(Error::Config("compare needs at least two configs".into()));
    }
    let first = &cfgs[0];
    if let Some(bad) = cfgs
        .iter()
        .find(|c| c.objective != first.objective || c.x0 != first.x0)
    {
        return Err(Error::Config(format!(
            "config for {} uses a different objective or x0",
            bad.optimizer
        )));
    }
    let runs = cfgs
        .iter()
        .map(|cfg| summarize(cfg, &run_experiment(cfg)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonSummary {
        objective: first.objective.name().to_string(),
        x0: first.x0.clone(),
        escape_radius: first.effective_escape_radius(),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ObjectiveSpec;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_text(text).unwrap()
    }

    #[test]
    fn one_step_gives_two_rows() {
        for k in OptimizerKind::ALL {
            let r = run_experiment(&cfg(&format!("optimizer = {k}\nsteps = 1"))).unwrap();
            assert_eq!(r.rows.len(), 2);
            assert_eq!(r.rows[0].t, 0);
            assert_eq!(r.rows[1].t, 1);
        }
    }

    #[test]
    fn record_every_row_count() {
        for (steps, k) in [(10u64, 3u64), (9, 3), (1, 5), (100, 1), (7, 7)] {
            let r = run_experiment(&cfg(&format!("steps = {steps}\nrecord_every = {k}"))).unwrap();
            assert_eq!(r.rows.len() as u64, steps.div_ceil(k) + 1, "steps={steps} k={k}");
            assert_eq!(r.rows.last().unwrap().t, steps);
        }
    }

    #[test]
    fn sgdm_divergence_is_marked() {
        let c = cfg("objective = opc_quadratic\nc = 10\nx0 = 1, 1\noptimizer = sgdm\neta = 1\nmu = 0.9\nsteps = 5000");
        let r = run_experiment(&c).unwrap();
        let d = r.divergence.as_ref().expect("should diverge");
        assert!(d.step < 5000);
        assert!(r.rows.iter().all(|row| row.f.is_finite()));
    }

    #[test]
    fn adafix_rows_carry_gate_and_l() {
        let r = run_experiment(&cfg("optimizer = adafix\nsteps = 20")).unwrap();
        assert_eq!(r.rows[0].gate_open, None);
        assert_eq!(r.rows[0].l_est, Some(0.0));
        assert!(r.rows[1..].iter().all(|row| row.gate_open.is_some()));
        assert!(r.rows.windows(2).all(|w| w[1].l_est >= w[0].l_est));
    }

    #[test]
    fn noisy_runs_are_seeded() {
        let a = run_experiment(&cfg("noise_sigma = 0.1\nseed = 4\nsteps = 200")).unwrap();
        let b = run_experiment(&cfg("noise_sigma = 0.1\nseed = 4\nsteps = 200")).unwrap();
        let c = run_experiment(&cfg("noise_sigma = 0.1\nseed = 5\nsteps = 200")).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn compare_requires_two_matching_configs() {
        let a = ExperimentConfig::default();
        assert!(matches!(compare_optimizers(&[a.clone()]), Err(Error::Config(_))));
        let mut b = a.clone();
        b.objective = ObjectiveSpec::Bowl { delta: 0.3 };
        assert!(matches!(compare_optimizers(&[a.clone(), b]), Err(Error::Config(_))));
        let mut c = a.clone();
        c.optimizer = OptimizerKind::AdaFix;
        c.steps = 100;
        let mut a = a;
        a.steps = 100;
        let s1 = compare_optimizers(&[a.clone(), c.clone()]).unwrap();
        let s2 = compare_optimizers(&[a, c]).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.runs.len(), 2);
    }
}
