//! Flat `key = value` experiment configs.
//!
//! ```text
//! # figure-1 setup
//! objective = bowl
//! optimizer = adam
//! eta = 0.5
//! x0 = 1.0, 0.3
//! steps = 5000
//! ```
//!
//! Vectors are comma-separated. Later assignments override earlier ones, so
//! command-line overrides are applied after the file.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::ParamVector;
use crate::objectives::{bowl_basin_radius, Objective, DEFAULT_BOWL_DELTA};
use crate::optimizers::{BoundSchedule, GateRule, HyperParams, OptimizerKind};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Bowl { delta: f64 },
    OpcQuadratic { c: f64, x_star: ParamVector },
    AnisoQuadratic { diag: ParamVector },
}

impl ObjectiveSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveSpec::Bowl { .. } => "bowl",
            ObjectiveSpec::OpcQuadratic { .. } => "opc_quadratic",
            ObjectiveSpec::AnisoQuadratic { .. } => "aniso_quadratic",
        }
    }

    pub fn build(&self) -> Result<Objective> {
        match self {
            ObjectiveSpec::Bowl { delta } => Objective::bowl_with_delta(*delta),
            ObjectiveSpec::OpcQuadratic { c, x_star } => Objective::opc_quadratic(*c, x_star.clone()),
            ObjectiveSpec::AnisoQuadratic { diag } => Objective::anisotropic_quadratic(diag.clone()),
        }
    }

    fn default_for(name: &str) -> Result<Self> {
        Ok(match name {
            "bowl" => ObjectiveSpec::Bowl {
                delta: DEFAULT_BOWL_DELTA,
            },
            "opc_quadratic" => ObjectiveSpec::OpcQuadratic {
                c: 1.0,
                x_star: ParamVector::zeros(2),
            },
            "aniso_quadratic" => ObjectiveSpec::AnisoQuadratic {
                diag: ParamVector::new(vec![4.0, 1.0])?,
            },
            other => return Err(Error::Config(format!("unknown objective '{other}'"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    pub optimizer: OptimizerKind,
    pub hyper: HyperParams,
    pub x0: ParamVector,
    pub steps: u64,
    pub seed: u64,
    pub noise_sigma: f64,
    pub record_every: u64,
    /// Distance from the optimum beyond which a run counts as escaped;
    /// defaults to the basin edge for the bowl.
    pub escape_radius: Option<f64>,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    /// The bowl escape experiment: Adam, `eta = 0.5`, from `(1.0, 0.3)`.
    fn default() -> Self {
        Self {
            objective: ObjectiveSpec::Bowl {
                delta: DEFAULT_BOWL_DELTA,
            },
            optimizer: OptimizerKind::Adam,
            hyper: HyperParams::with_eta(0.5),
            x0: ParamVector::new(vec![1.0, 0.3]).expect("finite"),
            steps: 5000,
            seed: 0,
            noise_sigma: 0.0,
            record_every: 1,
            escape_radius: None,
            output: None,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: '{value}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Config(format!("{key}: value must be finite")));
    }
    Ok(v)
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: '{value}' is not a non-negative integer")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: '{value}' is not a boolean"))),
    }
}

pub fn parse_vector(key: &str, value: &str) -> Result<ParamVector> {
    let parts = value
        .split(',')
        .map(|p| parse_f64(key, p.trim()))
        .collect::<Result<Vec<_>>>()?;
    ParamVector::new(parts).map_err(|e| Error::Config(format!("{key}: {e}")))
}

impl ExperimentConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let h = &mut self.hyper;
        match key.trim() {
            "objective" => self.objective = ObjectiveSpec::default_for(value)?,
            "bowl_delta" => match &mut self.objective {
                ObjectiveSpec::Bowl { delta } => *delta = parse_f64(key, value)?,
                _ => return Err(Error::Config("bowl_delta requires objective = bowl".into())),
            },
            "c" => match &mut self.objective {
                ObjectiveSpec::OpcQuadratic { c, .. } => *c = parse_f64(key, value)?,
                _ => return Err(Error::Config("c requires objective = opc_quadratic".into())),
            },
            "x_star" => match &mut self.objective {
                ObjectiveSpec::OpcQuadratic { x_star, .. } => *x_star = parse_vector(key, value)?,
                _ => return Err(Error::Config("x_star requires objective = opc_quadratic".into())),
            },
            "diag" => match &mut self.objective {
                ObjectiveSpec::AnisoQuadratic { diag } => *diag = parse_vector(key, value)?,
                _ => return Err(Error::Config("diag requires objective = aniso_quadratic".into())),
            },
            "optimizer" => self.optimizer = value.parse()?,
            "eta" => h.eta = parse_f64(key, value)?,
            "beta1" => h.beta1 = parse_f64(key, value)?,
            "beta2" => h.beta2 = parse_f64(key, value)?,
            "epsilon" => h.epsilon = parse_f64(key, value)?,
            "mu" => h.mu = parse_f64(key, value)?,
            "l0" => h.l0 = parse_f64(key, value)?,
            "bound_final_lr" => {
                h.bounds = BoundSchedule::Converging {
                    final_lr: parse_f64(key, value)?,
                }
            }
            "bound_lower" | "bound_upper" => {
                let v = parse_f64(key, value)?;
                let (mut lower, mut upper) = match h.bounds {
                    BoundSchedule::Constant { lower, upper } => (lower, upper),
                    BoundSchedule::Converging { .. } => (0.0, f64::MAX),
                };
                if key.trim() == "bound_lower" {
                    lower = v;
                } else {
                    upper = v;
                }
                h.bounds = BoundSchedule::Constant { lower, upper };
            }
            "gate" => {
                h.gate = match value {
                    "abs" | "absolute" => GateRule::Absolute,
                    "signed" => GateRule::Signed,
                    _ => return Err(Error::Config(format!("gate: unknown rule '{value}'"))),
                }
            }
            "gate_signed" => {
                h.gate = if parse_bool(key, value)? {
                    GateRule::Signed
                } else {
                    GateRule::Absolute
                }
            }
            "freeze_permanent" => h.freeze_permanent = parse_bool(key, value)?,
            "x0" => self.x0 = parse_vector(key, value)?,
            "steps" => self.steps = parse_u64(key, value)?,
            "seed" => self.seed = parse_u64(key, value)?,
            "noise_sigma" => self.noise_sigma = parse_f64(key, value)?,
            "record_every" => self.record_every = parse_u64(key, value)?,
            "escape_radius" => self.escape_radius = Some(parse_f64(key, value)?),
            "output" => self.output = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies every assignment in a config text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let objective = self.objective.build().map_err(|e| Error::Config(e.to_string()))?;
        if self.x0.dim() != objective.dim() {
            return Err(Error::Config(format!(
                "x0 has {} coordinates but {} needs {}",
                self.x0.dim(),
                objective.name(),
                objective.dim()
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be >= 1".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be >= 0".into()));
        }
        if let Some(r) = self.escape_radius {
            if !(r > 0.0) {
                return Err(Error::Config("escape_radius must be > 0".into()));
            }
        }
        self.hyper
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Explicit radius, else the bowl's basin edge, else none.
    pub fn effective_escape_radius(&self) -> Option<f64> {
        self.escape_radius.or(match self.objective {
            ObjectiveSpec::Bowl { .. } => Some(bowl_basin_radius()),
            _ => None,
        })
    }
}
