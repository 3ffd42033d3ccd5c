use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sigma::{evidence_sweep_sigma, SigmaSweep, SigmaSweepConfig};
use crate::active::{run_assimilation, ActiveConfig, AssimilationState, Pool};
use crate::derivatives::{build_operators, DerivativeSpec};
use crate::dynamics::{add_noise, builtin, default_initial_condition, simulate, OdeSystem};
use crate::error::{Error, Result};
use crate::io::{load_csv, load_metadata};
use crate::library::build_library;
use crate::regression::{fit_library, support_of, true_coefficients, FitConfig, FittedModel};

fn default_degree() -> u32 {
    3
}
fn default_substeps() -> usize {
    10
}

/// Fit of a stored trajectory.
///
/// The measurement noise level comes from `sigma_x`, else from an evidence
/// sweep over `sigma_grid`, else from the file's metadata sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRun {
    /// CSV path, relative to the config file.
    pub data: PathBuf,
    #[serde(default)]
    pub sigma_x: Option<f64>,
    #[serde(default)]
    pub sigma_grid: Option<Vec<f64>>,
    pub derivative: DerivativeSpec,
    #[serde(default = "default_degree")]
    pub max_degree: u32,
    #[serde(default)]
    pub fit: FitConfig,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub sigma_x: f64,
    pub model: FittedModel,
    pub sweep: Option<SigmaSweep>,
}

impl FitRun {
    pub fn from_json(text: &str) -> Result<Self> {
        let run: FitRun = serde_json::from_str(text)?;
        run.validate()?;
        Ok(run)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_x.is_some() && self.sigma_grid.is_some() {
            return Err(Error::invalid(
                "give either sigma_x or sigma_grid, not both",
            ));
        }
        if let Some(s) = self.sigma_x {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::invalid("sigma_x must be finite and nonnegative"));
            }
        }
        if self.max_degree == 0 || self.max_degree > 6 {
            return Err(Error::invalid("max_degree must be between 1 and 6"));
        }
        self.fit.validate()
    }

    /// Resolves `data` against the directory holding the config file.
    pub fn relative_to(mut self, config_dir: &Path) -> Self {
        if self.data.is_relative() {
            self.data = config_dir.join(&self.data);
        }
        self
    }

    pub fn sigma_config(&self) -> Option<SigmaSweepConfig> {
        self.sigma_grid.as_ref().map(|grid| SigmaSweepConfig {
            sigma_grid: grid.clone(),
            derivative: self.derivative,
            max_degree: self.max_degree,
            fit: self.fit.clone(),
        })
    }

    pub fn run(&self) -> Result<FitOutcome> {
        let ts = load_csv(&self.data)?;
        if let Some(cfg) = self.sigma_config() {
            let sweep = evidence_sweep_sigma(&ts, &cfg)?;
            return Ok(FitOutcome {
                sigma_x: sweep.best_sigma(),
                model: sweep.best_model.clone(),
                sweep: Some(sweep),
            });
        }
        let sigma_x = match self.sigma_x {
            Some(s) => s,
            None => load_metadata(&self.data)?
                .and_then(|m| m.sigma_x)
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "noise level of {} is unknown: set sigma_x or sigma_grid",
                        self.data.display()
                    ))
                })?,
        };
        if !ts.is_uniform(1e-9) {
            return Err(Error::invalid("time grid must be uniform"));
        }
        let ts = ts.with_noise_level(sigma_x);
        let ops = build_operators(&self.derivative.stencil(ts.dt())?, ts.len())?;
        let lib = build_library(&ts, &ops, self.max_degree)?;
        let model = fit_library(&ts.x, &ts.sigma_x2, &ops, &lib, &self.fit)?;
        Ok(FitOutcome {
            sigma_x,
            model,
            sweep: None,
        })
    }
}

/// Active-learning run on a simulated, noisy trajectory of a built-in system.
///
/// The pool is sampled like a sweep cell: `Ñ` points at
/// `Δt = (t1 − t0)/Ñ`, trimmed by the derivative stencil.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveRun {
    pub system: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub t0: f64,
    pub t1: f64,
    pub n_samples: usize,
    pub sigma_x: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Seed of the measurement noise.
    #[serde(default)]
    pub seed: u64,
    pub derivative: DerivativeSpec,
    #[serde(default = "default_degree")]
    pub max_degree: u32,
    /// Stop once the true support is recovered.
    #[serde(default)]
    pub stop_at_recovery: bool,
    #[serde(default)]
    pub active: ActiveConfig,
}

#[derive(Debug, Clone)]
pub struct ActiveOutcome {
    pub pool: Pool,
    pub target: Vec<Vec<usize>>,
    pub state: AssimilationState,
}

impl ActiveRun {
    pub fn from_json(text: &str) -> Result<Self> {
        let run: ActiveRun = serde_json::from_str(text)?;
        run.validate()?;
        Ok(run)
    }

    pub fn validate(&self) -> Result<()> {
        self.ode()?;
        if !(self.t0.is_finite() && self.t1.is_finite() && self.t1 > self.t0) {
            return Err(Error::invalid("need finite t0 < t1"));
        }
        if !(self.sigma_x.is_finite() && self.sigma_x >= 0.0) {
            return Err(Error::invalid("sigma_x must be finite and nonnegative"));
        }
        if self.substeps == 0 {
            return Err(Error::invalid("substeps must be at least 1"));
        }
        if self.max_degree == 0 || self.max_degree > 6 {
            return Err(Error::invalid("max_degree must be between 1 and 6"));
        }
        let half = self.derivative.half_width();
        if self.n_samples <= 2 * half {
            return Err(Error::InsufficientData {
                samples: self.n_samples,
                half_width: half,
            });
        }
        self.active.fit.validate()
    }

    pub fn ode(&self) -> Result<OdeSystem> {
        let overrides: Vec<(String, f64)> = self
            .parameters
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        builtin(&self.system, &overrides)
    }

    pub fn run(&self) -> Result<ActiveOutcome> {
        let system = self.ode()?;
        let x0 = match &self.x0 {
            Some(x) => x.clone(),
            None => default_initial_condition(&self.system)?,
        };
        let dt = (self.t1 - self.t0) / self.n_samples as f64;
        let clean = simulate(&system, &x0, self.t0, dt, self.n_samples, self.substeps)?;
        let ts = add_noise(&clean, self.sigma_x, self.seed)?;
        let ops = build_operators(&self.derivative.stencil(dt)?, ts.len())?;
        let lib = build_library(&ts, &ops, self.max_degree)?;
        let truth = true_coefficients(&system, &lib.terms).ok_or_else(|| {
            Error::invalid(format!(
                "system `{}` is not expressible in a degree-{} library",
                self.system, self.max_degree
            ))
        })?;
        let target = support_of(&truth);
        let pool = Pool::new(&ts, &ops, &lib)?;
        let state = run_assimilation(
            &pool,
            &self.active,
            self.stop_at_recovery.then_some(target.as_slice()),
        )?;
        Ok(ActiveOutcome {
            pool,
            target,
            state,
        })
    }
}
