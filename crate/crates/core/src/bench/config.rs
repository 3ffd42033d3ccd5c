use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::derivatives::DerivativeSpec;
use crate::dynamics::{builtin, default_initial_condition, OdeSystem};
use crate::error::{Error, Result};
use crate::regression::{FitConfig, SparseBayesNoise, Strategy};

/// STLS threshold, either fixed or chosen per noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSchedule {
    Constant(f64),
    PerSigma(Vec<LambdaAt>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaAt {
    pub sigma_x: f64,
    pub lambda: f64,
}

impl LambdaSchedule {
    pub fn at(&self, sigma_x: f64) -> Result<f64> {
        match self {
            LambdaSchedule::Constant(l) => Ok(*l),
            LambdaSchedule::PerSigma(list) => list
                .iter()
                .find(|e| (e.sigma_x - sigma_x).abs() <= 1e-12 * sigma_x.abs().max(1.0))
                .map(|e| e.lambda)
                .ok_or_else(|| {
                    Error::invalid(format!("no STLS threshold for sigma_x = {sigma_x}"))
                }),
        }
    }
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule::Constant(0.1)
    }
}

/// A success-rate sweep over noise levels and sample counts.
///
/// Samples are taken at `t_i = t0 + iΔt`, `Δt = (t1 − t0)/Ñ`, from an RK4
/// trajectory integrated at `Δt / substeps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub system: String,
    /// Overrides of the system's default parameters.
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    /// Initial state; defaults to the system's benchmark initial condition.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub t0: f64,
    pub t1: f64,
    /// Sample counts `Ñ`.
    pub n_samples: Vec<usize>,
    pub sigma_x: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub derivative: DerivativeSpec,
    #[serde(default = "default_degree")]
    pub max_degree: u32,
    pub strategies: Vec<Strategy>,
    /// Prior precision `α` for B-SINDy (inverse prior variance).
    pub alpha: f64,
    #[serde(default)]
    pub stls_lambda: LambdaSchedule,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default = "default_tol")]
    pub w_change_tol: f64,
    #[serde(default = "default_iters")]
    pub max_noise_iters: usize,
    #[serde(default = "default_floor")]
    pub variance_floor_rel: f64,
    #[serde(default)]
    pub sparsebayes_noise: SparseBayesNoise,
}

fn default_trials() -> usize {
    200
}
fn default_degree() -> u32 {
    3
}
fn default_substeps() -> usize {
    10
}
fn default_tol() -> f64 {
    FitConfig::default().w_change_tol
}
fn default_iters() -> usize {
    FitConfig::default().max_noise_iters
}
fn default_floor() -> f64 {
    FitConfig::default().variance_floor_rel
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.ode()?;
        let x0 = self.initial_state()?;
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("x0 must be finite"));
        }
        if !(self.t0.is_finite() && self.t1.is_finite() && self.t1 > self.t0) {
            return Err(Error::invalid("need finite t0 < t1"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.strategies.is_empty() {
            return Err(Error::invalid("at least one strategy is required"));
        }
        let mut unique = self.strategies.clone();
        unique.sort();
        unique.dedup();
        if unique.len() != self.strategies.len() {
            return Err(Error::invalid("strategies must not repeat"));
        }
        if self.n_samples.is_empty() || self.sigma_x.is_empty() {
            return Err(Error::invalid("n_samples and sigma_x must be nonempty"));
        }
        if self.substeps == 0 {
            return Err(Error::invalid("substeps must be at least 1"));
        }
        if self.max_degree == 0 || self.max_degree > 6 {
            return Err(Error::invalid("max_degree must be between 1 and 6"));
        }
        for &n in &self.n_samples {
            if n <= 2 * self.derivative.half_width() {
                return Err(Error::InsufficientData {
                    samples: n,
                    half_width: self.derivative.half_width(),
                });
            }
            self.derivative.stencil(self.sample_dt(n))?;
        }
        for &s in &self.sigma_x {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::invalid(
                    "sigma_x values must be finite and nonnegative",
                ));
            }
            if self.strategies.contains(&Strategy::Stls) {
                self.stls_lambda.at(s)?;
            }
            for strategy in &self.strategies {
                self.fit_config(*strategy, s)?.validate()?;
            }
        }
        Ok(())
    }

    pub fn ode(&self) -> Result<OdeSystem> {
        let overrides: Vec<(String, f64)> = self
            .parameters
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        builtin(&self.system, &overrides)
    }

    pub fn initial_state(&self) -> Result<Vec<f64>> {
        match &self.x0 {
            Some(x0) => Ok(x0.clone()),
            None => default_initial_condition(&self.system),
        }
    }

    pub fn sample_dt(&self, n_samples: usize) -> f64 {
        (self.t1 - self.t0) / n_samples as f64
    }

    pub fn fit_config(&self, strategy: Strategy, sigma_x: f64) -> Result<FitConfig> {
        Ok(FitConfig {
            alpha: self.alpha,
            w_change_tol: self.w_change_tol,
            max_noise_iters: self.max_noise_iters,
            stls_lambda: if strategy == Strategy::Stls {
                self.stls_lambda.at(sigma_x)?
            } else {
                0.0
            },
            strategy,
            sparsebayes_noise: self.sparsebayes_noise,
            variance_floor_rel: self.variance_floor_rel,
        })
    }
}
