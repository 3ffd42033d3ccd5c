use std::io::Write;

use serde::{Deserialize, Serialize};

use super::report::support_label;
use crate::derivatives::{build_operators, DerivativeSpec};
use crate::dynamics::TimeSeries;
use crate::error::{Error, Result};
use crate::library::build_library;
use crate::regression::{fit_library, FitConfig, FittedModel};

/// Fit settings for choosing an unknown measurement noise level by evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSweepConfig {
    pub sigma_grid: Vec<f64>,
    pub derivative: DerivativeSpec,
    #[serde(default = "default_degree")]
    pub max_degree: u32,
    #[serde(default)]
    pub fit: FitConfig,
}

fn default_degree() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaPoint {
    pub sigma_x: f64,
    /// Summed over output dimensions.
    pub log_evidence: f64,
    pub support: String,
}

#[derive(Debug, Clone)]
pub struct SigmaSweep {
    pub points: Vec<SigmaPoint>,
    pub best_index: usize,
    /// Model refitted at the best noise level.
    pub best_model: FittedModel,
}

impl SigmaSweep {
    pub fn best_sigma(&self) -> f64 {
        self.points[self.best_index].sigma_x
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "sigma_x,log_evidence,support")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.sigma_x, p.log_evidence, p.support)?;
        }
        Ok(())
    }
}

/// Fits the series once per grid value of `σ_x` (treated as homoscedastic
/// measurement noise) and returns the evidence curve and its maximizer.
/// Ties go to the earlier grid point.
pub fn evidence_sweep_sigma(ts: &TimeSeries, cfg: &SigmaSweepConfig) -> Result<SigmaSweep> {
    if cfg.sigma_grid.is_empty() {
        return Err(Error::invalid("sigma grid is empty"));
    }
    if let Some(s) = cfg
        .sigma_grid
        .iter()
        .find(|s| !(s.is_finite() && **s > 0.0))
    {
        return Err(Error::invalid(format!(
            "grid value {s} is not a positive noise level"
        )));
    }
    if !ts.is_uniform(1e-9) {
        return Err(Error::invalid("time grid must be uniform"));
    }
    let ops = build_operators(&cfg.derivative.stencil(ts.dt())?, ts.len())?;
    let mut points = Vec::with_capacity(cfg.sigma_grid.len());
    let mut best: Option<(usize, FittedModel)> = None;
    for (i, &sigma) in cfg.sigma_grid.iter().enumerate() {
        let noisy = ts.clone().with_noise_level(sigma);
        let lib = build_library(&noisy, &ops, cfg.max_degree)?;
        let model = fit_library(&noisy.x, &noisy.sigma_x2, &ops, &lib, &cfg.fit)?;
        let log_evidence = model.log_evidence();
        points.push(SigmaPoint {
            sigma_x: sigma,
            log_evidence,
            support: support_label(&model.terms, &model.supports()),
        });
        if best
            .as_ref()
            .is_none_or(|(b, _)| log_evidence > points[*b].log_evidence)
        {
            best = Some((i, model));
        }
    }
    let (best_index, best_model) = best.expect("grid is nonempty");
    Ok(SigmaSweep {
        points,
        best_index,
        best_model,
    })
}
