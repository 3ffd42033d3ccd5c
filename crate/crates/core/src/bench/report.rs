use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::SweepConfig;
use crate::error::{Error, Result};
use crate::library::TermDescriptor;
use crate::regression::Strategy;

pub const SCHEMA_VERSION: u32 = 1;

/// Largest fraction of errored trials a sweep tolerates.
pub const MAX_ERROR_RATE: f64 = 0.05;

/// Two-sided 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// `x1 + x2 | x1 + x1·x3 | x3` style description of per-dimension supports.
pub fn support_label(terms: &[TermDescriptor], supports: &[Vec<usize>]) -> String {
    supports
        .iter()
        .map(|s| {
            if s.is_empty() {
                "0".to_string()
            } else {
                s.iter()
                    .map(|&c| terms[c].label.as_str())
                    .collect::<Vec<_>>()
                    .join(" + ")
            }
        })
        .collect::<Vec<_>>()
        .join(" | ")
}

/// Aggregate for one `(strategy, σ_x, Ñ)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub strategy: Strategy,
    pub sigma_x: f64,
    pub n_samples: usize,
    pub trials: usize,
    pub successes: usize,
    /// Trials where the fit itself failed; counted as non-successes.
    pub errors: usize,
    pub success_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Mean MCE over successful trials.
    pub mean_mce: Option<f64>,
    /// Most frequent recovered support (see [`support_label`]).
    pub modal_support: String,
    pub modal_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: SweepConfig,
    pub terms: Vec<String>,
    /// Sorted by strategy, then `σ_x`, then `Ñ`.
    pub cells: Vec<CellReport>,
}

impl ExperimentReport {
    pub fn cell(&self, strategy: Strategy, sigma_x: f64, n_samples: usize) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.strategy == strategy && c.sigma_x == sigma_x && c.n_samples == n_samples)
    }

    pub fn error_rate(&self) -> f64 {
        let total: usize = self.cells.iter().map(|c| c.trials).sum();
        let errors: usize = self.cells.iter().map(|c| c.errors).sum();
        if total == 0 {
            0.0
        } else {
            errors as f64 / total as f64
        }
    }

    /// Fails when more than [`MAX_ERROR_RATE`] of all trials errored.
    pub fn ensure_ok(&self) -> Result<()> {
        if self.error_rate() > MAX_ERROR_RATE {
            return Err(Error::SweepFailed {
                failed: self.cells.iter().map(|c| c.errors).sum(),
                total: self.cells.iter().map(|c| c.trials).sum(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "strategy,sigma_x,n_samples,trials,successes,errors,success_rate,ci_low,ci_high,mean_mce,modal_support,modal_count"
        )?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                c.strategy,
                c.sigma_x,
                c.n_samples,
                c.trials,
                c.successes,
                c.errors,
                c.success_rate,
                c.ci_low,
                c.ci_high,
                c.mean_mce.map(|m| m.to_string()).unwrap_or_default(),
                c.modal_support,
                c.modal_count
            )?;
        }
        Ok(())
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()?).map_err(|e| Error::io(json, e))?;
        let csv = dir.join("report.csv");
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(&csv, e))?;
        std::fs::write(&csv, buf).map_err(|e| Error::io(csv, e))
    }
}

/// Wall-clock cost of a sweep, kept apart from the report so that the report
/// is byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTiming {
    pub total_seconds: f64,
    pub cells: Vec<CellTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub strategy: Strategy,
    pub sigma_x: f64,
    pub n_samples: usize,
    /// Summed fit time over all trials of the cell.
    pub fit_seconds: f64,
}

impl SweepTiming {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let path = dir.as_ref().join("timing.json");
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    }
}
