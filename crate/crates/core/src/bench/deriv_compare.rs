use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::derivatives::{build_operators, DerivativeSpec};
use crate::dynamics::{add_noise, builtin, default_initial_condition, simulate, OdeSystem};
use crate::error::{Error, Result};
use crate::rng::mix;

/// Derivative-accuracy comparison of several schemes on one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivCompareConfig {
    pub system: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub t0: f64,
    pub t1: f64,
    pub sigma_x: f64,
    pub dts: Vec<f64>,
    pub schemes: Vec<DerivativeSpec>,
    /// Noise draws averaged per `(scheme, dt)`.
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_realizations() -> usize {
    50
}
fn default_substeps() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivRow {
    pub scheme: String,
    pub dt: f64,
    /// Root-mean-square error over all points, dimensions and draws.
    pub rms: f64,
    /// Mean magnitude of the per-point average error over the 10% of
    /// entries with the largest `|ẍ|`.
    pub bias: f64,
    pub points: usize,
}

/// `fd8`, `weak9p2`, …
pub fn scheme_label(spec: &DerivativeSpec) -> String {
    match spec {
        DerivativeSpec::FiniteDifference { order } => format!("fd{order}"),
        DerivativeSpec::WeakForm { points, power } => format!("weak{points}p{power}"),
    }
}

/// `ẍ = (∂f/∂x) f`, by a central difference along `f`.
fn second_derivative(system: &OdeSystem, x: &[f64]) -> Vec<f64> {
    let f = system.rhs_vec(x);
    let scale = f.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let h = 1e-6 / scale;
    let plus: Vec<f64> = x.iter().zip(&f).map(|(xi, fi)| xi + h * fi).collect();
    let minus: Vec<f64> = x.iter().zip(&f).map(|(xi, fi)| xi - h * fi).collect();
    system
        .rhs_vec(&plus)
        .iter()
        .zip(system.rhs_vec(&minus))
        .map(|(p, m)| (p - m) / (2.0 * h))
        .collect()
}

pub fn fd_vs_weak_report(cfg: &DerivCompareConfig) -> Result<Vec<DerivRow>> {
    if cfg.dts.is_empty() || cfg.schemes.is_empty() {
        return Err(Error::invalid("need at least one dt and one scheme"));
    }
    if cfg.realizations == 0 || cfg.substeps == 0 {
        return Err(Error::invalid("realizations and substeps must be positive"));
    }
    if !(cfg.sigma_x.is_finite() && cfg.sigma_x >= 0.0) {
        return Err(Error::invalid("sigma_x must be finite and nonnegative"));
    }
    if !(cfg.t1 > cfg.t0) {
        return Err(Error::invalid("need t0 < t1"));
    }
    let overrides: Vec<(String, f64)> = cfg
        .parameters
        .iter()
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    let system = builtin(&cfg.system, &overrides)?;
    let x0 = match &cfg.x0 {
        Some(x) => x.clone(),
        None => default_initial_condition(&cfg.system)?,
    };
    let draws = if cfg.sigma_x == 0.0 {
        1
    } else {
        cfg.realizations
    };
    let mut rows = Vec::new();
    for (di, &dt) in cfg.dts.iter().enumerate() {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("dt {dt} must be positive")));
        }
        let n = ((cfg.t1 - cfg.t0) / dt).round() as usize;
        let clean = simulate(&system, &x0, cfg.t0, dt, n, cfg.substeps)?;
        let truth_full = system.derivatives(&clean.x);
        for spec in &cfg.schemes {
            let ops = build_operators(&spec.stencil(dt)?, n)?;
            let centers: Vec<usize> = ops.centers().collect();
            let dim = clean.dim();
            let truth = DMatrix::from_fn(centers.len(), dim, |i, j| truth_full[(centers[i], j)]);
            let accel: Vec<f64> = centers
                .iter()
                .flat_map(|&c| {
                    second_derivative(&system, &clean.x.row(c).iter().copied().collect::<Vec<_>>())
                })
                .collect();
            let mut sum_err = DMatrix::zeros(centers.len(), dim);
            let mut sq = 0.0;
            for k in 0..draws {
                let seed = mix(&[cfg.seed, di as u64, k as u64]);
                let noisy = add_noise(&clean, cfg.sigma_x, seed)?;
                let err = ops.differentiate(&noisy.x)? - &truth;
                sq += err.norm_squared();
                sum_err += err;
            }
            let entries = centers.len() * dim;
            let rms = (sq / (entries * draws) as f64).sqrt();
            let mean_err = sum_err / draws as f64;
            // accel is row-major over (center, dim)
            let mut order: Vec<usize> = (0..entries).collect();
            order.sort_by(|&a, &b| accel[b].abs().total_cmp(&accel[a].abs()).then(a.cmp(&b)));
            let top = (entries / 10).max(1);
            let bias = order[..top]
                .iter()
                .map(|&e| mean_err[(e / dim, e % dim)].abs())
                .sum::<f64>()
                / top as f64;
            rows.push(DerivRow {
                scheme: scheme_label(spec),
                dt,
                rms,
                bias,
                points: centers.len(),
            });
        }
    }
    Ok(rows)
}

pub fn write_deriv_csv(rows: &[DerivRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "scheme,dt,rms,bias,points")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.scheme, r.dt, r.rms, r.bias, r.points
        )?;
    }
    Ok(())
}
