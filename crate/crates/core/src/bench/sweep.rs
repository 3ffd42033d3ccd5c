use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::config::SweepConfig;
use super::report::{
    support_label, wilson_interval, CellReport, CellTiming, ExperimentReport, SweepTiming,
    SCHEMA_VERSION,
};
use crate::derivatives::{build_operators, DerivativeOperators};
use crate::dynamics::{add_noise, simulate, TimeSeries};
use crate::error::{Error, Result};
use crate::library::{build_library, polynomial_terms, TermDescriptor};
use crate::regression::{
    fit_library, is_success, mce_matrix, true_coefficients, FitConfig, Strategy,
};
use crate::rng::cell_seed;

/// Result of one strategy on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub success: bool,
    pub mce: f64,
    pub supports: Vec<Vec<usize>>,
    pub seconds: f64,
}

/// One noisy realization fitted with every strategy of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub seed: u64,
    pub outcomes: Vec<Result<TrialResult, String>>,
}

/// Everything about a sweep cell that does not depend on the noise draw.
pub struct CellSetup {
    pub clean: TimeSeries,
    pub ops: DerivativeOperators,
    pub terms: Vec<TermDescriptor>,
    pub truth: DMatrix<f64>,
}

pub fn cell_setup(cfg: &SweepConfig, n_samples: usize) -> Result<CellSetup> {
    let system = cfg.ode()?;
    let dt = cfg.sample_dt(n_samples);
    let clean = simulate(
        &system,
        &cfg.initial_state()?,
        cfg.t0,
        dt,
        n_samples,
        cfg.substeps,
    )?;
    let ops = build_operators(&cfg.derivative.stencil(dt)?, n_samples)?;
    let terms = polynomial_terms(system.dim, cfg.max_degree);
    let truth = true_coefficients(&system, &terms).ok_or_else(|| {
        Error::invalid(format!(
            "system `{}` is not expressible in a degree-{} library",
            cfg.system, cfg.max_degree
        ))
    })?;
    Ok(CellSetup {
        clean,
        ops,
        terms,
        truth,
    })
}

fn fit_one(
    ts: &TimeSeries,
    setup: &CellSetup,
    fit: &FitConfig,
    max_degree: u32,
) -> Result<TrialResult> {
    let start = Instant::now();
    let lib = build_library(ts, &setup.ops, max_degree)?;
    let model = fit_library(&ts.x, &ts.sigma_x2, &setup.ops, &lib, fit)?;
    let w = model.coefficient_matrix();
    Ok(TrialResult {
        success: is_success(&model, &setup.truth),
        mce: mce_matrix(&w, &setup.truth),
        supports: model.supports(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Noise draw `trial` of cell `(σ_x, Ñ)`, fitted with each strategy in
/// `cfg.strategies` order.
pub fn run_trial(
    cfg: &SweepConfig,
    setup: &CellSetup,
    sigma_x: f64,
    trial: usize,
) -> Result<Trial> {
    let n_samples = setup.clean.len();
    let seed = cell_seed(cfg.seed_base, sigma_x, n_samples, trial);
    let ts = add_noise(&setup.clean, sigma_x, seed)?;
    let outcomes = cfg
        .strategies
        .iter()
        .map(|&s| {
            let fit = cfg.fit_config(s, sigma_x)?;
            Ok(fit_one(&ts, setup, &fit, cfg.max_degree).map_err(|e| e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trial { seed, outcomes })
}

fn aggregate(
    strategy: Strategy,
    sigma_x: f64,
    n_samples: usize,
    terms: &[TermDescriptor],
    results: &[&Result<TrialResult, String>],
) -> (CellReport, CellTiming) {
    let trials = results.len();
    let ok: Vec<&TrialResult> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let errors = trials - ok.len();
    let wins: Vec<&&TrialResult> = ok.iter().filter(|r| r.success).collect();
    let successes = wins.len();
    let mean_mce =
        (!wins.is_empty()).then(|| wins.iter().map(|r| r.mce).sum::<f64>() / successes as f64);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in &ok {
        *counts.entry(support_label(terms, &r.supports)).or_default() += 1;
    }
    let (modal_support, modal_count) = counts.iter().fold((String::new(), 0), |best, (k, &v)| {
        if v > best.1 {
            (k.clone(), v)
        } else {
            best
        }
    });
    let (ci_low, ci_high) = wilson_interval(successes, trials);
    (
        CellReport {
            strategy,
            sigma_x,
            n_samples,
            trials,
            successes,
            errors,
            success_rate: successes as f64 / trials as f64,
            ci_low,
            ci_high,
            mean_mce,
            modal_support,
            modal_count,
        },
        CellTiming {
            strategy,
            sigma_x,
            n_samples,
            fit_seconds: ok.iter().map(|r| r.seconds).sum(),
        },
    )
}

/// Runs every `(σ_x, Ñ, trial)` and aggregates success rates per strategy.
///
/// Trials run on the rayon pool; aggregation happens in trial order, so the
/// report does not depend on scheduling. Trials whose fit fails count as
/// non-successes; check [`ExperimentReport::ensure_ok`] for the error budget.
pub fn run_sweep(cfg: &SweepConfig) -> Result<(ExperimentReport, SweepTiming)> {
    cfg.validate()?;
    let start = Instant::now();
    let mut cells = Vec::new();
    let mut timings = Vec::new();
    let mut terms = Vec::new();
    for &n in &cfg.n_samples {
        let setup = cell_setup(cfg, n)?;
        for &sigma in &cfg.sigma_x {
            let trials = (0..cfg.trials)
                .into_par_iter()
                .map(|k| run_trial(cfg, &setup, sigma, k))
                .collect::<Result<Vec<_>>>()?;
            for (j, &strategy) in cfg.strategies.iter().enumerate() {
                let results: Vec<&Result<TrialResult, String>> =
                    trials.iter().map(|t| &t.outcomes[j]).collect();
                let (cell, timing) = aggregate(strategy, sigma, n, &setup.terms, &results);
                cells.push(cell);
                timings.push(timing);
            }
        }
        terms = setup.terms.iter().map(|t| t.label.clone()).collect();
    }
    let key = |s: Strategy, sigma: f64, n: usize| (s, sigma.to_bits(), n);
    cells.sort_by(|a, b| {
        key(a.strategy, a.sigma_x, a.n_samples).cmp(&key(b.strategy, b.sigma_x, b.n_samples))
    });
    timings.sort_by(|a, b| {
        key(a.strategy, a.sigma_x, a.n_samples).cmp(&key(b.strategy, b.sigma_x, b.n_samples))
    });
    let mut config = cfg.clone();
    config.strategies.sort();
    config.strategies.dedup();
    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        config,
        terms,
        cells,
    };
    let timing = SweepTiming {
        total_seconds: start.elapsed().as_secs_f64(),
        cells: timings,
    };
    Ok((report, timing))
}
