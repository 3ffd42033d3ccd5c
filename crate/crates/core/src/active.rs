//! Entropy-driven sequential data selection.
//!
//! Starting from a few early rows of a processed pool, repeatedly add the row
//! whose inclusion most increases the differential entropy of the evidence
//! distribution under the current model, then refit.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::IteratorRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derivatives::DerivativeOperators;
use crate::dynamics::TimeSeries;
use crate::error::{Error, Result};
use crate::evidence::{entropy, entropy_gain, posterior};
use crate::library::{FeatureLibrary, TermDescriptor};
use crate::linalg::{select_columns, select_entries, select_rows};
use crate::regression::{
    fit_problems, variance_floor, DimensionFit, FitConfig, FittedModel, RegressionProblem,
};
use crate::rng::rng_from_seed;

/// Every candidate row after differentiation and projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    /// Time at the centre of each row's stencil.
    pub t: Vec<f64>,
    /// Derivative estimates, `N × D`.
    pub y: DMatrix<f64>,
    pub design: DMatrix<f64>,
    pub var_design: DMatrix<f64>,
    /// `L_dt² σ_x²`, `N × D`.
    pub base_var: DMatrix<f64>,
    pub terms: Vec<TermDescriptor>,
}

impl Pool {
    pub fn new(ts: &TimeSeries, ops: &DerivativeOperators, lib: &FeatureLibrary) -> Result<Self> {
        let y = ops.differentiate(&ts.x)?;
        if lib.design.nrows() != y.nrows() {
            return Err(Error::shape("library and operators disagree on row count"));
        }
        Ok(Pool {
            t: ops.centers().map(|i| ts.t[i]).collect(),
            y,
            design: lib.design.clone(),
            var_design: lib.var_design.clone(),
            base_var: ops.derivative_variance(&ts.sigma_x2)?,
            terms: lib.terms.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.y.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    Entropy,
    /// Uniformly random order, as a baseline.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActiveConfig {
    pub fit: FitConfig,
    /// Rows in the initial set; `None` means twice the library size.
    pub seed_rows: Option<usize>,
    /// Stop once this many rows are selected; `None` means the whole pool.
    pub max_points: Option<usize>,
    pub selection: Selection,
    /// Seed for the random baseline.
    pub seed: u64,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        ActiveConfig {
            fit: FitConfig::default(),
            seed_rows: None,
            max_points: None,
            selection: Selection::Entropy,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub step: usize,
    /// `None` for the initial set.
    pub chosen_index: Option<usize>,
    pub t_chosen: Option<f64>,
    pub n_selected: usize,
    /// Summed over output dimensions.
    pub entropy: f64,
    pub log_evidence: f64,
    pub supports: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct AssimilationState {
    pub selected: Vec<usize>,
    pub is_selected: Vec<bool>,
    pub model: FittedModel,
    pub history: Vec<HistoryEntry>,
    /// Selected-row count when the target support first appeared.
    pub recovered_at: Option<usize>,
}

/// Fits the selected rows of the pool, one problem per dimension.
pub fn fit_rows(pool: &Pool, rows: &[usize], cfg: &FitConfig) -> Result<FittedModel> {
    let design = select_rows(&pool.design, rows);
    let var_design = select_rows(&pool.var_design, rows);
    let problems = (0..pool.dim())
        .map(|d| {
            let idx: Vec<usize> = rows.to_vec();
            RegressionProblem::new(
                select_entries(&pool.y.column(d).into_owned(), &idx),
                &design,
                &var_design,
                select_entries(&pool.base_var.column(d).into_owned(), &idx),
                cfg.variance_floor_rel,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    fit_problems(&problems, &pool.terms, cfg)
}

/// Noise variance of pool row `r` in dimension `d` under the model's current
/// coefficients, floored like the fit.
fn row_variance(pool: &Pool, model: &FittedModel, r: usize, d: usize, floor: f64) -> f64 {
    let fit = &model.dims[d];
    let lib: f64 = fit
        .active
        .iter()
        .zip(fit.mean.iter())
        .map(|(&c, w)| pool.var_design[(r, c)] * w * w)
        .sum();
    (pool.base_var[(r, d)] + lib).max(floor)
}

fn floors(pool: &Pool, rows: &[usize], cfg: &FitConfig) -> Vec<f64> {
    (0..pool.dim())
        .map(|d| variance_floor(rows.iter().map(|&r| pool.y[(r, d)]), cfg.variance_floor_rel))
        .collect()
}

/// Summed entropy of the evidence distribution over the selected rows.
pub fn selection_entropy(
    pool: &Pool,
    state_rows: &[usize],
    model: &FittedModel,
    cfg: &FitConfig,
) -> Result<f64> {
    let floors = floors(pool, state_rows, cfg);
    let mut total = 0.0;
    for d in 0..pool.dim() {
        let fit = &model.dims[d];
        let design = select_rows(&pool.design, state_rows);
        let beta = DVector::from_iterator(
            state_rows.len(),
            state_rows
                .iter()
                .map(|&r| 1.0 / row_variance(pool, model, r, d, floors[d])),
        );
        let alpha = DVector::from_element(fit.active.len(), cfg.alpha);
        total += entropy(&design, &fit.active, &beta, &alpha)?;
    }
    Ok(total)
}

/// Active columns and posterior covariance used to score candidates in one
/// dimension. A dimension whose model is empty gives every candidate the same
/// gain, so it is scored against the full-library posterior instead.
fn scoring_model(
    pool: &Pool,
    rows: &[usize],
    fit: &DimensionFit,
    d: usize,
    floor: f64,
    cfg: &FitConfig,
) -> (Vec<usize>, DMatrix<f64>) {
    if !fit.active.is_empty() {
        return (fit.active.clone(), fit.covariance.clone());
    }
    let all: Vec<usize> = (0..pool.terms.len()).collect();
    let design = select_rows(&pool.design, rows);
    let beta = DVector::from_iterator(
        rows.len(),
        rows.iter().map(|&r| 1.0 / pool.base_var[(r, d)].max(floor)),
    );
    let alpha = DVector::from_element(all.len(), cfg.alpha);
    match posterior(&DVector::zeros(rows.len()), &design, &all, &beta, &alpha) {
        Ok(post) => (all, post.covariance),
        Err(_) => (Vec::new(), DMatrix::zeros(0, 0)),
    }
}

/// Entropy gain of adding each unselected row, `None` for selected rows.
pub fn score_candidates(
    pool: &Pool,
    state: &AssimilationState,
    cfg: &FitConfig,
) -> Vec<Option<f64>> {
    let floors = floors(pool, &state.selected, cfg);
    let scoring: Vec<(DMatrix<f64>, DMatrix<f64>)> = state
        .model
        .dims
        .iter()
        .enumerate()
        .map(|(d, fit)| {
            let (active, cov) = scoring_model(pool, &state.selected, fit, d, floors[d], cfg);
            (select_columns(&pool.design, &active), cov)
        })
        .collect();
    (0..pool.len())
        .into_par_iter()
        .map(|r| {
            if state.is_selected[r] {
                return None;
            }
            let gain = scoring
                .iter()
                .enumerate()
                .map(|(d, (phi, cov))| {
                    let phi = phi.row(r).transpose();
                    entropy_gain(cov, &phi, row_variance(pool, &state.model, r, d, floors[d]))
                })
                .sum();
            Some(gain)
        })
        .collect()
}

/// Unselected row with the largest entropy gain; ties go to the lowest index.
pub fn select_next(pool: &Pool, state: &AssimilationState, cfg: &FitConfig) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (r, gain) in score_candidates(pool, state, cfg).into_iter().enumerate() {
        if let Some(g) = gain {
            if best.is_none_or(|(_, b)| g > b) {
                best = Some((r, g));
            }
        }
    }
    best.map(|(r, _)| r)
}

fn record(
    pool: &Pool,
    state: &mut AssimilationState,
    chosen: Option<usize>,
    cfg: &FitConfig,
    target: Option<&[Vec<usize>]>,
) -> Result<()> {
    let h = selection_entropy(pool, &state.selected, &state.model, cfg)?;
    let supports = state.model.supports();
    if state.recovered_at.is_none() && target.is_some_and(|t| t == supports.as_slice()) {
        state.recovered_at = Some(state.selected.len());
    }
    state.history.push(HistoryEntry {
        step: state.history.len(),
        chosen_index: chosen,
        t_chosen: chosen.map(|r| pool.t[r]),
        n_selected: state.selected.len(),
        entropy: h,
        log_evidence: state.model.log_evidence(),
        supports,
    });
    Ok(())
}

/// Seeds with the earliest rows, then alternates selection and a full refit
/// until `max_points` rows are selected, the pool is exhausted, or (when a
/// `target` support is given) the model first matches it.
pub fn run_assimilation(
    pool: &Pool,
    cfg: &ActiveConfig,
    target: Option<&[Vec<usize>]>,
) -> Result<AssimilationState> {
    cfg.fit.validate()?;
    let k0 = cfg.seed_rows.unwrap_or(2 * pool.terms.len()).max(1);
    if k0 > pool.len() {
        return Err(Error::InsufficientData {
            samples: pool.len(),
            half_width: k0,
        });
    }
    let limit = cfg.max_points.unwrap_or(pool.len()).min(pool.len()).max(k0);
    let selected: Vec<usize> = (0..k0).collect();
    let mut is_selected = vec![false; pool.len()];
    for &r in &selected {
        is_selected[r] = true;
    }
    let model = fit_rows(pool, &selected, &cfg.fit)?;
    let mut state = AssimilationState {
        selected,
        is_selected,
        model,
        history: Vec::new(),
        recovered_at: None,
    };
    record(pool, &mut state, None, &cfg.fit, target)?;
    let mut rng = rng_from_seed(cfg.seed);
    while state.selected.len() < limit && state.recovered_at.is_none() {
        let next = match cfg.selection {
            Selection::Entropy => select_next(pool, &state, &cfg.fit),
            Selection::Random => (0..pool.len())
                .filter(|&r| !state.is_selected[r])
                .choose(&mut rng),
        };
        let Some(r) = next else { break };
        state.selected.push(r);
        state.is_selected[r] = true;
        let mut rows = state.selected.clone();
        rows.sort_unstable();
        state.model = fit_rows(pool, &rows, &cfg.fit)?;
        record(pool, &mut state, Some(r), &cfg.fit, target)?;
    }
    Ok(state)
}

/// `3;18` style per-dimension support bitmasks.
pub fn support_bitmask(supports: &[Vec<usize>]) -> String {
    supports
        .iter()
        .map(|s| {
            s.iter()
                .fold(0u128, |acc, &c| acc | (1u128 << c))
                .to_string()
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Columns: `step,chosen_index,t_chosen,H,log_evidence,support_bitmask`.
pub fn write_history(history: &[HistoryEntry], mut out: impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "step,chosen_index,t_chosen,H,log_evidence,support_bitmask"
    )?;
    for h in history {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            h.step,
            h.chosen_index.map(|i| i.to_string()).unwrap_or_default(),
            h.t_chosen.map(|t| t.to_string()).unwrap_or_default(),
            h.entropy,
            h.log_evidence,
            support_bitmask(&h.supports)
        )?;
    }
    Ok(())
}

pub fn save_history(history: &[HistoryEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_history(history, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
