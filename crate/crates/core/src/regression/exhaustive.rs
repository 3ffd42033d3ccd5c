use std::cmp::Ordering;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_support, least_squares, FitConfig, RegressionProblem};
use crate::error::{Error, Result};
use crate::evidence::evidence_decomposition;
use crate::linalg::select_columns;

pub const MAX_EXHAUSTIVE_TERMS: usize = 14;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One support from the full `2^M` enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedModel {
    pub support: Vec<usize>,
    /// Log-evidence after noise iteration.
    pub log_evidence: f64,
    /// Log-likelihood at the posterior mean under the model's own `β`.
    pub log_likelihood: f64,
    /// `log_evidence − log_likelihood`.
    pub occam: f64,
    /// Maximum log-likelihood (weighted least squares) under the derivative
    /// noise alone, shared by every support so nested models compare directly.
    pub max_log_likelihood: f64,
}

fn rank(a: &RankedModel, b: &RankedModel, key: impl Fn(&RankedModel) -> f64) -> Ordering {
    key(b)
        .partial_cmp(&key(a))
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.support.len().cmp(&b.support.len()))
        .then_with(|| a.support.cmp(&b.support))
}

/// Every support of the library, each fitted with the same noise iteration
/// as the greedy search, sorted by decreasing evidence.
pub fn fit_exhaustive(p: &RegressionProblem<'_>, cfg: &FitConfig) -> Result<Vec<RankedModel>> {
    let m = p.terms();
    if m > MAX_EXHAUSTIVE_TERMS {
        return Err(Error::invalid(format!(
            "exhaustive search supports at most {MAX_EXHAUSTIVE_TERMS} terms, library has {m}"
        )));
    }
    let base = p.base_noise()?;
    let sqrt_beta = base.beta.map(f64::sqrt);
    let base_norm =
        -0.5 * p.rows() as f64 * LN_2PI + 0.5 * base.beta.iter().map(|b| b.ln()).sum::<f64>();
    let mut ranked = (0u32..1 << m)
        .into_par_iter()
        .map(|mask| {
            let support: Vec<usize> = (0..m).filter(|&c| mask & (1 << c) != 0).collect();
            let fit = fit_support(p, &support, cfg)?;
            let alpha = DVector::from_element(support.len(), cfg.alpha);
            let parts =
                evidence_decomposition(&fit.posterior, &p.y, p.design, &fit.noise.beta, &alpha)?;
            let d = select_columns(p.design, &support);
            let mut scaled = d.clone();
            for mut col in scaled.column_iter_mut() {
                col.component_mul_assign(&sqrt_beta);
            }
            let w = least_squares(&scaled, &p.y.component_mul(&sqrt_beta))?;
            let resid = &p.y - &d * &w;
            let fit_term: f64 = resid
                .iter()
                .zip(base.beta.iter())
                .map(|(r, b)| b * r * r)
                .sum();
            Ok(RankedModel {
                support,
                log_evidence: fit.posterior.log_evidence,
                log_likelihood: parts.log_likelihood,
                occam: fit.posterior.log_evidence - parts.log_likelihood,
                max_log_likelihood: base_norm - 0.5 * fit_term,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| rank(a, b, |r| r.log_evidence));
    Ok(ranked)
}

/// Reorders a ranking by decreasing maximum likelihood. Ties go to the
/// larger support, which can only fit at least as well.
pub fn rank_by_likelihood(models: &mut [RankedModel]) {
    models.sort_by(|a, b| {
        b.max_log_likelihood
            .partial_cmp(&a.max_log_likelihood)
            .unwrap_or(Ordering::Equal)
            .then_with(|| b.support.len().cmp(&a.support.len()))
            .then_with(|| a.support.cmp(&b.support))
    });
}
