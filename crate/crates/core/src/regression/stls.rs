use nalgebra::{DMatrix, DVector};

use super::{DimensionFit, FitConfig, RegressionProblem};
use crate::error::{Error, Result};
use crate::evidence::posterior;
use crate::linalg::{select_columns, spd_cholesky, weighted_gram};

/// Minimum-norm least squares via SVD, discarding singular values below
/// `1e-12` of the largest.
pub fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if design.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax.is_finite() && smax > 0.0) {
        return Ok(DVector::zeros(design.ncols()));
    }
    svd.solve(y, 1e-12 * smax)
        .map_err(|e| Error::invalid(e.to_string()))
}

/// Sequentially thresholded least squares: alternate a least-squares fit on
/// the active set with zeroing every coefficient below `λ` in magnitude,
/// until the support stops changing.
///
/// The reported covariance is the least-squares covariance `(DᵀBD)⁻¹` under
/// the derivative noise alone, and the evidence is that of the selected
/// support at the configured prior.
pub fn fit_stls(p: &RegressionProblem<'_>, cfg: &FitConfig) -> Result<DimensionFit> {
    let lambda = cfg.stls_lambda;
    let mut active: Vec<usize> = (0..p.terms()).collect();
    let mut w = least_squares(p.design, &p.y)?;
    for _ in 0..=p.terms() {
        let keep: Vec<usize> = (0..active.len())
            .filter(|&k| w[k].abs() >= lambda)
            .collect();
        if keep.len() == active.len() {
            break;
        }
        active = keep.iter().map(|&k| active[k]).collect();
        w = least_squares(&select_columns(p.design, &active), &p.y)?;
    }
    let noise = p.base_noise()?;
    let d = select_columns(p.design, &active);
    let covariance = if active.is_empty() {
        DMatrix::zeros(0, 0)
    } else {
        spd_cholesky(&weighted_gram(&d, &noise.beta))
            .ok_or_else(|| Error::Conditioning {
                columns: active.clone(),
            })?
            .inverse()
    };
    let alpha = DVector::from_element(active.len(), cfg.alpha);
    let log_evidence = posterior(&p.y, p.design, &active, &noise.beta, &alpha)?.log_evidence;
    Ok(DimensionFit {
        active,
        mean: w,
        covariance,
        log_evidence,
        beta: noise.beta,
        noise_iterations: 0,
        trace: Vec::new(),
        warning: None,
    })
}
