use nalgebra::DVector;

use super::{noise_update, DimensionFit, FitConfig, RegressionProblem};
use crate::error::Result;
use crate::evidence::{posterior, GaussianPosterior, NoiseModel};
use crate::linalg::select_columns;

/// A fixed support after noise-parameter iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportFit {
    pub posterior: GaussianPosterior,
    pub noise: NoiseModel,
    /// Number of `β` updates after the initial ridge fit.
    pub iterations: usize,
    pub converged: bool,
}

impl SupportFit {
    pub(crate) fn into_dimension_fit(self, trace: Vec<f64>) -> DimensionFit {
        DimensionFit {
            active: self.posterior.active,
            mean: self.posterior.mean,
            covariance: self.posterior.covariance,
            log_evidence: self.posterior.log_evidence,
            beta: self.noise.beta,
            noise_iterations: self.iterations,
            trace,
            warning: (!self.converged).then(|| "noise iteration did not converge".to_string()),
        }
    }
}

/// Ridge fit of `active` under `β` from the derivative noise alone, then
/// alternating `β` updates and refits until `w` settles.
pub fn fit_support(
    p: &RegressionProblem<'_>,
    active: &[usize],
    cfg: &FitConfig,
) -> Result<SupportFit> {
    let alpha = DVector::from_element(active.len(), cfg.alpha);
    let var_active = select_columns(p.var_design, active);
    let mut noise = noise_update(
        &DVector::zeros(active.len()),
        &var_active,
        &p.base_var,
        p.floor,
    )?;
    let mut post = posterior(&p.y, p.design, active, &noise.beta, &alpha)?;
    if active.is_empty() {
        return Ok(SupportFit {
            posterior: post,
            noise,
            iterations: 0,
            converged: true,
        });
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_noise_iters {
        iterations += 1;
        noise = noise_update(&post.mean, &var_active, &p.base_var, p.floor)?;
        let next = posterior(&p.y, p.design, active, &noise.beta, &alpha)?;
        let change = (&next.mean - &post.mean).norm() / next.mean.norm().max(f64::MIN_POSITIVE);
        post = next;
        if change < cfg.w_change_tol {
            converged = true;
            break;
        }
    }
    Ok(SupportFit {
        posterior: post,
        noise,
        iterations,
        converged,
    })
}

/// Greedy backward elimination: starting from the full library, repeatedly
/// drop the single term whose removal gives the highest evidence, as long as
/// that beats the current evidence. Ties go to the lowest column index.
pub fn fit_bsindy(p: &RegressionProblem<'_>, cfg: &FitConfig) -> Result<DimensionFit> {
    let mut active: Vec<usize> = (0..p.terms()).collect();
    let mut current = fit_support(p, &active, cfg)?;
    let mut trace = vec![current.posterior.log_evidence];
    while !active.is_empty() {
        let mut best: Option<(usize, SupportFit)> = None;
        for k in 0..active.len() {
            let mut reduced = active.clone();
            reduced.remove(k);
            let fit = fit_support(p, &reduced, cfg)?;
            let better = match &best {
                Some((_, b)) => fit.posterior.log_evidence > b.posterior.log_evidence,
                None => true,
            };
            if better {
                best = Some((k, fit));
            }
        }
        let (k, fit) = best.expect("nonempty active set has a candidate");
        if fit.posterior.log_evidence <= current.posterior.log_evidence {
            break;
        }
        active.remove(k);
        trace.push(fit.posterior.log_evidence);
        current = fit;
    }
    Ok(current.into_dimension_fit(trace))
}
