use nalgebra::DVector;

use super::{DimensionFit, FitConfig, RegressionProblem, SparseBayesNoise};
use crate::error::Result;
use crate::evidence::{
    all_sparsity_quality, optimal_alpha, posterior, term_contribution, GaussianPosterior,
};

const MIN_GAIN: f64 = 1e-6;
const MAX_STEPS: usize = 1000;
const MAX_READDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Action {
    Add(usize, f64),
    Reestimate(usize, f64),
    Delete(usize),
}

struct State {
    active: Vec<usize>,
    alpha: Vec<f64>,
    sigma2: f64,
    post: GaussianPosterior,
}

fn refit(
    p: &RegressionProblem<'_>,
    active: &[usize],
    alpha: &[f64],
    sigma2: f64,
) -> Result<GaussianPosterior> {
    posterior(
        &p.y,
        p.design,
        active,
        &DVector::from_element(p.rows(), 1.0 / sigma2),
        &DVector::from_row_slice(alpha),
    )
}

/// Sequential sparse Bayesian regression with a per-term prior precision:
/// at every step take the single add, delete or re-estimate action with the
/// largest evidence gain, using the closed-form optimum `α* = s²/(q² − s)`.
/// The noise variance is homoscedastic throughout.
///
/// A term that is re-added after deletion three times is taken as a sign of
/// collinear terms trading places; the loop then stops and the best model
/// seen is returned.
pub fn fit_sparsebayes(p: &RegressionProblem<'_>, cfg: &FitConfig) -> Result<DimensionFit> {
    let n = p.rows();
    let m = p.terms();
    let mut sigma2 = match cfg.sparsebayes_noise {
        SparseBayesNoise::Fixed => {
            p.base_var.iter().map(|v| v.max(p.floor)).sum::<f64>() / n as f64
        }
        SparseBayesNoise::Optimize => {
            let mean = p.y.mean();
            (0.1 * p.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).max(p.floor)
        }
    };
    let mut state = State {
        active: Vec::new(),
        alpha: Vec::new(),
        sigma2,
        post: refit(p, &[], &[], sigma2)?,
    };
    let mut best_evidence = state.post.log_evidence;
    let mut best = (
        state.active.clone(),
        state.alpha.clone(),
        sigma2,
        state.post.clone(),
    );
    let mut deleted = vec![false; m];
    let mut readds = vec![0usize; m];
    let mut trace = vec![best_evidence];

    for _ in 0..MAX_STEPS {
        let beta = DVector::from_element(n, 1.0 / state.sigma2);
        let alpha_vec = DVector::from_row_slice(&state.alpha);
        let sq = all_sparsity_quality(&p.y, p.design, &state.post, &beta, &alpha_vec);
        let mut choice: Option<(f64, Action)> = None;
        for (c, &(s, q)) in sq.iter().enumerate() {
            let pos = state.active.iter().position(|&a| a == c);
            let candidate = match (pos, optimal_alpha(s, q)) {
                (Some(k), Some(a_new)) => Some((
                    term_contribution(s, q, a_new) - term_contribution(s, q, state.alpha[k]),
                    Action::Reestimate(k, a_new),
                )),
                (Some(k), None) => {
                    Some((-term_contribution(s, q, state.alpha[k]), Action::Delete(k)))
                }
                (None, Some(a_new)) => {
                    Some((term_contribution(s, q, a_new), Action::Add(c, a_new)))
                }
                (None, None) => None,
            };
            if let Some((gain, action)) = candidate {
                if gain.is_finite() && choice.is_none_or(|(g, _)| gain > g) {
                    choice = Some((gain, action));
                }
            }
        }
        let action = match choice {
            Some((gain, action)) if gain > MIN_GAIN => Some(action),
            _ => None,
        };
        if action.is_none() && cfg.sparsebayes_noise == SparseBayesNoise::Fixed {
            break;
        }
        let mut looping = false;
        match action {
            Some(Action::Add(c, a)) => {
                let at = state.active.partition_point(|&x| x < c);
                state.active.insert(at, c);
                state.alpha.insert(at, a);
                if deleted[c] {
                    readds[c] += 1;
                    looping = readds[c] >= MAX_READDS;
                }
            }
            Some(Action::Reestimate(k, a)) => state.alpha[k] = a,
            Some(Action::Delete(k)) => {
                deleted[state.active[k]] = true;
                state.active.remove(k);
                state.alpha.remove(k);
            }
            None => {}
        }
        state.post = refit(p, &state.active, &state.alpha, state.sigma2)?;
        let mut noise_moved = false;
        if cfg.sparsebayes_noise == SparseBayesNoise::Optimize {
            let resid =
                &p.y - crate::linalg::select_columns(p.design, &state.active) * &state.post.mean;
            let gamma: f64 = (0..state.active.len())
                .map(|k| 1.0 - state.alpha[k] * state.post.covariance[(k, k)])
                .sum();
            let updated = (resid.norm_squared() / (n as f64 - gamma).max(1.0)).max(p.floor);
            noise_moved = ((updated - state.sigma2) / state.sigma2).abs() > MIN_GAIN;
            state.sigma2 = updated;
            state.post = refit(p, &state.active, &state.alpha, state.sigma2)?;
        }
        trace.push(state.post.log_evidence);
        if state.post.log_evidence > best_evidence {
            best_evidence = state.post.log_evidence;
            best = (
                state.active.clone(),
                state.alpha.clone(),
                state.sigma2,
                state.post.clone(),
            );
        }
        if looping || (action.is_none() && !noise_moved) {
            break;
        }
    }
    let (active, _, sigma2_best, post) = best;
    sigma2 = sigma2_best;
    Ok(DimensionFit {
        active,
        mean: post.mean,
        covariance: post.covariance,
        log_evidence: post.log_evidence,
        beta: DVector::from_element(n, 1.0 / sigma2),
        noise_iterations: 0,
        trace,
        warning: None,
    })
}
