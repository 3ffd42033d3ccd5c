//! Gaussian evidence kernels shared by every regression strategy.
//!
//! The model is `y = D w + ε` with `ε ~ N(0, B⁻¹)`, `B = diag(β)`, and prior
//! `w ~ N(0, A⁻¹)`, `A = diag(α)`. The marginal covariance of `y` is
//! `C = B⁻¹ + D A⁻¹ Dᵀ` (`N × N`), but every quantity here is evaluated in the
//! `m × m` space of the active columns through the posterior precision
//! `G = A + Dᵀ B D`:
//!
//! * `ln|C| = −Σ ln β + ln|G| − Σ ln α` (determinant lemma)
//! * `yᵀ C⁻¹ y = (y − Dμ)ᵀ B (y − Dμ) + μᵀ A μ` with `μ = G⁻¹ Dᵀ B y`
//!
//! The second form avoids the cancellation in `yᵀBy − bᵀG⁻¹b` when the fit is
//! nearly exact.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{chol_log_det, select_columns, spd_cholesky, weighted_gram, weighted_rhs};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseProvenance {
    Fixed,
    Iterated,
}

/// Per-point noise precision `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub beta: DVector<f64>,
    pub provenance: NoiseProvenance,
}

impl NoiseModel {
    pub fn new(beta: DVector<f64>, provenance: NoiseProvenance) -> Result<Self> {
        if let Some(i) = beta.iter().position(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::DegenerateNoise { index: i });
        }
        Ok(NoiseModel { beta, provenance })
    }

    /// Precision from a per-point variance.
    pub fn from_variance(var: &DVector<f64>, provenance: NoiseProvenance) -> Result<Self> {
        if let Some(i) = var.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::DegenerateNoise { index: i });
        }
        Self::new(var.map(|v| 1.0 / v), provenance)
    }

    pub fn homoscedastic(n: usize, sigma2: f64) -> Result<Self> {
        Self::from_variance(&DVector::from_element(n, sigma2), NoiseProvenance::Fixed)
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

/// Prior precision `α` for each active term.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    pub alpha: DVector<f64>,
}

impl Prior {
    pub fn new(alpha: DVector<f64>) -> Result<Self> {
        if alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::invalid(
                "prior precision must be positive and finite",
            ));
        }
        Ok(Prior { alpha })
    }

    pub fn uniform(m: usize, alpha: f64) -> Result<Self> {
        Self::new(DVector::from_element(m, alpha))
    }
}

/// Posterior over the active coefficients and the model's log-evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    /// Library columns, in the order of `mean` and `covariance`.
    pub active: Vec<usize>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub log_evidence: f64,
    /// `ln|G| = −ln|Σ|`, kept for the evidence decomposition and entropy.
    pub log_det_precision: f64,
}

impl GaussianPosterior {
    pub fn std(&self) -> DVector<f64> {
        self.covariance.diagonal().map(|v| v.max(0.0).sqrt())
    }

    /// Coefficients scattered into a length-`m_total` vector.
    pub fn full_mean(&self, m_total: usize) -> DVector<f64> {
        let mut w = DVector::zeros(m_total);
        for (k, &c) in self.active.iter().enumerate() {
            w[c] = self.mean[k];
        }
        w
    }
}

fn check_inputs(
    y: &DVector<f64>,
    design: &DMatrix<f64>,
    active: &[usize],
    beta: &DVector<f64>,
    alpha: &DVector<f64>,
) -> Result<()> {
    let n = y.len();
    if design.nrows() != n || beta.len() != n {
        return Err(Error::shape(format!(
            "y has {n} rows, design {} and β {}",
            design.nrows(),
            beta.len()
        )));
    }
    if alpha.len() != active.len() {
        return Err(Error::shape(format!(
            "{} active columns but {} prior precisions",
            active.len(),
            alpha.len()
        )));
    }
    if let Some(&c) = active.iter().find(|&&c| c >= design.ncols()) {
        return Err(Error::shape(format!("active column {c} out of range")));
    }
    if beta.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(Error::invalid(
            "noise precision must be positive and finite",
        ));
    }
    if alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(Error::invalid(
            "prior precision must be positive and finite",
        ));
    }
    Ok(())
}

/// Posterior `Σ = (A + DᵀBD)⁻¹`, `μ = Σ DᵀB y` over the `active` columns of
/// `design`, together with the log-evidence.
///
/// `μ` is the minimizer of `½ Σ β_n (y_n − d_nᵀw)² + ½ Σ α_m w_m²`.
pub fn posterior(
    y: &DVector<f64>,
    design: &DMatrix<f64>,
    active: &[usize],
    beta: &DVector<f64>,
    alpha: &DVector<f64>,
) -> Result<GaussianPosterior> {
    check_inputs(y, design, active, beta, alpha)?;
    let n = y.len() as f64;
    let sum_ln_beta: f64 = beta.iter().map(|b| b.ln()).sum();
    if active.is_empty() {
        let fit: f64 = y.iter().zip(beta.iter()).map(|(yi, b)| b * yi * yi).sum();
        return Ok(GaussianPosterior {
            active: Vec::new(),
            mean: DVector::zeros(0),
            covariance: DMatrix::zeros(0, 0),
            log_evidence: -0.5 * (n * LN_2PI - sum_ln_beta + fit),
            log_det_precision: 0.0,
        });
    }
    let d = select_columns(design, active);
    let mut gram = weighted_gram(&d, beta);
    for (k, a) in alpha.iter().enumerate() {
        gram[(k, k)] += a;
    }
    let chol = spd_cholesky(&gram).ok_or_else(|| Error::Conditioning {
        columns: active.to_vec(),
    })?;
    let mean = chol.solve(&weighted_rhs(&d, beta, y));
    let covariance = chol.inverse();
    let log_det_g = chol_log_det(&chol);
    let resid = y - &d * &mean;
    let fit: f64 = resid.iter().zip(beta.iter()).map(|(r, b)| b * r * r).sum();
    let penalty: f64 = mean.iter().zip(alpha.iter()).map(|(w, a)| a * w * w).sum();
    let sum_ln_alpha: f64 = alpha.iter().map(|a| a.ln()).sum();
    let log_evidence = -0.5 * (n * LN_2PI - sum_ln_beta + log_det_g - sum_ln_alpha + fit + penalty);
    if !log_evidence.is_finite() {
        return Err(Error::Conditioning {
            columns: active.to_vec(),
        });
    }
    Ok(GaussianPosterior {
        active: active.to_vec(),
        mean,
        covariance,
        log_evidence,
        log_det_precision: log_det_g,
    })
}

/// `J = −½ (ln|2πC| + yᵀC⁻¹y)`.
pub fn log_evidence(
    y: &DVector<f64>,
    design: &DMatrix<f64>,
    active: &[usize],
    beta: &DVector<f64>,
    alpha: &DVector<f64>,
) -> Result<f64> {
    posterior(y, design, active, beta, alpha).map(|p| p.log_evidence)
}

/// Evidence change from including a term with sparsity `s` and quality `q`
/// (both measured against `C` without that term) at prior precision `α`:
/// `½ (ln α − ln(α + s) + q²/(α + s))`.
pub fn term_contribution(s: f64, q: f64, alpha: f64) -> f64 {
    0.5 * (-(s / alpha).ln_1p() + q * q / (alpha + s))
}

/// Maximizer `s² / (q² − s)` of [`term_contribution`] over `α`, or `None`
/// when `q² ≤ s` and the term can only lower the evidence.
pub fn optimal_alpha(s: f64, q: f64) -> Option<f64> {
    let theta = q * q - s;
    if theta > 0.0 {
        Some(s * s / theta)
    } else {
        None
    }
}

/// `(s_m, q_m) = (d_mᵀ C₋ₘ⁻¹ d_m, d_mᵀ C₋ₘ⁻¹ y)` where `C₋ₘ` is built from the
/// active set with column `m` removed (if present). Computed directly from a
/// fresh posterior over that reduced set.
pub fn sparsity_quality(
    y: &DVector<f64>,
    design: &DMatrix<f64>,
    active: &[usize],
    beta: &DVector<f64>,
    alpha: &DVector<f64>,
    m: usize,
) -> Result<(f64, f64)> {
    check_inputs(y, design, active, beta, alpha)?;
    let (others, alpha_others): (Vec<usize>, Vec<f64>) = active
        .iter()
        .zip(alpha.iter())
        .filter(|(&c, _)| c != m)
        .map(|(&c, &a)| (c, a))
        .unzip();
    let dm = design.column(m).into_owned();
    let bd = dm.component_mul(beta);
    let s0 = dm.dot(&bd);
    let q0 = y.dot(&bd);
    if others.is_empty() {
        return Ok((s0, q0));
    }
    let d = select_columns(design, &others);
    let mut gram = weighted_gram(&d, beta);
    for (k, a) in alpha_others.iter().enumerate() {
        gram[(k, k)] += a;
    }
    let chol = spd_cholesky(&gram).ok_or(Error::Conditioning {
        columns: others.clone(),
    })?;
    let u = d.transpose() * &bd;
    let v = weighted_rhs(&d, beta, y);
    let su = chol.solve(&u);
    Ok((s0 - u.dot(&su), q0 - v.dot(&su)))
}

/// `(s_m, q_m)` for every library column from one posterior over `active`,
/// using the rank-one downdate `s = αS/(α − S)`, `q = αQ/(α − S)` for columns
/// already in the model.
pub fn all_sparsity_quality(
    y: &DVector<f64>,
    design: &DMatrix<f64>,
    post: &GaussianPosterior,
    beta: &DVector<f64>,
    alpha: &DVector<f64>,
) -> Vec<(f64, f64)> {
    let by = y.component_mul(beta);
    let d_active = select_columns(design, &post.active);
    let bphi = {
        let mut m = d_active.clone();
        for mut col in m.column_iter_mut() {
            col.component_mul_assign(beta);
        }
        m
    };
    let phi_by = d_active.transpose() * &by;
    (0..design.ncols())
        .map(|c| {
            let dc = design.column(c);
            let big_s0 = dc.dot(&dc.component_mul(beta));
            let big_q0 = dc.dot(&by);
            let (big_s, big_q) = if post.active.is_empty() {
                (big_s0, big_q0)
            } else {
                let u = bphi.transpose() * dc;
                let su = &post.covariance * &u;
                (big_s0 - u.dot(&su), big_q0 - phi_by.dot(&su))
            };
            match post.active.iter().position(|&a| a == c) {
                Some(k) => {
                    let a = alpha[k];
                    let denom = a - big_s;
                    (a * big_s / denom, a * big_q / denom)
                }
                None => (big_s, big_q),
            }
        })
        .collect()
}

/// The three additive parts of the log-evidence at the posterior mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvidenceParts {
    /// `ln p(y | μ, β) = −(N/2) ln 2π + ½ Σ ln β − ½ Σ β (y − Dμ)²`
    pub log_likelihood: f64,
    /// `ln p(μ | α) = −(m/2) ln 2π + ½ Σ ln α − ½ Σ α μ²`
    pub log_prior: f64,
    /// `½ ln det(2πΣ)`
    pub log_volume: f64,
}

impl EvidenceParts {
    pub fn total(&self) -> f64 {
        self.log_likelihood + self.log_prior + self.log_volume
    }

    /// Everything except the fit term: evidence minus likelihood.
    pub fn occam(&self) -> f64 {
        self.log_prior + self.log_volume
    }
}

pub fn evidence_decomposition(
    post: &GaussianPosterior,
    y: &DVector<f64>,
    design: &DMatrix<f64>,
    beta: &DVector<f64>,
    alpha: &DVector<f64>,
) -> Result<EvidenceParts> {
    check_inputs(y, design, &post.active, beta, alpha)?;
    let n = y.len() as f64;
    let m = post.active.len() as f64;
    let d = select_columns(design, &post.active);
    let resid = y - &d * &post.mean;
    let fit: f64 = resid.iter().zip(beta.iter()).map(|(r, b)| b * r * r).sum();
    let sum_ln_beta: f64 = beta.iter().map(|b| b.ln()).sum();
    let penalty: f64 = post
        .mean
        .iter()
        .zip(alpha.iter())
        .map(|(w, a)| a * w * w)
        .sum();
    let sum_ln_alpha: f64 = alpha.iter().map(|a| a.ln()).sum();
    Ok(EvidenceParts {
        log_likelihood: -0.5 * n * LN_2PI + 0.5 * sum_ln_beta - 0.5 * fit,
        log_prior: -0.5 * m * LN_2PI + 0.5 * sum_ln_alpha - 0.5 * penalty,
        log_volume: 0.5 * m * LN_2PI - 0.5 * post.log_det_precision,
    })
}

/// Differential entropy of the evidence distribution `N(0, C)`:
/// `H = (N/2)(1 + ln 2π) + ½ ln|C|`.
pub fn entropy(
    design: &DMatrix<f64>,
    active: &[usize],
    beta: &DVector<f64>,
    alpha: &DVector<f64>,
) -> Result<f64> {
    let n = beta.len();
    if n == 0 {
        return Err(Error::invalid("entropy needs at least one data point"));
    }
    let y = DVector::zeros(n);
    let post = posterior(&y, design, active, beta, alpha)?;
    let sum_ln_beta: f64 = beta.iter().map(|b| b.ln()).sum();
    let sum_ln_alpha: f64 = alpha.iter().map(|a| a.ln()).sum();
    let ln_det_c = -sum_ln_beta + post.log_det_precision - sum_ln_alpha;
    Ok(0.5 * n as f64 * (1.0 + LN_2PI) + 0.5 * ln_det_c)
}

/// Entropy gain from appending one data point with features `phi` (active
/// columns only) and noise variance `sigma2`, given the current posterior
/// covariance: `½(1 + ln 2π) + ½ ln(σ² + φᵀΣφ)`.
pub fn entropy_gain(covariance: &DMatrix<f64>, phi: &DVector<f64>, sigma2: f64) -> f64 {
    let leverage = if phi.is_empty() {
        0.0
    } else {
        phi.dot(&(covariance * phi))
    };
    0.5 * (1.0 + LN_2PI) + 0.5 * (sigma2 + leverage).ln()
}
