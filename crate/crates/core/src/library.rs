//! Polynomial candidate library `Θ(X)` and its variance companion `σ²_Θ`.
//!
//! Each entry of `σ²_Θ` is the variance of the corresponding monomial when
//! every state variable is an independent Gaussian centered on the observed
//! value with the recorded measurement variance. Moments of `Xⁿ` are exact
//! for a Gaussian, and a monomial's variance follows from the independence of
//! its factors.

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::derivatives::DerivativeOperators;
use crate::dynamics::TimeSeries;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// One library column: the monomial `Π x_j^{k_j}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TermDescriptor {
    pub exponents: Vec<u32>,
    pub label: String,
}

impl TermDescriptor {
    pub fn new(exponents: Vec<u32>) -> Self {
        let label = term_label(&exponents);
        TermDescriptor { exponents, label }
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.degree() == 0
    }

    /// Evaluates the monomial at one state.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .fold(1.0, |acc, (&k, &v)| acc * v.powi(k as i32))
    }
}

/// `x<i>^<k>` factors joined by `·`; power 1 is written bare and the constant
/// term is `1`.
pub fn term_label(exponents: &[u32]) -> String {
    let parts: Vec<String> = exponents
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(j, &k)| {
            if k == 1 {
                format!("x{}", j + 1)
            } else {
                format!("x{}^{}", j + 1, k)
            }
        })
        .collect();
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join("·")
    }
}

/// All monomials in `dim` variables up to `max_degree`, graded
/// lexicographically: by total degree, then by descending exponent vector.
/// For two variables and degree 3 this is
/// `1, x1, x2, x1^2, x1·x2, x2^2, x1^3, x1^2·x2, x1·x2^2, x2^3`.
pub fn polynomial_terms(dim: usize, max_degree: u32) -> Vec<TermDescriptor> {
    fn fill(prefix: &mut Vec<u32>, remaining: u32, slots: usize, out: &mut Vec<Vec<u32>>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=remaining).rev() {
            prefix.push(k);
            fill(prefix, remaining - k, slots - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if dim == 0 {
        return out;
    }
    for degree in 0..=max_degree {
        let mut exps = Vec::new();
        fill(&mut Vec::with_capacity(dim), degree, dim, &mut exps);
        out.extend(exps.into_iter().map(TermDescriptor::new));
    }
    out
}

/// Number of monomials of degree ≤ `max_degree` in `dim` variables,
/// `C(max_degree + dim, dim)`.
pub fn library_size(dim: usize, max_degree: u32) -> usize {
    let (n, k) = (max_degree as usize + dim, dim);
    (1..=k).fold(1usize, |acc, i| acc * (n + 1 - i) / i)
}

/// `(i − 1)!!` for even `i` (with `(−1)!! = 1`), zero for odd `i`: the central
/// moments of a standard normal.
fn standard_central_moment(i: u32) -> f64 {
    if i % 2 == 1 {
        return 0.0;
    }
    (1..i).step_by(2).map(|j| j as f64).product()
}

/// `E[Xⁿ]` for `X ~ N(μ, σ²)`:
/// `Σ_{i=0}^{n} C(n, i) μ^{n−i} σ^i (i − 1)!!` over even `i`.
pub fn gaussian_power_moment(mu: f64, sigma: f64, n: u32) -> f64 {
    let mut binom = 1.0;
    let mut total = 0.0;
    for i in 0..=n {
        if i > 0 {
            binom *= (n - i + 1) as f64 / i as f64;
        }
        if i % 2 == 0 {
            total +=
                binom * mu.powi((n - i) as i32) * sigma.powi(i as i32) * standard_central_moment(i);
        }
    }
    total
}

/// `Var[Xⁿ] = E[X²ⁿ] − E[Xⁿ]²`, expanded in powers of `σ` so that the
/// leading `μ²ⁿ` terms cancel analytically:
/// `Σ_{i,l ≥ 1} C(n,i) C(n,l) μ^{2n−i−l} σ^{i+l} (m_{i+l} − m_i m_l)`
/// with `m_k` the standard normal moments.
pub fn power_variance(mu: f64, sigma: f64, n: u32) -> f64 {
    if sigma == 0.0 || n == 0 {
        return 0.0;
    }
    let binom: Vec<f64> = (0..=n)
        .scan(1.0, |b, i| {
            if i > 0 {
                *b *= (n - i + 1) as f64 / i as f64;
            }
            Some(*b)
        })
        .collect();
    let mut total = 0.0;
    for i in 1..=n {
        for l in 1..=n {
            let cov = standard_central_moment(i + l)
                - standard_central_moment(i) * standard_central_moment(l);
            if cov != 0.0 {
                total += binom[i as usize]
                    * binom[l as usize]
                    * mu.powi((2 * n - i - l) as i32)
                    * sigma.powi((i + l) as i32)
                    * cov;
            }
        }
    }
    total.max(0.0)
}

/// Mean and variance of one factor `X_jᵏ` of a monomial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorMoments {
    /// `E[Xᵏ]`
    pub mean: f64,
    /// `Var[Xᵏ]`
    pub var: f64,
}

impl FactorMoments {
    pub fn of(mu: f64, sigma: f64, k: u32) -> Self {
        FactorMoments {
            mean: gaussian_power_moment(mu, sigma, k),
            var: power_variance(mu, sigma, k),
        }
    }

    /// `E[X²ᵏ]`
    pub fn second(&self) -> f64 {
        self.var + self.mean * self.mean
    }

    pub fn variance(&self) -> f64 {
        self.var
    }
}

/// Variance of a product of independent factors,
/// `Π E[Y_j²] − (Π E[Y_j])²`. For two factors this is the familiar
/// `E[X₁²]E[X₂²] − (E[X₁]E[X₂])²`. Accumulated as
/// `V_k = V_{k−1} E[Y_k²] + P_{k−1} Var[Y_k]` with `P_k = Π_{j≤k} E[Y_j]²`,
/// which avoids subtracting the two large products.
pub fn product_variance(factors: &[FactorMoments]) -> f64 {
    let mut var = 0.0;
    let mut mean_sq = 1.0;
    for f in factors {
        var = var * f.second() + mean_sq * f.var;
        mean_sq *= f.mean * f.mean;
    }
    var
}

/// Variance of one monomial at one state.
pub fn monomial_variance(exponents: &[u32], mu: &[f64], sigma: &[f64]) -> f64 {
    let factors: Vec<FactorMoments> = exponents
        .iter()
        .zip(mu.iter().zip(sigma))
        .filter(|(&k, _)| k > 0)
        .map(|(&k, (&m, &s))| FactorMoments::of(m, s, k))
        .collect();
    if factors.is_empty() {
        return 0.0;
    }
    product_variance(&factors)
}

/// Library matrices before and after projection through `L_I`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLibrary {
    pub terms: Vec<TermDescriptor>,
    /// `Θ(X)`, `Ñ × M`.
    pub theta: DMatrix<f64>,
    /// `σ²_Θ`, `Ñ × M`.
    pub var_theta: DMatrix<f64>,
    /// `D = L_I Θ`, `N × M`.
    pub design: DMatrix<f64>,
    /// `L_I² σ²_Θ`, `N × M`.
    pub var_design: DMatrix<f64>,
}

impl FeatureLibrary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.label.clone()).collect()
    }

    /// Column holding the monomial with these exponents.
    pub fn index_of(&self, exponents: &[u32]) -> Option<usize> {
        self.terms.iter().position(|t| t.exponents == exponents)
    }
}

/// Evaluates `Θ(X)` and `σ²_Θ` for a list of terms.
pub fn evaluate_terms(ts: &TimeSeries, terms: &[TermDescriptor]) -> (DMatrix<f64>, DMatrix<f64>) {
    let (rows, dim) = (ts.len(), ts.dim());
    let mut theta = DMatrix::zeros(rows, terms.len());
    let mut var = DMatrix::zeros(rows, terms.len());
    let mut mu = vec![0.0; dim];
    let mut sigma = vec![0.0; dim];
    for i in 0..rows {
        for j in 0..dim {
            mu[j] = ts.x[(i, j)];
            sigma[j] = ts.sigma_x2[(i, j)].sqrt();
        }
        for (c, term) in terms.iter().enumerate() {
            theta[(i, c)] = term.eval(&mu);
            var[(i, c)] = monomial_variance(&term.exponents, &mu, &sigma);
        }
    }
    (theta, var)
}

pub fn build_library(
    ts: &TimeSeries,
    ops: &DerivativeOperators,
    max_degree: u32,
) -> Result<FeatureLibrary> {
    if max_degree < 1 {
        return Err(Error::invalid("library degree must be at least 1"));
    }
    if ops.derivative.ncols() != ts.len() {
        return Err(Error::shape(format!(
            "operators expect {} samples, series has {}",
            ops.derivative.ncols(),
            ts.len()
        )));
    }
    let terms = polynomial_terms(ts.dim(), max_degree);
    let (theta, var_theta) = evaluate_terms(ts, &terms);
    let design = ops.interpolate(&theta)?;
    let var_design = ops.interpolate_variance(&var_theta)?;
    Ok(FeatureLibrary {
        terms,
        theta,
        var_theta,
        design,
        var_design,
    })
}

/// Sampling check of the Gaussian variance approximation for one monomial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SkewnessCheck {
    pub predicted_variance: f64,
    pub empirical_variance: f64,
    pub empirical_skewness: f64,
}

/// Draws `samples` perturbed states around `mu`, pushes them through the
/// monomial, and compares the sample spread with [`monomial_variance`]. A
/// large skewness flags noise levels where the Gaussian approximation of the
/// propagated noise breaks down.
pub fn skewness_check(
    exponents: &[u32],
    mu: &[f64],
    sigma: &[f64],
    samples: usize,
    seed: u64,
) -> Result<SkewnessCheck> {
    if exponents.len() != mu.len() || mu.len() != sigma.len() {
        return Err(Error::shape(
            "exponents, means and deviations must have equal length",
        ));
    }
    if samples < 3 {
        return Err(Error::invalid("need at least three samples"));
    }
    let mut rng = rng_from_seed(seed);
    let normals: Vec<Normal<f64>> = sigma
        .iter()
        .map(|&s| {
            Normal::new(0.0, s)
                .map_err(|_| Error::invalid("deviation must be finite and nonnegative"))
        })
        .collect::<Result<_>>()?;
    let mut x = vec![0.0; mu.len()];
    let values: Vec<f64> = (0..samples)
        .map(|_| {
            for (j, n) in normals.iter().enumerate() {
                x[j] = mu[j] + n.sample(&mut rng);
            }
            exponents
                .iter()
                .zip(&x)
                .fold(1.0, |acc, (&k, &v)| acc * v.powi(k as i32))
        })
        .collect();
    let n = samples as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    Ok(SkewnessCheck {
        predicted_variance: monomial_variance(exponents, mu, sigma),
        empirical_variance: m2 * n / (n - 1.0),
        empirical_skewness: if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 },
    })
}
