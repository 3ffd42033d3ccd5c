//! Banded derivative and interpolation operators.
//!
//! Both the central finite-difference scheme and the weak (Galerkin) scheme
//! reduce to a pair of stencils `(a, b)` of width `2n + 1`. Sliding them along
//! the sample grid gives the `N × Ñ` operators `L_dt` and `L_I`, with
//! `N = Ñ − 2n`, such that `L_dt X ≈ L_I Ẋ`.

use nalgebra::DMatrix;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported half-width; keeps the exact rational weights in range.
pub const MAX_HALF_WIDTH: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    CentralFd,
    WeakForm { power: u32 },
}

/// Derivative row `a` and interpolation row `b`, both of length `2n + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub derivative: Vec<f64>,
    pub interpolation: Vec<f64>,
    pub half_width: usize,
    pub scheme: Scheme,
}

/// How to build a stencil for a given sampling interval. This is the form
/// used in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum DerivativeSpec {
    /// Central difference of the given (even) order, using `order + 1` points.
    FiniteDifference { order: usize },
    /// Weak form on `points` samples (odd) against `(t² − 1)^power`.
    WeakForm { points: usize, power: u32 },
}

impl DerivativeSpec {
    pub fn stencil(&self, dt: f64) -> Result<Stencil> {
        match *self {
            DerivativeSpec::FiniteDifference { order } => {
                if order == 0 || order % 2 == 1 {
                    return Err(Error::invalid(format!(
                        "central difference order must be even and positive, got {order}"
                    )));
                }
                central_difference_stencil(order / 2, dt)
            }
            DerivativeSpec::WeakForm { points, power } => {
                if points % 2 == 0 {
                    return Err(Error::invalid(format!(
                        "weak-form window needs an odd number of points, got {points}"
                    )));
                }
                weak_form_stencil(points / 2, dt, power)
            }
        }
    }

    pub fn half_width(&self) -> usize {
        match *self {
            DerivativeSpec::FiniteDifference { order } => order / 2,
            DerivativeSpec::WeakForm { points, .. } => points / 2,
        }
    }
}

/// Exact first-derivative weights of the order-`2n` central difference on a
/// unit grid, as reduced fractions. Index `k + n` holds the weight of offset `k`.
///
/// `â_k = (−1)^{k+1} (n!)² / (k (n−k)! (n+k)!)` for `k ≥ 1`, `â_{−k} = −â_k`.
pub fn central_difference_ratios(n: usize) -> Vec<Ratio<i128>> {
    let fact = |m: usize| (1..=m as i128).product::<i128>();
    let nf = fact(n);
    let mut w = vec![Ratio::from_integer(0); 2 * n + 1];
    for k in 1..=n {
        let sign = if k % 2 == 1 { 1 } else { -1 };
        let r = Ratio::new(sign * nf * nf, k as i128 * fact(n - k) * fact(n + k));
        w[n + k] = r;
        w[n - k] = -r;
    }
    w
}

/// [`central_difference_ratios`] rounded to `f64` by a single division, so
/// small fractions such as `2/3` come out correctly rounded.
pub fn central_difference_weights(n: usize) -> Vec<f64> {
    central_difference_ratios(n)
        .into_iter()
        .map(|r| *r.numer() as f64 / *r.denom() as f64)
        .collect()
}

pub fn central_difference_stencil(n: usize, dt: f64) -> Result<Stencil> {
    if n == 0 || n > MAX_HALF_WIDTH {
        return Err(Error::invalid(format!(
            "half-width must be in 1..={MAX_HALF_WIDTH}, got {n}"
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("sampling interval must be positive"));
    }
    let derivative = central_difference_weights(n)
        .into_iter()
        .map(|a| a / dt)
        .collect();
    let mut interpolation = vec![0.0; 2 * n + 1];
    interpolation[n] = 1.0;
    Ok(Stencil {
        derivative,
        interpolation,
        half_width: n,
        scheme: Scheme::CentralFd,
    })
}

/// Weak-form stencil against the test function `φ(s) = (s² − 1)^p` on the
/// window `s ∈ [−1, 1]` spanned by `2n + 1` equispaced samples.
///
/// With trapezoid weights `w_i` (in time units), `b_i = w_i φ_i` and
/// `a_i = −w_i φ̇_i`, where `φ̇` carries the chain-rule factor `1/(n dt)`.
/// `b` is scaled to unit sum and `a` to unit response to a unit slope, so the
/// rows reproduce constants and linear signals exactly.
pub fn weak_form_stencil(n: usize, dt: f64, p: u32) -> Result<Stencil> {
    if !(2..=MAX_HALF_WIDTH).contains(&n) {
        return Err(Error::invalid(format!(
            "weak-form half-width must be in 2..={MAX_HALF_WIDTH}, got {n}"
        )));
    }
    if p < 1 {
        return Err(Error::invalid(
            "test-function power must be at least 1 so φ vanishes at the window ends",
        ));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("sampling interval must be positive"));
    }
    let half = n as f64 * dt;
    let width = 2 * n + 1;
    let mut a = vec![0.0; width];
    let mut b = vec![0.0; width];
    for (idx, (ai, bi)) in a.iter_mut().zip(b.iter_mut()).enumerate() {
        let s = (idx as f64 - n as f64) / n as f64;
        let base = s * s - 1.0;
        let phi = base.powi(p as i32);
        let dphi = 2.0 * p as f64 * s * base.powi(p as i32 - 1) / half;
        let w = if idx == 0 || idx == width - 1 {
            0.5 * dt
        } else {
            dt
        };
        *bi = w * phi;
        *ai = -w * dphi;
    }
    let b_sum: f64 = b.iter().sum();
    let slope: f64 = a
        .iter()
        .enumerate()
        .map(|(idx, ai)| ai * (idx as f64 - n as f64) * dt)
        .sum();
    b.iter_mut().for_each(|v| *v /= b_sum);
    a.iter_mut().for_each(|v| *v /= slope);
    Ok(Stencil {
        derivative: a,
        interpolation: b,
        half_width: n,
        scheme: Scheme::WeakForm { power: p },
    })
}

/// Toeplitz band: row `i` holds `coeffs` in columns `i ..= i + 2n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedOperator {
    coeffs: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl BandedOperator {
    pub fn new(coeffs: Vec<f64>, cols: usize) -> Result<Self> {
        if coeffs.len().is_multiple_of(2) {
            return Err(Error::invalid("stencil length must be odd"));
        }
        let n = coeffs.len() / 2;
        if cols <= 2 * n {
            return Err(Error::InsufficientData {
                samples: cols,
                half_width: n,
            });
        }
        Ok(BandedOperator {
            rows: cols - 2 * n,
            cols,
            coeffs,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Elementwise square of the operator.
    pub fn squared(&self) -> BandedOperator {
        BandedOperator {
            coeffs: self.coeffs.iter().map(|c| c * c).collect(),
            ..*self
        }
    }

    /// `L · M` for an `Ñ × k` matrix `M`.
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.cols {
            return Err(Error::shape(format!(
                "operator has {} columns, matrix has {} rows",
                self.cols,
                m.nrows()
            )));
        }
        let mut out = DMatrix::zeros(self.rows, m.ncols());
        for j in 0..m.ncols() {
            let col = m.column(j);
            for i in 0..self.rows {
                out[(i, j)] = self
                    .coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * col[i + k])
                    .sum();
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (k, c) in self.coeffs.iter().enumerate() {
                d[(i, i + k)] = *c;
            }
        }
        d
    }
}

/// The operator pair plus their elementwise squares.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeOperators {
    pub derivative: BandedOperator,
    pub interpolation: BandedOperator,
    pub derivative_sq: BandedOperator,
    pub interpolation_sq: BandedOperator,
    /// Rows dropped at each end of the series.
    pub trim: usize,
    pub scheme: Scheme,
}

pub fn build_operators(stencil: &Stencil, n_samples: usize) -> Result<DerivativeOperators> {
    let derivative = BandedOperator::new(stencil.derivative.clone(), n_samples)?;
    let interpolation = BandedOperator::new(stencil.interpolation.clone(), n_samples)?;
    Ok(DerivativeOperators {
        derivative_sq: derivative.squared(),
        interpolation_sq: interpolation.squared(),
        derivative,
        interpolation,
        trim: stencil.half_width,
        scheme: stencil.scheme,
    })
}

impl DerivativeOperators {
    /// Number of output rows `N`.
    pub fn rows(&self) -> usize {
        self.derivative.nrows()
    }

    /// `y = L_dt X`.
    pub fn differentiate(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.derivative.apply(x)
    }

    /// `L_I M`.
    pub fn interpolate(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.interpolation.apply(m)
    }

    /// `L_dt² σ_x²`, the derivative's share of the regression noise variance.
    pub fn derivative_variance(&self, sigma_x2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.derivative_sq.apply(sigma_x2)
    }

    /// `L_I² V`.
    pub fn interpolate_variance(&self, var: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.interpolation_sq.apply(var)
    }

    /// Indices into the original series of the samples each output row is
    /// centered on.
    pub fn centers(&self) -> std::ops::Range<usize> {
        self.trim..self.trim + self.rows()
    }
}
