//! Model-selection strategies over a [`FeatureLibrary`].
//!
//! Every strategy works one output dimension at a time on a
//! [`RegressionProblem`]: the derivative estimates `y = L_dt x_d`, the
//! projected library `D = L_I Θ`, its variance `L_I² σ²_Θ` and the derivative
//! noise `L_dt² σ_x²`.

mod bsindy;
mod exhaustive;
mod sparsebayes;
mod stls;

pub use bsindy::{fit_bsindy, fit_support, SupportFit};
pub use exhaustive::{fit_exhaustive, rank_by_likelihood, RankedModel, MAX_EXHAUSTIVE_TERMS};
pub use sparsebayes::fit_sparsebayes;
pub use stls::{fit_stls, least_squares};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::derivatives::DerivativeOperators;
use crate::dynamics::OdeSystem;
use crate::error::{Error, Result};
use crate::evidence::{NoiseModel, NoiseProvenance};
use crate::library::{FeatureLibrary, TermDescriptor};
use crate::linalg::median;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Bsindy,
    Stls,
    Sparsebayes,
    Exhaustive,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Bsindy => "bsindy",
            Strategy::Stls => "stls",
            Strategy::Sparsebayes => "sparsebayes",
            Strategy::Exhaustive => "exhaustive",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bsindy" => Ok(Strategy::Bsindy),
            "stls" => Ok(Strategy::Stls),
            "sparsebayes" => Ok(Strategy::Sparsebayes),
            "exhaustive" => Ok(Strategy::Exhaustive),
            other => Err(Error::invalid(format!("unknown strategy `{other}`"))),
        }
    }
}

/// How the SparseBayes baseline treats the noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SparseBayesNoise {
    /// One prescribed `σ²` (the mean propagated derivative noise) for all points.
    #[default]
    Fixed,
    /// A single `σ²` re-estimated alongside the prior precisions.
    Optimize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Prior precision `α` shared by every term (inverse prior variance).
    pub alpha: f64,
    /// Relative change in `w` below which the noise iteration stops.
    pub w_change_tol: f64,
    pub max_noise_iters: usize,
    /// STLS threshold `λ`.
    pub stls_lambda: f64,
    pub strategy: Strategy,
    pub sparsebayes_noise: SparseBayesNoise,
    /// Per-point variance floor relative to `median(y²)`.
    pub variance_floor_rel: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            alpha: 1e-2,
            w_change_tol: 1e-4,
            max_noise_iters: 20,
            stls_lambda: 0.1,
            strategy: Strategy::Bsindy,
            sparsebayes_noise: SparseBayesNoise::Fixed,
            variance_floor_rel: 1e-12,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid("alpha must be positive and finite"));
        }
        if !(self.w_change_tol.is_finite() && self.w_change_tol > 0.0) {
            return Err(Error::invalid("w_change_tol must be positive"));
        }
        if self.max_noise_iters == 0 {
            return Err(Error::invalid("max_noise_iters must be at least 1"));
        }
        if !(self.stls_lambda.is_finite() && self.stls_lambda >= 0.0) {
            return Err(Error::invalid("stls_lambda must be nonnegative"));
        }
        if !(self.variance_floor_rel.is_finite() && self.variance_floor_rel >= 0.0) {
            return Err(Error::invalid("variance_floor_rel must be nonnegative"));
        }
        Ok(())
    }
}

/// One output dimension's regression inputs.
#[derive(Debug, Clone)]
pub struct RegressionProblem<'a> {
    pub y: DVector<f64>,
    pub design: &'a DMatrix<f64>,
    pub var_design: &'a DMatrix<f64>,
    /// `L_dt² σ_x²` for this dimension.
    pub base_var: DVector<f64>,
    /// Lower bound on the total per-point variance.
    pub floor: f64,
}

impl<'a> RegressionProblem<'a> {
    pub fn new(
        y: DVector<f64>,
        design: &'a DMatrix<f64>,
        var_design: &'a DMatrix<f64>,
        base_var: DVector<f64>,
        floor_rel: f64,
    ) -> Result<Self> {
        let n = y.len();
        if design.nrows() != n || var_design.shape() != design.shape() || base_var.len() != n {
            return Err(Error::shape(format!(
                "y has {n} rows, design {:?}, variance design {:?}, base variance {}",
                design.shape(),
                var_design.shape(),
                base_var.len()
            )));
        }
        if design.ncols() == 0 {
            return Err(Error::invalid("library has no terms"));
        }
        if y.iter().chain(design.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite regression input"));
        }
        let floor = variance_floor(y.iter().copied(), floor_rel);
        Ok(RegressionProblem {
            y,
            design,
            var_design,
            base_var,
            floor,
        })
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn terms(&self) -> usize {
        self.design.ncols()
    }

    /// Noise model with `w = 0`: the derivative noise alone, floored.
    pub fn base_noise(&self) -> Result<NoiseModel> {
        noise_update(
            &DVector::zeros(0),
            &DMatrix::zeros(self.rows(), 0),
            &self.base_var,
            self.floor,
        )
    }
}

/// `floor_rel · median(y²)`, or `floor_rel · max(mean(y²), 1)` when the
/// median vanishes.
pub fn variance_floor(y: impl Iterator<Item = f64>, floor_rel: f64) -> f64 {
    let sq: Vec<f64> = y.map(|v| v * v).collect();
    let floor = floor_rel * median(&sq);
    if floor > 0.0 {
        floor
    } else {
        floor_rel * (sq.iter().sum::<f64>() / sq.len().max(1) as f64).max(1.0)
    }
}

/// Per-dimension problems for a trajectory and its library.
pub fn build_problems<'a>(
    x: &DMatrix<f64>,
    sigma_x2: &DMatrix<f64>,
    ops: &DerivativeOperators,
    lib: &'a FeatureLibrary,
    floor_rel: f64,
) -> Result<Vec<RegressionProblem<'a>>> {
    let y_all = ops.differentiate(x)?;
    let var_all = ops.derivative_variance(sigma_x2)?;
    (0..x.ncols())
        .map(|d| {
            RegressionProblem::new(
                y_all.column(d).into_owned(),
                &lib.design,
                &lib.var_design,
                var_all.column(d).into_owned(),
                floor_rel,
            )
        })
        .collect()
}

/// `β = 1 / max(L_I² σ²_Θ w² + L_dt² σ_x², floor)` over the active columns.
pub fn noise_update(
    w_active: &DVector<f64>,
    var_design_active: &DMatrix<f64>,
    base_var: &DVector<f64>,
    floor: f64,
) -> Result<NoiseModel> {
    if var_design_active.ncols() != w_active.len() || var_design_active.nrows() != base_var.len() {
        return Err(Error::shape(format!(
            "{} coefficients, variance design {:?}, base variance {}",
            w_active.len(),
            var_design_active.shape(),
            base_var.len()
        )));
    }
    let w2 = w_active.map(|w| w * w);
    let mut var = base_var.clone();
    if !w2.is_empty() {
        var += var_design_active * w2;
    }
    if let Some(i) = var
        .iter()
        .position(|v| !(v.is_finite() && v.max(floor) > 0.0))
    {
        return Err(Error::DegenerateNoise { index: i });
    }
    NoiseModel::from_variance(&var.map(|v| v.max(floor)), NoiseProvenance::Iterated)
}

/// Fit of one output dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionFit {
    /// Selected library columns, ascending.
    pub active: Vec<usize>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub log_evidence: f64,
    /// Final per-point noise precision.
    pub beta: DVector<f64>,
    pub noise_iterations: usize,
    /// Evidence after each accepted step, starting from the initial model.
    pub trace: Vec<f64>,
    pub warning: Option<String>,
}

impl DimensionFit {
    pub fn coefficients(&self, m_total: usize) -> DVector<f64> {
        let mut w = DVector::zeros(m_total);
        for (k, &c) in self.active.iter().enumerate() {
            w[c] = self.mean[k];
        }
        w
    }

    pub fn std(&self) -> DVector<f64> {
        self.covariance.diagonal().map(|v| v.max(0.0).sqrt())
    }

    fn empty_warning(mut self) -> Self {
        if self.active.is_empty() && self.warning.is_none() {
            self.warning = Some("no term retained".into());
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub strategy: Strategy,
    pub terms: Vec<TermDescriptor>,
    pub dims: Vec<DimensionFit>,
    pub mce: Option<f64>,
}

impl FittedModel {
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// `M × D` coefficient matrix with zeros outside each support.
    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let m = self.n_terms();
        let mut w = DMatrix::zeros(m, self.dims.len());
        for (d, fit) in self.dims.iter().enumerate() {
            w.set_column(d, &fit.coefficients(m));
        }
        w
    }

    pub fn supports(&self) -> Vec<Vec<usize>> {
        self.dims.iter().map(|d| d.active.clone()).collect()
    }

    pub fn log_evidence(&self) -> f64 {
        self.dims.iter().map(|d| d.log_evidence).sum()
    }

    pub fn max_noise_iterations(&self) -> usize {
        self.dims
            .iter()
            .map(|d| d.noise_iterations)
            .max()
            .unwrap_or(0)
    }

    /// Sets `mce` against a true `M × D` coefficient matrix.
    pub fn with_truth(mut self, truth: &DMatrix<f64>) -> Self {
        self.mce = Some(mce_matrix(&self.coefficient_matrix(), truth));
        self
    }

    pub fn equation(&self, d: usize) -> String {
        let fit = &self.dims[d];
        let terms: Vec<(f64, &str)> = fit
            .active
            .iter()
            .zip(fit.mean.iter())
            .map(|(&c, &w)| (w, self.terms[c].label.as_str()))
            .collect();
        format_equation(d, &terms)
    }

    pub fn equations(&self) -> Vec<String> {
        (0..self.dims.len()).map(|d| self.equation(d)).collect()
    }

    pub fn report(&self) -> ModelReport {
        ModelReport {
            strategy: self.strategy,
            terms: self.terms.iter().map(|t| t.label.clone()).collect(),
            mce: self.mce,
            log_evidence: self.log_evidence(),
            dimensions: self
                .dims
                .iter()
                .enumerate()
                .map(|(d, fit)| {
                    let std = fit.std();
                    DimensionReport {
                        state: format!("x{}", d + 1),
                        equation: self.equation(d),
                        terms: fit
                            .active
                            .iter()
                            .enumerate()
                            .map(|(k, &c)| TermEstimate {
                                index: c,
                                label: self.terms[c].label.clone(),
                                mean: fit.mean[k],
                                std: std[k],
                            })
                            .collect(),
                        log_evidence: fit.log_evidence,
                        noise_iterations: fit.noise_iterations,
                        beta: BetaSummary::of(&fit.beta),
                        warning: fit.warning.clone(),
                    }
                })
                .collect(),
        }
    }
}

/// Serializable summary of a [`FittedModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub strategy: Strategy,
    pub terms: Vec<String>,
    pub mce: Option<f64>,
    pub log_evidence: f64,
    pub dimensions: Vec<DimensionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub state: String,
    pub equation: String,
    pub terms: Vec<TermEstimate>,
    pub log_evidence: f64,
    pub noise_iterations: usize,
    pub beta: BetaSummary,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEstimate {
    pub index: usize,
    pub label: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSummary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl BetaSummary {
    pub fn of(beta: &DVector<f64>) -> Self {
        let v: Vec<f64> = beta.iter().copied().collect();
        BetaSummary {
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            median: median(&v),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Two significant digits, with a Unicode minus.
pub fn format_coefficient(v: f64) -> String {
    let a: f64 = format!("{:.1e}", v.abs()).parse().unwrap_or(v.abs());
    let decimals = if a > 0.0 {
        (1 - a.log10().floor() as i32).max(0) as usize
    } else {
        0
    };
    let s = format!("{a:.decimals$}");
    if v < 0.0 {
        format!("−{s}")
    } else {
        s
    }
}

/// `dx<d+1>/dt = c₁·term₁ + c₂·term₂ …`; the constant term prints as a bare
/// coefficient.
pub fn format_equation(d: usize, terms: &[(f64, &str)]) -> String {
    let mut out = format!("dx{}/dt = ", d + 1);
    if terms.is_empty() {
        out.push('0');
        return out;
    }
    for (k, &(w, label)) in terms.iter().enumerate() {
        let mag = format_coefficient(w.abs());
        let body = if label == "1" {
            mag
        } else {
            format!("{mag}·{label}")
        };
        match (k, w < 0.0) {
            (0, false) => out.push_str(&body),
            (0, true) => {
                out.push('−');
                out.push_str(&body);
            }
            (_, false) => {
                out.push_str(" + ");
                out.push_str(&body);
            }
            (_, true) => {
                out.push_str(" − ");
                out.push_str(&body);
            }
        }
    }
    out
}

/// `‖ŵ − w‖₂ / ‖w‖₂` with `w` the true coefficients.
pub fn mce(w_hat: &DVector<f64>, w_true: &DVector<f64>) -> f64 {
    (w_hat - w_true).norm() / w_true.norm()
}

/// [`mce`] over the whole `M × D` coefficient matrix.
pub fn mce_matrix(w_hat: &DMatrix<f64>, w_true: &DMatrix<f64>) -> f64 {
    (w_hat - w_true).norm() / w_true.norm()
}

/// True `M × D` coefficients of a polynomial system in the library's term
/// order, or `None` when the system is not polynomial or has a term outside
/// the library.
pub fn true_coefficients(system: &OdeSystem, terms: &[TermDescriptor]) -> Option<DMatrix<f64>> {
    let field = system.field()?;
    let mut w = DMatrix::zeros(terms.len(), field.dim());
    for (d, eq) in field.equations.iter().enumerate() {
        for mono in eq {
            let c = terms.iter().position(|t| t.exponents == mono.exponents)?;
            w[(c, d)] += mono.coefficient;
        }
    }
    Some(w)
}

/// Support of each column of a coefficient matrix.
pub fn support_of(w: &DMatrix<f64>) -> Vec<Vec<usize>> {
    w.column_iter()
        .map(|col| {
            col.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, _)| i)
                .collect()
        })
        .collect()
}

/// Exact support on every dimension and MCE below 0.25.
pub fn is_success(model: &FittedModel, truth: &DMatrix<f64>) -> bool {
    model.supports() == support_of(truth)
        && mce_matrix(&model.coefficient_matrix(), truth) < SUCCESS_MCE
}

pub const SUCCESS_MCE: f64 = 0.25;

/// Runs the configured strategy on every problem.
pub fn fit_problems(
    problems: &[RegressionProblem<'_>],
    terms: &[TermDescriptor],
    cfg: &FitConfig,
) -> Result<FittedModel> {
    cfg.validate()?;
    let dims = problems
        .iter()
        .map(|p| {
            let fit = match cfg.strategy {
                Strategy::Bsindy => fit_bsindy(p, cfg)?,
                Strategy::Stls => fit_stls(p, cfg)?,
                Strategy::Sparsebayes => fit_sparsebayes(p, cfg)?,
                Strategy::Exhaustive => {
                    let ranked = fit_exhaustive(p, cfg)?;
                    let best = &ranked[0];
                    let support = fit_support(p, &best.support, cfg)?;
                    support.into_dimension_fit(vec![best.log_evidence])
                }
            };
            Ok(fit.empty_warning())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FittedModel {
        strategy: cfg.strategy,
        terms: terms.to_vec(),
        dims,
        mce: None,
    })
}

/// Differentiates `x`, builds the per-dimension problems and fits them.
pub fn fit_library(
    x: &DMatrix<f64>,
    sigma_x2: &DMatrix<f64>,
    ops: &DerivativeOperators,
    lib: &FeatureLibrary,
    cfg: &FitConfig,
) -> Result<FittedModel> {
    let problems = build_problems(x, sigma_x2, ops, lib, cfg.variance_floor_rel)?;
    fit_problems(&problems, &lib.terms, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_formatting() {
        assert_eq!(format_coefficient(0.5338), "0.53");
        assert_eq!(format_coefficient(-0.02631), "−0.026");
        assert_eq!(format_coefficient(28.0), "28");
        assert_eq!(format_coefficient(8.0 / 3.0), "2.7");
        assert_eq!(format_coefficient(0.0), "0");
        assert_eq!(format_coefficient(9.9996), "10");
        assert_eq!(format_coefficient(-0.99999), "−1.0");
        assert_eq!(format_coefficient(123.4), "120");
    }

    #[test]
    fn equation_formatting() {
        let eq = format_equation(1, &[(-0.9838, "x2"), (0.0276, "x1·x2")]);
        assert_eq!(eq, "dx2/dt = −0.98·x2 + 0.028·x1·x2");
        assert_eq!(
            format_equation(0, &[(1.5, "1"), (-2.0, "x1^3")]),
            "dx1/dt = 1.5 − 2.0·x1^3"
        );
        assert_eq!(format_equation(2, &[]), "dx3/dt = 0");
    }

    #[test]
    fn mce_reference_points() {
        let w = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(mce(&w, &w), 0.0);
        assert!((mce(&DVector::zeros(3), &w) - 1.0).abs() < 1e-15);
        assert!((mce(&(&w * 1.25), &w) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn noise_update_at_zero_weights() {
        let base = DVector::from_vec(vec![0.5, 2.0, 4.0]);
        let var_d = DMatrix::from_element(3, 2, 7.0);
        let noise = noise_update(&DVector::zeros(2), &var_d, &base, 0.0).unwrap();
        assert_eq!(noise.beta, DVector::from_vec(vec![2.0, 0.5, 0.25]));
        let noise = noise_update(&DVector::zeros(2), &var_d, &DVector::zeros(3), 1e-6).unwrap();
        assert!(noise.beta.iter().all(|&b| b == 1e6));
        assert!(matches!(
            noise_update(&DVector::zeros(2), &var_d, &DVector::zeros(3), 0.0),
            Err(Error::DegenerateNoise { index: 0 })
        ));
    }

    #[test]
    fn noise_update_adds_library_variance() {
        let base = DVector::from_vec(vec![1.0, 1.0]);
        let var_d = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 2.0]);
        let w = DVector::from_vec(vec![2.0, -1.0]);
        let noise = noise_update(&w, &var_d, &base, 0.0).unwrap();
        assert!((noise.beta[0] - 1.0 / 5.0).abs() < 1e-15);
        assert!((noise.beta[1] - 1.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg: FitConfig = serde_json::from_str(r#"{"alpha": 0.04}"#).unwrap();
        assert_eq!(cfg.w_change_tol, 1e-4);
        assert_eq!(cfg.max_noise_iters, 20);
        assert!(serde_json::from_str::<FitConfig>(r#"{"alhpa": 1}"#).is_err());
        let bad = FitConfig {
            alpha: -1.0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
