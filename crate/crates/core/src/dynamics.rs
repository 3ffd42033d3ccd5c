//! Benchmark ODE systems, a fixed-step RK4 integrator, and measurement noise.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Sampled trajectory `X` (one row per time) with per-entry noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub x: DMatrix<f64>,
    pub sigma_x2: DMatrix<f64>,
    pub seed: Option<u64>,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>, x: DMatrix<f64>, sigma_x2: DMatrix<f64>) -> Result<Self> {
        let ts = TimeSeries {
            t,
            x,
            sigma_x2,
            seed: None,
        };
        ts.validate()?;
        Ok(ts)
    }

    /// A noiseless series (`sigma_x2 = 0`).
    pub fn clean(t: Vec<f64>, x: DMatrix<f64>) -> Result<Self> {
        let zeros = DMatrix::zeros(x.nrows(), x.ncols());
        Self::new(t, x, zeros)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.nrows() != self.t.len() {
            return Err(Error::shape(format!(
                "{} time points but {} state rows",
                self.t.len(),
                self.x.nrows()
            )));
        }
        if self.sigma_x2.shape() != self.x.shape() {
            return Err(Error::shape(
                "noise variance and state matrices differ in shape",
            ));
        }
        if let Some(i) = self.t.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "time grid not strictly increasing at row {}",
                i + 1
            )));
        }
        if self.t.iter().chain(self.x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite time or state entry"));
        }
        if self.sigma_x2.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(
                "noise variance must be finite and nonnegative",
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Mean sampling interval.
    pub fn dt(&self) -> f64 {
        if self.len() < 2 {
            return 0.0;
        }
        (self.t[self.len() - 1] - self.t[0]) / (self.len() - 1) as f64
    }

    /// True when the grid is uniform to a relative tolerance.
    pub fn is_uniform(&self, rel_tol: f64) -> bool {
        let dt = self.dt();
        self.t
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= rel_tol * dt)
    }

    /// Same data with a homoscedastic noise variance `sigma_x²` attached.
    pub fn with_noise_level(mut self, sigma_x: f64) -> Self {
        self.sigma_x2.fill(sigma_x * sigma_x);
        self
    }

    /// Every `stride`-th row, starting with the first.
    pub fn subsample(&self, stride: usize) -> TimeSeries {
        let stride = stride.max(1);
        let rows: Vec<usize> = (0..self.len()).step_by(stride).collect();
        TimeSeries {
            t: rows.iter().map(|&i| self.t[i]).collect(),
            x: crate::linalg::select_rows(&self.x, &rows),
            sigma_x2: crate::linalg::select_rows(&self.sigma_x2, &rows),
            seed: self.seed,
        }
    }
}

/// One monomial `c · Π x_j^{k_j}` of a polynomial vector field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub exponents: Vec<u32>,
    pub coefficient: f64,
}

impl Monomial {
    pub fn new(exponents: &[u32], coefficient: f64) -> Self {
        Monomial {
            exponents: exponents.to_vec(),
            coefficient,
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .fold(self.coefficient, |acc, (&k, &xi)| acc * xi.powi(k as i32))
    }
}

/// Right-hand side written as a sum of monomials per equation. This is also
/// the ground truth used to score recovered models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialField {
    pub equations: Vec<Vec<Monomial>>,
}

impl PolynomialField {
    pub fn dim(&self) -> usize {
        self.equations.len()
    }

    pub fn max_degree(&self) -> u32 {
        self.equations
            .iter()
            .flatten()
            .map(|m| m.exponents.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (o, eq) in out.iter_mut().zip(&self.equations) {
            *o = eq.iter().map(|m| m.eval(x)).sum();
        }
    }
}

pub type RhsFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

#[derive(Clone)]
pub enum Rhs {
    Polynomial(PolynomialField),
    Custom(Arc<RhsFn>),
}

impl fmt::Debug for Rhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rhs::Polynomial(p) => f.debug_tuple("Polynomial").field(p).finish(),
            Rhs::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// An autonomous ODE `ẋ = f(x)` in `dim` dimensions.
#[derive(Debug, Clone)]
pub struct OdeSystem {
    pub name: String,
    pub dim: usize,
    pub parameters: Vec<(String, f64)>,
    pub rhs: Rhs,
}

impl OdeSystem {
    pub fn polynomial(
        name: &str,
        parameters: Vec<(String, f64)>,
        field: PolynomialField,
    ) -> Result<Self> {
        if parameters.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite parameter in `{name}`")));
        }
        let dim = field.dim();
        if field
            .equations
            .iter()
            .flatten()
            .any(|m| m.exponents.len() != dim)
        {
            return Err(Error::shape(
                "monomial exponent length differs from system dimension",
            ));
        }
        Ok(OdeSystem {
            name: name.to_string(),
            dim,
            parameters,
            rhs: Rhs::Polynomial(field),
        })
    }

    pub fn custom(name: &str, dim: usize, rhs: Arc<RhsFn>) -> Self {
        OdeSystem {
            name: name.to_string(),
            dim,
            parameters: Vec::new(),
            rhs: Rhs::Custom(rhs),
        }
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match &self.rhs {
            Rhs::Polynomial(p) => p.eval(x, out),
            Rhs::Custom(f) => f(x, out),
        }
    }

    pub fn rhs_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval(x, &mut out);
        out
    }

    /// Polynomial form, when the system has one.
    pub fn field(&self) -> Option<&PolynomialField> {
        match &self.rhs {
            Rhs::Polynomial(p) => Some(p),
            Rhs::Custom(_) => None,
        }
    }

    pub fn parameter(&self, name: &str) -> Option<f64> {
        self.parameters
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    /// Derivatives `f(x)` for every row of a state matrix.
    pub fn derivatives(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), self.dim);
        let mut row = vec![0.0; self.dim];
        let mut buf = vec![0.0; self.dim];
        for i in 0..x.nrows() {
            for j in 0..self.dim {
                row[j] = x[(i, j)];
            }
            self.eval(&row, &mut buf);
            for j in 0..self.dim {
                out[(i, j)] = buf[j];
            }
        }
        out
    }
}

fn params(pairs: &[(&str, f64)]) -> Vec<(String, f64)> {
    pairs.iter().map(|(n, v)| (n.to_string(), *v)).collect()
}

/// `ẋ1 = x2`, `ẋ2 = b x2 (1 − x1²) − x1`.
pub fn van_der_pol(b: f64) -> OdeSystem {
    let field = PolynomialField {
        equations: vec![
            vec![Monomial::new(&[0, 1], 1.0)],
            vec![
                Monomial::new(&[1, 0], -1.0),
                Monomial::new(&[0, 1], b),
                Monomial::new(&[2, 1], -b),
            ],
        ],
    };
    OdeSystem::polynomial("van_der_pol", params(&[("b", b)]), field).expect("valid builtin")
}

/// `ẋ1 = a x1³ + b x2³`, `ẋ2 = c x1³ + d x2³`.
pub fn cubic_oscillator(a: f64, b: f64, c: f64, d: f64) -> OdeSystem {
    let field = PolynomialField {
        equations: vec![
            vec![Monomial::new(&[3, 0], a), Monomial::new(&[0, 3], b)],
            vec![Monomial::new(&[3, 0], c), Monomial::new(&[0, 3], d)],
        ],
    };
    OdeSystem::polynomial(
        "cubic_oscillator",
        params(&[("a", a), ("b", b), ("c", c), ("d", d)]),
        field,
    )
    .expect("valid builtin")
}

/// `ẋ1 = s(x2 − x1)`, `ẋ2 = r x1 − x2 − x1 x3`, `ẋ3 = x1 x2 − b x3`.
pub fn lorenz(s: f64, r: f64, b: f64) -> OdeSystem {
    let field = PolynomialField {
        equations: vec![
            vec![Monomial::new(&[1, 0, 0], -s), Monomial::new(&[0, 1, 0], s)],
            vec![
                Monomial::new(&[1, 0, 0], r),
                Monomial::new(&[0, 1, 0], -1.0),
                Monomial::new(&[1, 0, 1], -1.0),
            ],
            vec![
                Monomial::new(&[1, 1, 0], 1.0),
                Monomial::new(&[0, 0, 1], -b),
            ],
        ],
    };
    OdeSystem::polynomial("lorenz", params(&[("s", s), ("r", r), ("b", b)]), field)
        .expect("valid builtin")
}

/// `ẋ1 = p1 x1 + p2 x1 x2`, `ẋ2 = p3 x2 + p4 x1 x2` (prey `x1`, predator `x2`).
pub fn lotka_volterra(p1: f64, p2: f64, p3: f64, p4: f64) -> OdeSystem {
    let field = PolynomialField {
        equations: vec![
            vec![Monomial::new(&[1, 0], p1), Monomial::new(&[1, 1], p2)],
            vec![Monomial::new(&[0, 1], p3), Monomial::new(&[1, 1], p4)],
        ],
    };
    OdeSystem::polynomial(
        "lotka_volterra",
        params(&[("p1", p1), ("p2", p2), ("p3", p3), ("p4", p4)]),
        field,
    )
    .expect("valid builtin")
}

/// Names accepted by [`builtin`].
pub const BUILTIN_SYSTEMS: [&str; 4] = [
    "van_der_pol",
    "cubic_oscillator",
    "lorenz",
    "lotka_volterra",
];

/// Looks up a benchmark system by name, applying any parameter overrides on
/// top of the defaults used in the benchmark experiments.
pub fn builtin(name: &str, overrides: &[(String, f64)]) -> Result<OdeSystem> {
    let defaults: &[(&str, f64)] = match name {
        "van_der_pol" => &[("b", 4.0)],
        "cubic_oscillator" => &[("a", -0.1), ("b", -2.0), ("c", 2.0), ("d", -0.1)],
        "lorenz" => &[("s", 10.0), ("r", 28.0), ("b", 8.0 / 3.0)],
        "lotka_volterra" => &[("p1", 0.53), ("p2", -0.026), ("p3", -0.98), ("p4", 0.028)],
        other => return Err(Error::UnknownSystem(other.to_string())),
    };
    let mut values: Vec<(String, f64)> = params(defaults);
    for (key, v) in overrides {
        match values.iter_mut().find(|(n, _)| n == key) {
            Some(slot) => slot.1 = *v,
            None => {
                return Err(Error::invalid(format!(
                    "system `{name}` has no parameter `{key}`"
                )))
            }
        }
    }
    let p = |k: &str| {
        values
            .iter()
            .find(|(n, _)| n == k)
            .map(|(_, v)| *v)
            .unwrap()
    };
    Ok(match name {
        "van_der_pol" => van_der_pol(p("b")),
        "cubic_oscillator" => cubic_oscillator(p("a"), p("b"), p("c"), p("d")),
        "lorenz" => lorenz(p("s"), p("r"), p("b")),
        _ => lotka_volterra(p("p1"), p("p2"), p("p3"), p("p4")),
    })
}

/// Initial condition used with each builtin in the benchmark experiments.
pub fn default_initial_condition(name: &str) -> Result<Vec<f64>> {
    match name {
        "van_der_pol" => Ok(vec![2.0, 0.0]),
        "cubic_oscillator" => Ok(vec![1.0, 0.0]),
        "lorenz" => Ok(vec![-1.0, 6.0, 15.0]),
        "lotka_volterra" => Ok(vec![30.0, 4.0]),
        other => Err(Error::UnknownSystem(other.to_string())),
    }
}

fn rk4_step(system: &OdeSystem, x: &mut [f64], dt: f64, k: &mut [Vec<f64>; 4], tmp: &mut [f64]) {
    let d = x.len();
    system.eval(x, &mut k[0]);
    for j in 0..d {
        tmp[j] = x[j] + 0.5 * dt * k[0][j];
    }
    system.eval(tmp, &mut k[1]);
    for j in 0..d {
        tmp[j] = x[j] + 0.5 * dt * k[1][j];
    }
    system.eval(tmp, &mut k[2]);
    for j in 0..d {
        tmp[j] = x[j] + dt * k[2][j];
    }
    system.eval(tmp, &mut k[3]);
    for j in 0..d {
        x[j] += dt / 6.0 * (k[0][j] + 2.0 * k[1][j] + 2.0 * k[2][j] + k[3][j]);
    }
}

fn check_x0(system: &OdeSystem, x0: &[f64]) -> Result<()> {
    if x0.len() != system.dim {
        return Err(Error::shape(format!(
            "initial state has {} entries, system `{}` has dimension {}",
            x0.len(),
            system.name,
            system.dim
        )));
    }
    Ok(())
}

/// Fixed-step RK4 from `t0` to `t1`; returns `floor((t1 − t0)/dt) + 1` rows.
pub fn integrate(system: &OdeSystem, x0: &[f64], t0: f64, t1: f64, dt: f64) -> Result<TimeSeries> {
    if !(dt > 0.0) || !(t1 > t0) {
        return Err(Error::invalid("integration needs dt > 0 and t1 > t0"));
    }
    let steps = ((t1 - t0) / dt * (1.0 + 1e-12)).floor() as usize;
    integrate_steps(system, x0, t0, dt, steps, 1)
}

/// Integrates with step `sample_dt / substeps` and keeps every `substeps`-th
/// state, yielding `n_samples` rows spaced `sample_dt` apart.
pub fn simulate(
    system: &OdeSystem,
    x0: &[f64],
    t0: f64,
    sample_dt: f64,
    n_samples: usize,
    substeps: usize,
) -> Result<TimeSeries> {
    if !(sample_dt > 0.0) || n_samples == 0 || substeps == 0 {
        return Err(Error::invalid(
            "simulation needs sample_dt > 0, n_samples ≥ 1 and substeps ≥ 1",
        ));
    }
    integrate_steps(
        system,
        x0,
        t0,
        sample_dt / substeps as f64,
        (n_samples - 1) * substeps,
        substeps,
    )
}

fn integrate_steps(
    system: &OdeSystem,
    x0: &[f64],
    t0: f64,
    dt: f64,
    steps: usize,
    keep_every: usize,
) -> Result<TimeSeries> {
    check_x0(system, x0)?;
    let d = system.dim;
    let rows = steps / keep_every + 1;
    let mut out = DMatrix::zeros(rows, d);
    let mut t = Vec::with_capacity(rows);
    let mut x = x0.to_vec();
    let mut k = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut tmp = vec![0.0; d];
    for (j, v) in x.iter().enumerate() {
        out[(0, j)] = *v;
    }
    t.push(t0);
    for step in 1..=steps {
        rk4_step(system, &mut x, dt, &mut k, &mut tmp);
        let time = t0 + step as f64 * dt;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time });
        }
        if step % keep_every == 0 {
            let r = step / keep_every;
            for (j, v) in x.iter().enumerate() {
                out[(r, j)] = *v;
            }
            t.push(time);
        }
    }
    TimeSeries::clean(t, out)
}

/// Adds i.i.d. `N(0, sigma_x²)` noise to every entry and records the
/// variance. The draw order is row-major, so a fixed seed reproduces the
/// output bit for bit.
pub fn add_noise(ts: &TimeSeries, sigma_x: f64, seed: u64) -> Result<TimeSeries> {
    if !(sigma_x >= 0.0) || !sigma_x.is_finite() {
        return Err(Error::invalid("noise level must be finite and nonnegative"));
    }
    let mut out = ts.clone();
    out.seed = Some(seed);
    out.sigma_x2.fill(sigma_x * sigma_x);
    if sigma_x == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma_x).expect("finite positive std");
    let mut rng = rng_from_seed(seed);
    for i in 0..out.x.nrows() {
        for j in 0..out.x.ncols() {
            out.x[(i, j)] += normal.sample(&mut rng);
        }
    }
    Ok(out)
}
