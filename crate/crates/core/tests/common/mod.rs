//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(rng))
}

/// `N(0, C)` log-density with `C = B⁻¹ + D A⁻¹ Dᵀ` built densely.
pub struct DenseGaussian {
    pub chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    pub n: usize,
}

impl DenseGaussian {
    pub fn new(design_active: &DMatrix<f64>, beta: &DVector<f64>, alpha: &DVector<f64>) -> Self {
        let n = beta.len();
        let mut c = DMatrix::from_diagonal(&beta.map(|b| 1.0 / b));
        if design_active.ncols() > 0 {
            let a_inv = DMatrix::from_diagonal(&alpha.map(|a| 1.0 / a));
            c += design_active * a_inv * design_active.transpose();
        }
        DenseGaussian {
            chol: c.cholesky().expect("C is SPD"),
            n,
        }
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * self.chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn log_density(&self, y: &DVector<f64>) -> f64 {
        let quad = y.dot(&self.chol.solve(y));
        -0.5 * (self.n as f64 * (2.0 * std::f64::consts::PI).ln() + self.ln_det() + quad)
    }

    /// Draw from `N(0, C)`.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        self.chol.l() * random_vector(rng, self.n)
    }
}

/// Adaptive Dormand–Prince 5(4) for an autonomous system, stepping exactly
/// onto each requested time.
pub fn dopri45(
    f: &dyn Fn(&[f64], &mut [f64]),
    x0: &[f64],
    times: &[f64],
    rtol: f64,
    atol: f64,
) -> Vec<Vec<f64>> {
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut t = times[0];
    let mut h: f64 = 1e-4;
    let mut out = vec![x.clone()];
    let mut k = vec![vec![0.0; d]; 7];
    let mut tmp = vec![0.0; d];
    for &target in &times[1..] {
        while t < target {
            let step = h.min(target - t);
            f(&x, &mut k[0]);
            for s in 1..7 {
                for j in 0..d {
                    tmp[j] = x[j] + step * (0..s).map(|r| A[s][r] * k[r][j]).sum::<f64>();
                }
                let (_, rest) = k.split_at_mut(s);
                f(&tmp, &mut rest[0]);
            }
            let mut err: f64 = 0.0;
            let mut next = vec![0.0; d];
            for j in 0..d {
                let hi: f64 = (0..7).map(|r| B5[r] * k[r][j]).sum();
                let lo: f64 = (0..7).map(|r| B4[r] * k[r][j]).sum();
                next[j] = x[j] + step * hi;
                let sc = atol + rtol * x[j].abs().max(next[j].abs());
                err = err.max((step * (hi - lo)).abs() / sc);
            }
            if err <= 1.0 {
                t += step;
                x = next;
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 || step == h {
                h = step * factor;
            } else {
                h *= factor;
            }
        }
        out.push(x.clone());
    }
    out
}

/// Central first-derivative weights on offsets `−n..=n` from the moment
/// conditions `Σ w_k k^j = δ_{j1}`, `j = 0..2n`, solved in floating point.
pub fn vandermonde_weights(n: usize) -> Vec<f64> {
    let m = 2 * n + 1;
    let v = DMatrix::from_fn(m, m, |j, c| ((c as f64) - n as f64).powi(j as i32));
    let mut rhs = DVector::zeros(m);
    rhs[1] = 1.0;
    v.lu()
        .solve(&rhs)
        .expect("Vandermonde is nonsingular")
        .iter()
        .copied()
        .collect()
}

/// Sample mean and variance with shifted accumulation.
pub struct Moments {
    shift: f64,
    n: f64,
    s: [f64; 4],
}

impl Moments {
    pub fn new(shift: f64) -> Self {
        Moments {
            shift,
            n: 0.0,
            s: [0.0; 4],
        }
    }

    pub fn push(&mut self, v: f64) {
        let d = v - self.shift;
        let d2 = d * d;
        self.n += 1.0;
        self.s[0] += d;
        self.s[1] += d2;
        self.s[2] += d2 * d;
        self.s[3] += d2 * d2;
    }

    fn raw(&self, k: usize) -> f64 {
        self.s[k - 1] / self.n
    }

    pub fn mean(&self) -> f64 {
        self.shift + self.raw(1)
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let m1 = self.raw(1);
        (self.raw(2) - m1 * m1) * self.n / (self.n - 1.0)
    }

    fn central4(&self) -> f64 {
        let (m1, m2, m3, m4) = (self.raw(1), self.raw(2), self.raw(3), self.raw(4));
        m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4)
    }

    pub fn mean_se(&self) -> f64 {
        (self.variance() / self.n).sqrt()
    }

    /// Large-sample standard error of the sample variance.
    pub fn variance_se(&self) -> f64 {
        let v = self.variance();
        ((self.central4() - v * v) / self.n).max(0.0).sqrt()
    }
}
