//! Functionally generated portfolios.
//!
//! A positive function `S` on the simplex generates weights
//! `π_i = (D_i log S(μ) + 1 − Σ_j μ_j D_j log S(μ)) μ_i` and a drift process
//! `dΘ = −(1 / 2S(μ)) Σ_ij D_ij S(μ) μ_i μ_j τ_ij dt`. Derivatives come from
//! the generator when it provides them, otherwise from central differences
//! taken along directions tangent to the simplex.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::market::{CovarianceEstimate, WeightVector};

/// Step for first-derivative finite differences.
pub const GRADIENT_STEP: f64 = 1e-6;
/// Step for second-derivative finite differences.
pub const HESSIAN_STEP: f64 = 1e-4;

/// A positive C² function on the unit simplex.
///
/// Implementations must be reentrant; they may be evaluated from several
/// threads at once.
pub trait GeneratingFunction: Send + Sync {
    fn eval(&self, x: &[f64]) -> f64;

    /// Analytic `D_i log S(x)`, if known.
    fn grad_log(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Analytic `D_ij S(x)`, if known.
    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

/// Which derivative route to use.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DerivativeMode {
    /// Analytic derivatives when provided, finite differences otherwise.
    #[default]
    Auto,
    /// Always use finite differences.
    FiniteDifference,
}

/// Generator backed by a closure; derivatives by finite differences.
pub struct FnGenerator<F>(pub F);

impl<F> GeneratingFunction for FnGenerator<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// `S(x) = 1`; generates the market portfolio.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantGenerator;

impl GeneratingFunction for ConstantGenerator {
    fn eval(&self, _x: &[f64]) -> f64 {
        1.0
    }

    fn grad_log(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; x.len()])
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(x.len(), x.len()))
    }
}

/// `S(x) = (x_1 ⋯ x_n)^{1/n}`; generates equal weights.
#[derive(Debug, Clone, Copy, Default)]
pub struct GeometricMeanGenerator;

impl GeneratingFunction for GeometricMeanGenerator {
    fn eval(&self, x: &[f64]) -> f64 {
        let n = x.len() as f64;
        (x.iter().map(|v| v.ln()).sum::<f64>() / n).exp()
    }

    fn grad_log(&self, x: &[f64]) -> Option<Vec<f64>> {
        let n = x.len() as f64;
        Some(x.iter().map(|v| 1.0 / (n * v)).collect())
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let n = x.len();
        let nf = n as f64;
        let s = self.eval(x);
        Some(DMatrix::from_fn(n, n, |i, j| {
            let mut v = 1.0 / (nf * nf * x[i] * x[j]);
            if i == j {
                v -= 1.0 / (nf * x[i] * x[i]);
            }
            s * v
        }))
    }
}

/// `S(x) = x_i x_j / (x_i + x_j)`; generates the swap portfolio on `{i, j}`.
#[derive(Debug, Clone, Copy)]
pub struct SwapGenerator {
    pub i: usize,
    pub j: usize,
}

impl SwapGenerator {
    pub fn new(i: usize, j: usize) -> Result<Self> {
        if i == j {
            return Err(Error::invalid("swap generator needs two distinct assets"));
        }
        Ok(SwapGenerator { i, j })
    }
}

impl GeneratingFunction for SwapGenerator {
    fn eval(&self, x: &[f64]) -> f64 {
        let (a, b) = (x[self.i], x[self.j]);
        a * b / (a + b)
    }

    fn grad_log(&self, x: &[f64]) -> Option<Vec<f64>> {
        let (a, b) = (x[self.i], x[self.j]);
        let mut g = vec![0.0; x.len()];
        g[self.i] = b / (a * (a + b));
        g[self.j] = a / (b * (a + b));
        Some(g)
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let (a, b) = (x[self.i], x[self.j]);
        let s3 = (a + b).powi(3);
        let mut h = DMatrix::zeros(x.len(), x.len());
        h[(self.i, self.i)] = -2.0 * b * b / s3;
        h[(self.j, self.j)] = -2.0 * a * a / s3;
        h[(self.i, self.j)] = 2.0 * a * b / s3;
        h[(self.j, self.i)] = 2.0 * a * b / s3;
        Some(h)
    }
}

fn eval_positive(s: &dyn GeneratingFunction, x: &[f64]) -> Result<f64> {
    let v = s.eval(x);
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Numeric(format!(
            "generating function must be positive, got {v}"
        )));
    }
    Ok(v)
}

/// Step size that keeps every perturbed point inside the simplex.
fn safe_step(x: &[f64], h: f64, reach: f64) -> f64 {
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    h.min(0.25 * min / reach)
}

/// Moves `x` along `Σ_k c_k (e_k − 1/n)`.
fn tangent_shift(x: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let n = x.len() as f64;
    let total: f64 = moves.iter().map(|(_, c)| c).sum();
    let mut y: Vec<f64> = x.iter().map(|v| v - total / n).collect();
    for &(k, c) in moves {
        y[k] += c;
    }
    y
}

/// Tangent-projected gradient of `log S` by central differences.
pub fn fd_grad_log(s: &dyn GeneratingFunction, x: &[f64]) -> Result<Vec<f64>> {
    let h = safe_step(x, GRADIENT_STEP, 1.0);
    (0..x.len())
        .map(|k| {
            let up = eval_positive(s, &tangent_shift(x, &[(k, h)]))?.ln();
            let dn = eval_positive(s, &tangent_shift(x, &[(k, -h)]))?.ln();
            Ok((up - dn) / (2.0 * h))
        })
        .collect()
}

/// Tangent-projected Hessian of `S` by central differences.
pub fn fd_hessian(s: &dyn GeneratingFunction, x: &[f64]) -> Result<DMatrix<f64>> {
    let n = x.len();
    let h = safe_step(x, HESSIAN_STEP, 2.0);
    let f = |moves: &[(usize, f64)]| eval_positive(s, &tangent_shift(x, moves));
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        for l in k..n {
            let v = (f(&[(k, h), (l, h)])? - f(&[(k, h), (l, -h)])? - f(&[(k, -h), (l, h)])?
                + f(&[(k, -h), (l, -h)])?)
                / (4.0 * h * h);
            out[(k, l)] = v;
            out[(l, k)] = v;
        }
    }
    Ok(out)
}

/// Projects a gradient onto the simplex tangent space (`v − mean(v)`).
pub fn project_tangent(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

/// `P H P` with `P = I − 11ᵀ/n`.
pub fn project_tangent_matrix(h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = h.nrows();
    let p = DMatrix::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) - 1.0 / n as f64);
    &p * h * &p
}

pub fn grad_log(s: &dyn GeneratingFunction, x: &[f64], mode: DerivativeMode) -> Result<Vec<f64>> {
    let g = match (mode, s.grad_log(x)) {
        (DerivativeMode::Auto, Some(g)) => g,
        _ => fd_grad_log(s, x)?,
    };
    if g.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: g.len(),
        });
    }
    if let Some(v) = g.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite derivative {v}")));
    }
    Ok(g)
}

pub fn hessian(s: &dyn GeneratingFunction, x: &[f64], mode: DerivativeMode) -> Result<DMatrix<f64>> {
    let h = match (mode, s.hessian(x)) {
        (DerivativeMode::Auto, Some(h)) => h,
        _ => fd_hessian(s, x)?,
    };
    if h.nrows() != x.len() || h.ncols() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: h.nrows(),
        });
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite second derivative".into()));
    }
    Ok(h)
}

fn check_interior(mu: &WeightVector) -> Result<()> {
    if mu.as_slice().iter().any(|&m| m <= 0.0) {
        return Err(Error::invalid(
            "generated weights need strictly positive market weights",
        ));
    }
    Ok(())
}

/// Weights generated by `s` at market weights `mu`.
pub fn fgp_weights(s: &dyn GeneratingFunction, mu: &WeightVector) -> Result<WeightVector> {
    fgp_weights_with(s, mu, DerivativeMode::Auto)
}

pub fn fgp_weights_with(
    s: &dyn GeneratingFunction,
    mu: &WeightVector,
    mode: DerivativeMode,
) -> Result<WeightVector> {
    check_interior(mu)?;
    let x = mu.as_slice();
    eval_positive(s, x)?;
    let g = grad_log(s, x, mode)?;
    let dot: f64 = x.iter().zip(&g).map(|(m, d)| m * d).sum();
    let pi: Vec<f64> = x.iter().zip(&g).map(|(m, d)| (d + 1.0 - dot) * m).collect();
    WeightVector::new(pi)
}

/// Drift increment `dΘ` over one interval of length `dt`.
pub fn fgp_drift_increment(
    s: &dyn GeneratingFunction,
    mu: &WeightVector,
    tau: &CovarianceEstimate,
    dt: f64,
) -> Result<f64> {
    fgp_drift_increment_with(s, mu, tau, dt, DerivativeMode::Auto)
}

pub fn fgp_drift_increment_with(
    s: &dyn GeneratingFunction,
    mu: &WeightVector,
    tau: &CovarianceEstimate,
    dt: f64,
    mode: DerivativeMode,
) -> Result<f64> {
    let n = mu.len();
    if tau.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: tau.dim(),
        });
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    check_interior(mu)?;
    let x = mu.as_slice();
    let sv = eval_positive(s, x)?;
    let h = hessian(s, x, mode)?;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += h[(i, j)] * x[i] * x[j] * tau.get(i, j);
        }
    }
    Ok(-acc / (2.0 * sv) * dt)
}

/// Closed-form drift increment of the swap portfolio on `{i, j}`.
pub fn swap_drift_increment(
    mu: &WeightVector,
    i: usize,
    j: usize,
    tau: &CovarianceEstimate,
    dt: f64,
) -> Result<f64> {
    if i == j {
        return Err(Error::invalid("swap needs two distinct assets"));
    }
    let n = mu.len();
    if i >= n || j >= n {
        return Err(Error::invalid(format!("swap index out of range for {n} assets")));
    }
    if tau.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: tau.dim(),
        });
    }
    let (a, b) = (mu[i], mu[j]);
    let spread = tau.get(i, i) - 2.0 * tau.get(i, j) + tau.get(j, j);
    Ok(a * b / ((a + b) * (a + b)) * spread * dt)
}

/// Running value of the drift process Θ.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DriftAccumulator {
    pub theta: f64,
    pub t: f64,
}

impl DriftAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accumulate(&mut self, increment: f64, dt: f64) {
        self.theta += increment;
        self.t += dt;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec()).unwrap()
    }

    fn tau(m: &[&[f64]]) -> CovarianceEstimate {
        let n = m.len();
        CovarianceEstimate {
            sigma: DMatrix::from_fn(n, n, |i, j| m[i][j]),
            window: 1,
        }
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn constant_generates_market() {
        let mu = w(&[0.5, 0.3, 0.2]);
        let pi = fgp_weights(&ConstantGenerator, &mu).unwrap();
        assert_eq!(pi, mu);
        let fd = fgp_weights_with(&ConstantGenerator, &mu, DerivativeMode::FiniteDifference).unwrap();
        close(fd.as_slice(), mu.as_slice(), 1e-12);
    }

    #[test]
    fn swap_generator_reproduces_swap_weights() {
        let mu = w(&[0.5, 0.3, 0.2]);
        let s = SwapGenerator::new(0, 2).unwrap();
        let pi = fgp_weights(&s, &mu).unwrap();
        close(pi.as_slice(), &[2.0 / 7.0, 0.0, 5.0 / 7.0], 1e-15);
        let fd = fgp_weights_with(&s, &mu, DerivativeMode::FiniteDifference).unwrap();
        close(fd.as_slice(), pi.as_slice(), 1e-8);
    }

    #[test]
    fn geometric_mean_generates_equal_weights() {
        let mu = w(&[0.1, 0.2, 0.3, 0.4]);
        let pi = fgp_weights(&GeometricMeanGenerator, &mu).unwrap();
        close(pi.as_slice(), &[0.25; 4], 1e-15);
    }

    #[test]
    fn closure_generator_uses_finite_differences() {
        let mu = w(&[0.6, 0.4]);
        let s = FnGenerator(|x: &[f64]| x[0] * x[1] / (x[0] + x[1]));
        let pi = fgp_weights(&s, &mu).unwrap();
        close(pi.as_slice(), &[0.4, 0.6], 1e-8);
    }

    #[test]
    fn nonpositive_generator_is_an_error() {
        let mu = w(&[0.6, 0.4]);
        let s = FnGenerator(|_: &[f64]| -1.0);
        assert!(matches!(fgp_weights(&s, &mu), Err(Error::Numeric(_))));
        let boundary = w(&[1.0, 0.0]);
        assert!(fgp_weights(&ConstantGenerator, &boundary).is_err());
    }

    #[test]
    fn analytic_and_fd_derivatives_agree() {
        let x = [0.15, 0.25, 0.35, 0.25];
        let gens: Vec<Box<dyn GeneratingFunction>> = vec![
            Box::new(GeometricMeanGenerator),
            Box::new(SwapGenerator::new(1, 3).unwrap()),
        ];
        for s in &gens {
            let a = project_tangent(&s.grad_log(&x).unwrap());
            let f = fd_grad_log(s.as_ref(), &x).unwrap();
            for (p, q) in a.iter().zip(&f) {
                assert!((p - q).abs() <= 1e-6 * p.abs().max(1.0), "{a:?} {f:?}");
            }
            let ha = project_tangent_matrix(&s.hessian(&x).unwrap());
            let hf = fd_hessian(s.as_ref(), &x).unwrap();
            let scale = ha.amax().max(1.0);
            assert!((ha - hf).amax() <= 1e-6 * scale);
        }
    }

    #[test]
    fn drift_examples() {
        let mu = w(&[0.5, 0.5]);
        let zero = CovarianceEstimate::zeros(2);
        let s = SwapGenerator::new(0, 1).unwrap();
        assert_eq!(fgp_drift_increment(&s, &mu, &zero, 0.1).unwrap(), 0.0);
        let v = 0.04;
        let t = tau(&[&[v, -v], &[-v, v]]);
        assert_eq!(fgp_drift_increment(&ConstantGenerator, &mu, &t, 0.1).unwrap(), 0.0);
        let dt = 0.1;
        let generic = fgp_drift_increment(&s, &mu, &t, dt).unwrap();
        let closed = swap_drift_increment(&mu, 0, 1, &t, dt).unwrap();
        assert!((generic - v * dt).abs() < 1e-15);
        assert!((closed - v * dt).abs() < 1e-15);
    }

    #[test]
    fn swap_drift_examples() {
        let mu = w(&[0.5, 0.5]);
        let same = tau(&[&[0.3, 0.3], &[0.3, 0.3]]);
        assert_eq!(swap_drift_increment(&mu, 0, 1, &same, 1.0).unwrap(), 0.0);
        let v = 0.09;
        let diag = tau(&[&[v, 0.0], &[0.0, v]]);
        let d = swap_drift_increment(&mu, 0, 1, &diag, 0.5).unwrap();
        assert!((d - v / 2.0 * 0.5).abs() < 1e-16);
        assert!(swap_drift_increment(&mu, 1, 1, &diag, 0.5).is_err());
    }

    #[test]
    fn geometric_mean_drift_is_equal_weight_excess_growth() {
        let mu = w(&[0.2, 0.3, 0.5]);
        let t = tau(&[&[0.04, 0.01, -0.02], &[0.01, 0.09, 0.0], &[-0.02, 0.0, 0.05]]);
        let d = fgp_drift_increment(&GeometricMeanGenerator, &mu, &t, 1.0).unwrap();
        let n = 3.0;
        let tr: f64 = (0..3).map(|i| t.get(i, i)).sum();
        let all: f64 = t.sigma.iter().sum();
        let expected = 0.5 * (tr / n - all / (n * n));
        assert!((d - expected).abs() < 1e-15);
    }

    #[test]
    fn accumulator_tracks_time() {
        let mut acc = DriftAccumulator::new();
        acc.accumulate(0.01, 0.5);
        acc.accumulate(0.02, 0.5);
        assert!((acc.theta - 0.03).abs() < 1e-16);
        assert_eq!(acc.t, 1.0);
    }
}
