//! Discrete log-return identities along sampled paths.
//!
//! Conventions: Stratonovich sums use the midpoint rule, Itô sums the left
//! point, and cross-variation is `Σ ΔY ΔX`. With these choices
//! `midpoint = left-point + ½ cross-variation` holds exactly.

use std::io::Write;

use crate::error::{Error, Result};
use crate::market::{CovarianceEstimate, WeightVector};

/// `γ* = ½(Σ π_i σ_ii − Σ π_i π_j σ_ij)`.
pub fn excess_growth_rate(pi: &WeightVector, sigma: &CovarianceEstimate) -> Result<f64> {
    excess_growth_rate_raw(pi.as_slice(), sigma)
}

pub(crate) fn excess_growth_rate_raw(pi: &[f64], sigma: &CovarianceEstimate) -> Result<f64> {
    let n = pi.len();
    if sigma.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: sigma.dim(),
        });
    }
    let mut diag = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        diag += pi[i] * sigma.get(i, i);
        for j in 0..n {
            quad += pi[i] * pi[j] * sigma.get(i, j);
        }
    }
    Ok(0.5 * (diag - quad))
}

/// `γ* dt` over one interval whose realized covariance is `Δ Δᵀ / dt`.
pub fn step_excess_growth(pi: &[f64], increments: &[f64]) -> f64 {
    let weighted_sq: f64 = pi.iter().zip(increments).map(|(p, d)| p * d * d).sum();
    let mean: f64 = pi.iter().zip(increments).map(|(p, d)| p * d).sum();
    0.5 * (weighted_sq - mean * mean)
}

/// `Σ_t [Σ_i π_i Δlog X_i + γ* dt]`.
pub fn portfolio_log_return(
    pi_path: &[WeightVector],
    asset_log_returns: &[Vec<f64>],
    gamma_star_path: &[f64],
    dt: f64,
) -> Result<f64> {
    let steps = asset_log_returns.len();
    if pi_path.len() < steps || gamma_star_path.len() != steps {
        return Err(Error::invalid(format!(
            "misaligned paths: {} weights, {} returns, {} γ*",
            pi_path.len(),
            steps,
            gamma_star_path.len()
        )));
    }
    let mut total = 0.0;
    for t in 0..steps {
        total += dot(pi_path[t].as_slice(), &asset_log_returns[t])? + gamma_star_path[t] * dt;
    }
    Ok(total)
}

/// `Σ_t [Σ_i π_i Δlog μ_i + γ* dt]` with `mu_path` holding levels.
pub fn relative_log_return(
    pi_path: &[WeightVector],
    mu_path: &[WeightVector],
    gamma_star_path: &[f64],
    dt: f64,
) -> Result<f64> {
    let inc = log_increments(mu_path)?;
    portfolio_log_return(pi_path, &inc, gamma_star_path, dt)
}

/// `Σ_t [Σ_i μ_i Δlog μ_i + γ*_μ dt]`, zero up to discretisation error.
pub fn market_identity_residual(
    mu_path: &[WeightVector],
    gamma_star_mu_path: &[f64],
    dt: f64,
) -> Result<f64> {
    relative_log_return(mu_path, mu_path, gamma_star_mu_path, dt)
}

fn check_pair(y: &[f64], x: &[f64]) -> Result<()> {
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData("path needs at least 2 points".into()));
    }
    Ok(())
}

/// Midpoint-rule Stratonovich sum `Σ ½(Y_t + Y_{t+1})(X_{t+1} − X_t)`.
pub fn stratonovich_integral(y: &[f64], x: &[f64]) -> Result<f64> {
    check_pair(y, x)?;
    Ok((0..x.len() - 1)
        .map(|t| 0.5 * (y[t] + y[t + 1]) * (x[t + 1] - x[t]))
        .sum())
}

/// Left-point Itô sum `Σ Y_t (X_{t+1} − X_t)`.
pub fn ito_integral(y: &[f64], x: &[f64]) -> Result<f64> {
    check_pair(y, x)?;
    Ok((0..x.len() - 1).map(|t| y[t] * (x[t + 1] - x[t])).sum())
}

/// Discrete cross-variation `Σ ΔY ΔX`.
pub fn cross_variation(y: &[f64], x: &[f64]) -> Result<f64> {
    check_pair(y, x)?;
    Ok((0..x.len() - 1)
        .map(|t| (y[t + 1] - y[t]) * (x[t + 1] - x[t]))
        .sum())
}

/// One row of the cumulative decomposition series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionRow {
    pub relative_logret: f64,
    pub structural: f64,
    pub trading: f64,
    pub gamma_star_cum: f64,
}

/// Structural/trading split of a relative log-return path.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnDecomposition {
    /// `log(Z_π / Z_μ)` at the end of the path (exact discrete compounding).
    pub total_relative_log_return: f64,
    /// `log 𝒮_π`: Stratonovich sum of `π_i ∘ dlog μ_i`.
    pub structural: f64,
    /// `𝒯_π`: relative return minus structural.
    pub trading: f64,
    /// `∫ γ*_π dt` from the wealth-recursion residual.
    pub excess_growth_integral: f64,
    /// `∫ γ*_π dt` from per-interval realized relative covariance.
    pub excess_growth_realized: f64,
    /// `−½ Σ Δπ_i Δlog μ_i + ∫ γ*_π dt` using the realized γ*.
    pub trading_cross_variation: f64,
    /// Cumulative values after each step; row 0 is the first step.
    pub series: Vec<DecompositionRow>,
}

impl ReturnDecomposition {
    /// `trading − trading_cross_variation`.
    pub fn trading_discrepancy(&self) -> f64 {
        self.trading - self.trading_cross_variation
    }

    /// Writes `date,relative_logret,structural,trading,gamma_star_cum`;
    /// `dates` labels the end of each step.
    pub fn write_csv<W: Write>(&self, w: &mut W, dates: &[String]) -> std::io::Result<()> {
        writeln!(w, "date,relative_logret,structural,trading,gamma_star_cum")?;
        for (row, d) in self.series.iter().zip(dates) {
            writeln!(
                w,
                "{d},{:.12},{:.12},{:.12},{:.12}",
                row.relative_logret, row.structural, row.trading, row.gamma_star_cum
            )?;
        }
        Ok(())
    }
}

/// Decomposes the relative log-return of weights `pi_path` against market
/// weights `mu_path`; both hold one vector per observation date.
pub fn decompose(pi_path: &[WeightVector], mu_path: &[WeightVector], dt: f64) -> Result<ReturnDecomposition> {
    if pi_path.len() != mu_path.len() {
        return Err(Error::DimensionMismatch {
            expected: mu_path.len(),
            got: pi_path.len(),
        });
    }
    if mu_path.len() < 2 {
        return Err(Error::InsufficientData("decomposition needs at least 2 dates".into()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let n = mu_path[0].len();
    if pi_path.iter().chain(mu_path).any(|w| w.len() != n) {
        return Err(Error::invalid("weight vectors change dimension along the path"));
    }
    let inc = log_increments(mu_path)?;
    let mut rel = 0.0;
    let mut structural = 0.0;
    let mut gamma_res = 0.0;
    let mut gamma_real = 0.0;
    let mut cross = 0.0;
    let mut series = Vec::with_capacity(inc.len());
    for (t, d) in inc.iter().enumerate() {
        let (p0, p1) = (pi_path[t].as_slice(), pi_path[t + 1].as_slice());
        let (m0, m1) = (mu_path[t].as_slice(), mu_path[t + 1].as_slice());
        let growth: f64 = (0..n).map(|i| p0[i] * m1[i] / m0[i]).sum();
        let step_rel = growth.ln();
        let ito: f64 = (0..n).map(|i| p0[i] * d[i]).sum();
        let mid: f64 = (0..n).map(|i| 0.5 * (p0[i] + p1[i]) * d[i]).sum();
        rel += step_rel;
        structural += mid;
        gamma_res += step_rel - ito;
        gamma_real += step_excess_growth(p0, d);
        cross += (0..n).map(|i| (p1[i] - p0[i]) * d[i]).sum::<f64>();
        series.push(DecompositionRow {
            relative_logret: rel,
            structural,
            trading: rel - structural,
            gamma_star_cum: gamma_res,
        });
    }
    Ok(ReturnDecomposition {
        total_relative_log_return: rel,
        structural,
        trading: rel - structural,
        excess_growth_integral: gamma_res,
        excess_growth_realized: gamma_real,
        trading_cross_variation: -0.5 * cross + gamma_real,
        series,
    })
}

fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

fn log_increments(path: &[WeightVector]) -> Result<Vec<Vec<f64>>> {
    crate::market::log_weight_increments(path)
}
