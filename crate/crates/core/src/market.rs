//! Ranks and market weights, plus realized covariance of log increments.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance on `Σ w_i = 1` for every weight vector in the system.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Rank permutation and its inverse at one date.
///
/// Ranks are 0-based here: rank 0 is the largest value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankState {
    rank_of: Vec<usize>,
    name_at: Vec<usize>,
}

impl RankState {
    /// Rank of asset `i` (0 = largest).
    pub fn rank_of(&self, i: usize) -> usize {
        self.rank_of[i]
    }

    /// Asset occupying rank `k`.
    pub fn name_at(&self, k: usize) -> usize {
        self.name_at[k]
    }

    pub fn ranks(&self) -> &[usize] {
        &self.rank_of
    }

    pub fn names(&self) -> &[usize] {
        &self.name_at
    }

    pub fn len(&self) -> usize {
        self.rank_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rank_of.is_empty()
    }
}

/// Ranks `values` in descending order; ties go to the lower index.
///
/// Accepts any finite values (log prices rank identically to prices).
pub fn rank_values(values: &[f64]) -> Result<RankState> {
    if values.is_empty() {
        return Err(Error::invalid("cannot rank an empty vector"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite value {v} in ranking")));
    }
    Ok(rank_values_unchecked(values))
}

pub(crate) fn rank_values_unchecked(values: &[f64]) -> RankState {
    let mut name_at: Vec<usize> = (0..values.len()).collect();
    // stable sort keeps ascending index among equal values
    name_at.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    let mut rank_of = vec![0; values.len()];
    for (k, &i) in name_at.iter().enumerate() {
        rank_of[i] = k;
    }
    RankState { rank_of, name_at }
}

/// Ranks strictly positive prices.
pub fn compute_ranks(prices: &[f64]) -> Result<RankState> {
    check_positive(prices)?;
    rank_values(prices)
}

/// Portfolio weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("empty weight vector"));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::Numeric(format!("non-finite weight {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Numeric(format!("weights sum to {sum}, not 1")));
        }
        Ok(WeightVector(weights))
    }

    /// Divides by the total; the total must be finite and nonzero.
    pub fn normalized(raw: Vec<f64>) -> Result<Self> {
        let sum: f64 = raw.iter().sum();
        if !(sum.is_finite() && sum != 0.0) {
            return Err(Error::Numeric(format!("cannot normalise weights summing to {sum}")));
        }
        Self::new(raw.into_iter().map(|w| w / sum).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `μ_i = X_i / Σ X_j`.
pub fn market_weights(prices: &[f64]) -> Result<WeightVector> {
    check_positive(prices)?;
    WeightVector::normalized(prices.to_vec())
}

/// Market weights from log prices, shifted by the maximum to avoid overflow.
pub fn market_weights_from_logs(log_prices: &[f64]) -> Result<WeightVector> {
    if log_prices.is_empty() {
        return Err(Error::invalid("empty price vector"));
    }
    let max = log_prices.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::invalid("non-finite log price"));
    }
    WeightVector::normalized(log_prices.iter().map(|l| (l - max).exp()).collect())
}

/// Annualized realized covariance (symmetric, PSD).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub sigma: DMatrix<f64>,
    pub window: usize,
}

impl CovarianceEstimate {
    pub fn zeros(n: usize) -> Self {
        CovarianceEstimate {
            sigma: DMatrix::zeros(n, n),
            window: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.sigma[(i, j)]
    }
}

/// Realized covariance `Σ_t Δ_i Δ_j / (T dt)` of log increments (uncentered).
pub fn estimate_covariance(increments: &[Vec<f64>], dt: f64) -> Result<CovarianceEstimate> {
    if increments.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "covariance needs at least 2 increments, got {}",
            increments.len()
        )));
    }
    let mut est = realized_covariance(increments, dt)?;
    est.window = increments.len();
    Ok(est)
}

/// Realized covariance without the minimum-length check; one increment gives
/// the outer product `Δ Δᵀ / dt` used for single-interval drift terms.
pub fn realized_covariance(increments: &[Vec<f64>], dt: f64) -> Result<CovarianceEstimate> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let n = increments.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(Error::InsufficientData("no increments".into()));
    }
    let mut sigma = DMatrix::zeros(n, n);
    for row in increments {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: row.len(),
            });
        }
        for i in 0..n {
            for j in i..n {
                sigma[(i, j)] += row[i] * row[j];
            }
        }
    }
    let scale = 1.0 / (increments.len() as f64 * dt);
    for i in 0..n {
        for j in i..n {
            let v = sigma[(i, j)] * scale;
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    Ok(CovarianceEstimate {
        sigma,
        window: increments.len(),
    })
}

/// Realized relative covariance τ from a path of market weights.
pub fn relative_covariance(mu_path: &[WeightVector], dt: f64) -> Result<CovarianceEstimate> {
    let inc = log_weight_increments(mu_path)?;
    estimate_covariance(&inc, dt)
}

/// `Δ log μ_i` between consecutive weight vectors.
pub fn log_weight_increments(mu_path: &[WeightVector]) -> Result<Vec<Vec<f64>>> {
    let n = mu_path.first().map_or(0, WeightVector::len);
    let mut out = Vec::with_capacity(mu_path.len().saturating_sub(1));
    for w in mu_path.windows(2) {
        if w[0].len() != n || w[1].len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: w[1].len(),
            });
        }
        let mut row = Vec::with_capacity(n);
        for (&a, &b) in w[0].as_slice().iter().zip(w[1].as_slice()) {
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::invalid("market weights must be strictly positive"));
            }
            row.push(b.ln() - a.ln());
        }
        out.push(row);
    }
    Ok(out)
}

fn check_positive(prices: &[f64]) -> Result<()> {
    if prices.is_empty() {
        return Err(Error::invalid("empty price vector"));
    }
    if let Some(p) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::invalid(format!("price must be positive and finite, got {p}")));
    }
    Ok(())
}
