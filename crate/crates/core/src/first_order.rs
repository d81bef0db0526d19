//! First-order (rank-based) market models.
//!
//! `dlog X_i = g_{r(i)} dt + σ_{r(i)} dW_i`, where `r(i)` is the current rank
//! of asset `i`. Paths are simulated by Euler–Maruyama with ranks frozen
//! within each step. Each path draws from its own ChaCha8 stream, so a batch
//! is reproducible and independent of evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::panel::{DateFormat, PricePanel};

/// Tolerance on `Σ g_k = 0`.
pub const DRIFT_SUM_TOL: f64 = 1e-10;

/// Rank-indexed growth rates and volatilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderParams {
    g: Vec<f64>,
    sigma: Vec<f64>,
}

/// Constraint violations found by [`validate_params`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViolationReport {
    pub violations: Vec<String>,
}

impl ViolationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.violations.join("; "))
    }
}

/// Checks `Σ g = 0` with negative partial sums for `k < n`, and `σ_k > 0`.
pub fn validate_params(g: &[f64], sigma: &[f64]) -> ViolationReport {
    let mut v = Vec::new();
    if g.is_empty() {
        v.push("no ranks".to_string());
    }
    if g.len() != sigma.len() {
        v.push(format!("{} growth rates but {} volatilities", g.len(), sigma.len()));
    }
    if let Some(x) = g.iter().chain(sigma).find(|x| !x.is_finite()) {
        v.push(format!("non-finite parameter {x}"));
    }
    let total: f64 = g.iter().sum();
    if total.abs() > DRIFT_SUM_TOL {
        v.push(format!("growth rates sum to {total}, not 0"));
    }
    let mut partial = 0.0;
    for (k, gk) in g.iter().enumerate().take(g.len().saturating_sub(1)) {
        partial += gk;
        if partial >= 0.0 {
            v.push(format!("partial sum g_1+…+g_{} = {partial} is not negative", k + 1));
        }
    }
    for (k, s) in sigma.iter().enumerate() {
        if !s.is_finite() || *s <= 0.0 {
            v.push(format!("sigma_{} = {s} is not positive", k + 1));
        }
    }
    ViolationReport { violations: v }
}

impl FirstOrderParams {
    pub fn new(g: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let report = validate_params(&g, &sigma);
        if !report.is_ok() {
            return Err(Error::ConstraintViolation(report.to_string()));
        }
        Ok(FirstOrderParams { g, sigma })
    }

    /// Same volatility at every rank.
    pub fn uniform_sigma(g: Vec<f64>, sigma: f64) -> Result<Self> {
        let n = g.len();
        Self::new(g, vec![sigma; n])
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// True when `σ_k = σ_{n+1−k}` for every rank.
    pub fn is_rank_symmetric(&self, tol: f64) -> bool {
        let n = self.n();
        (0..n).all(|k| (self.sigma[k] - self.sigma[n - 1 - k]).abs() <= tol)
    }
}

/// `λ_{k,k+1} = −2 (g_1 + ⋯ + g_k)` for `k < n`.
pub fn theoretical_local_times(params: &FirstOrderParams) -> Vec<f64> {
    let mut partial = 0.0;
    params.g[..params.n() - 1]
        .iter()
        .map(|g| {
            partial += g;
            -2.0 * partial
        })
        .collect()
}

/// `σ²_{k,k+1} = σ_k² + σ_{k+1}²` for `k < n`.
pub fn theoretical_gap_variances(params: &FirstOrderParams) -> Vec<f64> {
    params
        .sigma
        .windows(2)
        .map(|w| w[0] * w[0] + w[1] * w[1])
        .collect()
}

/// `γ_π = Σ_k π_(k) g_k + γ*_π` with weights listed by rank.
pub fn portfolio_growth_rate(params: &FirstOrderParams, pi_by_rank: &[f64], gamma_star: f64) -> Result<f64> {
    if pi_by_rank.len() != params.n() {
        return Err(Error::DimensionMismatch {
            expected: params.n(),
            got: pi_by_rank.len(),
        });
    }
    Ok(pi_by_rank.iter().zip(&params.g).map(|(p, g)| p * g).sum::<f64>() + gamma_star)
}

/// Simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    /// Defaults to all zeros.
    #[serde(default)]
    pub initial_log_prices: Option<Vec<f64>>,
    /// Monte Carlo batch size.
    #[serde(default = "one")]
    pub paths: usize,
}

fn one() -> usize {
    1
}

impl SimConfig {
    pub fn new(steps: usize, dt: f64, seed: u64) -> Self {
        SimConfig {
            steps,
            dt,
            seed,
            initial_log_prices: None,
            paths: 1,
        }
    }

    pub fn with_paths(mut self, paths: usize) -> Self {
        self.paths = paths;
        self
    }

    pub fn with_initial_log_prices(mut self, x0: Vec<f64>) -> Self {
        self.initial_log_prices = Some(x0);
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(x0) = &self.initial_log_prices {
            if x0.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: x0.len(),
                });
            }
            if x0.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("initial log prices must be finite"));
            }
        }
        Ok(())
    }
}

/// Per-path random stream.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Raw simulated log-price columns, one `Vec` per asset of length `steps+1`.
pub fn simulate_log_paths(params: &FirstOrderParams, config: &SimConfig, path: usize) -> Result<Vec<Vec<f64>>> {
    let n = params.n();
    config.validate(n)?;
    let mut rng = path_rng(config.seed, path);
    let mut x = config.initial_log_prices.clone().unwrap_or_else(|| vec![0.0; n]);
    let drift: Vec<f64> = params.g.iter().map(|g| g * config.dt).collect();
    let vol: Vec<f64> = params.sigma.iter().map(|s| s * config.dt.sqrt()).collect();
    let mut cols: Vec<Vec<f64>> = x
        .iter()
        .map(|&v| {
            let mut c = Vec::with_capacity(config.steps + 1);
            c.push(v);
            c
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rank = vec![0usize; n];
    for _ in 0..config.steps {
        sort_ranks(&x, &mut order);
        for (k, &i) in order.iter().enumerate() {
            rank[i] = k;
        }
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            x[i] += drift[rank[i]] + vol[rank[i]] * z;
        }
        for (c, v) in cols.iter_mut().zip(&x) {
            c.push(*v);
        }
    }
    Ok(cols)
}

/// Insertion sort of asset indices by descending value, ties to lower index.
/// Ranks change rarely between steps, so this is close to linear.
pub(crate) fn sort_ranks(x: &[f64], order: &mut [usize]) {
    let before = |a: usize, b: usize| x[a] > x[b] || (x[a] == x[b] && a < b);
    for k in 1..order.len() {
        let mut j = k;
        while j > 0 && before(order[j], order[j - 1]) {
            order.swap(j, j - 1);
            j -= 1;
        }
    }
}

fn asset_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("X{i}")).collect()
}

/// Simulates one path (`path` selects the random stream).
pub fn simulate_path(params: &FirstOrderParams, config: &SimConfig, path: usize) -> Result<PricePanel> {
    let cols = simulate_log_paths(params, config, path)?;
    let dates = (0..=config.steps as i64).collect();
    PricePanel::from_log_prices(
        asset_names(params.n()),
        dates,
        DateFormat::Index,
        config.dt,
        cols.into_iter().map(|c| (0, c)).collect(),
    )
}

/// Simulates the first path of the configured batch.
pub fn simulate(params: &FirstOrderParams, config: &SimConfig) -> Result<PricePanel> {
    simulate_path(params, config, 0)
}

/// Simulates `config.paths` paths and maps each through `f`, in path order.
pub fn simulate_batch_map<T, F>(params: &FirstOrderParams, config: &SimConfig, exec: Execution, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, PricePanel) -> Result<T> + Sync + Send,
{
    exec.map_indexed(config.paths, |p| simulate_path(params, config, p).and_then(|panel| f(p, panel)))
        .into_iter()
        .collect()
}

pub fn simulate_batch(params: &FirstOrderParams, config: &SimConfig, exec: Execution) -> Result<Vec<PricePanel>> {
    simulate_batch_map(params, config, exec, |_, p| Ok(p))
}

/// `max_i |log μ_i(T)| / T` at the last date (coherence diagnostic).
pub fn coherence_statistic(panel: &PricePanel) -> Result<f64> {
    let t = panel.n_dates() - 1;
    let horizon = t as f64 * panel.dt();
    if horizon <= 0.0 {
        return Err(Error::InsufficientData("coherence needs a positive horizon".into()));
    }
    let logs: Vec<f64> = (0..panel.n_assets())
        .map(|i| panel.log_price(t, i).ok_or_else(|| Error::invalid("ragged panel")))
        .collect::<Result<_>>()?;
    let mu = crate::market::market_weights_from_logs(&logs)?;
    Ok(mu.as_slice().iter().map(|m| m.ln().abs()).fold(0.0, f64::max) / horizon)
}
