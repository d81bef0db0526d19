//! First-order approximation of an observed market.
//!
//! Local-time rates and gap variances of the ranked log prices give the
//! rank-based growth rates and volatilities. Smoothing across ranks and the
//! rank-size curve comparison live here too.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::first_order::{simulate_log_paths, sort_ranks, FirstOrderParams, SimConfig};
use crate::panel::PricePanel;

/// Default smoothing bandwidth in ranks.
pub const DEFAULT_BANDWIDTH: f64 = 6.0;

fn require_fixed_n(panel: &PricePanel) -> Result<()> {
    if !panel.is_rectangular() {
        let late: Vec<&str> = (0..panel.n_assets())
            .filter(|&i| panel.entry(i) > 0)
            .map(|i| panel.assets()[i].as_str())
            .collect();
        return Err(Error::RaggedWindow(format!(
            "assets enter during the window ({}); restrict the dates to a span where every asset is quoted",
            late.join(", ")
        )));
    }
    if panel.n_dates() < 2 {
        return Err(Error::InsufficientData("need at least two dates".into()));
    }
    Ok(())
}

fn span(panel: &PricePanel) -> f64 {
    (panel.n_dates() - 1) as f64 * panel.dt()
}

fn row(panel: &PricePanel, t: usize) -> Vec<f64> {
    (0..panel.n_assets()).map(|i| panel.log_prices(i)[t]).collect()
}

/// Realized variance rate of each adjacent ranked log gap.
///
/// Each step's increment is taken on the pair of names that held ranks
/// `k, k+1` at the start of the step. Differencing the sorted gaps instead
/// folds every crossing back onto the positive axis and biases the variance
/// down by an amount of order `λσ√dt`.
pub fn estimate_gap_variance(panel: &PricePanel) -> Result<Vec<f64>> {
    require_fixed_n(panel)?;
    let n = panel.n_assets();
    let mut order: Vec<usize> = (0..n).collect();
    let mut acc = vec![0.0; n.saturating_sub(1)];
    let mut prev = row(panel, 0);
    for t in 1..panel.n_dates() {
        sort_ranks(&prev, &mut order);
        let x = row(panel, t);
        for (a, w) in acc.iter_mut().zip(order.windows(2)) {
            let d = (x[w[0]] - prev[w[0]]) - (x[w[1]] - prev[w[1]]);
            *a += d * d;
        }
        prev = x;
    }
    let horizon = span(panel);
    Ok(acc.into_iter().map(|a| a / horizon).collect())
}

/// Local-time rate at each adjacent rank pair.
///
/// Over each step the top-`k` ranked sum gains at least as much as the sum
/// over the names that held those ranks at the start of the step; twice the
/// excess, per unit time, estimates `λ_{k,k+1}`.
pub fn estimate_local_time_rates(panel: &PricePanel) -> Result<Vec<f64>> {
    require_fixed_n(panel)?;
    let n = panel.n_assets();
    let mut order: Vec<usize> = (0..n).collect();
    let mut acc = vec![0.0; n.saturating_sub(1)];
    let mut x = row(panel, 0);
    sort_ranks(&x, &mut order);
    for t in 1..panel.n_dates() {
        let held = order.clone();
        x = row(panel, t);
        sort_ranks(&x, &mut order);
        let (mut ranked, mut named) = (0.0, 0.0);
        for k in 0..n - 1 {
            ranked += x[order[k]];
            named += x[held[k]];
            acc[k] += ranked - named;
        }
    }
    let horizon = span(panel);
    Ok(acc.into_iter().map(|a| 2.0 * a / horizon).collect())
}

/// Estimated first-order approximation of a panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderEstimate {
    pub lambda: Vec<f64>,
    pub gap_var: Vec<f64>,
    pub g: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Years covered by the estimation window.
    pub sample_span: f64,
    pub n: usize,
}

impl FirstOrderEstimate {
    /// Validated model parameters; fails if any floored λ̂ left a zero
    /// partial sum.
    pub fn params(&self) -> Result<FirstOrderParams> {
        FirstOrderParams::new(self.g.clone(), self.sigma.clone())
    }
}

/// Rank growth rates and volatilities from λ and gap variances, with zero
/// local time outside the ranked range and the edge gap variances repeated.
pub fn derive_rates(lambda: &[f64], gap_var: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if lambda.is_empty() {
        return Err(Error::InsufficientData("a first-order approximation needs at least two ranks".into()));
    }
    if lambda.len() != gap_var.len() {
        return Err(Error::DimensionMismatch {
            expected: lambda.len(),
            got: gap_var.len(),
        });
    }
    if let Some(v) = gap_var.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Numeric(format!("gap variance {v} is not a non-negative number")));
    }
    let n = lambda.len() + 1;
    let lam: Vec<f64> = lambda
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            if l < 0.0 {
                warn!("local time estimate at ranks {},{} is {l}; floored at 0", k + 1, k + 2);
                0.0
            } else {
                l
            }
        })
        .collect();
    let lam_at = |k: usize| if k == 0 || k == n { 0.0 } else { lam[k - 1] };
    let var_at = |k: usize| gap_var[k.clamp(1, n - 1) - 1];
    let g = (1..=n).map(|k| 0.5 * lam_at(k - 1) - 0.5 * lam_at(k)).collect();
    let sigma = (1..=n).map(|k| (0.25 * (var_at(k - 1) + var_at(k))).sqrt()).collect();
    Ok((g, sigma))
}

/// Validated first-order parameters matching the given λ and gap variances.
pub fn first_order_approximation(lambda: &[f64], gap_var: &[f64]) -> Result<FirstOrderParams> {
    let (g, sigma) = derive_rates(lambda, gap_var)?;
    FirstOrderParams::new(g, sigma)
}

/// Runs both estimators and derives rates.
pub fn estimate_first_order(panel: &PricePanel) -> Result<FirstOrderEstimate> {
    let lambda = estimate_local_time_rates(panel)?;
    let gap_var = estimate_gap_variance(panel)?;
    let (g, sigma) = derive_rates(&lambda, &gap_var)?;
    Ok(FirstOrderEstimate {
        lambda,
        gap_var,
        g,
        sigma,
        sample_span: span(panel),
        n: panel.n_assets(),
    })
}

/// Combines estimates from independent panels, weighting each by its span.
///
/// A single path's local time fluctuates by about `2σ/√T` around its rate,
/// so pooling is the practical way to tighten the estimate.
pub fn pool_estimates(estimates: &[FirstOrderEstimate]) -> Result<FirstOrderEstimate> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::invalid("nothing to pool"))?;
    let n = first.n;
    if let Some(e) = estimates.iter().find(|e| e.n != n) {
        return Err(Error::DimensionMismatch { expected: n, got: e.n });
    }
    let total: f64 = estimates.iter().map(|e| e.sample_span).sum();
    let weighted = |f: fn(&FirstOrderEstimate) -> &Vec<f64>| -> Vec<f64> {
        (0..n - 1)
            .map(|k| estimates.iter().map(|e| f(e)[k] * e.sample_span).sum::<f64>() / total)
            .collect()
    };
    let lambda = weighted(|e| &e.lambda);
    let gap_var = weighted(|e| &e.gap_var);
    let (g, sigma) = derive_rates(&lambda, &gap_var)?;
    Ok(FirstOrderEstimate {
        lambda,
        gap_var,
        g,
        sigma,
        sample_span: total,
        n,
    })
}

/// Half-sample symmetric reflection into `0..n`.
fn reflect(j: i64, n: usize) -> usize {
    let p = 2 * n as i64;
    let j = j.rem_euclid(p) as usize;
    if j >= n {
        2 * n - 1 - j
    } else {
        j
    }
}

/// Gaussian smoothing across ranks with std dev `bandwidth`, reflecting the
/// sequence at both ends. The kernel is cut at four standard deviations and
/// normalized.
pub fn reflected_gaussian_filter(values: &[f64], bandwidth: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("cannot smooth an empty vector"));
    }
    if !(bandwidth.is_finite() && bandwidth >= 0.0) {
        return Err(Error::invalid(format!("bandwidth must be non-negative, got {bandwidth}")));
    }
    if bandwidth == 0.0 {
        return Ok(values.to_vec());
    }
    let radius = (4.0 * bandwidth).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|m| (-0.5 * (m as f64 / bandwidth).powi(2)).exp())
        .collect();
    let mass: f64 = kernel.iter().sum();
    let n = values.len();
    Ok((0..n as i64)
        .map(|i| {
            kernel
                .iter()
                .zip(-radius..=radius)
                .map(|(w, m)| w * values[reflect(i + m, n)])
                .sum::<f64>()
                / mass
        })
        .collect())
}

fn accumulate_curve(acc: &mut [f64], x: &[f64], order: &mut [usize]) {
    sort_ranks(x, order);
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    for (a, &i) in acc.iter_mut().zip(order.iter()) {
        *a += x[i] - mean;
    }
}

/// Time-averaged ranked log price relative to the cross-sectional mean.
pub fn rank_size_curve(panel: &PricePanel) -> Result<Vec<f64>> {
    if !panel.is_rectangular() {
        return Err(Error::RaggedWindow("rank-size curve needs a fixed set of assets".into()));
    }
    let n = panel.n_assets();
    let mut acc = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for t in 0..panel.n_dates() {
        accumulate_curve(&mut acc, &row(panel, t), &mut order);
    }
    let dates = panel.n_dates() as f64;
    Ok(acc.into_iter().map(|a| a / dates).collect())
}

/// Rank-size curve averaged over `config.paths` simulated paths.
pub fn simulated_rank_size_curve(params: &FirstOrderParams, config: &SimConfig, exec: Execution) -> Result<Vec<f64>> {
    if config.paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    let n = params.n();
    let curves = exec
        .map_indexed(config.paths, |p| -> Result<Vec<f64>> {
            let cols = simulate_log_paths(params, config, p)?;
            let mut acc = vec![0.0; n];
            let mut order: Vec<usize> = (0..n).collect();
            let mut x = vec![0.0; n];
            for t in 0..=config.steps {
                for (v, c) in x.iter_mut().zip(&cols) {
                    *v = c[t];
                }
                accumulate_curve(&mut acc, &x, &mut order);
            }
            Ok(acc.into_iter().map(|a| a / (config.steps + 1) as f64).collect())
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut mean = vec![0.0; n];
    for c in &curves {
        for (m, v) in mean.iter_mut().zip(c) {
            *m += v;
        }
    }
    Ok(mean.into_iter().map(|m| m / config.paths as f64).collect())
}

/// Mean absolute difference between two curves of equal length.
pub fn mean_abs_deviation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::first_order::simulate;
    use crate::panel::DateFormat;

    fn panel(cols: Vec<Vec<f64>>, dt: f64) -> PricePanel {
        let n = cols.len();
        let len = cols[0].len();
        PricePanel::from_log_prices(
            (0..n).map(|i| format!("A{i}")).collect(),
            (0..len as i64).collect(),
            DateFormat::Index,
            dt,
            cols.into_iter().map(|c| (0, c)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_gaps_have_no_variance() {
        let p = panel(vec![vec![1.0, 1.25, 1.75], vec![0.0, 0.25, 0.75]], 1.0);
        assert_eq!(estimate_gap_variance(&p).unwrap(), vec![0.0]);
        let single = panel(vec![vec![0.0, 0.5]], 1.0);
        assert!(estimate_gap_variance(&single).unwrap().is_empty());
    }

    #[test]
    fn no_crossings_means_no_local_time() {
        let p = panel(vec![vec![1.0, 1.4, 0.9], vec![0.0, -0.2, 0.5], vec![-1.0, -1.0, -2.0]], 1.0);
        assert_eq!(estimate_local_time_rates(&p).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn crossing_contributes_twice_the_overshoot() {
        // names swap: ranked top gains 0.1 more than the former leader
        let p = panel(vec![vec![0.1, 0.0], vec![0.0, 0.1]], 1.0);
        let lam = estimate_local_time_rates(&p).unwrap();
        assert!((lam[0] - 2.0 * 0.1).abs() < 1e-15);
    }

    #[test]
    fn ragged_window_is_refused() {
        let p = PricePanel::from_log_prices(
            vec!["a".into(), "b".into()],
            vec![0, 1, 2],
            DateFormat::Index,
            1.0,
            vec![(0, vec![0.0, 0.1, 0.2]), (1, vec![0.0, 0.1])],
        )
        .unwrap();
        assert!(matches!(estimate_gap_variance(&p), Err(Error::RaggedWindow(_))));
        assert!(matches!(estimate_local_time_rates(&p), Err(Error::RaggedWindow(_))));
    }

    #[test]
    fn approximation_conventions() {
        let p = first_order_approximation(&[2.0], &[2.0]).unwrap();
        assert_eq!(p.g(), &[-1.0, 1.0]);
        let (g, sigma) = derive_rates(&[2.0, 2.0], &[2.0, 2.0]).unwrap();
        assert_eq!(g, vec![-1.0, 0.0, 1.0]);
        assert_eq!(sigma, vec![1.0, 1.0, 1.0]);
        let (g, _) = derive_rates(&[0.3, 1.1, 0.7, 0.2], &[1.0; 4]).unwrap();
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
        assert!(derive_rates(&[], &[]).is_err());
        assert!(derive_rates(&[1.0], &[-1.0]).is_err());
    }

    #[test]
    fn negative_local_time_is_floored() {
        let (g, _) = derive_rates(&[-0.5, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(g, vec![0.0, -0.5, 0.5]);
        assert!(first_order_approximation(&[-0.5, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn two_asset_local_time_matches_model() {
        let params = FirstOrderParams::new(vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let cfg = SimConfig::new(200_000, 1.0 / 252.0, 11).with_paths(16);
        let each = crate::first_order::simulate_batch_map(&params, &cfg, Execution::Parallel, |_, p| {
            estimate_first_order(&p)
        })
        .unwrap();
        let pooled = pool_estimates(&each).unwrap();
        assert!((pooled.lambda[0] - 2.0).abs() < 0.1, "{:?}", pooled.lambda);
        assert!((pooled.gap_var[0] - 2.0).abs() < 0.1, "{:?}", pooled.gap_var);
        assert!((pooled.g[0] + 1.0).abs() < 0.05);
        assert!((pooled.sample_span - 16.0 * 200_000.0 / 252.0).abs() < 1e-6);
    }

    #[test]
    fn gap_variance_with_unequal_volatilities() {
        let params = FirstOrderParams::new(vec![-1.0, 1.0], vec![1.0, 2.0]).unwrap();
        let panel = simulate(&params, &SimConfig::new(200_000, 1.0 / 252.0, 12)).unwrap();
        let v = estimate_gap_variance(&panel).unwrap();
        assert!((v[0] - 5.0).abs() < 0.25, "{v:?}");
    }

    #[test]
    fn filter_identities() {
        let c = vec![3.0; 9];
        for (a, b) in reflected_gaussian_filter(&c, 2.5).unwrap().iter().zip(&c) {
            assert!((a - b).abs() < 1e-14);
        }
        let v = vec![1.0, 5.0, -2.0];
        assert_eq!(reflected_gaussian_filter(&v, 0.0).unwrap(), v);
        assert!(reflected_gaussian_filter(&[], 1.0).is_err());
        assert!(reflected_gaussian_filter(&v, -1.0).is_err());
    }

    #[test]
    fn filter_matches_padded_convolution() {
        // oracle: pad by explicit mirror copies, then convolve directly
        let n = 11;
        let mut spike = vec![0.0; n];
        spike[5] = 1.0;
        let b = 1.0;
        let r = 4usize;
        let mut padded: Vec<f64> = spike[..r].iter().rev().copied().collect();
        padded.extend_from_slice(&spike);
        padded.extend(spike[n - r..].iter().rev());
        let w: Vec<f64> = (0..=2 * r).map(|m| (-0.5 * ((m as f64 - r as f64) / b).powi(2)).exp()).collect();
        let total: f64 = w.iter().sum();
        let expected: Vec<f64> = (0..n)
            .map(|i| (0..=2 * r).map(|m| w[m] * padded[i + m]).sum::<f64>() / total)
            .collect();
        let got = reflected_gaussian_filter(&spike, b).unwrap();
        for (a, e) in got.iter().zip(&expected) {
            assert!((a - e).abs() < 1e-15);
        }
        // a spike at the edge keeps its mass
        let mut edge = vec![0.0; n];
        edge[0] = 1.0;
        let s: f64 = reflected_gaussian_filter(&edge, 1.5).unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_size_examples() {
        let flat = panel(vec![vec![0.5, 0.5], vec![0.5, 0.5]], 1.0);
        assert_eq!(rank_size_curve(&flat).unwrap(), vec![0.0, 0.0]);
        let one = panel(vec![vec![0.0], vec![1.0], vec![0.5]], 1.0);
        assert_eq!(rank_size_curve(&one).unwrap(), vec![0.5, 0.0, -0.5]);
    }

    #[test]
    fn simulated_curve_is_order_independent() {
        let params = FirstOrderParams::uniform_sigma(vec![-0.1, 0.0, 0.1], 0.2).unwrap();
        let cfg = SimConfig::new(300, 1.0 / 12.0, 4).with_paths(6);
        let a = simulated_rank_size_curve(&params, &cfg, Execution::Parallel).unwrap();
        let b = simulated_rank_size_curve(&params, &cfg, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(a[0] > 0.0 && a[2] < 0.0);
    }
}
