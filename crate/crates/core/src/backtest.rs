//! Monthly-rebalanced backtests of weight policies on an implied-price panel.
//!
//! Each period a policy's wealth grows by `Σ π_i e^{Δlog X_i + c_i}`, the
//! exact return of holding the futures contracts. The period log return is
//! split into the implied-price portfolio return and the weighted carry. The
//! first is the weighted log change plus the excess growth `γ*dt`. A small
//! interaction term is whatever is left over.

use std::io::Write;
use std::path::Path;

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::futures::{CarryTable, EligibilityCalendar};
use crate::month::Month;
use crate::panel::{DateFormat, PricePanel};
use crate::policy::WeightPolicy;

/// Which assets may be held at each rebalance and when trading begins.
#[derive(Debug, Clone, PartialEq)]
pub struct Universe {
    /// Panel index of the first rebalance date.
    pub first_period: usize,
    /// Per asset, the first panel index at which it may be held.
    pub inclusion: Vec<usize>,
}

impl Universe {
    /// Every asset from its first date, trading from the first date.
    pub fn all(panel: &PricePanel) -> Self {
        Universe {
            first_period: 0,
            inclusion: (0..panel.n_assets()).map(|i| panel.entry(i)).collect(),
        }
    }

    /// Applies an eligibility calendar. A requested start before the
    /// calendar's start is moved forward with a warning.
    pub fn from_calendar(panel: &PricePanel, calendar: &EligibilityCalendar, requested: Option<Month>) -> Result<Self> {
        if panel.date_format() != DateFormat::Month {
            return Err(Error::Validation("an eligibility calendar needs a monthly panel".into()));
        }
        let earliest = calendar
            .start
            .ok_or_else(|| Error::InsufficientData("too few commodities ever become eligible".into()))?;
        let start = match requested {
            Some(m) if m < earliest => {
                warn!("start {m} precedes eligibility; clipped to {earliest}");
                earliest
            }
            Some(m) => m,
            None => earliest,
        };
        let index_of = |m: Month| -> usize {
            let first = panel.dates()[0];
            (m.index() - first).clamp(0, panel.n_dates() as i64) as usize
        };
        let first_period = index_of(start);
        if first_period + 1 >= panel.n_dates() {
            return Err(Error::InsufficientData(format!("no complete month after start {start}")));
        }
        let inclusion = panel
            .assets()
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let m = calendar
                    .inclusion_month(name)
                    .ok_or_else(|| Error::Validation(format!("'{name}' has no eligibility entry")))?;
                Ok(index_of(m).max(panel.entry(i)))
            })
            .collect::<Result<_>>()?;
        Ok(Universe { first_period, inclusion })
    }
}

/// Per-period components for one policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySeries {
    pub label: String,
    /// Total log return from the wealth recursion.
    pub log_return: Vec<f64>,
    /// `log Σ π_i e^{Δlog X_i}`.
    pub implied: Vec<f64>,
    /// `γ* dt = implied − Σ π_i Δlog X_i`.
    pub gamma_star: Vec<f64>,
    /// `Σ π_i c_i`.
    pub carry: Vec<f64>,
    /// `log_return − implied − carry`.
    pub interaction: Vec<f64>,
}

impl PolicySeries {
    fn with_capacity(label: String, n: usize) -> Self {
        PolicySeries {
            label,
            log_return: Vec::with_capacity(n),
            implied: Vec::with_capacity(n),
            gamma_star: Vec::with_capacity(n),
            carry: Vec::with_capacity(n),
            interaction: Vec::with_capacity(n),
        }
    }
}

pub fn cumulative(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub dt: f64,
    /// Label of the first rebalance date.
    pub start: String,
    /// Period end dates.
    pub dates: Vec<String>,
    pub policies: Vec<PolicySeries>,
    /// Market portfolio over the same universe; the relative benchmark.
    pub market: PolicySeries,
    /// Assets held in each period.
    pub held: Vec<usize>,
}

impl BacktestReport {
    pub fn periods(&self) -> usize {
        self.dates.len()
    }

    pub fn policy(&self, label: &str) -> Option<&PolicySeries> {
        self.policies.iter().find(|p| p.label == label)
    }

    /// Per-period log return relative to the market.
    pub fn relative(&self, policy: &PolicySeries) -> Vec<f64> {
        policy
            .log_return
            .iter()
            .zip(&self.market.log_return)
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Cumulative `γ*` from the decomposition residual.
    pub fn gamma_star_series(&self, policy: &PolicySeries) -> Vec<f64> {
        cumulative(&policy.gamma_star)
    }

    /// Long-format CSV with per-period and cumulative columns.
    pub fn write_returns_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(
            w,
            "date,policy,log_return,implied_log_return,gamma_star,carry,cumulative,relative_cumulative,gamma_star_cum,carry_cum"
        )?;
        for p in &self.policies {
            let cum = cumulative(&p.log_return);
            let rel = cumulative(&self.relative(p));
            let gam = cumulative(&p.gamma_star);
            let car = cumulative(&p.carry);
            for (t, date) in self.dates.iter().enumerate() {
                writeln!(
                    w,
                    "{date},{},{:.10},{:.10},{:.10},{:.10},{:.10},{:.10},{:.10},{:.10}",
                    p.label, p.log_return[t], p.implied[t], p.gamma_star[t], p.carry[t], cum[t], rel[t], gam[t], car[t]
                )?;
            }
        }
        Ok(())
    }
}

struct Step<'a> {
    assets: &'a [String],
    held: Vec<usize>,
    logs: Vec<f64>,
    moves: Vec<f64>,
    carries: Vec<f64>,
}

fn apply(policy: &WeightPolicy, step: &Step, out: &mut PolicySeries) -> Result<()> {
    let pi = policy.weights(step.assets, &step.held, &step.logs)?;
    let (mut implied, mut total, mut linear, mut carry) = (0.0, 0.0, 0.0, 0.0);
    for ((p, x), c) in pi.as_slice().iter().zip(&step.moves).zip(&step.carries) {
        implied += p * x.exp();
        total += p * (x + c).exp();
        linear += p * x;
        carry += p * c;
    }
    let (implied, total) = (implied.ln(), total.ln());
    out.log_return.push(total);
    out.implied.push(implied);
    out.gamma_star.push(implied - linear);
    out.carry.push(carry);
    out.interaction.push(total - implied - carry);
    Ok(())
}

/// Runs every policy over the panel from `universe.first_period` to the end.
pub fn run_backtest(
    panel: &PricePanel,
    carry: &CarryTable,
    policies: &[WeightPolicy],
    universe: &Universe,
    exec: Execution,
) -> Result<BacktestReport> {
    let last = panel.n_dates() - 1;
    if universe.first_period >= last {
        return Err(Error::InsufficientData("backtest needs at least one period".into()));
    }
    let mut steps = Vec::with_capacity(last - universe.first_period);
    for t in universe.first_period..last {
        let held: Vec<usize> = (0..panel.n_assets())
            .filter(|&i| universe.inclusion[i] <= t && panel.log_increment(t, i).is_some() && carry.get(i, t).is_some())
            .collect();
        if held.is_empty() {
            return Err(Error::EmptyActiveSet(panel.format_date(t)));
        }
        steps.push(Step {
            assets: panel.assets(),
            logs: held.iter().map(|&i| panel.log_price(t, i).expect("active")).collect(),
            moves: held.iter().map(|&i| panel.log_increment(t, i).expect("active")).collect(),
            carries: held.iter().map(|&i| carry.get(i, t).expect("checked")).collect(),
            held,
        });
    }
    let run = |policy: &WeightPolicy| -> Result<PolicySeries> {
        let mut out = PolicySeries::with_capacity(policy.label(), steps.len());
        for (k, step) in steps.iter().enumerate() {
            apply(policy, step, &mut out).map_err(|e| match e {
                Error::InvalidInput(m) => {
                    Error::InvalidInput(format!("{} at {}: {m}", policy.label(), panel.format_date(universe.first_period + k)))
                }
                other => other,
            })?;
        }
        Ok(out)
    };
    let policies = exec.map_slice(policies, run).into_iter().collect::<Result<Vec<_>>>()?;
    let market = run(&WeightPolicy::Market)?;
    Ok(BacktestReport {
        dt: panel.dt(),
        start: panel.format_date(universe.first_period),
        dates: (universe.first_period + 1..=last).map(|t| panel.format_date(t)).collect(),
        policies,
        market,
        held: steps.iter().map(|s| s.held.len()).collect(),
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation.
fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Annualized mean over annualized standard deviation of the per-period
/// log returns of a policy relative to the market.
pub fn sharpe_relative(policy: &[f64], market: &[f64], periods_per_year: f64) -> Result<f64> {
    if policy.len() != market.len() {
        return Err(Error::DimensionMismatch {
            expected: market.len(),
            got: policy.len(),
        });
    }
    if policy.len() < 2 {
        return Err(Error::InsufficientData("Sharpe ratio needs at least two periods".into()));
    }
    let rel: Vec<f64> = policy.iter().zip(market).map(|(a, b)| a - b).collect();
    let sd = std_dev(&rel);
    // relative series that are constant up to rounding count as degenerate
    if sd <= 1e-14 * (1.0 + mean(&rel).abs()) {
        return Err(Error::UndefinedSharpe);
    }
    Ok(mean(&rel) * periods_per_year / (sd * periods_per_year.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub policy: String,
    pub annual_mean: f64,
    pub annual_std: f64,
    /// `None` for the market itself or when undefined.
    pub sharpe_relative: Option<f64>,
    pub is_market: bool,
}

/// Annualized statistics per policy, laid out with one column per policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryTable {
    pub start: String,
    pub end: String,
    pub periods: usize,
    pub rows: Vec<SummaryRow>,
}

pub fn summary_table(report: &BacktestReport) -> Result<SummaryTable> {
    let ppy = 1.0 / report.dt;
    let rows = report
        .policies
        .iter()
        .map(|p| {
            let is_market = p.label == WeightPolicy::Market.label();
            let sharpe = if is_market {
                None
            } else {
                match sharpe_relative(&p.log_return, &report.market.log_return, ppy) {
                    Ok(s) => Some(s),
                    Err(Error::UndefinedSharpe) | Err(Error::InsufficientData(_)) => None,
                    Err(e) => return Err(e),
                }
            };
            let std = if p.log_return.len() > 1 {
                std_dev(&p.log_return) * ppy.sqrt()
            } else {
                f64::NAN
            };
            Ok(SummaryRow {
                policy: p.label.clone(),
                annual_mean: mean(&p.log_return) * ppy,
                annual_std: std,
                sharpe_relative: sharpe,
                is_market,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SummaryTable {
        start: report.start.clone(),
        end: report.dates.last().cloned().unwrap_or_default(),
        periods: report.periods(),
        rows,
    })
}

impl SummaryTable {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "statistic")?;
        for r in &self.rows {
            write!(w, ",{}", r.policy)?;
        }
        writeln!(w)?;
        if self.rows.is_empty() {
            return Ok(());
        }
        let line = |w: &mut W, name: &str, cell: &dyn Fn(&SummaryRow) -> String| -> std::io::Result<()> {
            write!(w, "{name}")?;
            for r in &self.rows {
                write!(w, ",{}", cell(r))?;
            }
            writeln!(w)
        };
        line(w, "annual_mean", &|r| format!("{:.6}", r.annual_mean))?;
        line(w, "annual_std", &|r| format!("{:.6}", r.annual_std))?;
        line(w, "sharpe_relative", &|r| match (r.is_market, r.sharpe_relative) {
            (true, _) => String::new(),
            (false, Some(s)) => format!("{s:.6}"),
            (false, None) => "undefined".into(),
        })
    }

    /// Fixed-width text with percentages, for terminals.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.policy.len()).max().unwrap_or(0).max(12);
        let mut s = format!("{:<20}", format!("{} to {}", self.start, self.end));
        for r in &self.rows {
            s += &format!(" {:>width$}", r.policy);
        }
        s.push('\n');
        if self.rows.is_empty() {
            return s;
        }
        let mut line = |name: &str, cell: &dyn Fn(&SummaryRow) -> String| {
            s += &format!("{name:<20}");
            for r in &self.rows {
                s += &format!(" {:>width$}", cell(r));
            }
            s.push('\n');
        };
        line("Average", &|r| format!("{:.2}%", 100.0 * r.annual_mean));
        line("Standard Deviation", &|r| format!("{:.2}%", 100.0 * r.annual_std));
        line("Sharpe Ratio", &|r| match (r.is_market, r.sharpe_relative) {
            (true, _) => String::new(),
            (false, Some(x)) => format!("{x:.2}"),
            (false, None) => "undefined".into(),
        });
        s
    }
}

/// Writes `returns.csv`, `summary.csv` and `summary.json` into `dir`.
pub fn write_report(report: &BacktestReport, dir: &Path) -> Result<SummaryTable> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let table = summary_table(report)?;
    let write = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| -> Result<()> {
        let path = dir.join(name);
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| Error::io(&path, e))?;
        std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))
    };
    write("returns.csv", &|w| report.write_returns_csv(w))?;
    write("summary.csv", &|w| table.write_csv(w))?;
    let json = serde_json::to_string_pretty(&table)?;
    write("summary.json", &|w| writeln!(w, "{json}"))?;
    Ok(table)
}
