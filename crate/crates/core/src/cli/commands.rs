use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use serde_json::json;

use super::config::RunConfig;
use crate::backtest::{cumulative, run_backtest, write_report, BacktestReport, Universe};
use crate::error::{Error, Result};
use crate::estimation::{
    estimate_first_order, mean_abs_deviation, rank_size_curve, reflected_gaussian_filter, simulated_rank_size_curve,
    FirstOrderEstimate, DEFAULT_BANDWIDTH,
};
use crate::exec::Execution;
use crate::first_order::{simulate_batch, FirstOrderParams, SimConfig};
use crate::futures::{all_implied_series, carry_table, eligibility, normalize_entries, panel_start_months, CarryTable, QuoteBook};
use crate::month::Month;
use crate::panel::{DateFormat, PricePanel};
use crate::policy::WeightPolicy;

const DEFAULT_POLICIES: &str = "market;equal;diversity:-0.5;reverse";
const DEFAULT_SIMS: usize = 1000;

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = RunConfig::require(&cfg.out, "out")?.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_file(path, |w| writeln!(w, "{text}"))
}

/// Wide CSV: one row per entry of `index`, one column per series.
fn write_columns(path: &Path, index_name: &str, index: &[String], columns: &[(String, Vec<f64>)]) -> Result<()> {
    write_file(path, |w| {
        write!(w, "{index_name}")?;
        for (name, _) in columns {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for (k, label) in index.iter().enumerate() {
            write!(w, "{label}")?;
            for (_, col) in columns {
                write!(w, ",{:.10}", col[k])?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let g = RunConfig::require(&cfg.g, "g")?.clone();
    let sigma = RunConfig::require(&cfg.sigma, "sigma")?.clone();
    let sigma = if sigma.len() == 1 { vec![sigma[0]; g.len()] } else { sigma };
    let params = FirstOrderParams::new(g, sigma)?;
    let mut sim = SimConfig::new(cfg.steps.unwrap_or(1000), cfg.dt.unwrap_or(1.0 / 252.0), cfg.seed.unwrap_or(0))
        .with_paths(cfg.paths.unwrap_or(1));
    sim.initial_log_prices = cfg.initial_log_prices.clone();
    let dir = out_dir(cfg)?;
    let panels = simulate_batch(&params, &sim, Execution::Parallel)?;
    let mut files = Vec::new();
    for (p, panel) in panels.iter().enumerate() {
        let name = if sim.paths == 1 {
            "panel.csv".to_string()
        } else {
            format!("panel_{p:05}.csv")
        };
        panel.write_csv(&dir.join(&name))?;
        files.push(name);
    }
    write_json(
        &dir.join("simulation.json"),
        &json!({
            "g": params.g(),
            "sigma": params.sigma(),
            "steps": sim.steps,
            "dt": sim.dt,
            "seed": sim.seed,
            "paths": sim.paths,
            "initial_log_prices": sim.initial_log_prices,
            "files": files,
        }),
    )?;
    info!("wrote {} panel(s) to {}", panels.len(), dir.display());
    Ok(())
}

fn parse_date(panel: &PricePanel, s: &str) -> Result<usize> {
    let key = match panel.date_format() {
        DateFormat::Month => s.parse::<Month>()?.index(),
        DateFormat::Index => s
            .trim()
            .parse::<i64>()
            .map_err(|_| Error::Usage(format!("'{s}' is not a date index")))?,
    };
    panel
        .date_index(key)
        .ok_or_else(|| Error::Validation(format!("date {s} is not in the panel")))
}

fn estimation_window(panel: &PricePanel, from: Option<&str>, to: Option<&str>) -> Result<PricePanel> {
    let a = from.map(|s| parse_date(panel, s)).transpose()?.unwrap_or(0);
    let b = to.map(|s| parse_date(panel, s)).transpose()?.unwrap_or(panel.n_dates() - 1);
    panel.window(a, b)
}

struct EstimationOutput {
    estimate: FirstOrderEstimate,
    g_smoothed: Vec<f64>,
    sigma_smoothed: Vec<f64>,
    /// Observed and simulated rank-size curves.
    rank_size: Option<(Vec<f64>, Vec<f64>)>,
}

fn run_estimation(window: &PricePanel, bandwidth: f64, sims: usize, seed: u64) -> Result<EstimationOutput> {
    let estimate = estimate_first_order(window)?;
    let g_smoothed = reflected_gaussian_filter(&estimate.g, bandwidth)?;
    let sigma_smoothed = reflected_gaussian_filter(&estimate.sigma, bandwidth)?;
    let rank_size = if sims > 0 {
        let params = estimate.params()?;
        let x0 = (0..window.n_assets()).map(|i| window.log_prices(i)[0]).collect();
        let sim = SimConfig::new(window.n_dates() - 1, window.dt(), seed)
            .with_paths(sims)
            .with_initial_log_prices(x0);
        Some((rank_size_curve(window)?, simulated_rank_size_curve(&params, &sim, Execution::Parallel)?))
    } else {
        None
    };
    Ok(EstimationOutput {
        estimate,
        g_smoothed,
        sigma_smoothed,
        rank_size,
    })
}

fn ranks(n: usize) -> Vec<String> {
    (1..=n).map(|k| k.to_string()).collect()
}

pub fn estimate(cfg: &RunConfig) -> Result<()> {
    let path = RunConfig::require(&cfg.panel, "panel")?;
    let panel = PricePanel::read_csv(path, cfg.dt.unwrap_or(1.0 / 12.0))?;
    let window = estimation_window(&panel, cfg.from.as_deref(), cfg.to.as_deref())?;
    let dir = out_dir(cfg)?;
    let out = run_estimation(
        &window,
        cfg.bandwidth.unwrap_or(DEFAULT_BANDWIDTH),
        cfg.sims.unwrap_or(0),
        cfg.seed.unwrap_or(0),
    )?;
    let e = &out.estimate;
    let n = e.n;
    // λ and gap variances live between ranks; pad the last row
    let pad = |v: &[f64]| -> Vec<f64> { v.iter().copied().chain(std::iter::once(f64::NAN)).collect() };
    write_file(&dir.join("estimate.csv"), |w| {
        writeln!(w, "rank,lambda,gap_var,g,sigma,g_smoothed,sigma_smoothed")?;
        let (lam, var) = (pad(&e.lambda), pad(&e.gap_var));
        let cell = |x: f64| if x.is_nan() { String::new() } else { format!("{x:.10}") };
        for k in 0..n {
            writeln!(
                w,
                "{},{},{},{:.10},{:.10},{:.10},{:.10}",
                k + 1,
                cell(lam[k]),
                cell(var[k]),
                e.g[k],
                e.sigma[k],
                out.g_smoothed[k],
                out.sigma_smoothed[k]
            )?;
        }
        Ok(())
    })?;
    let mut doc = json!({
        "lambda": e.lambda,
        "gap_var": e.gap_var,
        "g": e.g,
        "sigma": e.sigma,
        "g_smoothed": out.g_smoothed,
        "sigma_smoothed": out.sigma_smoothed,
        "sample_span": e.sample_span,
        "n": n,
        "window": [window.format_date(0), window.format_date(window.n_dates() - 1)],
    });
    if let Some((observed, simulated)) = &out.rank_size {
        write_columns(
            &dir.join("rank_size.csv"),
            "rank",
            &ranks(n),
            &[("observed".into(), observed.clone()), ("simulated".into(), simulated.clone())],
        )?;
        doc["rank_size_mad"] = json!(mean_abs_deviation(observed, simulated)?);
        doc["sims"] = json!(cfg.sims);
    }
    write_json(&dir.join("estimate.json"), &doc)
}

struct Ingested {
    book: QuoteBook,
    panel: PricePanel,
    carry: CarryTable,
}

fn ingest_quotes(path: &Path) -> Result<Ingested> {
    let book = QuoteBook::read_csv(path)?;
    let series = all_implied_series(&book)?;
    let panel = normalize_entries(&series)?;
    let carry = carry_table(&book, &panel)?;
    Ok(Ingested { book, panel, carry })
}

fn write_carry_csv(path: &Path, panel: &PricePanel, carry: &CarryTable) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "date,commodity,carry")?;
        for t in 0..panel.n_dates().saturating_sub(1) {
            for i in 0..panel.n_assets() {
                if panel.log_increment(t, i).is_none() {
                    continue;
                }
                match carry.get(i, t) {
                    Some(c) => writeln!(w, "{},{},{c:.12}", panel.format_date(t), panel.assets()[i])?,
                    None => writeln!(w, "{},{},", panel.format_date(t), panel.assets()[i])?,
                }
            }
        }
        Ok(())
    })
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let quotes = RunConfig::require(&cfg.quotes, "quotes")?;
    let data = ingest_quotes(quotes)?;
    let dir = out_dir(cfg)?;
    data.panel.write_csv(&dir.join("implied_panel.csv"))?;
    write_carry_csv(&dir.join("carry.csv"), &data.panel, &data.carry)?;
    let calendar = eligibility(&panel_start_months(&data.panel)?);
    write_file(&dir.join("eligibility.csv"), |w| {
        writeln!(w, "commodity,start_month,inclusion_month")?;
        for (i, (name, inc)) in calendar.inclusion.iter().enumerate() {
            writeln!(w, "{name},{},{inc}", Month(data.panel.dates()[data.panel.entry(i)]))?;
        }
        Ok(())
    })?;
    write_json(
        &dir.join("ingest.json"),
        &json!({
            "commodities": data.book.commodities(),
            "first_month": data.panel.format_date(0),
            "last_month": data.panel.format_date(data.panel.n_dates() - 1),
            "portfolio_start": calendar.start.map(|m| m.to_string()),
            "missing_carry": data.carry.flagged.iter()
                .map(|(c, m, r)| json!({"commodity": c, "month": m.to_string(), "reason": r}))
                .collect::<Vec<_>>(),
        }),
    )
}

fn policies(cfg: &RunConfig) -> Result<Vec<WeightPolicy>> {
    WeightPolicy::parse_list(cfg.policies.as_deref().unwrap_or(DEFAULT_POLICIES))
}

fn backtest_data(cfg: &RunConfig) -> Result<(PricePanel, CarryTable, BacktestReport)> {
    let quotes = RunConfig::require(&cfg.quotes, "quotes")?;
    let policies = policies(cfg)?;
    let data = ingest_quotes(quotes)?;
    let panel = match &cfg.panel {
        Some(p) => {
            let given = PricePanel::read_csv(p, 1.0 / 12.0)?;
            if given.date_format() != DateFormat::Month {
                return Err(Error::Validation(format!("{}: backtests need YYYY-MM dates", p.display())));
            }
            given
        }
        None => data.panel.clone(),
    };
    let carry = if cfg.panel.is_some() {
        carry_table(&data.book, &panel)?
    } else {
        data.carry
    };
    let start = cfg.start.as_deref().map(str::parse::<Month>).transpose()?;
    let calendar = eligibility(&panel_start_months(&panel)?);
    let universe = Universe::from_calendar(&panel, &calendar, start)?;
    let report = run_backtest(&panel, &carry, &policies, &universe, Execution::Parallel)?;
    Ok((panel, carry, report))
}

pub fn backtest(cfg: &RunConfig) -> Result<()> {
    let (_, _, report) = backtest_data(cfg)?;
    let dir = out_dir(cfg)?;
    let table = write_report(&report, &dir)?;
    print!("{}", table.to_text());
    Ok(())
}

pub fn reproduce(cfg: &RunConfig) -> Result<()> {
    let (panel, _, report) = backtest_data(cfg)?;
    let dir = out_dir(cfg)?;

    // relative price fan
    write_file(&dir.join("relative_prices.csv"), |w| {
        writeln!(w, "date,commodity,relative_log_price")?;
        for t in 0..panel.n_dates() {
            let active = panel.active_at(t);
            let logs: Vec<f64> = active.iter().map(|&i| panel.log_price(t, i).expect("active")).collect();
            let mean = logs.iter().sum::<f64>() / logs.len() as f64;
            for (&i, l) in active.iter().zip(&logs) {
                writeln!(w, "{},{},{:.10}", panel.format_date(t), panel.assets()[i], l - mean)?;
            }
        }
        Ok(())
    })?;

    let by_policy = |f: &dyn Fn(&crate::backtest::PolicySeries) -> Vec<f64>| -> Vec<(String, Vec<f64>)> {
        report.policies.iter().map(|p| (p.label.clone(), f(p))).collect()
    };
    write_columns(
        &dir.join("cumulative_returns.csv"),
        "date",
        &report.dates,
        &by_policy(&|p| cumulative(&p.log_return)),
    )?;
    write_columns(
        &dir.join("relative_returns.csv"),
        "date",
        &report.dates,
        &by_policy(&|p| cumulative(&report.relative(p))),
    )?;
    write_columns(&dir.join("gamma_star.csv"), "date", &report.dates, &by_policy(&|p| report.gamma_star_series(p)))?;
    write_columns(&dir.join("carry.csv"), "date", &report.dates, &by_policy(&|p| cumulative(&p.carry)))?;

    // first-order approximation over the span with every commodity present
    let from = (0..panel.n_assets()).map(|i| panel.entry(i)).max().unwrap_or(0);
    let window = panel.window(from, panel.n_dates() - 1)?;
    let out = run_estimation(
        &window,
        cfg.bandwidth.unwrap_or(DEFAULT_BANDWIDTH),
        cfg.sims.unwrap_or(DEFAULT_SIMS).max(1),
        cfg.seed.unwrap_or(0),
    )?;
    let n = out.estimate.n;
    write_columns(
        &dir.join("g_k.csv"),
        "rank",
        &ranks(n),
        &[("g".into(), out.estimate.g.clone()), ("g_smoothed".into(), out.g_smoothed.clone())],
    )?;
    write_columns(
        &dir.join("sigma_k.csv"),
        "rank",
        &ranks(n),
        &[
            ("sigma".into(), out.estimate.sigma.clone()),
            ("sigma_smoothed".into(), out.sigma_smoothed.clone()),
        ],
    )?;
    let (observed, simulated) = out.rank_size.expect("at least one simulation");
    write_columns(
        &dir.join("rank_size.csv"),
        "rank",
        &ranks(n),
        &[("observed".into(), observed), ("simulated".into(), simulated)],
    )?;
    Ok(())
}
