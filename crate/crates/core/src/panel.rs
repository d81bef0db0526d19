//! Dated per-asset price series with ragged starts.
//!
//! Each asset carries its own log-price path from its entry date to the end of
//! the calendar. Log increments are stored separately from log levels so that
//! level shifts (entry normalisation) never touch the increments.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::month::Month;

/// How panel dates are written and parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DateFormat {
    /// `YYYY-MM`; the stored value is a [`Month`] index.
    Month,
    /// Plain integer step index (simulated panels).
    Index,
}

#[derive(Debug, Clone, PartialEq)]
struct AssetSeries {
    entry: usize,
    log_prices: Vec<f64>,
    increments: Vec<f64>,
}

/// Strictly positive prices on a strictly increasing calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    assets: Vec<String>,
    dates: Vec<i64>,
    format: DateFormat,
    dt: f64,
    series: Vec<AssetSeries>,
}

impl PricePanel {
    /// Builds a panel from per-asset price columns, `None` before entry.
    pub fn from_prices(
        assets: Vec<String>,
        dates: Vec<i64>,
        format: DateFormat,
        dt: f64,
        columns: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        check_header(&assets, &dates, dt, columns.len())?;
        let mut logs = Vec::with_capacity(columns.len());
        for (name, col) in assets.iter().zip(&columns) {
            if col.len() != dates.len() {
                return Err(Error::DimensionMismatch {
                    expected: dates.len(),
                    got: col.len(),
                });
            }
            let entry = col.iter().position(Option::is_some).ok_or_else(|| {
                Error::Validation(format!("asset '{name}' has no observations"))
            })?;
            let mut path = Vec::with_capacity(col.len() - entry);
            for (t, v) in col.iter().enumerate().skip(entry) {
                let p = v.ok_or_else(|| {
                    Error::Validation(format!(
                        "asset '{name}' has a gap at {}",
                        format_date(format, dates[t])
                    ))
                })?;
                if !(p.is_finite() && p > 0.0) {
                    return Err(Error::Validation(format!(
                        "asset '{name}' has non-positive price {p} at {}",
                        format_date(format, dates[t])
                    )));
                }
                path.push(p.ln());
            }
            logs.push((entry, path));
        }
        Self::from_log_prices(assets, dates, format, dt, logs)
    }

    /// Builds a panel from `(entry index, log prices from entry onward)`.
    pub fn from_log_prices(
        assets: Vec<String>,
        dates: Vec<i64>,
        format: DateFormat,
        dt: f64,
        logs: Vec<(usize, Vec<f64>)>,
    ) -> Result<Self> {
        check_header(&assets, &dates, dt, logs.len())?;
        let mut series = Vec::with_capacity(logs.len());
        for (name, (entry, log_prices)) in assets.iter().zip(logs) {
            if log_prices.is_empty() || entry + log_prices.len() != dates.len() {
                return Err(Error::Validation(format!(
                    "asset '{name}' must run from its entry to the last date"
                )));
            }
            if let Some(bad) = log_prices.iter().find(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "asset '{name}' has non-finite log price {bad}"
                )));
            }
            let increments = log_prices.windows(2).map(|w| w[1] - w[0]).collect();
            series.push(AssetSeries {
                entry,
                log_prices,
                increments,
            });
        }
        Ok(PricePanel {
            assets,
            dates,
            format,
            dt,
            series,
        })
    }

    /// Builds a panel from `(entry index, entry log level, log increments)`.
    ///
    /// The increments are stored as given, bit for bit.
    pub fn from_increments(
        assets: Vec<String>,
        dates: Vec<i64>,
        format: DateFormat,
        dt: f64,
        parts: Vec<(usize, f64, Vec<f64>)>,
    ) -> Result<Self> {
        check_header(&assets, &dates, dt, parts.len())?;
        let mut series = Vec::with_capacity(parts.len());
        for (name, (entry, base, increments)) in assets.iter().zip(parts) {
            if entry + increments.len() + 1 != dates.len() {
                return Err(Error::Validation(format!(
                    "asset '{name}' must run from its entry to the last date"
                )));
            }
            if !base.is_finite() || increments.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "asset '{name}' has non-finite values"
                )));
            }
            let mut log_prices = Vec::with_capacity(increments.len() + 1);
            let mut level = base;
            log_prices.push(level);
            for d in &increments {
                level += d;
                log_prices.push(level);
            }
            series.push(AssetSeries {
                entry,
                log_prices,
                increments,
            });
        }
        Ok(PricePanel {
            assets,
            dates,
            format,
            dt,
            series,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn dates(&self) -> &[i64] {
        &self.dates
    }

    pub fn date_format(&self) -> DateFormat {
        self.format
    }

    pub fn asset_index(&self, name: &str) -> Option<usize> {
        self.assets.iter().position(|a| a == name)
    }

    /// Calendar index of the asset's first observation.
    pub fn entry(&self, asset: usize) -> usize {
        self.series[asset].entry
    }

    pub fn log_price(&self, t: usize, asset: usize) -> Option<f64> {
        let s = &self.series[asset];
        t.checked_sub(s.entry).and_then(|k| s.log_prices.get(k)).copied()
    }

    pub fn price(&self, t: usize, asset: usize) -> Option<f64> {
        self.log_price(t, asset).map(f64::exp)
    }

    /// Log increment from date `t` to `t + 1`.
    pub fn log_increment(&self, t: usize, asset: usize) -> Option<f64> {
        let s = &self.series[asset];
        t.checked_sub(s.entry).and_then(|k| s.increments.get(k)).copied()
    }

    /// Log prices from the asset's entry to the end.
    pub fn log_prices(&self, asset: usize) -> &[f64] {
        &self.series[asset].log_prices
    }

    /// Log increments from the asset's entry to the end.
    pub fn increments(&self, asset: usize) -> &[f64] {
        &self.series[asset].increments
    }

    pub fn is_active(&self, t: usize, asset: usize) -> bool {
        t >= self.series[asset].entry && t < self.dates.len()
    }

    /// Indices of assets with an observation at `t`, in panel order.
    pub fn active_at(&self, t: usize) -> Vec<usize> {
        (0..self.n_assets()).filter(|&i| self.is_active(t, i)).collect()
    }

    /// True when every asset is observed on every date.
    pub fn is_rectangular(&self) -> bool {
        self.series.iter().all(|s| s.entry == 0)
    }

    pub fn format_date(&self, t: usize) -> String {
        format_date(self.format, self.dates[t])
    }

    pub fn date_index(&self, date: i64) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Shifts one asset's log level by `offset`; increments are untouched.
    pub fn shift_log_level(&mut self, asset: usize, offset: f64) {
        for v in &mut self.series[asset].log_prices {
            *v += offset;
        }
    }

    /// Restricts the calendar to dates `from..=to` (calendar indices).
    ///
    /// Assets entering after `to` are dropped.
    pub fn window(&self, from: usize, to: usize) -> Result<PricePanel> {
        if from > to || to >= self.n_dates() {
            return Err(Error::invalid(format!(
                "window {from}..={to} outside 0..{}",
                self.n_dates()
            )));
        }
        let mut assets = Vec::new();
        let mut parts = Vec::new();
        for (i, s) in self.series.iter().enumerate() {
            if s.entry > to {
                continue;
            }
            let start = s.entry.max(from);
            let k0 = start - s.entry;
            let k1 = to - s.entry;
            assets.push(self.assets[i].clone());
            parts.push((start - from, s.log_prices[k0..=k1].to_vec()));
        }
        // keep the stored increments rather than recomputing them
        let mut out = PricePanel::from_log_prices(
            assets,
            self.dates[from..=to].to_vec(),
            self.format,
            self.dt,
            parts,
        )?;
        let mut j = 0;
        for s in &self.series {
            if s.entry > to {
                continue;
            }
            let start = s.entry.max(from);
            let k0 = start - s.entry;
            let k1 = to - s.entry;
            out.series[j].increments = s.increments[k0..k1].to_vec();
            j += 1;
        }
        Ok(out)
    }

    /// Reorders assets; `order[k]` is the old index placed at position `k`.
    pub fn reorder(&self, order: &[usize]) -> Result<PricePanel> {
        let mut seen = vec![false; self.n_assets()];
        if order.len() != self.n_assets() {
            return Err(Error::DimensionMismatch {
                expected: self.n_assets(),
                got: order.len(),
            });
        }
        for &k in order {
            if k >= seen.len() || std::mem::replace(&mut seen[k], true) {
                return Err(Error::invalid("reorder is not a permutation"));
            }
        }
        Ok(PricePanel {
            assets: order.iter().map(|&k| self.assets[k].clone()).collect(),
            dates: self.dates.clone(),
            format: self.format,
            dt: self.dt,
            series: order.iter().map(|&k| self.series[k].clone()).collect(),
        })
    }

    /// Reads the long-format `date,asset,price` CSV.
    ///
    /// Dates are `YYYY-MM` or plain integers (all rows must agree). Asset
    /// order follows first appearance in the file.
    pub fn read_csv(path: &Path, dt: f64) -> Result<PricePanel> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(file, dt).map_err(|e| match e {
            Error::Csv { source, .. } => Error::Csv {
                path: path.to_path_buf(),
                source,
            },
            Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn read_csv_from<R: std::io::Read>(reader: R, dt: f64) -> Result<PricePanel> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols != ["date", "asset", "price"] {
            return Err(Error::Validation(format!(
                "expected header 'date,asset,price', found '{}'",
                cols.join(",")
            )));
        }
        let mut format = None;
        let mut assets: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut cells: HashMap<(usize, i64), f64> = HashMap::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let row = line + 2;
            let (d, a, p) = (&rec[0], &rec[1], &rec[2]);
            let (fmt, date) = parse_date(d)
                .ok_or_else(|| Error::Validation(format!("line {row}: bad date '{d}'")))?;
            match format {
                None => format = Some(fmt),
                Some(f) if f != fmt => {
                    return Err(Error::Validation(format!(
                        "line {row}: mixed date formats"
                    )))
                }
                _ => {}
            }
            let price: f64 = p
                .parse()
                .map_err(|_| Error::Validation(format!("line {row}: bad price '{p}'")))?;
            if !(price.is_finite() && price > 0.0) {
                return Err(Error::Validation(format!(
                    "line {row}: price must be positive, got {price}"
                )));
            }
            let k = *index.entry(a.to_string()).or_insert_with(|| {
                assets.push(a.to_string());
                assets.len() - 1
            });
            if cells.insert((k, date), price).is_some() {
                return Err(Error::Validation(format!(
                    "line {row}: duplicate row for '{a}' at '{d}'"
                )));
            }
        }
        let format = format.ok_or_else(|| Error::Validation("panel has no rows".into()))?;
        let mut dates: Vec<i64> = cells.keys().map(|&(_, d)| d).collect();
        dates.sort_unstable();
        dates.dedup();
        let columns = (0..assets.len())
            .map(|k| dates.iter().map(|d| cells.get(&(k, *d)).copied()).collect())
            .collect();
        PricePanel::from_prices(assets, dates, format, dt, columns)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_csv_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "date,asset,price")?;
        for t in 0..self.n_dates() {
            let date = self.format_date(t);
            for (i, name) in self.assets.iter().enumerate() {
                if let Some(p) = self.price(t, i) {
                    writeln!(w, "{date},{name},{p}")?;
                }
            }
        }
        Ok(())
    }
}

fn check_header(assets: &[String], dates: &[i64], dt: f64, n_series: usize) -> Result<()> {
    if assets.is_empty() {
        return Err(Error::Validation("panel has no assets".into()));
    }
    if assets.len() != n_series {
        return Err(Error::DimensionMismatch {
            expected: assets.len(),
            got: n_series,
        });
    }
    if dates.is_empty() {
        return Err(Error::Validation("panel has no dates".into()));
    }
    if dates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("dates must be strictly increasing".into()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let mut seen = std::collections::HashSet::new();
    for a in assets {
        if !seen.insert(a.as_str()) {
            return Err(Error::Validation(format!("duplicate asset '{a}'")));
        }
    }
    Ok(())
}

fn parse_date(s: &str) -> Option<(DateFormat, i64)> {
    if let Ok(m) = s.parse::<Month>() {
        return Some((DateFormat::Month, m.index()));
    }
    s.parse::<i64>().ok().map(|v| (DateFormat::Index, v))
}

fn format_date(format: DateFormat, v: i64) -> String {
    match format {
        DateFormat::Month => Month(v).to_string(),
        DateFormat::Index => v.to_string(),
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv {
        path: Default::default(),
        source: e,
    }
}
