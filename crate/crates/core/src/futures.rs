//! Commodity futures ingestion.
//!
//! Quotes become implied two-month prices via carry factors, then a panel
//! normalized at each entry. Held-contract carry and the eligibility
//! calendar are derived from the same quotes.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::month::Month;
use crate::panel::{DateFormat, PricePanel};

/// Months a commodity waits after its first quote before it can be held.
pub const WAIT_MONTHS: i64 = 60;
/// Commodities required before portfolios are formed.
pub const MIN_ELIGIBLE: usize = 10;
/// Target horizon of the implied series, in months.
pub const TARGET_HORIZON: i64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuturesQuote {
    pub commodity: String,
    pub obs_month: Month,
    pub expiry_month: Month,
    pub price: f64,
}

/// Futures prices of one commodity at one observation month, keyed by
/// horizon `ν = expiry − obs` in months.
#[derive(Debug, Clone, PartialEq)]
pub struct TermStructure<'a> {
    pub commodity: &'a str,
    pub obs: Month,
    pub prices: &'a BTreeMap<i64, f64>,
}

/// Carry factor and the horizons it was computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarryFactor {
    pub delta: f64,
    pub nu1: i64,
    pub nu2: i64,
}

/// Horizons ordered by closeness to two months, ties to the shorter one.
fn by_closeness<'a>(horizons: impl Iterator<Item = &'a i64>) -> Vec<i64> {
    let mut v: Vec<i64> = horizons.copied().collect();
    v.sort_by_key(|&nu| ((nu - TARGET_HORIZON).abs(), nu));
    v
}

/// `Δ = (log F(t,t+ν₂) − log F(t,t+ν₁)) / (ν₂ − ν₁)` over the two quoted
/// horizons other than two that are closest to two.
pub fn carry_factor(ts: &TermStructure) -> Result<CarryFactor> {
    let candidates = by_closeness(ts.prices.keys().filter(|&&nu| nu != TARGET_HORIZON));
    if candidates.len() < 2 {
        return Err(Error::MissingCarry {
            commodity: ts.commodity.to_string(),
            month: ts.obs.to_string(),
            reason: format!("{} contract(s) besides the two-month one; need two", candidates.len()),
        });
    }
    let (nu1, nu2) = (candidates[0].min(candidates[1]), candidates[0].max(candidates[1]));
    let delta = (ts.prices[&nu2].ln() - ts.prices[&nu1].ln()) / (nu2 - nu1) as f64;
    Ok(CarryFactor { delta, nu1, nu2 })
}

/// `F̃(t,t+2) = e^{(2−ν)Δ} F(t,t+ν)` for the quoted horizon closest to two.
/// A quoted two-month contract is returned unchanged and needs no `Δ`.
pub fn implied_two_month_price(ts: &TermStructure, delta: Option<f64>) -> Result<f64> {
    let nu = *by_closeness(ts.prices.keys()).first().ok_or_else(|| Error::MissingMonth {
        commodity: ts.commodity.to_string(),
        month: ts.obs.to_string(),
    })?;
    let price = ts.prices[&nu];
    if nu == TARGET_HORIZON {
        return Ok(price);
    }
    let delta = delta.ok_or_else(|| Error::MissingCarry {
        commodity: ts.commodity.to_string(),
        month: ts.obs.to_string(),
        reason: format!("no two-month contract and no carry factor to extrapolate the {nu}-month price"),
    })?;
    Ok(((TARGET_HORIZON - nu) as f64 * delta).exp() * price)
}

/// All quotes, indexed by commodity, then observation month, then horizon.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuoteBook {
    names: Vec<String>,
    curves: Vec<BTreeMap<Month, BTreeMap<i64, f64>>>,
}

#[derive(Debug, Deserialize)]
struct QuoteRow {
    commodity: String,
    obs_month: String,
    expiry_month: String,
    price: f64,
}

impl QuoteBook {
    /// Commodities are kept in order of first appearance.
    pub fn from_quotes(quotes: impl IntoIterator<Item = FuturesQuote>) -> Result<Self> {
        let mut book = QuoteBook::default();
        let mut index: HashMap<String, usize> = HashMap::new();
        for q in quotes {
            if !(q.price.is_finite() && q.price > 0.0) {
                return Err(Error::Validation(format!(
                    "{} {} -> {}: price {} is not positive",
                    q.commodity, q.obs_month, q.expiry_month, q.price
                )));
            }
            if q.expiry_month < q.obs_month {
                return Err(Error::Validation(format!(
                    "{} observed {} with expiry {} in the past",
                    q.commodity, q.obs_month, q.expiry_month
                )));
            }
            let i = *index.entry(q.commodity.clone()).or_insert_with(|| {
                book.names.push(q.commodity.clone());
                book.curves.push(BTreeMap::new());
                book.names.len() - 1
            });
            let slot = book.curves[i].entry(q.obs_month).or_default();
            if slot.insert(q.expiry_month - q.obs_month, q.price).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate quote {} {} -> {}",
                    q.commodity, q.obs_month, q.expiry_month
                )));
            }
        }
        Ok(book)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(file).map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Reads `commodity,obs_month,expiry_month,price` with `YYYY-MM` months.
    pub fn read_csv_from<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut quotes = Vec::new();
        for (line, row) in rdr.deserialize::<QuoteRow>().enumerate() {
            let row = row.map_err(|e| Error::Validation(format!("row {}: {e}", line + 2)))?;
            quotes.push(FuturesQuote {
                commodity: row.commodity,
                obs_month: row.obs_month.parse()?,
                expiry_month: row.expiry_month.parse()?,
                price: row.price,
            });
        }
        Self::from_quotes(quotes)
    }

    pub fn write_csv_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "commodity,obs_month,expiry_month,price")?;
        for (name, curve) in self.names.iter().zip(&self.curves) {
            for (obs, prices) in curve {
                for (nu, p) in prices {
                    writeln!(w, "{name},{obs},{},{p}", obs.plus(*nu))?;
                }
            }
        }
        Ok(())
    }

    pub fn commodities(&self) -> &[String] {
        &self.names
    }

    pub fn commodity_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn term_structure(&self, commodity: usize, obs: Month) -> Option<TermStructure<'_>> {
        self.curves[commodity].get(&obs).map(|prices| TermStructure {
            commodity: &self.names[commodity],
            obs,
            prices,
        })
    }

    /// `F(obs, expiry)` if quoted.
    pub fn price(&self, commodity: usize, obs: Month, expiry: Month) -> Option<f64> {
        self.curves[commodity].get(&obs)?.get(&(expiry - obs)).copied()
    }

    pub fn first_month(&self, commodity: usize) -> Option<Month> {
        self.curves[commodity].keys().next().copied()
    }

    pub fn last_month(&self, commodity: usize) -> Option<Month> {
        self.curves[commodity].keys().next_back().copied()
    }

    /// Multiplies every quote of one commodity by `factor`.
    pub fn scale(&mut self, commodity: usize, factor: f64) {
        for prices in self.curves[commodity].values_mut() {
            for p in prices.values_mut() {
                *p *= factor;
            }
        }
    }
}

/// Monthly implied two-month prices of one commodity.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpliedSeries {
    pub commodity: String,
    pub entry_month: Month,
    pub implied: Vec<f64>,
    /// `Δ(t)` where two admissible contracts were quoted.
    pub carry_factor: Vec<Option<f64>>,
    pub normalized: bool,
}

impl ImpliedSeries {
    pub fn last_month(&self) -> Month {
        self.entry_month.plus(self.implied.len() as i64 - 1)
    }
}

/// Builds the implied series from the first to the last quoted month. Every
/// month in between must have at least one contract.
pub fn implied_series(book: &QuoteBook, commodity: usize) -> Result<ImpliedSeries> {
    let name = &book.names[commodity];
    let (first, last) = match (book.first_month(commodity), book.last_month(commodity)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Validation(format!("no quotes for {name}"))),
    };
    let mut implied = Vec::with_capacity((last - first + 1) as usize);
    let mut factors = Vec::with_capacity(implied.capacity());
    for k in 0..=(last - first) {
        let t = first.plus(k);
        let ts = book.term_structure(commodity, t).ok_or_else(|| Error::MissingMonth {
            commodity: name.clone(),
            month: t.to_string(),
        })?;
        let delta = carry_factor(&ts).ok().map(|c| c.delta);
        implied.push(implied_two_month_price(&ts, delta)?);
        factors.push(delta);
    }
    Ok(ImpliedSeries {
        commodity: name.clone(),
        entry_month: first,
        implied,
        carry_factor: factors,
        normalized: false,
    })
}

pub fn all_implied_series(book: &QuoteBook) -> Result<Vec<ImpliedSeries>> {
    (0..book.commodities().len()).map(|i| implied_series(book, i)).collect()
}

/// Sets the earliest cohort to log price 0 and each later entrant to the
/// mean log price of the commodities already present at its entry month.
/// Log increments are carried over unchanged.
pub fn normalize_entries(series: &[ImpliedSeries]) -> Result<PricePanel> {
    let base = series
        .iter()
        .map(|s| s.entry_month)
        .min()
        .ok_or_else(|| Error::invalid("no series to normalize"))?;
    let end = series[0].last_month();
    if let Some(s) = series.iter().find(|s| s.last_month() != end) {
        return Err(Error::Validation(format!(
            "{} ends {} but {} ends {}; all series must share the last month",
            s.commodity,
            s.last_month(),
            series[0].commodity,
            end
        )));
    }
    let increments: Vec<Vec<f64>> = series
        .iter()
        .map(|s| s.implied.windows(2).map(|w| w[1].ln() - w[0].ln()).collect())
        .collect();
    let mut entrants: Vec<usize> = (0..series.len()).collect();
    entrants.sort_by_key(|&i| (series[i].entry_month, i));
    // log level of each placed series along the full calendar
    let mut levels: Vec<Option<Vec<f64>>> = vec![None; series.len()];
    let mut bases = vec![0.0; series.len()];
    for &i in &entrants {
        let entry = series[i].entry_month;
        let offset = (entry - base) as usize;
        let incumbents: Vec<f64> = entrants
            .iter()
            .filter(|&&j| series[j].entry_month < entry)
            .map(|&j| levels[j].as_ref().expect("placed earlier")[offset - (series[j].entry_month - base) as usize])
            .collect();
        let start = if entry == base {
            0.0
        } else if incumbents.is_empty() {
            unreachable!("a later entrant always has an incumbent")
        } else {
            incumbents.iter().sum::<f64>() / incumbents.len() as f64
        };
        let mut path = Vec::with_capacity(increments[i].len() + 1);
        let mut level = start;
        path.push(level);
        for d in &increments[i] {
            level += d;
            path.push(level);
        }
        bases[i] = start;
        levels[i] = Some(path);
    }
    let dates: Vec<i64> = (base.index()..=end.index()).collect();
    let parts = series
        .iter()
        .zip(increments)
        .zip(bases)
        .map(|((s, inc), b)| ((s.entry_month - base) as usize, b, inc))
        .collect();
    PricePanel::from_increments(
        series.iter().map(|s| s.commodity.clone()).collect(),
        dates,
        DateFormat::Month,
        1.0 / 12.0,
        parts,
    )
}

/// One month of holding a futures contract.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldCarry {
    pub expiry: Month,
    /// `log F(t+1,τ) − log F(t,τ)`.
    pub futures_log_return: f64,
    /// `log X(t+1) − log X(t)`.
    pub implied_log_return: f64,
    /// `C(t) dt`.
    pub carry: f64,
}

/// The contract held over `[t, t+1]`: the two-month contract if quoted,
/// otherwise the nearest expiry beyond two months.
pub fn held_expiry(book: &QuoteBook, commodity: usize, t: Month) -> Option<Month> {
    let ts = book.term_structure(commodity, t)?;
    ts.prices.range(TARGET_HORIZON..).next().map(|(nu, _)| t.plus(*nu))
}

/// Carry over `[t, t+1]`: the held contract's log return minus the implied
/// series' log change. The same contract prices both legs.
pub fn held_contract_and_carry(book: &QuoteBook, panel: &PricePanel, commodity: usize, t: Month) -> Result<HeldCarry> {
    let name = &book.names[commodity];
    let missing = |reason: String| Error::MissingCarry {
        commodity: name.clone(),
        month: t.to_string(),
        reason,
    };
    let asset = panel
        .asset_index(name)
        .ok_or_else(|| missing("commodity is not in the implied panel".into()))?;
    let ti = panel
        .date_index(t.index())
        .ok_or_else(|| missing("month is outside the implied panel".into()))?;
    let implied_log_return = panel
        .log_increment(ti, asset)
        .ok_or_else(|| missing("implied price undefined at this month or the next".into()))?;
    let expiry = held_expiry(book, commodity, t).ok_or_else(|| missing("no contract at or beyond two months".into()))?;
    let before = book.price(commodity, t, expiry).expect("held contract is quoted");
    let after = book
        .price(commodity, t.plus(1), expiry)
        .ok_or_else(|| missing(format!("held contract {expiry} is not quoted at {}", t.plus(1))))?;
    let futures_log_return = after.ln() - before.ln();
    Ok(HeldCarry {
        expiry,
        futures_log_return,
        implied_log_return,
        carry: futures_log_return - implied_log_return,
    })
}

/// Per-commodity, per-period carry aligned with the panel: `carry[i][t]`
/// covers `[t, t+1]` and is `None` where undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct CarryTable {
    pub carry: Vec<Vec<Option<f64>>>,
    /// `(commodity, month, reason)` for each missing value inside a series.
    pub flagged: Vec<(String, Month, String)>,
}

impl CarryTable {
    pub fn get(&self, asset: usize, t: usize) -> Option<f64> {
        self.carry[asset].get(t).copied().flatten()
    }

    /// Zero carry everywhere a log increment exists.
    pub fn zeros(panel: &PricePanel) -> Self {
        let carry = (0..panel.n_assets())
            .map(|i| {
                (0..panel.n_dates().saturating_sub(1))
                    .map(|t| panel.log_increment(t, i).map(|_| 0.0))
                    .collect()
            })
            .collect();
        CarryTable {
            carry,
            flagged: Vec::new(),
        }
    }
}

pub fn carry_table(book: &QuoteBook, panel: &PricePanel) -> Result<CarryTable> {
    let steps = panel.n_dates().saturating_sub(1);
    let mut carry = vec![vec![None; steps]; panel.n_assets()];
    let mut flagged = Vec::new();
    for (asset, row) in carry.iter_mut().enumerate() {
        let c = book.commodity_index(&panel.assets()[asset]).ok_or_else(|| {
            Error::Validation(format!("no quotes for panel asset '{}'", panel.assets()[asset]))
        })?;
        for (t, slot) in row.iter_mut().enumerate() {
            if panel.log_increment(t, asset).is_none() {
                continue;
            }
            let month = Month(panel.dates()[t]);
            match held_contract_and_carry(book, panel, c, month) {
                Ok(h) => *slot = Some(h.carry),
                Err(Error::MissingCarry { commodity, month: _, reason }) => {
                    warn!("{commodity} {month}: {reason}; position dropped for the month");
                    flagged.push((commodity, month, reason));
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(CarryTable { carry, flagged })
}

/// Inclusion months and the first month with enough eligible commodities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibilityCalendar {
    pub inclusion: Vec<(String, Month)>,
    pub start: Option<Month>,
}

impl EligibilityCalendar {
    pub fn inclusion_month(&self, commodity: &str) -> Option<Month> {
        self.inclusion.iter().find(|(n, _)| n == commodity).map(|(_, m)| *m)
    }

    pub fn is_eligible(&self, commodity: &str, t: Month) -> bool {
        self.inclusion_month(commodity).is_some_and(|m| m <= t)
    }

    pub fn eligible_count(&self, t: Month) -> usize {
        self.inclusion.iter().filter(|(_, m)| *m <= t).count()
    }
}

/// Each commodity is included [`WAIT_MONTHS`] after its first data month;
/// portfolios start once [`MIN_ELIGIBLE`] are included.
pub fn eligibility(starts: &[(String, Month)]) -> EligibilityCalendar {
    let inclusion: Vec<(String, Month)> = starts.iter().map(|(n, m)| (n.clone(), m.plus(WAIT_MONTHS))).collect();
    let mut months: Vec<Month> = inclusion.iter().map(|(_, m)| *m).collect();
    months.sort();
    let start = months.get(MIN_ELIGIBLE - 1).copied();
    EligibilityCalendar { inclusion, start }
}

/// First-data months of every panel asset.
pub fn panel_start_months(panel: &PricePanel) -> Result<Vec<(String, Month)>> {
    if panel.date_format() != DateFormat::Month {
        return Err(Error::Validation("eligibility needs a monthly calendar".into()));
    }
    Ok((0..panel.n_assets())
        .map(|i| (panel.assets()[i].clone(), Month(panel.dates()[panel.entry(i)])))
        .collect())
}

#[derive(Debug, Deserialize)]
struct StartRow {
    commodity: String,
    start_month: String,
}

/// Reads `commodity,start_month` metadata.
pub fn read_start_months(path: &Path) -> Result<Vec<(String, Month)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    rdr.deserialize::<StartRow>()
        .map(|row| {
            let row = row.map_err(|e| Error::Csv {
                path: path.to_path_buf(),
                source: e,
            })?;
            Ok((row.commodity, row.start_month.parse()?))
        })
        .collect()
}
