//! Deterministic synthetic futures quotes for tests and demos.
//!
//! Fourteen commodities with staggered first months and three expiry
//! schedules. Log futures prices follow `s(t) + c·h + κ·h²` for horizon `h`,
//! where the spot `s` mean-reverts around its starting level. One commodity
//! has a flat contango of 0.03 per month, so its carry is exactly −0.03. One
//! held contract is left unquoted the following month.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::futures::FuturesQuote;
use crate::month::Month;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expiries {
    /// Every month, quoted out to four months.
    Monthly,
    /// Odd calendar months, quoted out to six months.
    BiMonthly,
    /// March, June, September, December, quoted out to nine months.
    Quarterly,
}

impl Expiries {
    fn horizons(self, t: Month) -> Vec<i64> {
        let (every, reach) = match self {
            Expiries::Monthly => return (0..=4).collect(),
            Expiries::BiMonthly => (2, 6),
            Expiries::Quarterly => (3, 9),
        };
        (0..=reach)
            .filter(|h| {
                let m = t.plus(*h).month() as i64;
                match every {
                    2 => m % 2 == 1,
                    _ => m % 3 == 0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct FixtureCommodity {
    pub name: &'static str,
    pub start_offset: i64,
    pub expiries: Expiries,
    pub slope: f64,
    pub curvature: f64,
}

pub const CONTANGO_COMMODITY: &str = "flax";
pub const CONTANGO_SLOPE: f64 = 0.03;
/// The held two-month contract of this commodity is unquoted one month later.
pub const GAP_COMMODITY: &str = "hops";
pub const FIRST_MONTH: Month = Month(1990 * 12);
pub const LAST_MONTH: Month = Month(2004 * 12 + 11);
pub const SEED: u64 = 1968;

pub fn gap_month() -> Month {
    Month::new(1999, 5)
}

pub fn commodities() -> Vec<FixtureCommodity> {
    use Expiries::*;
    let c = |name, start_offset, expiries, slope, curvature| FixtureCommodity {
        name,
        start_offset,
        expiries,
        slope,
        curvature,
    };
    vec![
        c("barley", 0, Monthly, 0.004, 0.0),
        c("canola", 0, BiMonthly, -0.006, 0.0005),
        c(CONTANGO_COMMODITY, 0, Monthly, CONTANGO_SLOPE, 0.0),
        c(GAP_COMMODITY, 3, Monthly, 0.01, -0.0004),
        c("millet", 6, Quarterly, 0.008, 0.0002),
        c("rye", 9, BiMonthly, -0.002, 0.0),
        c("sorghum", 12, Monthly, 0.012, 0.0),
        c("teff", 18, Quarterly, -0.01, 0.0003),
        c("tin", 24, Monthly, 0.002, -0.0002),
        c("zinc", 30, BiMonthly, 0.005, 0.0),
        c("cobalt", 36, Quarterly, 0.015, -0.0005),
        c("nickel", 42, Monthly, -0.004, 0.0001),
        c("propane", 48, BiMonthly, 0.02, 0.0),
        c("ethanol", 54, Quarterly, 0.0, 0.0004),
    ]
}

/// Quotes in commodity order, then observation month, then expiry.
pub fn synthetic_quotes() -> Vec<FuturesQuote> {
    let mut quotes = Vec::new();
    for (k, c) in commodities().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        rng.set_stream(k as u64);
        let anchor = rng.random_range(2.5..5.5);
        let mut s: f64 = anchor;
        let first = FIRST_MONTH.plus(c.start_offset);
        for t in (first.index()..=LAST_MONTH.index()).map(Month) {
            if t > first {
                let z: f64 = rng.sample(StandardNormal);
                s += -0.03 * (s - anchor) + 0.06 * z;
            }
            for h in c.expiries.horizons(t) {
                if c.name == GAP_COMMODITY && t == gap_month().plus(1) && h == 1 {
                    continue;
                }
                let hf = h as f64;
                quotes.push(FuturesQuote {
                    commodity: c.name.to_string(),
                    obs_month: t,
                    expiry_month: t.plus(h),
                    price: (s + c.slope * hf + c.curvature * hf * hf).exp(),
                });
            }
        }
    }
    quotes
}
