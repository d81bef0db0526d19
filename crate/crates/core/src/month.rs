use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Calendar month as a count of months since January of year 0.
///
/// All "two-month" futures arithmetic is integral on this index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Month(pub i64);

impl Month {
    pub fn new(year: i64, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month out of range: {month}");
        Month(year * 12 + i64::from(month) - 1)
    }

    pub fn year(self) -> i64 {
        self.0.div_euclid(12)
    }

    /// 1-based calendar month.
    pub fn month(self) -> u32 {
        (self.0.rem_euclid(12) + 1) as u32
    }

    pub fn index(self) -> i64 {
        self.0
    }

    pub fn plus(self, months: i64) -> Self {
        Month(self.0 + months)
    }
}

impl std::ops::Sub for Month {
    type Output = i64;
    fn sub(self, rhs: Month) -> i64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

impl FromStr for Month {
    type Err = Error;

    /// Parses `YYYY-MM`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::Validation(format!("invalid month '{s}', expected YYYY-MM"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: i64 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(Month::new(year, month))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_roundtrip() {
        let m: Month = "1977-11".parse().unwrap();
        assert_eq!(m, Month::new(1977, 11));
        assert_eq!(m.to_string(), "1977-11");
        assert_eq!(m.plus(2).to_string(), "1978-01");
        assert_eq!(Month::new(1972, 11).plus(60), m);
    }

    #[test]
    fn rejects_malformed() {
        for s in ["1977-13", "77-11", "1977/11", "1977-1", ""] {
            assert!(s.parse::<Month>().is_err(), "{s}");
        }
    }
}
