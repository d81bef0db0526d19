//! Run configuration: a TOML file of top-level keys, overridden by flags.
//!
//! ```toml
//! seed = 7
//! dt = 0.003968253968253968
//! steps = 200000
//! paths = 1
//! g = [-0.04, -0.02, 0.0, 0.02, 0.04]
//! sigma = [0.2]            # one value means the same at every rank
//! initial_log_prices = [0.0, 0.0, 0.0, 0.0, 0.0]
//! panel = "panel.csv"
//! quotes = "quotes.csv"
//! out = "out"
//! policies = "market;equal;diversity:-0.5;reverse"
//! start = "1977-11"
//! from = "1995-04"          # estimation window, dates as in the panel
//! to = "2018-01"
//! bandwidth = 6.0
//! sims = 1000
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub paths: Option<usize>,
    pub g: Option<Vec<f64>>,
    pub sigma: Option<Vec<f64>>,
    pub initial_log_prices: Option<Vec<f64>>,
    pub panel: Option<PathBuf>,
    pub quotes: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub policies: Option<String>,
    pub start: Option<String>,
    pub from: Option<String>,
    pub to: Option<String>,
    pub bandwidth: Option<f64>,
    pub sims: Option<usize>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),*) => {
        RunConfig { $($field: $top.$field.or($base.$field)),* }
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
    }

    /// Values set in `top` win.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        let base = self;
        overlay!(
            base, top, seed, dt, steps, paths, g, sigma, initial_log_prices, panel, quotes, out, policies, start, from,
            to, bandwidth, sims
        )
    }

    pub fn require<'a, T>(value: &'a Option<T>, key: &str) -> Result<&'a T> {
        value
            .as_ref()
            .ok_or_else(|| Error::Usage(format!("missing required setting '{key}' (flag --{key} or config key)")))
    }
}
