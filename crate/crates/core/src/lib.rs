//! Stochastic portfolio theory toolkit: rank-based market simulation,
//! portfolio weight rules, return decompositions, first-order model
//! estimation, and a commodity-futures backtest pipeline.

pub mod backtest;
pub mod cli;
pub mod decomposition;
pub mod error;
pub mod estimation;
pub mod exec;
pub mod fgp;
pub mod first_order;
pub mod fixture;
pub mod futures;
pub mod market;
pub mod month;
pub mod panel;
pub mod policy;

pub use error::{Error, Result};
pub use exec::Execution;
pub use market::{CovarianceEstimate, RankState, WeightVector};
pub use panel::PricePanel;
