//! Statistical-arbitrage research engine for two-asset pair trading.
//!
//! The pipeline runs from raw exchange candles to evaluated strategies:
//!
//! 1. [`market_data`] parses, resamples and aligns kline series.
//! 2. [`econometrics`] scores candidate pairs by windowed correlation and
//!    Engle–Granger cointegration.
//! 3. [`spread`] maintains the rolling OLS spread, its z-score and zone.
//! 4. [`grid`] tunes ⟨open threshold, close threshold, window⟩ for the
//!    rule-based strategy in [`policy`], backtested by [`backtest`] on top of
//!    the cash/position [`ledger`].
//! 5. [`env`] exposes the timing-only (RL1) and quantity-varying (RL2) trading
//!    MDPs, and [`agent`] trains an advantage actor–critic against them.
//!
//! [`metrics`] turns equity curves and trade blotters into the usual return,
//! risk and activity indicators.
//!
//! Data-parallel loops (pair windows, grid points, seeded trials) go through
//! [`parallel`], which uses rayon under the default `parallel` feature and a
//! sequential fallback without it. Results are identical either way.

pub mod agent;
pub mod backtest;
pub mod econometrics;
pub mod env;
pub mod grid;
pub mod ledger;
pub mod market_data;
pub mod metrics;
pub mod parallel;
pub mod policy;
pub mod spread;
pub mod synthetic;
