//! Close-price backtests of any [`Policy`] over an aligned pair series.
//!
//! The spread engine is fed from the first sample so that it is warm by the
//! trading start; decisions made at bar `k` fill at the close of bar `k`.

use serde::Serialize;
use thiserror::Error;

use crate::ledger::{ActionLog, FeeModel, LedgerError, LegSizing, Portfolio, Quote, TradeRecord};
use crate::market_data::AlignedPairSeries;
use crate::metrics::{EquityCurve, MetricsError};
use crate::policy::{Observation, Policy};
use crate::spread::{RefitMode, SpreadEngine, SpreadError, SpreadObservation, Thresholds};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BacktestError {
    #[error(transparent)]
    Spread(#[from] SpreadError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("series of {len} samples leaves nothing to trade after a {window}-sample warm-up")]
    SeriesTooShort { len: usize, window: usize },
    #[error("trading start {start} precedes the first warm sample {warm}")]
    StartBeforeWarmUp { start: usize, warm: usize },
    #[error("initial cash must be positive")]
    NonPositiveCash,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacktestConfig {
    pub window: usize,
    pub thresholds: Thresholds,
    pub fee: FeeModel,
    pub initial_cash: f64,
    pub sizing: LegSizing,
    pub refit: RefitMode,
    /// First trading index; defaults to `window - 1`, the first warm sample.
    pub start: Option<usize>,
}

impl BacktestConfig {
    pub fn new(window: usize, thresholds: Thresholds, fee: FeeModel) -> Self {
        Self { window, thresholds, fee, initial_cash: 10_000.0, sizing: LegSizing::EqualNotional, refit: RefitMode::Full, start: None }
    }

    pub fn start_index(&self) -> usize {
        self.start.unwrap_or(self.window.saturating_sub(1))
    }
}

/// One trading step as seen by the policy and the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepTrace {
    pub timestamp: i64,
    /// `None` when the window was degenerate and the step was skipped.
    pub observation: Option<SpreadObservation>,
    pub position_before: f64,
    pub target: f64,
    pub position_after: f64,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct BacktestResult {
    pub policy: String,
    pub start_index: usize,
    pub initial_cash: f64,
    /// Starts with the initial cash at the first trading timestamp, then the
    /// post-trade mark-to-market at every later bar.
    pub equity: EquityCurve,
    /// Post-trade position fraction at every trading bar.
    pub positions: Vec<f64>,
    pub trades: Vec<TradeRecord>,
    pub actions: Vec<ActionLog>,
    pub steps: Vec<StepTrace>,
    pub skipped_steps: usize,
    pub total_fees: f64,
    /// The run stopped early because the portfolio value reached zero.
    pub bankrupt: bool,
}

impl BacktestResult {
    pub fn final_value(&self) -> f64 {
        *self.equity.values.last().unwrap_or(&self.initial_cash)
    }

    /// Number of bars between the first and last equity points.
    pub fn trading_intervals(&self) -> usize {
        self.equity.values.len().saturating_sub(1)
    }
}

pub fn run_backtest(series: &AlignedPairSeries, policy: &mut dyn Policy, cfg: &BacktestConfig) -> Result<BacktestResult, BacktestError> {
    if cfg.initial_cash <= 0.0 || !cfg.initial_cash.is_finite() {
        return Err(BacktestError::NonPositiveCash);
    }
    let mut engine = SpreadEngine::with_mode(cfg.window, cfg.thresholds, cfg.refit)?;
    let start = cfg.start_index();
    if start + 1 < cfg.window {
        return Err(BacktestError::StartBeforeWarmUp { start, warm: cfg.window - 1 });
    }
    let n = series.len();
    if start >= n {
        return Err(BacktestError::SeriesTooShort { len: n, window: cfg.window });
    }

    let mut book = Portfolio::new(cfg.initial_cash, cfg.fee).with_sizing(cfg.sizing);
    let cap = n - start;
    let mut timestamps = Vec::with_capacity(cap);
    let mut values = Vec::with_capacity(cap);
    let mut positions = Vec::with_capacity(cap);
    let mut steps = Vec::with_capacity(cap);
    let mut trades = Vec::new();
    let mut actions = Vec::new();
    let mut skipped = 0;
    let mut bankrupt = false;

    for k in 0..n {
        let (t, pi, pj) = (series.timestamps[k], series.prices_i[k], series.prices_j[k]);
        // Degenerate windows surface as errors here; they only skip the step.
        let obs = engine.advance(t, pi, pj).ok().flatten();
        if k < start {
            continue;
        }
        let before = match book.position_fraction(pi, pj) {
            Ok(p) => p,
            Err(LedgerError::BankruptPortfolio(_)) => {
                bankrupt = true;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let mut target = before;
        match obs {
            Some(o) => {
                target = policy.decide(&Observation::new(before, o.z, o.zone)).target;
                let beta = engine.model().map_or(1.0, |m| m.beta1);
                let quote = Quote { timestamp: t, price_i: pi, price_j: pj, hedge_ratio: beta };
                match book.execute(target, quote) {
                    Ok(report) => {
                        if report.executed_delta != 0.0 {
                            actions.push(report.log);
                        }
                        trades.extend(report.record);
                    }
                    Err(LedgerError::BankruptPortfolio(_)) => {
                        bankrupt = true;
                        break;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            None => skipped += 1,
        }
        let value = book.mark_to_market(pi, pj);
        let after = if value > 0.0 { book.position_fraction(pi, pj)? } else { 0.0 };
        timestamps.push(t);
        values.push(if k == start { cfg.initial_cash } else { value });
        positions.push(after);
        steps.push(StepTrace { timestamp: t, observation: obs, position_before: before, target, position_after: after, value });
        if value <= 0.0 {
            bankrupt = true;
            break;
        }
    }

    // The first point is the pre-trade cash; any opening fee shows up at the
    // next bar. A run that ends on the opening bar records its value here.
    if values.len() == 1 {
        values.push(steps[0].value);
        timestamps.push(steps[0].timestamp);
    }

    Ok(BacktestResult {
        policy: policy.name().to_string(),
        start_index: start,
        initial_cash: cfg.initial_cash,
        equity: EquityCurve::new(timestamps, values, series.interval.per_year())?,
        positions,
        trades,
        actions,
        steps,
        skipped_steps: skipped,
        total_fees: book.total_fees(),
        bankrupt,
    })
}
