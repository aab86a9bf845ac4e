//! Exhaustive ⟨open threshold, close threshold, window⟩ search for the
//! threshold rule, ranked by total compound return.

use std::cmp::Ordering;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backtest::{run_backtest, BacktestConfig};
use crate::ledger::{FeeModel, LegSizing};
use crate::market_data::AlignedPairSeries;
use crate::parallel::{self, Execution};
use crate::policy::GatevPolicy;
use crate::spread::{RefitMode, Thresholds};

/// The parameter set reported as most profitable for the original formation
/// period, kept for runs that want to skip tuning.
pub const REPORTED_SELECTION: (f64, f64, usize) = (1.8, 0.4, 900);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid has no valid (open > close) combination")]
    EmptyGrid,
    #[error("grid lists must be non-empty, strictly ascending and positive")]
    BadSpec,
    #[error("starting value must be positive, got {0}")]
    NonPositiveStart(f64),
    #[error("period count must be positive, got {0}")]
    NonPositivePeriods(f64),
    #[error("no grid point completed")]
    NoSuccessfulPoint,
    #[error("series of {len} samples is not longer than the largest window {window}")]
    SeriesTooShort { len: usize, window: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub open_thresholds: Vec<f64>,
    pub close_thresholds: Vec<f64>,
    pub windows: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            open_thresholds: (15..=40).map(|k| k as f64 / 10.0).collect(),
            close_thresholds: vec![0.2, 0.3, 0.4, 0.5, 1.0, 2.0],
            windows: vec![500, 700, 800, 900, 1000, 2000],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), GridError> {
        fn ascending<T: PartialOrd + Copy>(xs: &[T], zero: T) -> bool {
            !xs.is_empty() && xs[0] > zero && xs.windows(2).all(|w| w[0] < w[1])
        }
        let finite = self.open_thresholds.iter().chain(&self.close_thresholds).all(|x| x.is_finite());
        if finite && ascending(&self.open_thresholds, 0.0) && ascending(&self.close_thresholds, 0.0) && ascending(&self.windows, 0) {
            Ok(())
        } else {
            Err(GridError::BadSpec)
        }
    }

    /// Every combination with OT > CT, in (W, OT, CT) loop order.
    pub fn combinations(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::new();
        for &w in &self.windows {
            for &ot in &self.open_thresholds {
                for &ct in &self.close_thresholds {
                    if ot > ct {
                        out.push((ot, ct, w));
                    }
                }
            }
        }
        out
    }

    pub fn max_window(&self) -> usize {
        self.windows.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub open: f64,
    pub close: f64,
    pub window: usize,
    /// Total compound return in percent; NaN for failed points.
    pub rtot: f64,
    pub trades: usize,
    pub final_value: f64,
    pub status: PointStatus,
}

impl GridPoint {
    pub fn is_ok(&self) -> bool {
        self.status == PointStatus::Ok
    }
}

/// `((V_end / V_start)^(1/t) - 1) · 100`.
pub fn rtot(v_start: f64, v_end: f64, t: f64) -> Result<f64, GridError> {
    if v_start <= 0.0 || !v_start.is_finite() {
        return Err(GridError::NonPositiveStart(v_start));
    }
    if t <= 0.0 || !t.is_finite() {
        return Err(GridError::NonPositivePeriods(t));
    }
    Ok(((v_end / v_start).powf(1.0 / t) - 1.0) * 100.0)
}

/// rtot descending, then smaller W, larger OT, larger CT.
pub fn rank_order(a: &GridPoint, b: &GridPoint) -> Ordering {
    b.rtot
        .total_cmp(&a.rtot)
        .then(a.window.cmp(&b.window))
        .then(b.open.total_cmp(&a.open))
        .then(b.close.total_cmp(&a.close))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub fee: FeeModel,
    pub initial_cash: f64,
    pub sizing: LegSizing,
    pub refit: RefitMode,
    pub execution: Execution,
}

impl GridConfig {
    pub fn new(fee: FeeModel) -> Self {
        Self { fee, initial_cash: 10_000.0, sizing: LegSizing::EqualNotional, refit: RefitMode::Full, execution: Execution::Parallel }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    /// Successful points in rank order.
    pub ranked: Vec<GridPoint>,
    /// Points whose backtest failed, in evaluation order.
    pub failed: Vec<GridPoint>,
}

fn evaluate(series: &AlignedPairSeries, (open, close, window): (f64, f64, usize), start: usize, cfg: &GridConfig) -> GridPoint {
    let failed = |reason: String| GridPoint { open, close, window, rtot: f64::NAN, trades: 0, final_value: f64::NAN, status: PointStatus::Failed(reason) };
    let thresholds = match Thresholds::new(open, close) {
        Ok(t) => t,
        Err(e) => return failed(e.to_string()),
    };
    let bt = BacktestConfig { window, thresholds, fee: cfg.fee, initial_cash: cfg.initial_cash, sizing: cfg.sizing, refit: cfg.refit, start: Some(start) };
    let result = match run_backtest(series, &mut GatevPolicy, &bt) {
        Ok(r) => r,
        Err(e) => return failed(e.to_string()),
    };
    if result.skipped_steps == result.steps.len() {
        return failed("every trading window was degenerate".into());
    }
    match rtot(cfg.initial_cash, result.final_value(), result.trading_intervals() as f64) {
        Ok(r) => GridPoint { open, close, window, rtot: r, trades: result.trades.len(), final_value: result.final_value(), status: PointStatus::Ok },
        Err(e) => failed(e.to_string()),
    }
}

/// Backtests the threshold rule at every valid grid point. All points trade
/// the same bars, starting once the largest window is warm.
pub fn grid_search(series: &AlignedPairSeries, spec: &GridSpec, cfg: &GridConfig) -> Result<GridOutcome, GridError> {
    spec.validate()?;
    let combos = spec.combinations();
    if combos.is_empty() {
        return Err(GridError::EmptyGrid);
    }
    let max_w = spec.max_window();
    if series.len() <= max_w {
        return Err(GridError::SeriesTooShort { len: series.len(), window: max_w });
    }
    let points = parallel::map(cfg.execution, &combos, |&c| evaluate(series, c, max_w - 1, cfg));
    let (mut ranked, failed): (Vec<_>, Vec<_>) = points.into_iter().partition(GridPoint::is_ok);
    ranked.sort_by(rank_order);
    Ok(GridOutcome { ranked, failed })
}

pub fn select_best(points: &[GridPoint]) -> Result<&GridPoint, GridError> {
    points.iter().filter(|p| p.is_ok()).min_by(|a, b| rank_order(a, b)).ok_or(GridError::NoSuccessfulPoint)
}

/// `open,close,window,rtot,trades,status`, ranked points first.
pub fn write_grid_csv(mut out: impl Write, outcome: &GridOutcome) -> io::Result<()> {
    writeln!(out, "open,close,window,rtot,trades,status")?;
    for p in outcome.ranked.iter().chain(&outcome.failed) {
        let status = match &p.status {
            PointStatus::Ok => "ok".to_string(),
            PointStatus::Failed(reason) => format!("failed: {}", reason.replace(',', ";")),
        };
        writeln!(out, "{},{},{},{},{},{}", p.open, p.close, p.window, p.rtot, p.trades, status)?;
    }
    Ok(())
}
