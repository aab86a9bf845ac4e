//! Return, risk and activity indicators for equity curves and trade blotters.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::ledger::TradeRecord;

pub const MS_PER_YEAR: f64 = 365.25 * 86_400.0 * 1000.0;
const DEGENERATE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("equity curve spans no time or has non-positive endpoints")]
    DegenerateSpan,
    #[error("excess returns have zero volatility")]
    ZeroVolatility,
    #[error("need at least {0} observations")]
    TooFewObservations(usize),
    #[error("equity curve timestamps and values differ in length")]
    LengthMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityCurve {
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
    /// Bars per year, e.g. 525 960 for 1m bars over 365.25 days.
    pub interval_per_year: f64,
}

impl EquityCurve {
    pub fn new(timestamps: Vec<i64>, values: Vec<f64>, interval_per_year: f64) -> Result<Self, MetricsError> {
        if timestamps.len() != values.len() {
            return Err(MetricsError::LengthMismatch);
        }
        Ok(Self { timestamps, values, interval_per_year })
    }

    /// Simple per-interval returns.
    pub fn returns(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
    }

    pub fn cumulative_return(&self) -> f64 {
        match (self.values.first(), self.values.last()) {
            (Some(a), Some(b)) if *a > 0.0 => (b / a - 1.0) * 100.0,
            _ => 0.0,
        }
    }

    /// Percentage drawdown from the running peak at each point (≤ 0).
    pub fn drawdowns(&self) -> Vec<f64> {
        let mut peak = f64::NEG_INFINITY;
        self.values
            .iter()
            .map(|&v| {
                peak = peak.max(v);
                (v / peak - 1.0) * 100.0
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Annual risk-free rate.
    pub risk_free_rate: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { risk_free_rate: 0.055 }
    }
}

/// Compound annual growth rate in percent, with calendar time in 365.25-day
/// years.
pub fn cagr(curve: &EquityCurve) -> Result<f64, MetricsError> {
    let (Some(&t0), Some(&tn)) = (curve.timestamps.first(), curve.timestamps.last()) else {
        return Err(MetricsError::DegenerateSpan);
    };
    let (v0, vn) = (curve.values[0], curve.values[curve.values.len() - 1]);
    if tn <= t0 || v0 <= 0.0 || vn <= 0.0 {
        return Err(MetricsError::DegenerateSpan);
    }
    let years = (tn - t0) as f64 / MS_PER_YEAR;
    Ok(((vn / v0).powf(1.0 / years) - 1.0) * 100.0)
}

/// Per-interval risk-free return equivalent to `annual` compounded
/// `interval_per_year` times.
pub fn deannualize(annual: f64, interval_per_year: f64) -> f64 {
    (1.0 + annual).powf(1.0 / interval_per_year) - 1.0
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Annualised Sharpe ratio of per-interval excess returns (sample standard
/// deviation, scaled by √interval_per_year).
pub fn sharpe(curve: &EquityCurve, cfg: &MetricsConfig) -> Result<f64, MetricsError> {
    sharpe_from_returns(&curve.returns(), curve.interval_per_year, cfg)
}

pub fn sharpe_from_returns(returns: &[f64], interval_per_year: f64, cfg: &MetricsConfig) -> Result<f64, MetricsError> {
    if returns.len() < 2 {
        return Err(MetricsError::TooFewObservations(2));
    }
    let rf = deannualize(cfg.risk_free_rate, interval_per_year);
    let excess: Vec<f64> = returns.iter().map(|r| r - rf).collect();
    let m = mean(&excess);
    if m.abs() <= DEGENERATE {
        return Ok(0.0);
    }
    let sd = sample_std(&excess);
    if sd <= DEGENERATE {
        return Err(MetricsError::ZeroVolatility);
    }
    Ok(m / sd * interval_per_year.sqrt())
}

fn ser_ratio<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str("inf")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeStats {
    pub total_actions: usize,
    pub won_actions: usize,
    pub lost_actions: usize,
    /// `won / lost`; `+∞` when nothing was lost.
    #[serde(serialize_with = "ser_ratio")]
    pub win_loss_ratio: f64,
    pub max_win: f64,
    pub max_loss: f64,
    pub avg_win: f64,
    pub avg_loss: f64,
}

pub fn trade_stats(blotter: &[TradeRecord]) -> TradeStats {
    let wins: Vec<f64> = blotter.iter().map(|r| r.realized_pnl).filter(|&p| p > 0.0).collect();
    let losses: Vec<f64> = blotter.iter().map(|r| r.realized_pnl).filter(|&p| p < 0.0).collect();
    let avg = |xs: &[f64]| if xs.is_empty() { 0.0 } else { mean(xs) };
    TradeStats {
        total_actions: blotter.len(),
        won_actions: wins.len(),
        lost_actions: losses.len(),
        win_loss_ratio: if losses.is_empty() { f64::INFINITY } else { wins.len() as f64 / losses.len() as f64 },
        max_win: wins.iter().copied().fold(0.0, f64::max),
        max_loss: losses.iter().copied().fold(0.0, f64::min),
        avg_win: avg(&wins),
        avg_loss: avg(&losses),
    }
}

/// Percentage of steps with a non-zero position.
pub fn time_in_market(positions: &[f64]) -> f64 {
    if positions.is_empty() {
        return 0.0;
    }
    positions.iter().filter(|p| p.abs() > 1e-9).count() as f64 / positions.len() as f64 * 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    /// Annualised volatility in percent.
    pub volatility_ann: f64,
    pub skew: f64,
    /// Raw (non-excess) kurtosis; 3 for a normal distribution.
    pub kurtosis: f64,
}

pub fn moments(returns: &[f64], interval_per_year: f64) -> Moments {
    if returns.len() < 2 {
        return Moments { volatility_ann: 0.0, skew: 0.0, kurtosis: 0.0 };
    }
    let n = returns.len() as f64;
    let m = mean(returns);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for r in returns {
        let d = r - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let (skew, kurtosis) = if m2 > 0.0 { (m3 / m2.powf(1.5), m4 / (m2 * m2)) } else { (0.0, 0.0) };
    Moments { volatility_ann: sample_std(returns) * interval_per_year.sqrt() * 100.0, skew, kurtosis }
}

/// Every indicator for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub cumulative_return: f64,
    pub cagr: Option<f64>,
    pub sharpe: Option<f64>,
    pub max_drawdown: f64,
    #[serde(flatten)]
    pub trades: TradeStats,
    pub time_in_market: f64,
    #[serde(flatten)]
    pub moments: Moments,
    /// Mean per-interval return.
    pub r_p: f64,
    /// Standard deviation of per-interval excess returns.
    pub sigma_p: f64,
    pub risk_free_rate: f64,
}

impl MetricsReport {
    pub fn compute(curve: &EquityCurve, positions: &[f64], blotter: &[TradeRecord], cfg: &MetricsConfig) -> Self {
        let returns = curve.returns();
        let rf = deannualize(cfg.risk_free_rate, curve.interval_per_year);
        let excess: Vec<f64> = returns.iter().map(|r| r - rf).collect();
        Self {
            cumulative_return: curve.cumulative_return(),
            cagr: cagr(curve).ok(),
            sharpe: sharpe(curve, cfg).ok(),
            max_drawdown: curve.drawdowns().into_iter().fold(0.0, f64::min),
            trades: trade_stats(blotter),
            time_in_market: time_in_market(positions),
            moments: moments(&returns, curve.interval_per_year),
            r_p: if returns.is_empty() { 0.0 } else { mean(&returns) },
            sigma_p: if excess.len() < 2 { 0.0 } else { sample_std(&excess) },
            risk_free_rate: cfg.risk_free_rate,
        }
    }

    /// Human-readable table grouped into return, activity and risk sections.
    pub fn to_text(&self) -> String {
        let opt = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        let ratio = if self.trades.win_loss_ratio.is_finite() { format!("{:.2}", self.trades.win_loss_ratio) } else { "inf".into() };
        let rows: [(&str, &str, String); 17] = [
            ("Return", "Cumulative return (%)", format!("{:.4}", self.cumulative_return)),
            ("Return", "CAGR (%)", opt(self.cagr)),
            ("Return", "Sharpe ratio", opt(self.sharpe)),
            ("Return", "Mean interval return", format!("{:.6e}", self.r_p)),
            ("Activity", "Total trades", self.trades.total_actions.to_string()),
            ("Activity", "Winning trades", self.trades.won_actions.to_string()),
            ("Activity", "Losing trades", self.trades.lost_actions.to_string()),
            ("Activity", "Win/loss ratio", ratio),
            ("Activity", "Max win", format!("{:.4}", self.trades.max_win)),
            ("Activity", "Max loss", format!("{:.4}", self.trades.max_loss)),
            ("Activity", "Avg win", format!("{:.4}", self.trades.avg_win)),
            ("Activity", "Avg loss", format!("{:.4}", self.trades.avg_loss)),
            ("Activity", "Time in market (%)", format!("{:.2}", self.time_in_market)),
            ("Risk", "Volatility, annual (%)", format!("{:.4}", self.moments.volatility_ann)),
            ("Risk", "Skew", format!("{:.4}", self.moments.skew)),
            ("Risk", "Kurtosis", format!("{:.4}", self.moments.kurtosis)),
            ("Risk", "Max drawdown (%)", format!("{:.4}", self.max_drawdown)),
        ];
        let mut out = String::new();
        let mut section = "";
        for (group, name, value) in rows {
            if group != section {
                let _ = writeln!(out, "[{group}]");
                section = group;
            }
            let _ = writeln!(out, "  {name:<24} {value:>16}");
        }
        out
    }
}

/// `timestamp,value,drawdown_pct`
pub fn write_equity_csv(mut out: impl Write, curve: &EquityCurve) -> io::Result<()> {
    writeln!(out, "timestamp,value,drawdown_pct")?;
    for ((t, v), d) in curve.timestamps.iter().zip(&curve.values).zip(curve.drawdowns()) {
        writeln!(out, "{t},{v},{d}")?;
    }
    Ok(())
}
