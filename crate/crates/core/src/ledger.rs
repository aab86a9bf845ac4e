//! Cash and two-leg position accounting.
//!
//! The position fraction `P ∈ [-1, 1]` is the signed share of portfolio value
//! deployed in the pair: `+q` is a long leg (long asset i, short asset j)
//! using `q` of the value, `-q` a short leg. Executing a target trades only
//! the difference, sized so that the post-fee fraction equals the target.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fractions closer than this are treated as equal.
pub const FRACTION_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LedgerError {
    #[error("portfolio value {0} is not positive")]
    BankruptPortfolio(f64),
    #[error("target {0} outside [-1, 1]")]
    TargetOutOfRange(f64),
    #[error("prices must be positive and finite")]
    BadPrice,
    #[error("fee rate {0} outside [0, 0.01]")]
    BadFeeRate(f64),
}

/// Proportional commission charged on each leg of every trade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeeModel {
    pub rate: f64,
}

impl FeeModel {
    /// 0.02% per transaction per asset.
    pub const DEFAULT_RATE: f64 = 0.0002;

    pub fn new(rate: f64) -> Result<Self, LedgerError> {
        if (0.0..=0.01).contains(&rate) {
            Ok(Self { rate })
        } else {
            Err(LedgerError::BadFeeRate(rate))
        }
    }

    pub fn zero() -> Self {
        Self { rate: 0.0 }
    }
}

impl Default for FeeModel {
    fn default() -> Self {
        Self { rate: Self::DEFAULT_RATE }
    }
}

/// How new notional is split between the legs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LegSizing {
    /// Equal quote notional per leg.
    #[default]
    EqualNotional,
    /// Quantity of asset j is `hedge_ratio` times the quantity of asset i.
    BetaWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    LongLeg,
    ShortLeg,
}

/// Prices at which an action fills.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quote {
    pub timestamp: i64,
    pub price_i: f64,
    pub price_j: f64,
    /// Only used with [`LegSizing::BetaWeighted`].
    pub hedge_ratio: f64,
}

impl Quote {
    pub fn new(timestamp: i64, price_i: f64, price_j: f64) -> Self {
        Self { timestamp, price_i, price_j, hedge_ratio: 1.0 }
    }

    fn check(&self) -> Result<(), LedgerError> {
        if self.price_i.is_finite() && self.price_j.is_finite() && self.price_i > 0.0 && self.price_j > 0.0 {
            Ok(())
        } else {
            Err(LedgerError::BadPrice)
        }
    }
}

/// One completed trade; adjustments fold into the record of the trade they
/// belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub open_time: i64,
    pub close_time: i64,
    pub direction: Direction,
    pub max_fraction: f64,
    /// `V_close - V_open`, net of every fee paid during the trade.
    pub realized_pnl: f64,
    pub fees_paid: f64,
    pub adjustments: u32,
}

/// Per-action fill log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionLog {
    pub timestamp: i64,
    pub target: f64,
    pub executed_delta: f64,
    /// Quote notional traded on each leg, summed over close and re-open.
    pub notional_i: f64,
    pub notional_j: f64,
    pub fee_i: f64,
    pub fee_j: f64,
}

impl ActionLog {
    pub fn fees(&self) -> f64 {
        self.fee_i + self.fee_j
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionReport {
    pub executed_delta: f64,
    pub fees: f64,
    pub record: Option<TradeRecord>,
    pub log: ActionLog,
}

#[derive(Debug, Clone, PartialEq)]
struct OpenTrade {
    open_time: i64,
    open_value: f64,
    direction: Direction,
    max_fraction: f64,
    fees_paid: f64,
    adjustments: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    pub cash: f64,
    pub qty_i: f64,
    pub qty_j: f64,
    pub fee: FeeModel,
    pub sizing: LegSizing,
    total_fees: f64,
    open: Option<OpenTrade>,
}

impl Portfolio {
    pub fn new(cash: f64, fee: FeeModel) -> Self {
        Self { cash, qty_i: 0.0, qty_j: 0.0, fee, sizing: LegSizing::EqualNotional, total_fees: 0.0, open: None }
    }

    pub fn with_sizing(mut self, sizing: LegSizing) -> Self {
        self.sizing = sizing;
        self
    }

    pub fn total_fees(&self) -> f64 {
        self.total_fees
    }

    pub fn is_flat(&self) -> bool {
        self.qty_i == 0.0 && self.qty_j == 0.0
    }

    /// Portfolio value recorded when the current position was opened.
    pub fn open_value(&self) -> Option<f64> {
        self.open.as_ref().map(|o| o.open_value)
    }

    pub fn mark_to_market(&self, price_i: f64, price_j: f64) -> f64 {
        self.cash + self.qty_i * price_i + self.qty_j * price_j
    }

    fn gross(&self, price_i: f64, price_j: f64) -> f64 {
        self.qty_i.abs() * price_i + self.qty_j.abs() * price_j
    }

    pub fn position_fraction(&self, price_i: f64, price_j: f64) -> Result<f64, LedgerError> {
        let v = self.mark_to_market(price_i, price_j);
        if v.is_nan() || v <= 0.0 {
            return Err(LedgerError::BankruptPortfolio(v));
        }
        if self.qty_i == 0.0 {
            return Ok(0.0);
        }
        Ok(self.qty_i.signum() * self.gross(price_i, price_j) / v)
    }

    /// Mark-to-market P&L of the open trade, net of fees paid so far.
    pub fn unrealized_pnl(&self, price_i: f64, price_j: f64) -> f64 {
        self.open.as_ref().map_or(0.0, |o| self.mark_to_market(price_i, price_j) - o.open_value)
    }

    fn leg_weights(&self, q: &Quote) -> (f64, f64) {
        match self.sizing {
            LegSizing::EqualNotional => (0.5, 0.5),
            LegSizing::BetaWeighted => {
                let a = q.price_i;
                let b = q.hedge_ratio.abs() * q.price_j;
                (a / (a + b), b / (a + b))
            }
        }
    }

    fn charge(&mut self, log: &mut ActionLog, notional_i: f64, notional_j: f64) -> f64 {
        let fee_i = self.fee.rate * notional_i;
        let fee_j = self.fee.rate * notional_j;
        log.notional_i += notional_i;
        log.notional_j += notional_j;
        log.fee_i += fee_i;
        log.fee_j += fee_j;
        let fees = fee_i + fee_j;
        self.cash -= fees;
        self.total_fees += fees;
        fees
    }

    /// Scales both legs down by `keep` (0 closes), returning fees.
    fn scale_legs(&mut self, keep: f64, q: &Quote, log: &mut ActionLog) -> f64 {
        let d_i = self.qty_i * (1.0 - keep);
        let d_j = self.qty_j * (1.0 - keep);
        self.cash += d_i * q.price_i + d_j * q.price_j;
        if keep == 0.0 {
            self.qty_i = 0.0;
            self.qty_j = 0.0;
        } else {
            self.qty_i -= d_i;
            self.qty_j -= d_j;
        }
        self.charge(log, d_i.abs() * q.price_i, d_j.abs() * q.price_j)
    }

    /// Adds `|gross|` of new notional in direction `sign(gross)`, returning fees.
    fn add_legs(&mut self, gross: f64, q: &Quote, log: &mut ActionLog) -> f64 {
        let (w_i, w_j) = self.leg_weights(q);
        let n_i = w_i * gross.abs();
        let n_j = w_j * gross.abs();
        let s = gross.signum();
        self.qty_i += s * n_i / q.price_i;
        self.qty_j -= s * n_j / q.price_j;
        self.cash += -s * n_i + s * n_j;
        self.charge(log, n_i, n_j)
    }

    fn close_all(&mut self, q: &Quote, log: &mut ActionLog) -> Option<TradeRecord> {
        let fees = self.scale_legs(0.0, q, log);
        let open = self.open.take()?;
        Some(TradeRecord {
            open_time: open.open_time,
            close_time: q.timestamp,
            direction: open.direction,
            max_fraction: open.max_fraction,
            realized_pnl: self.cash - open.open_value,
            fees_paid: open.fees_paid + fees,
            adjustments: open.adjustments,
        })
    }

    /// Moves the position fraction to `target`.
    pub fn execute(&mut self, target: f64, quote: Quote) -> Result<ExecutionReport, LedgerError> {
        quote.check()?;
        let current = self.position_fraction(quote.price_i, quote.price_j)?;
        let mut log = ActionLog { timestamp: quote.timestamp, target, executed_delta: 0.0, notional_i: 0.0, notional_j: 0.0, fee_i: 0.0, fee_j: 0.0 };
        if (target - current).abs() <= FRACTION_EPS {
            return Ok(ExecutionReport { executed_delta: 0.0, fees: 0.0, record: None, log });
        }
        if !target.is_finite() || target.abs() > 1.0 + FRACTION_EPS {
            return Err(LedgerError::TargetOutOfRange(target));
        }
        let target = target.clamp(-1.0, 1.0);
        let delta = target - current;
        log.executed_delta = delta;
        let mut fees = 0.0;
        let mut record = None;

        let crosses = current != 0.0 && (target == 0.0 || target.signum() != current.signum());
        if crosses {
            let before = self.total_fees;
            record = self.close_all(&quote, &mut log);
            fees += self.total_fees - before;
        }

        if target != 0.0 {
            let v = self.mark_to_market(quote.price_i, quote.price_j);
            if v <= 0.0 {
                return Err(LedgerError::BankruptPortfolio(v));
            }
            let g = self.qty_i.signum() * self.gross(quote.price_i, quote.price_j);
            let r = self.fee.rate;
            // Solve g + d = target * (v - r |d|) for the signed traded notional d.
            let need = target * v - g;
            let d = if need >= 0.0 { need / (1.0 + r * target) } else { need / (1.0 - r * target) };
            let step_fees = if g == 0.0 || d.signum() == g.signum() {
                self.add_legs(d, &quote, &mut log)
            } else {
                self.scale_legs(1.0 - d.abs() / g.abs(), &quote, &mut log)
            };
            fees += step_fees;
            match self.open.as_mut() {
                Some(open) => {
                    open.adjustments += 1;
                    open.max_fraction = open.max_fraction.max(target.abs());
                    open.fees_paid += step_fees;
                }
                None => {
                    self.open = Some(OpenTrade {
                        open_time: quote.timestamp,
                        open_value: v,
                        direction: if target > 0.0 { Direction::LongLeg } else { Direction::ShortLeg },
                        max_fraction: target.abs(),
                        fees_paid: step_fees,
                        adjustments: 0,
                    });
                }
            }
        }

        Ok(ExecutionReport { executed_delta: delta, fees, record, log })
    }
}

pub fn write_blotter(mut out: impl Write, records: &[TradeRecord]) -> io::Result<()> {
    writeln!(out, "open_time,close_time,direction,max_fraction,realized_pnl,fees_paid,adjustments")?;
    for r in records {
        let dir = match r.direction {
            Direction::LongLeg => "long_leg",
            Direction::ShortLeg => "short_leg",
        };
        writeln!(out, "{},{},{},{},{},{},{}", r.open_time, r.close_time, dir, r.max_fraction, r.realized_pnl, r.fees_paid, r.adjustments)?;
    }
    Ok(())
}

pub fn write_action_log(mut out: impl Write, actions: &[ActionLog]) -> io::Result<()> {
    writeln!(out, "timestamp,target,delta,notional_i,notional_j,fees")?;
    for a in actions {
        writeln!(out, "{},{},{},{},{},{}", a.timestamp, a.target, a.executed_delta, a.notional_i, a.notional_j, a.fees())?;
    }
    Ok(())
}
