//! Trading MDPs over one aligned pair: RL1 chooses when to open or close at
//! full allocation, RL2 chooses the signed position fraction directly.
//!
//! State is ⟨P, z, zone⟩ (plus an optional z history). Each step fills the
//! chosen target at the current close, then advances one bar.

use std::collections::VecDeque;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::ledger::{FeeModel, LedgerError, LegSizing, Portfolio, Quote, TradeRecord};
use crate::market_data::AlignedPairSeries;
use crate::metrics::EquityCurve;
use crate::policy::Observation;
use crate::spread::{SpreadEngine, SpreadError, SpreadObservation, Thresholds, Zone};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("series of {len} samples is shorter than the {window}-sample warm-up")]
    SeriesTooShort { len: usize, window: usize },
    #[error("EpisodeFinished")]
    EpisodeFinished,
    #[error("reset must be called before step")]
    NotReset,
    #[error("action {0} does not fit this environment's action space")]
    ActionMismatch(String),
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Spread(#[from] SpreadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvMode {
    /// Discrete timing: open long, close, open short.
    #[default]
    Rl1,
    /// Continuous quantity in `[-1, 1]`.
    Rl2,
}

impl FromStr for EnvMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rl1" => Ok(EnvMode::Rl1),
            "rl2" => Ok(EnvMode::Rl2),
            _ => Err(format!("unknown mode {s:?} (expected rl1 or rl2)")),
        }
    }
}

impl fmt::Display for EnvMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvMode::Rl1 => "rl1",
            EnvMode::Rl2 => "rl2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardVariant {
    /// Weighted portfolio, action and transaction components.
    #[default]
    Shaped,
    /// `r1 = ΔP - c` on trading steps, `r2 = ΔP·a - c`.
    Plain,
}

impl FromStr for RewardVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shaped" => Ok(RewardVariant::Shaped),
            "plain" => Ok(RewardVariant::Plain),
            _ => Err(format!("unknown reward variant {s:?} (expected shaped or plain)")),
        }
    }
}

impl fmt::Display for RewardVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardVariant::Shaped => "shaped",
            RewardVariant::Plain => "plain",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub portfolio: f64,
    pub action: f64,
    pub transaction: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { portfolio: 1.0, action: 0.1, transaction: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub mode: EnvMode,
    pub thresholds: Thresholds,
    pub window: usize,
    pub fee: FeeModel,
    pub gamma: f64,
    pub reward_weights: RewardWeights,
    pub reward_variant: RewardVariant,
    pub initial_cash: f64,
    pub seed: u64,
    /// Number of previous z-scores appended to the observation.
    pub history: usize,
    pub sizing: LegSizing,
    /// RL2 targets with `|a|` at or below this band count as a close when
    /// scoring the action component.
    pub close_band: f64,
}

impl EnvConfig {
    pub fn new(mode: EnvMode, thresholds: Thresholds, window: usize) -> Self {
        Self {
            mode,
            thresholds,
            window,
            fee: FeeModel::default(),
            gamma: 0.99,
            reward_weights: RewardWeights::default(),
            reward_variant: RewardVariant::Shaped,
            initial_cash: 10_000.0,
            seed: 0,
            history: 0,
            sizing: LegSizing::EqualNotional,
            close_band: 0.05,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let w = self.reward_weights;
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.into()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if self.initial_cash <= 0.0 || !self.initial_cash.is_finite() {
            return bad("initial_cash must be positive");
        }
        if [w.portfolio, w.action, w.transaction].iter().any(|x| !x.is_finite() || *x < 0.0) {
            return bad("reward weights must be finite and nonnegative");
        }
        if !(0.0..1.0).contains(&self.close_band) {
            return bad("close_band must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EnvAction {
    OpenLongLeg,
    Close,
    OpenShortLeg,
    /// RL2 target fraction.
    Quantity(f64),
}

impl EnvAction {
    /// RL1 action by index: 0 long, 1 close, 2 short.
    pub fn discrete(index: usize) -> Option<Self> {
        [EnvAction::OpenLongLeg, EnvAction::Close, EnvAction::OpenShortLeg].get(index).copied()
    }

    pub fn target(self) -> f64 {
        match self {
            EnvAction::OpenLongLeg => 1.0,
            EnvAction::Close => 0.0,
            EnvAction::OpenShortLeg => -1.0,
            EnvAction::Quantity(a) => a,
        }
    }
}

impl fmt::Display for EnvAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvAction::OpenLongLeg => f.write_str("open_long"),
            EnvAction::Close => f.write_str("close"),
            EnvAction::OpenShortLeg => f.write_str("open_short"),
            EnvAction::Quantity(a) => write!(f, "{a}"),
        }
    }
}

/// Behaviour the zone rewards: long leg, close or short leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behaviour {
    Long,
    Close,
    Short,
}

pub fn rewarded_behaviour(zone: Zone) -> Option<Behaviour> {
    match zone {
        Zone::ShortZone => Some(Behaviour::Short),
        Zone::CloseZone => Some(Behaviour::Close),
        Zone::LongZone => Some(Behaviour::Long),
        Zone::NeutralShortZone | Zone::NeutralLongZone => None,
    }
}

pub fn classify_action(action: EnvAction, close_band: f64) -> Behaviour {
    match action {
        EnvAction::OpenLongLeg => Behaviour::Long,
        EnvAction::Close => Behaviour::Close,
        EnvAction::OpenShortLeg => Behaviour::Short,
        EnvAction::Quantity(a) if a > close_band => Behaviour::Long,
        EnvAction::Quantity(a) if a < -close_band => Behaviour::Short,
        EnvAction::Quantity(_) => Behaviour::Close,
    }
}

/// +1 when the action matches the zone's rewarded behaviour, -1 when it
/// contradicts it, 0 in neutral zones.
pub fn action_component(zone: Zone, action: EnvAction, close_band: f64) -> f64 {
    match rewarded_behaviour(zone) {
        None => 0.0,
        Some(b) if b == classify_action(action, close_band) => 1.0,
        Some(_) => -1.0,
    }
}

/// Plain reward from holding P&L `dp`, action `a` and fees `c`.
pub fn plain_reward(mode: EnvMode, dp: f64, a: f64, c: f64, traded: bool) -> f64 {
    match mode {
        EnvMode::Rl1 if traded => dp - c,
        EnvMode::Rl1 => 0.0,
        EnvMode::Rl2 => dp * a - c,
    }
}

/// `Σ γ^i r_i`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Realized P&L of a trade closed this step over initial cash, else 0.
    pub portfolio_component: f64,
    pub action_component: f64,
    /// `|target - P|`.
    pub transaction_component: f64,
    /// `P - target`, kept for logs.
    pub signed_transaction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub timestamp: i64,
    pub target: f64,
    /// Holding P&L from the post-trade value to the next bar's close.
    pub delta_pnl: f64,
    pub fees: f64,
    pub trade_closed: bool,
    pub traded: bool,
    /// Portfolio value at the new cursor.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub breakdown: RewardBreakdown,
    pub info: StepInfo,
}

/// One row of the episode trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub timestamp: i64,
    pub z: f64,
    pub zone: Zone,
    pub action: EnvAction,
    pub target: f64,
    pub breakdown: RewardBreakdown,
    pub reward: f64,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct TradingEnv {
    series: Arc<AlignedPairSeries>,
    cfg: EnvConfig,
    engine: SpreadEngine,
    book: Portfolio,
    cursor: usize,
    current: Option<SpreadObservation>,
    history: VecDeque<f64>,
    started: bool,
    done: bool,
    trades: Vec<TradeRecord>,
    equity_t: Vec<i64>,
    equity_v: Vec<f64>,
    positions: Vec<f64>,
    trace: Vec<TraceRow>,
}

impl TradingEnv {
    pub fn new(series: Arc<AlignedPairSeries>, cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let engine = SpreadEngine::new(cfg.window, cfg.thresholds)?;
        if series.len() < cfg.window {
            return Err(EnvError::SeriesTooShort { len: series.len(), window: cfg.window });
        }
        Ok(Self {
            series,
            engine,
            book: Portfolio::new(cfg.initial_cash, cfg.fee).with_sizing(cfg.sizing),
            cfg,
            cursor: 0,
            current: None,
            history: VecDeque::new(),
            started: false,
            done: false,
            trades: Vec::new(),
            equity_t: Vec::new(),
            equity_v: Vec::new(),
            positions: Vec::new(),
            trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn series(&self) -> &Arc<AlignedPairSeries> {
        &self.series
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn portfolio(&self) -> &Portfolio {
        &self.book
    }

    /// Length of the encoded observation vector `[P, z, zone_id, history…]`.
    pub fn observation_len(&self) -> usize {
        3 + self.cfg.history
    }

    pub fn trades(&self) -> &[TradeRecord] {
        &self.trades
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn equity(&self) -> EquityCurve {
        EquityCurve { timestamps: self.equity_t.clone(), values: self.equity_v.clone(), interval_per_year: self.series.interval.per_year() }
    }

    fn prices(&self, k: usize) -> (i64, f64, f64) {
        (self.series.timestamps[k], self.series.prices_i[k], self.series.prices_j[k])
    }

    /// Feeds bar `k`; a degenerate window keeps the previous z and zone.
    fn feed(&mut self, k: usize) {
        let (t, pi, pj) = self.prices(k);
        if let Ok(Some(obs)) = self.engine.advance(t, pi, pj) {
            if let Some(prev) = self.current.replace(obs) {
                self.history.push_front(prev.z);
                self.history.truncate(self.cfg.history);
            }
        } else if let Some(prev) = self.current.as_mut() {
            prev.timestamp = t;
        }
    }

    fn observation(&self) -> Result<Observation, EnvError> {
        let (_, pi, pj) = self.prices(self.cursor);
        let (z, zone) = self.current.map_or((0.0, Zone::CloseZone), |o| (o.z, o.zone));
        let mut obs = Observation::new(self.book.position_fraction(pi, pj)?, z, zone);
        if self.cfg.history > 0 {
            obs.z_history = (0..self.cfg.history).map(|i| self.history.get(i).copied().unwrap_or(0.0)).collect();
        }
        Ok(obs)
    }

    /// Flat portfolio, cursor on the first warm bar.
    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        self.engine = SpreadEngine::new(self.cfg.window, self.cfg.thresholds)?;
        self.book = Portfolio::new(self.cfg.initial_cash, self.cfg.fee).with_sizing(self.cfg.sizing);
        self.current = None;
        self.history.clear();
        self.trades.clear();
        self.positions.clear();
        self.trace.clear();
        for k in 0..self.cfg.window {
            self.feed(k);
        }
        self.history.clear();
        self.cursor = self.cfg.window - 1;
        self.started = true;
        self.done = false;
        self.equity_t = vec![self.series.timestamps[self.cursor]];
        self.equity_v = vec![self.cfg.initial_cash];
        self.observation()
    }

    pub fn step(&mut self, action: EnvAction) -> Result<StepResult, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        match (self.cfg.mode, action) {
            (EnvMode::Rl2, EnvAction::Quantity(a)) if a.is_finite() && a.abs() <= 1.0 => {}
            (EnvMode::Rl1, EnvAction::OpenLongLeg | EnvAction::Close | EnvAction::OpenShortLeg) => {}
            _ => return Err(EnvError::ActionMismatch(action.to_string())),
        }
        let pre = self.observation()?;
        let target = action.target();
        let (t, pi, pj) = self.prices(self.cursor);
        let beta = self.engine.model().map_or(1.0, |m| m.beta1);
        let report = self.book.execute(target, Quote { timestamp: t, price_i: pi, price_j: pj, hedge_ratio: beta })?;
        let cash0 = self.cfg.initial_cash;
        let post_value = self.book.mark_to_market(pi, pj);
        let closed = report.record.is_some();
        let portfolio_component = report.record.as_ref().map_or(0.0, |r| r.realized_pnl / cash0);
        self.trades.extend(report.record);
        self.positions.push(if post_value > 0.0 { self.book.position_fraction(pi, pj)? } else { 0.0 });

        let mut value = post_value;
        if self.cursor + 1 < self.series.len() && post_value > 0.0 {
            self.cursor += 1;
            self.feed(self.cursor);
            let (_, pi, pj) = self.prices(self.cursor);
            value = self.book.mark_to_market(pi, pj);
        }
        self.done = self.cursor + 1 >= self.series.len() || value <= 0.0;
        let delta_pnl = value - post_value;

        let breakdown = RewardBreakdown {
            portfolio_component,
            action_component: action_component(pre.zone, action, self.cfg.close_band),
            transaction_component: (target - pre.position).abs(),
            signed_transaction: pre.position - target,
        };
        let traded = report.executed_delta != 0.0;
        let w = self.cfg.reward_weights;
        let reward = match self.cfg.reward_variant {
            RewardVariant::Shaped => w.portfolio * breakdown.portfolio_component + w.action * breakdown.action_component - w.transaction * breakdown.transaction_component,
            RewardVariant::Plain => plain_reward(self.cfg.mode, delta_pnl / cash0, target, report.fees / cash0, traded),
        };
        self.equity_t.push(self.series.timestamps[self.cursor]);
        self.equity_v.push(value);
        self.trace.push(TraceRow { timestamp: t, z: pre.z, zone: pre.zone, action, target, breakdown, reward, value });

        let observation = if value > 0.0 { self.observation()? } else { Observation::new(0.0, pre.z, pre.zone) };
        Ok(StepResult {
            observation,
            reward,
            done: self.done,
            breakdown,
            info: StepInfo { timestamp: t, target, delta_pnl, fees: report.fees, trade_closed: closed, traded, value },
        })
    }
}

/// `[P, z, zone_id, history…]` as sent over the wire.
pub fn encode_observation(obs: &Observation) -> Vec<f64> {
    let mut v = vec![obs.position, obs.z, obs.zone.id() as f64];
    v.extend(&obs.z_history);
    v
}

/// `timestamp,z,zone,action,target,portfolio,action_reward,transaction,signed_transaction,reward,value`
pub fn write_trace(mut out: impl Write, rows: &[TraceRow]) -> io::Result<()> {
    writeln!(out, "timestamp,z,zone,action,target,portfolio,action_reward,transaction,signed_transaction,reward,value")?;
    for r in rows {
        let b = r.breakdown;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.timestamp, r.z, r.zone, r.action, r.target, b.portfolio_component, b.action_component, b.transaction_component, b.signed_transaction, r.reward, r.value
        )?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(tag = "cmd", rename_all = "lowercase")]
enum Request {
    Reset,
    Step { action: Value },
    Close,
}

fn parse_action(mode: EnvMode, v: &Value) -> Result<EnvAction, String> {
    match mode {
        EnvMode::Rl1 => v
            .as_u64()
            .and_then(|i| EnvAction::discrete(i as usize))
            .ok_or_else(|| format!("RL1 action must be 0, 1 or 2, got {v}")),
        EnvMode::Rl2 => v
            .as_f64()
            .filter(|a| a.abs() <= 1.0)
            .map(EnvAction::Quantity)
            .ok_or_else(|| format!("RL2 action must be a number in [-1, 1], got {v}")),
    }
}

fn protocol_error(detail: impl fmt::Display) -> Value {
    json!({ "error": "ProtocolError", "detail": detail.to_string() })
}

/// Line-delimited JSON session: `reset`, `step` and `close` commands, one
/// reply per request. Malformed requests get a `ProtocolError` reply and the
/// session continues.
pub fn serve_external(env: &mut TradingEnv, input: impl BufRead, mut output: impl Write) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Err(e) => protocol_error(e),
            Ok(Request::Close) => break,
            Ok(Request::Reset) => match env.reset() {
                Ok(obs) => json!({ "obs": encode_observation(&obs) }),
                Err(e) => protocol_error(e),
            },
            Ok(Request::Step { action }) => match parse_action(env.cfg.mode, &action) {
                Err(e) => protocol_error(e),
                Ok(a) => match env.step(a) {
                    Ok(r) => {
                        let b = r.breakdown;
                        json!({
                            "obs": encode_observation(&r.observation),
                            "reward": r.reward,
                            "done": r.done,
                            "breakdown": [b.portfolio_component, b.action_component, b.transaction_component],
                        })
                    }
                    Err(EnvError::EpisodeFinished) => json!({ "error": "EpisodeFinished" }),
                    Err(e) => protocol_error(e),
                },
            },
        };
        writeln!(output, "{reply}")?;
        output.flush()?;
    }
    Ok(())
}
