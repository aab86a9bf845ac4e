//! Rolling-window spread regression, z-score and zone classification.
//!
//! The spread is the residual of `p_i = β0 + β1 p_j + s` fitted over the
//! trailing `W` aligned samples; its z-score is taken against the mean and
//! population standard deviation of the window residuals.

use std::collections::VecDeque;
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::econometrics::{mean, is_constant};

/// Smallest window the engine will fit.
pub const MIN_WINDOW: usize = 30;
const DEGENERATE_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpreadError {
    #[error("hedge leg is constant over the window")]
    SingularDesign,
    #[error("window of {0} samples is shorter than the minimum of {MIN_WINDOW}")]
    WindowTooShort(usize),
    #[error("spread standard deviation is zero")]
    DegenerateSpread,
    #[error("engine has seen {seen} of {window} warm-up samples")]
    NotWarm { seen: usize, window: usize },
    #[error("window lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("thresholds must satisfy open > close > 0 (got open {open}, close {close})")]
    InvalidThresholds { open: f64, close: f64 },
}

/// Open/close thresholds in z-score units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub open: f64,
    pub close: f64,
}

impl Thresholds {
    pub fn new(open: f64, close: f64) -> Result<Self, SpreadError> {
        if open.is_finite() && close.is_finite() && open > close && close > 0.0 {
            Ok(Self { open, close })
        } else {
            Err(SpreadError::InvalidThresholds { open, close })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Zone {
    ShortZone,
    NeutralShortZone,
    CloseZone,
    NeutralLongZone,
    LongZone,
}

impl Zone {
    pub const ALL: [Zone; 5] = [Zone::ShortZone, Zone::NeutralShortZone, Zone::CloseZone, Zone::NeutralLongZone, Zone::LongZone];

    /// Wire id, 0 for `ShortZone` through 4 for `LongZone`.
    pub fn id(self) -> usize {
        self as usize
    }

    pub fn mirror(self) -> Zone {
        Zone::ALL[4 - self.id()]
    }

    pub fn is_neutral(self) -> bool {
        matches!(self, Zone::NeutralShortZone | Zone::NeutralLongZone)
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Zone::ShortZone => "short",
            Zone::NeutralShortZone => "neutral_short",
            Zone::CloseZone => "close",
            Zone::NeutralLongZone => "neutral_long",
            Zone::LongZone => "long",
        };
        f.write_str(s)
    }
}

/// Five-way partition of z-space. A z exactly on an open threshold belongs
/// to the outer zone; exactly on a close threshold, to the neutral zone.
pub fn classify_zone(z: f64, t: Thresholds) -> Zone {
    if z >= t.open {
        Zone::ShortZone
    } else if z >= t.close {
        Zone::NeutralShortZone
    } else if z > -t.close {
        Zone::CloseZone
    } else if z > -t.open {
        Zone::NeutralLongZone
    } else {
        Zone::LongZone
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadModel {
    pub beta0: f64,
    pub beta1: f64,
    pub window: usize,
    pub spread_mean: f64,
    pub spread_std: f64,
    pub latest_spread: f64,
}

/// Fits the spread model over one window.
pub fn fit_spread(window_i: &[f64], window_j: &[f64]) -> Result<SpreadModel, SpreadError> {
    if window_i.len() != window_j.len() {
        return Err(SpreadError::LengthMismatch(window_i.len(), window_j.len()));
    }
    if is_constant(window_j) {
        return Err(SpreadError::SingularDesign);
    }
    let w = window_i.len();
    if w < MIN_WINDOW {
        return Err(SpreadError::WindowTooShort(w));
    }
    let mx = mean(window_j);
    let my = mean(window_i);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&x, &y) in window_j.iter().zip(window_i) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let beta1 = sxy / sxx;
    let beta0 = my - beta1 * mx;
    let resid: Vec<f64> = window_j.iter().zip(window_i).map(|(&x, &y)| y - beta0 - beta1 * x).collect();
    let spread_mean = mean(&resid);
    let var = resid.iter().map(|r| (r - spread_mean) * (r - spread_mean)).sum::<f64>() / w as f64;
    Ok(SpreadModel { beta0, beta1, window: w, spread_mean, spread_std: var.sqrt(), latest_spread: resid[w - 1] })
}

/// `(s - s̄) / σ_s`.
pub fn zscore(model: &SpreadModel, s: f64) -> Result<f64, SpreadError> {
    if model.spread_std <= DEGENERATE_STD {
        return Err(SpreadError::DegenerateSpread);
    }
    Ok((s - model.spread_mean) / model.spread_std)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadObservation {
    pub timestamp: i64,
    pub spread: f64,
    pub z: f64,
    pub zone: Zone,
}

/// Refit strategy of a [`SpreadEngine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RefitMode {
    /// Full regression over the window at every step.
    #[default]
    Full,
    /// Rolling sums, re-anchored with an exact recomputation once per window.
    Incremental,
}

#[derive(Debug, Clone, Default)]
struct RollingSums {
    origin_x: f64,
    origin_y: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    sxy: f64,
    syy: f64,
}

impl RollingSums {
    fn add(&mut self, x: f64, y: f64, sign: f64) {
        let (x, y) = (x - self.origin_x, y - self.origin_y);
        self.sx += sign * x;
        self.sy += sign * y;
        self.sxx += sign * x * x;
        self.sxy += sign * x * y;
        self.syy += sign * y * y;
    }

    fn rebuild(xs: &VecDeque<f64>, ys: &VecDeque<f64>) -> Self {
        let mut s = RollingSums { origin_x: xs[0], origin_y: ys[0], ..Default::default() };
        for (&x, &y) in xs.iter().zip(ys) {
            s.add(x, y, 1.0);
        }
        s
    }
}

/// Streaming spread state for one pair and one window length.
#[derive(Debug, Clone)]
pub struct SpreadEngine {
    window: usize,
    thresholds: Thresholds,
    mode: RefitMode,
    prices_i: VecDeque<f64>,
    prices_j: VecDeque<f64>,
    last_timestamp: i64,
    sums: RollingSums,
    since_rebuild: usize,
    model: Option<SpreadModel>,
    latest: Option<SpreadObservation>,
}

impl SpreadEngine {
    pub fn new(window: usize, thresholds: Thresholds) -> Result<Self, SpreadError> {
        Self::with_mode(window, thresholds, RefitMode::Full)
    }

    pub fn with_mode(window: usize, thresholds: Thresholds, mode: RefitMode) -> Result<Self, SpreadError> {
        if window < MIN_WINDOW {
            return Err(SpreadError::WindowTooShort(window));
        }
        Ok(Self {
            window,
            thresholds,
            mode,
            prices_i: VecDeque::with_capacity(window + 1),
            prices_j: VecDeque::with_capacity(window + 1),
            last_timestamp: 0,
            sums: RollingSums::default(),
            since_rebuild: 0,
            model: None,
            latest: None,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn thresholds(&self) -> Thresholds {
        self.thresholds
    }

    pub fn is_warm(&self) -> bool {
        self.prices_i.len() == self.window
    }

    pub fn model(&self) -> Option<&SpreadModel> {
        self.model.as_ref()
    }

    /// The observation emitted by the most recent successful refit.
    pub fn latest(&self) -> Result<SpreadObservation, SpreadError> {
        if !self.is_warm() {
            return Err(SpreadError::NotWarm { seen: self.prices_i.len(), window: self.window });
        }
        self.latest.ok_or(SpreadError::DegenerateSpread)
    }

    /// Feeds one aligned sample. Returns `None` during warm-up, otherwise the
    /// refitted observation for the newest sample. A failed refit leaves the
    /// sample in the window and clears the latest observation.
    pub fn advance(&mut self, timestamp: i64, price_i: f64, price_j: f64) -> Result<Option<SpreadObservation>, SpreadError> {
        self.prices_i.push_back(price_i);
        self.prices_j.push_back(price_j);
        self.last_timestamp = timestamp;
        let dropped = if self.prices_i.len() > self.window {
            Some((self.prices_j.pop_front().unwrap_or_default(), self.prices_i.pop_front().unwrap_or_default()))
        } else {
            None
        };
        if self.mode == RefitMode::Incremental {
            self.update_sums(price_j, price_i, dropped);
        }
        if !self.is_warm() {
            return Ok(None);
        }
        self.latest = None;
        self.model = None;
        let model = match self.mode {
            RefitMode::Full => {
                let (wi, wj) = (self.prices_i.make_contiguous().to_vec(), self.prices_j.make_contiguous().to_vec());
                fit_spread(&wi, &wj)?
            }
            RefitMode::Incremental => self.model_from_sums()?,
        };
        self.model = Some(model);
        let z = zscore(&model, model.latest_spread)?;
        let obs = SpreadObservation { timestamp, spread: model.latest_spread, z, zone: classify_zone(z, self.thresholds) };
        self.latest = Some(obs);
        Ok(Some(obs))
    }

    fn update_sums(&mut self, x: f64, y: f64, dropped: Option<(f64, f64)>) {
        if self.prices_i.len() == 1 {
            self.sums = RollingSums { origin_x: x, origin_y: y, ..Default::default() };
            self.since_rebuild = 0;
        }
        self.since_rebuild += 1;
        if self.since_rebuild >= self.window {
            self.sums = RollingSums::rebuild(&self.prices_j, &self.prices_i);
            self.since_rebuild = 0;
            return;
        }
        self.sums.add(x, y, 1.0);
        if let Some((dx, dy)) = dropped {
            self.sums.add(dx, dy, -1.0);
        }
    }

    fn model_from_sums(&self) -> Result<SpreadModel, SpreadError> {
        let s = &self.sums;
        let w = self.window as f64;
        let mx = s.sx / w;
        let my = s.sy / w;
        let sxx = s.sxx - w * mx * mx;
        let sxy = s.sxy - w * mx * my;
        let syy = s.syy - w * my * my;
        let scale = (s.origin_x.abs() + mx.abs()).max(f64::MIN_POSITIVE);
        if sxx <= w * (1e-12 * scale).powi(2) {
            return Err(SpreadError::SingularDesign);
        }
        let beta1 = sxy / sxx;
        let beta0 = (my + s.origin_y) - beta1 * (mx + s.origin_x);
        let rss = (syy - beta1 * sxy).max(0.0);
        let x_last = *self.prices_j.back().unwrap_or(&0.0);
        let y_last = *self.prices_i.back().unwrap_or(&0.0);
        Ok(SpreadModel {
            beta0,
            beta1,
            window: self.window,
            spread_mean: 0.0,
            spread_std: (rss / w).sqrt(),
            latest_spread: y_last - beta0 - beta1 * x_last,
        })
    }
}

/// Runs a fresh engine over whole price slices; `None` marks warm-up or a
/// degenerate window.
pub fn observe_series(
    timestamps: &[i64],
    prices_i: &[f64],
    prices_j: &[f64],
    window: usize,
    thresholds: Thresholds,
    mode: RefitMode,
) -> Result<Vec<Option<SpreadObservation>>, SpreadError> {
    let mut engine = SpreadEngine::with_mode(window, thresholds, mode)?;
    Ok(timestamps
        .iter()
        .zip(prices_i.iter().zip(prices_j))
        .map(|(&t, (&a, &b))| engine.advance(t, a, b).ok().flatten())
        .collect())
}

/// Debug trace as CSV: `timestamp,spread,z,zone`.
pub fn write_trace(mut out: impl Write, observations: &[SpreadObservation]) -> io::Result<()> {
    writeln!(out, "timestamp,spread,z,zone")?;
    for o in observations {
        writeln!(out, "{},{},{},{}", o.timestamp, o.spread, o.z, o.zone)?;
    }
    Ok(())
}
