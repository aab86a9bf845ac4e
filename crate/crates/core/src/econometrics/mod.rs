//! Pair-formation statistics: correlation, OLS, ADF unit-root test,
//! Engle–Granger cointegration and the windowed pair score.

mod adf;
mod critical;
mod pairs;

pub use adf::{adf_test, adf_test_with, schwert_lags, AdfOptions, AdfRegression, AdfResult};
pub use critical::{critical_value, CriticalTable, Significance};
pub use pairs::{engle_granger, rank_pairs, windowed_pair_scores, EngleGranger, PairScore, PairScoreConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("input sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("regressor is constant; design matrix is singular")]
    SingularDesign,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("regression residuals are degenerate (exact linear relation)")]
    DegenerateResiduals,
    #[error("series of length {len} is shorter than window {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("significance {0} not tabulated (use 0.01, 0.05 or 0.10)")]
    UnsupportedSignificance(f64),
    #[error("no window produced a usable score")]
    NoUsableWindow,
}

/// Population first and second moments of two equal-length samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean_x: f64,
    pub mean_y: f64,
    pub std_x: f64,
    pub std_y: f64,
    pub cov_xy: f64,
    pub n: usize,
}

/// Least-squares fit of `y = alpha + beta * x + residual`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub alpha: f64,
    pub beta: f64,
    pub residuals: Vec<f64>,
    pub rss: f64,
}

fn check_len(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    Ok(())
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// True when the sample carries no variation beyond rounding.
pub(crate) fn is_constant(xs: &[f64]) -> bool {
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    hi - lo <= 1e-12 * scale
}

pub fn moments(x: &[f64], y: &[f64]) -> Result<MomentSummary, StatsError> {
    check_len(x, y)?;
    if x.is_empty() {
        return Err(StatsError::InsufficientData("empty input".into()));
    }
    let n = x.len();
    let mx = mean(x);
    let my = mean(y);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let nf = n as f64;
    Ok(MomentSummary {
        mean_x: mx,
        mean_y: my,
        std_x: (sxx / nf).sqrt(),
        std_y: (syy / nf).sqrt(),
        cov_xy: sxy / nf,
        n,
    })
}

/// Pearson correlation from population moments.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_len(x, y)?;
    if x.len() < 3 {
        return Err(StatsError::InsufficientData(format!("pearson needs n >= 3, got {}", x.len())));
    }
    if is_constant(x) || is_constant(y) {
        return Err(StatsError::ZeroVariance);
    }
    let m = moments(x, y)?;
    Ok((m.cov_xy / (m.std_x * m.std_y)).clamp(-1.0, 1.0))
}

/// Sum of squared price differences.
pub fn ssd(p_i: &[f64], p_j: &[f64]) -> Result<f64, StatsError> {
    check_len(p_i, p_j)?;
    Ok(p_i.iter().zip(p_j).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Simple regression of `y` on `x` with intercept.
pub fn ols(y: &[f64], x: &[f64]) -> Result<OlsFit, StatsError> {
    check_len(x, y)?;
    if x.len() < 3 {
        return Err(StatsError::InsufficientData(format!("ols needs n >= 3, got {}", x.len())));
    }
    if is_constant(x) {
        return Err(StatsError::SingularDesign);
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    let beta = sxy / sxx;
    let alpha = my - beta * mx;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(&a, &b)| b - alpha - beta * a).collect();
    let rss = residuals.iter().map(|r| r * r).sum();
    Ok(OlsFit { alpha, beta, residuals, rss })
}
