//! Augmented Dickey–Fuller regression
//! `Δe_t = γ e_{t-1} + Σ_{i=1..p} δ_i Δe_{t-i} + ν_t`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::critical::{critical_value, CriticalTable, Significance};
use super::{is_constant, StatsError};

/// Minimum number of observations left in the test regression.
pub const MIN_EFFECTIVE_OBS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AdfRegression {
    /// No deterministic terms (the default).
    #[default]
    NoConstant,
    /// Adds an intercept to the test regression.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfOptions {
    /// Lagged differences; `None` picks the Schwert rule.
    pub lags: Option<usize>,
    pub significance: Significance,
    pub regression: AdfRegression,
}

impl Default for AdfOptions {
    fn default() -> Self {
        Self { lags: None, significance: Significance::FivePercent, regression: AdfRegression::NoConstant }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub gamma_hat: f64,
    pub t_stat: f64,
    pub lags_used: usize,
    /// Observations in the test regression.
    pub nobs: usize,
    pub regression_residuals: Vec<f64>,
    pub critical_value: f64,
    pub significance: Significance,
    pub stationary: bool,
}

/// `floor(12 (n/100)^{1/4})`, reduced when needed so the regression keeps
/// [`MIN_EFFECTIVE_OBS`] observations.
pub fn schwert_lags(n: usize) -> usize {
    let rule = (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize;
    rule.min(n.saturating_sub(MIN_EFFECTIVE_OBS + 1))
}

pub(crate) struct AdfFit {
    pub gamma_hat: f64,
    pub t_stat: f64,
    pub lags: usize,
    pub nobs: usize,
    pub residuals: Vec<f64>,
}

pub(crate) fn adf_regression(series: &[f64], lags: Option<usize>, regression: AdfRegression) -> Result<AdfFit, StatsError> {
    let n = series.len();
    if n < MIN_EFFECTIVE_OBS + 2 {
        return Err(StatsError::InsufficientData(format!("ADF needs at least {} points, got {n}", MIN_EFFECTIVE_OBS + 2)));
    }
    if is_constant(series) {
        return Err(StatsError::ZeroVariance);
    }
    let p = lags.unwrap_or_else(|| schwert_lags(n));
    let nobs = (n - 1).checked_sub(p).filter(|&m| m >= MIN_EFFECTIVE_OBS).ok_or_else(|| {
        StatsError::InsufficientData(format!("{n} points with {p} lags leaves fewer than {MIN_EFFECTIVE_OBS} observations"))
    })?;

    let diff: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let with_const = regression == AdfRegression::Constant;
    let k = 1 + p + usize::from(with_const);
    if nobs <= k {
        return Err(StatsError::InsufficientData(format!("{nobs} observations for {k} regressors")));
    }

    // Row r is time t = p + 1 + r in `series`; diff index of Δe_t is t - 1.
    let x = DMatrix::from_fn(nobs, k, |r, c| {
        let t = p + 1 + r;
        match c {
            0 => series[t - 1],
            c if c <= p => diff[t - 1 - c],
            _ => 1.0,
        }
    });
    let y = DVector::from_fn(nobs, |r, _| diff[p + r]);

    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let chol = xtx.cholesky().ok_or(StatsError::ZeroVariance)?;
    let coef = chol.solve(&xty);
    let resid = &y - &x * &coef;
    let rss = resid.norm_squared();
    let sigma2 = rss / (nobs - k) as f64;
    let inv00 = chol.inverse()[(0, 0)];
    let se = (sigma2 * inv00).sqrt();
    let gamma_hat = coef[0];
    let t_stat = if se > 0.0 {
        gamma_hat / se
    } else if gamma_hat < 0.0 {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    };
    Ok(AdfFit { gamma_hat, t_stat, lags: p, nobs, residuals: resid.iter().copied().collect() })
}

/// ADF test with no deterministic terms.
pub fn adf_test(series: &[f64], lags: Option<usize>, significance: Significance) -> Result<AdfResult, StatsError> {
    adf_test_with(series, &AdfOptions { lags, significance, regression: AdfRegression::NoConstant })
}

pub fn adf_test_with(series: &[f64], opts: &AdfOptions) -> Result<AdfResult, StatsError> {
    let fit = adf_regression(series, opts.lags, opts.regression)?;
    let table = match opts.regression {
        AdfRegression::NoConstant => CriticalTable::DickeyFullerNoConstant,
        AdfRegression::Constant => CriticalTable::DickeyFullerConstant,
    };
    let cv = critical_value(table, opts.significance, fit.nobs);
    Ok(finish(fit, cv, opts.significance))
}

pub(crate) fn finish(fit: AdfFit, cv: f64, significance: Significance) -> AdfResult {
    AdfResult {
        gamma_hat: fit.gamma_hat,
        t_stat: fit.t_stat,
        lags_used: fit.lags,
        nobs: fit.nobs,
        regression_residuals: fit.residuals,
        critical_value: cv,
        significance,
        stationary: fit.t_stat < cv,
    }
}
