//! Finite-sample critical values for Dickey–Fuller type statistics.
//!
//! Each entry is a response surface `b0 + b1/T + b2/T^2 + b3/T^3` in the
//! sample size `T`, so one static row per (table, level) interpolates over
//! every sample size (MacKinnon 2010 coefficients).

use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Significance {
    #[serde(rename = "0.01")]
    OnePercent,
    #[serde(rename = "0.05")]
    FivePercent,
    #[serde(rename = "0.10")]
    TenPercent,
}

impl Significance {
    pub fn level(self) -> f64 {
        match self {
            Significance::OnePercent => 0.01,
            Significance::FivePercent => 0.05,
            Significance::TenPercent => 0.10,
        }
    }

    fn row(self) -> usize {
        match self {
            Significance::OnePercent => 0,
            Significance::FivePercent => 1,
            Significance::TenPercent => 2,
        }
    }
}

impl TryFrom<f64> for Significance {
    type Error = StatsError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        [Significance::OnePercent, Significance::FivePercent, Significance::TenPercent]
            .into_iter()
            .find(|s| (s.level() - value).abs() < 1e-9)
            .ok_or(StatsError::UnsupportedSignificance(value))
    }
}

/// Which null distribution the statistic is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriticalTable {
    /// Unit-root test without deterministic terms.
    DickeyFullerNoConstant,
    /// Unit-root test with a constant.
    DickeyFullerConstant,
    /// Residual-based two-variable cointegration test (first-stage
    /// regression with a constant).
    EngleGrangerTwoVariable,
}

const DF_NC: [[f64; 4]; 3] = [
    [-2.56574, -2.2358, -3.627, 0.0],
    [-1.94100, -0.2686, -3.365, 31.223],
    [-1.61682, 0.2656, -2.714, 25.364],
];

const DF_C: [[f64; 4]; 3] = [
    [-3.43035, -6.5393, -16.786, -79.433],
    [-2.86154, -2.8903, -4.234, -40.040],
    [-2.56677, -1.5384, -2.809, 0.0],
];

const EG_C_2: [[f64; 4]; 3] = [
    [-3.89644, -10.9519, -33.527, 0.0],
    [-3.33613, -6.1101, -6.823, 0.0],
    [-3.04445, -4.2412, -2.720, 0.0],
];

/// Critical value of the t-ratio at `sig` for a sample of `nobs` observations.
pub fn critical_value(table: CriticalTable, sig: Significance, nobs: usize) -> f64 {
    let coeffs = match table {
        CriticalTable::DickeyFullerNoConstant => &DF_NC,
        CriticalTable::DickeyFullerConstant => &DF_C,
        CriticalTable::EngleGrangerTwoVariable => &EG_C_2,
    }[sig.row()];
    let inv = 1.0 / nobs as f64;
    coeffs[0] + inv * (coeffs[1] + inv * (coeffs[2] + inv * coeffs[3]))
}
