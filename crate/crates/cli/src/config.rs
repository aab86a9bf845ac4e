//! TOML run configuration and command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate};
use pairlab::agent::{ActMode, TrainConfig};
use pairlab::econometrics::Significance;
use pairlab::env::{EnvMode, RewardVariant, RewardWeights};
use pairlab::grid::GridSpec;
use pairlab::market_data::Interval;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Half-open UTC time span. Bounds are `YYYY-MM-DD` (UTC midnight) or RFC 3339.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub start: String,
    pub end: String,
}

fn parse_instant(s: &str) -> Result<i64> {
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc().timestamp_millis());
    }
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.timestamp_millis())
        .map_err(|_| CliError::Config(format!("'{s}' is neither YYYY-MM-DD nor RFC 3339")))
}

impl Span {
    /// `[start, end)` in epoch milliseconds.
    pub fn bounds(&self) -> Result<(i64, i64)> {
        let (a, b) = (parse_instant(&self.start)?, parse_instant(&self.end)?);
        if a >= b {
            return Err(CliError::Config(format!("span {}..{} is empty", self.start, self.end)));
        }
        Ok((a, b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairsSection {
    /// Non-overlapping scoring windows per formation span.
    pub windows: usize,
    pub significance: Significance,
    pub lags: Option<usize>,
}

impl Default for PairsSection {
    fn default() -> Self {
        Self { windows: 60, significance: Significance::FivePercent, lags: None }
    }
}

/// Fixed strategy parameters that bypass the grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    pub open: f64,
    pub close: f64,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub mode: EnvMode,
    pub reward: RewardVariant,
    pub weights: RewardWeights,
    pub history: usize,
    pub gamma: f64,
    pub close_band: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            mode: EnvMode::Rl1,
            reward: RewardVariant::Shaped,
            weights: RewardWeights::default(),
            history: 0,
            gamma: 0.99,
            close_band: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub episodes: usize,
    pub act: ActMode,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { episodes: 1, act: ActMode::Deterministic }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_interval")]
    pub interval: Interval,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default = "default_fee")]
    pub fee: f64,
    #[serde(default = "default_rf")]
    pub risk_free_rate: f64,
    #[serde(default = "default_cash")]
    pub initial_cash: f64,
    #[serde(default)]
    pub min_volume_quantile: f64,
    /// Symbol to 1m kline CSV path.
    pub data: BTreeMap<String, PathBuf>,
    pub formation: Span,
    pub test: Span,
    #[serde(default)]
    pub pairs: PairsSection,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub strategy: Option<StrategySection>,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_interval() -> Interval {
    Interval::M1
}

fn default_out() -> PathBuf {
    PathBuf::from("artifacts")
}

fn default_fee() -> f64 {
    0.0002
}

fn default_rf() -> f64 {
    0.055
}

fn default_cash() -> f64 {
    10_000.0
}

/// Values given on the command line; each replaces one config key.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub fee: Option<f64>,
    pub out: Option<PathBuf>,
    pub interval: Option<Interval>,
    pub mode: Option<EnvMode>,
    pub reward: Option<RewardVariant>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file; relative data and output paths resolve against
    /// the file's directory.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in cfg.data.values_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(f) = o.fee {
            self.fee = f;
        }
        if let Some(p) = &o.out {
            self.output_dir = p.clone();
        }
        if let Some(i) = o.interval {
            self.interval = i;
        }
        if let Some(m) = o.mode {
            self.env.mode = m;
        }
        if let Some(r) = o.reward {
            self.env.reward = r;
        }
        self.train.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.data.len() < 2 {
            return bad(format!("need at least 2 symbols under [data], got {}", self.data.len()));
        }
        if let Some(s) = self.data.keys().find(|s| s.is_empty() || !s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')) {
            return bad(format!("symbol '{s}' must be non-empty ASCII letters, digits or '_'"));
        }
        let (fa, fb) = self.formation.bounds()?;
        let (ta, _) = self.test.bounds()?;
        if fb > ta || fa >= ta {
            return bad("formation span must end no later than the test span starts".into());
        }
        if !(0.0..=0.01).contains(&self.fee) {
            return bad(format!("fee {} outside [0, 0.01]", self.fee));
        }
        if !(0.0..1.0).contains(&self.min_volume_quantile) {
            return bad(format!("min_volume_quantile {} outside [0, 1)", self.min_volume_quantile));
        }
        if !(self.initial_cash > 0.0 && self.initial_cash.is_finite()) {
            return bad("initial_cash must be positive".into());
        }
        if !self.risk_free_rate.is_finite() {
            return bad("risk_free_rate must be finite".into());
        }
        if self.pairs.windows == 0 {
            return bad("pairs.windows must be positive".into());
        }
        if self.eval.episodes == 0 {
            return bad("eval.episodes must be positive".into());
        }
        self.grid.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(CliError::Config)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [data]
        A = "a.csv"
        B = "b.csv"
        [formation]
        start = "2023-10-01"
        end = "2023-12-01"
        [test]
        start = "2023-12-01"
        end = "2024-01-01"
    "#;

    #[test]
    fn defaults_and_utc_midnight() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.fee, 0.0002);
        assert_eq!(cfg.interval, Interval::M1);
        assert_eq!(cfg.grid, GridSpec::default());
        assert_eq!(cfg.test.bounds().unwrap().0, 1_701_388_800_000);
        assert_eq!(parse_instant("2023-12-01T01:00:00+01:00").unwrap(), 1_701_388_800_000);
    }

    #[test]
    fn overlapping_spans_and_single_symbol_rejected() {
        let mut cfg = RunConfig::parse(MINIMAL).unwrap();
        cfg.formation.end = "2023-12-02".into();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));

        let mut cfg = RunConfig::parse(MINIMAL).unwrap();
        cfg.data.remove("B");
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn overrides_replace_single_keys() {
        let mut cfg = RunConfig::parse(MINIMAL).unwrap();
        cfg.apply(&Overrides { seed: Some(9), fee: Some(0.0), mode: Some(EnvMode::Rl2), ..Default::default() });
        assert_eq!((cfg.seed, cfg.train.seed, cfg.fee, cfg.env.mode), (9, 9, 0.0, EnvMode::Rl2));
        assert_eq!(cfg.env.reward, RewardVariant::Shaped);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = RunConfig::parse(&format!("bogus = 1\n{MINIMAL}")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
