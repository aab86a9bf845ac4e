use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::adf::{adf_regression, finish, AdfRegression, AdfResult};
use super::critical::{critical_value, CriticalTable, Significance};
use super::{mean, ols, pearson, OlsFit, StatsError};
use crate::market_data::AlignedPairSeries;
use crate::parallel::{self, Execution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngleGranger {
    pub cointegrated: bool,
    pub adf: AdfResult,
    pub fit: OlsFit,
}

/// Two-step Engle–Granger test: OLS of `y` on `x`, then an ADF test without
/// deterministic terms on the residuals, judged against residual-based
/// cointegration critical values.
pub fn engle_granger(y: &[f64], x: &[f64], lags: Option<usize>, significance: Significance) -> Result<EngleGranger, StatsError> {
    let fit = ols(y, x)?;
    let my = mean(y);
    let var_y = y.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / y.len() as f64;
    let var_e = fit.rss / y.len() as f64;
    if var_e < 1e-12 * var_y.max(1.0) {
        return Err(StatsError::DegenerateResiduals);
    }
    let adf_fit = adf_regression(&fit.residuals, lags, AdfRegression::NoConstant)?;
    // Sample-size convention of the response surface: n - 1.
    let cv = critical_value(CriticalTable::EngleGrangerTwoVariable, significance, y.len() - 1);
    let adf = finish(adf_fit, cv, significance);
    Ok(EngleGranger { cointegrated: adf.stationary, adf, fit })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    /// Fraction of usable windows that pass the cointegration test.
    pub coint_score: f64,
    /// Mean per-window Pearson correlation.
    pub corr_score: f64,
    pub windows_evaluated: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScoreConfig {
    pub window: usize,
    pub step: usize,
    pub significance: Significance,
    pub lags: Option<usize>,
    pub execution: Execution,
}

impl PairScoreConfig {
    pub fn new(window: usize) -> Self {
        Self { window, step: window, significance: Significance::FivePercent, lags: None, execution: Execution::Parallel }
    }
}

enum WindowOutcome {
    Scored { corr: f64, cointegrated: bool },
    Skipped,
}

fn score_window(y: &[f64], x: &[f64], cfg: &PairScoreConfig) -> Result<WindowOutcome, StatsError> {
    let skip = |e: &StatsError| matches!(e, StatsError::ZeroVariance | StatsError::DegenerateResiduals | StatsError::SingularDesign);
    let corr = match pearson(y, x) {
        Ok(c) => c,
        Err(e) if skip(&e) => return Ok(WindowOutcome::Skipped),
        Err(e) => return Err(e),
    };
    match engle_granger(y, x, cfg.lags, cfg.significance) {
        Ok(eg) => Ok(WindowOutcome::Scored { corr, cointegrated: eg.cointegrated }),
        Err(e) if skip(&e) => Ok(WindowOutcome::Skipped),
        Err(e) => Err(e),
    }
}

/// Slides a window over the pair and averages per-window correlation and
/// cointegration decisions. Degenerate windows are left out of both averages.
pub fn windowed_pair_scores(pair: &AlignedPairSeries, cfg: &PairScoreConfig) -> Result<PairScore, StatsError> {
    let n = pair.len();
    if cfg.window == 0 || cfg.step == 0 {
        return Err(StatsError::InsufficientData("window and step must be positive".into()));
    }
    if n < cfg.window {
        return Err(StatsError::SeriesTooShort { len: n, window: cfg.window });
    }
    let starts: Vec<usize> = (0..=n - cfg.window).step_by(cfg.step).collect();
    let outcomes = parallel::map(cfg.execution, &starts, |&s| {
        let e = s + cfg.window;
        score_window(&pair.prices_i[s..e], &pair.prices_j[s..e], cfg)
    });

    let (mut corr_sum, mut passed, mut used) = (0.0, 0usize, 0usize);
    for outcome in outcomes {
        if let WindowOutcome::Scored { corr, cointegrated } = outcome? {
            corr_sum += corr;
            passed += usize::from(cointegrated);
            used += 1;
        }
    }
    if used == 0 {
        return Err(StatsError::NoUsableWindow);
    }
    Ok(PairScore { coint_score: passed as f64 / used as f64, corr_score: corr_sum / used as f64, windows_evaluated: used })
}

/// Pairs ordered best first: cointegration score, then correlation, then name.
pub fn rank_pairs(scores: &BTreeMap<String, PairScore>) -> Vec<String> {
    let mut names: Vec<&String> = scores.keys().collect();
    names.sort_by(|a, b| {
        let (sa, sb) = (&scores[*a], &scores[*b]);
        sb.coint_score
            .total_cmp(&sa.coint_score)
            .then_with(|| sb.corr_score.total_cmp(&sa.corr_score))
            .then_with(|| a.cmp(b))
    });
    debug_assert!(names.windows(2).all(|w| w[0].cmp(w[1]) != Ordering::Equal));
    names.into_iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::Interval;
    use crate::synthetic::{cointegrated_pair, independent_walks};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn series(pi: Vec<f64>, pj: Vec<f64>) -> AlignedPairSeries {
        let ts = (0..pi.len() as i64).map(|k| k * 60_000).collect();
        AlignedPairSeries::new("I", "J", Interval::M1, ts, pi, pj).unwrap()
    }

    #[test]
    fn exact_relation_is_degenerate() {
        let x: Vec<f64> = (0..100).map(|i| 100.0 + (i as f64 * 0.37).sin() * 5.0 + i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert_eq!(engle_granger(&y, &x, None, Significance::FivePercent).unwrap_err(), StatsError::DegenerateResiduals);
    }

    #[test]
    fn detects_constructed_cointegration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (y, x) = cointegrated_pair(&mut rng, 1000, 1.5, 0.5);
        assert!(engle_granger(&y, &x, None, Significance::FivePercent).unwrap().cointegrated);
        let (a, b) = independent_walks(&mut rng, 1000);
        assert!(!engle_granger(&a, &b, None, Significance::FivePercent).unwrap().cointegrated);
    }

    #[test]
    fn single_window_equals_whole_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (y, x) = cointegrated_pair(&mut rng, 300, 1.2, 0.5);
        let s = series(y.clone(), x.clone());
        let score = windowed_pair_scores(&s, &PairScoreConfig::new(300)).unwrap();
        assert_eq!(score.windows_evaluated, 1);
        assert!(score.coint_score == 0.0 || score.coint_score == 1.0);
        assert_eq!(score.corr_score, pearson(&y, &x).unwrap());
    }

    #[test]
    fn partition_means_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (y, x) = cointegrated_pair(&mut rng, 600, 0.8, 1.0);
        let s = series(y.clone(), x.clone());
        let cfg = PairScoreConfig::new(100);
        let score = windowed_pair_scores(&s, &cfg).unwrap();
        let mut corr = Vec::new();
        let mut coint = 0;
        for k in 0..6 {
            let r = k * 100..(k + 1) * 100;
            corr.push(pearson(&y[r.clone()], &x[r.clone()]).unwrap());
            coint += usize::from(engle_granger(&y[r.clone()], &x[r], None, Significance::FivePercent).unwrap().cointegrated);
        }
        let mean_corr = corr.iter().sum::<f64>() / 6.0;
        assert_eq!(score.windows_evaluated, 6);
        assert_eq!(score.corr_score, mean_corr);
        assert_eq!(score.coint_score, coint as f64 / 6.0);

        let seq = windowed_pair_scores(&s, &PairScoreConfig { execution: Execution::Sequential, ..cfg }).unwrap();
        assert_eq!(seq, score);
    }

    #[test]
    fn three_windows_two_cointegrated() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (mut y, mut x) = cointegrated_pair(&mut rng, 400, 1.0, 0.3);
        let (y2, x2) = cointegrated_pair(&mut rng, 400, 2.0, 0.3);
        let (a, b) = independent_walks(&mut rng, 400);
        // offset each block so the walks connect loosely; each window is
        // judged on its own
        y.extend(y2.iter().map(|v| v + 50.0));
        x.extend(x2.iter().map(|v| v + 50.0));
        y.extend(a.iter().map(|v| v + 100.0));
        x.extend(b.iter().map(|v| v + 100.0));

        let oracle: Vec<bool> = (0..3)
            .map(|k| {
                let r = k * 400..(k + 1) * 400;
                engle_granger(&y[r.clone()], &x[r], None, Significance::FivePercent).unwrap().cointegrated
            })
            .collect();
        assert_eq!(oracle, vec![true, true, false]);
        let score = windowed_pair_scores(&series(y, x), &PairScoreConfig::new(400)).unwrap();
        assert!((score.coint_score - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_windows_are_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut y, mut x) = cointegrated_pair(&mut rng, 200, 1.0, 0.5);
        y.extend(std::iter::repeat_n(10.0, 200));
        x.extend(std::iter::repeat_n(20.0, 200));
        let score = windowed_pair_scores(&series(y, x), &PairScoreConfig::new(200)).unwrap();
        assert_eq!(score.windows_evaluated, 1);
    }

    #[test]
    fn too_short_series() {
        let s = series(vec![1.0, 2.0, 3.0], vec![1.0, 3.0, 2.0]);
        assert!(matches!(windowed_pair_scores(&s, &PairScoreConfig::new(10)), Err(StatsError::SeriesTooShort { .. })));
    }

    #[test]
    fn ranking_rules() {
        let mut m = BTreeMap::new();
        m.insert("A-B".to_string(), PairScore { coint_score: 0.5, corr_score: 0.8, windows_evaluated: 4 });
        assert_eq!(rank_pairs(&m), vec!["A-B"]);
        m.insert("A-C".to_string(), PairScore { coint_score: 0.5, corr_score: 0.9, windows_evaluated: 4 });
        m.insert("B-C".to_string(), PairScore { coint_score: 0.5, corr_score: 0.9, windows_evaluated: 4 });
        m.insert("C-D".to_string(), PairScore { coint_score: 0.1, corr_score: 0.99, windows_evaluated: 4 });
        assert_eq!(rank_pairs(&m), vec!["A-C", "B-C", "A-B", "C-D"]);
    }
}
