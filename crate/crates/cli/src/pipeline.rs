//! Pipeline stages behind the subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::ValueEnum;
use pairlab::agent::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use pairlab::agent::{run_episode, train, ActorCritic, Agent, PolicyAgent, ZoneAgreement};
use pairlab::backtest::{run_backtest, BacktestConfig};
use pairlab::econometrics::{rank_pairs, windowed_pair_scores, PairScore, PairScoreConfig, StatsError};
use pairlab::env::{self, serve_external, EnvConfig, EnvMode, TradingEnv};
use pairlab::grid::{grid_search, select_best, write_grid_csv, GridConfig};
use pairlab::ledger::{write_action_log, write_blotter, FeeModel};
use pairlab::market_data::{align_pair, parse_klines, resample, write_klines, AlignedPairSeries, Candle, Interval};
use pairlab::metrics::{write_equity_csv, MetricsConfig, MetricsReport};
use pairlab::parallel::Execution;
use pairlab::policy::{ActionSet, FlatPolicy, GatevPolicy, Policy, RandomPolicy};
use pairlab::spread::{self, Thresholds, MIN_WINDOW};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::artifacts::{sha256_hex, to_value, Artifact};
use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// Fee rates swept by `report`.
pub const FEE_TIERS: [f64; 4] = [0.0005, 0.0002, 0.0001, 0.0];

const INTERVALS: [Interval; 3] = [Interval::M1, Interval::M3, Interval::M5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Gatev,
    Flat,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    A2c,
    Gatev,
    Flat,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Formation,
    Test,
}

/// The pair chosen by `pairs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub symbol_i: String,
    pub symbol_j: String,
    pub interval: Interval,
    pub coint_score: f64,
    pub corr_score: f64,
    pub windows_evaluated: usize,
}

/// Strategy parameters handed from the grid search (or the config) to the
/// trading stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestPoint {
    pub open: f64,
    pub close: f64,
    pub window: usize,
    pub rtot: Option<f64>,
}

struct Params {
    selection: Selection,
    thresholds: Thresholds,
    window: usize,
    key: Value,
}

pub struct Pipeline {
    pub cfg: RunConfig,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Self {
        Self { cfg }
    }

    fn out(&self) -> &Path {
        &self.cfg.output_dir
    }

    fn fee(&self, rate: f64) -> Result<FeeModel> {
        Ok(FeeModel::new(rate)?)
    }

    fn metrics_cfg(&self) -> MetricsConfig {
        MetricsConfig { risk_free_rate: self.cfg.risk_free_rate }
    }

    pub fn ingest_artifact(&self) -> Result<Artifact> {
        let mut files = BTreeMap::new();
        for (sym, path) in &self.cfg.data {
            let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            files.insert(sym.clone(), sha256_hex(&bytes));
        }
        Ok(Artifact::locate(self.out(), "ingest", json!({ "files": files })))
    }

    /// Parses every 1m kline file and stores it with its 3m and 5m resamples.
    pub fn ingest(&self) -> Result<Artifact> {
        let art = self.ingest_artifact()?;
        art.begin()?;
        let mut summary = BTreeMap::new();
        let mut names = Vec::new();
        for (sym, path) in &self.cfg.data {
            let m1 = parse_klines(path, Interval::M1).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let mut per = BTreeMap::new();
            for iv in INTERVALS {
                let candles = if iv == Interval::M1 { m1.clone() } else { resample(&m1, iv.minutes() as usize)? };
                let mut buf = Vec::new();
                write_klines(&mut buf, &candles)?;
                let name = format!("{sym}-{iv}.csv");
                art.write(&name, buf)?;
                names.push(name);
                per.insert(
                    iv.to_string(),
                    json!({
                        "rows": candles.len(),
                        "first_open_time": candles.first().map(|c| c.open_time),
                        "last_open_time": candles.last().map(|c| c.open_time),
                    }),
                );
            }
            summary.insert(sym.clone(), per);
        }
        art.write_json("summary.json", &summary)?;
        names.push("summary.json".into());
        art.finish(&names.iter().map(String::as_str).collect::<Vec<_>>())?;
        Ok(art)
    }

    fn candles(&self, ingest: &Artifact, sym: &str, iv: Interval, (lo, hi): (i64, i64)) -> Result<Vec<Candle>> {
        let mut c = parse_klines(ingest.path(&format!("{sym}-{iv}.csv")), iv)?;
        c.retain(|k| k.open_time >= lo && k.open_time < hi);
        Ok(c)
    }

    /// Aligned closes of `a` and `b` restricted to `span` before any filtering,
    /// so samples outside the span cannot influence the result.
    fn aligned(&self, ingest: &Artifact, a: &str, b: &str, iv: Interval, span: (i64, i64)) -> Result<AlignedPairSeries> {
        let ca = self.candles(ingest, a, iv, span)?;
        let cb = self.candles(ingest, b, iv, span)?;
        Ok(align_pair((a, &ca), (b, &cb), self.cfg.min_volume_quantile)?)
    }

    fn formation_series(&self, sel: &Selection) -> Result<AlignedPairSeries> {
        let ingest = self.ingest_artifact()?;
        ingest.require("ingest")?;
        self.aligned(&ingest, &sel.symbol_i, &sel.symbol_j, self.cfg.interval, self.cfg.formation.bounds()?)
    }

    /// Test-span series preceded by the last `window - 1` formation samples,
    /// so trading starts on the first test bar with a warm spread engine.
    fn test_series(&self, sel: &Selection, window: usize) -> Result<AlignedPairSeries> {
        let ingest = self.ingest_artifact()?;
        ingest.require("ingest")?;
        let iv = self.cfg.interval;
        let warm = window.saturating_sub(1);
        let formation = self.formation_series(sel)?;
        if formation.len() < warm {
            return Err(CliError::Data(format!("formation span has {} samples, the {window}-sample window needs {warm} for warm-up", formation.len())));
        }
        let test = self.aligned(&ingest, &sel.symbol_i, &sel.symbol_j, iv, self.cfg.test.bounds()?)?;
        let tail = formation.slice(formation.len() - warm, formation.len());
        let cat = |a: &[f64], b: &[f64]| a.iter().chain(b).copied().collect::<Vec<_>>();
        let ts = tail.timestamps.iter().chain(&test.timestamps).copied().collect();
        Ok(AlignedPairSeries::new(&sel.symbol_i, &sel.symbol_j, iv, ts, cat(&tail.prices_i, &test.prices_i), cat(&tail.prices_j, &test.prices_j))?)
    }

    pub fn pairs_artifact(&self) -> Result<Artifact> {
        let ingest = self.ingest_artifact()?;
        let c = &self.cfg;
        Ok(Artifact::locate(
            self.out(),
            "pairs",
            json!({
                "ingest": ingest.hash,
                "formation": c.formation,
                "pairs": c.pairs,
                "interval": c.interval,
                "min_volume_quantile": c.min_volume_quantile,
            }),
        ))
    }

    fn score(&self, ingest: &Artifact, a: &str, b: &str, iv: Interval) -> Result<Option<PairScore>> {
        let series = match self.aligned(ingest, a, b, iv, self.cfg.formation.bounds()?) {
            Ok(s) => s,
            Err(CliError::Data(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let window = series.len() / self.cfg.pairs.windows;
        if window < MIN_WINDOW {
            return Ok(None);
        }
        let pcfg = PairScoreConfig {
            significance: self.cfg.pairs.significance,
            lags: self.cfg.pairs.lags,
            execution: Execution::Parallel,
            ..PairScoreConfig::new(window)
        };
        match windowed_pair_scores(&series, &pcfg) {
            Ok(s) => Ok(Some(s)),
            Err(StatsError::NoUsableWindow) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Scores every symbol pair at every interval over the formation span and
    /// selects the best pair at the configured interval.
    pub fn pairs(&self) -> Result<Artifact> {
        let ingest = self.ingest_artifact()?;
        ingest.require("ingest")?;
        let art = self.pairs_artifact()?;
        let syms: Vec<&String> = self.cfg.data.keys().collect();
        let mut pairs = Vec::new();
        for (k, a) in syms.iter().enumerate() {
            for b in &syms[k + 1..] {
                pairs.push((a.to_string(), b.to_string()));
            }
        }

        let mut table: BTreeMap<String, Vec<Option<PairScore>>> = BTreeMap::new();
        for (a, b) in &pairs {
            let row = INTERVALS.iter().map(|&iv| self.score(&ingest, a, b, iv)).collect::<Result<Vec<_>>>()?;
            table.insert(format!("{a}-{b}"), row);
        }
        let col = INTERVALS.iter().position(|&iv| iv == self.cfg.interval).expect("interval is one of the three");
        let scored: BTreeMap<String, PairScore> = table.iter().filter_map(|(k, r)| r[col].map(|s| (k.clone(), s))).collect();
        let ranked = rank_pairs(&scored);
        let Some(best) = ranked.first() else {
            return Err(CliError::Numeric(format!("no pair could be scored at {}", self.cfg.interval)));
        };
        let (a, b) = pairs.iter().find(|(a, b)| &format!("{a}-{b}") == best).expect("ranked names come from the table");
        let s = scored[best];
        let selection = Selection {
            symbol_i: a.clone(),
            symbol_j: b.clone(),
            interval: self.cfg.interval,
            coint_score: s.coint_score,
            corr_score: s.corr_score,
            windows_evaluated: s.windows_evaluated,
        };

        let mut csv = String::from("pair");
        for iv in INTERVALS {
            let _ = write!(csv, ",coint_{iv},corr_{iv}");
        }
        csv.push('\n');
        let unranked = table.keys().filter(|k| !scored.contains_key(*k));
        for name in ranked.iter().chain(unranked) {
            csv.push_str(name);
            for s in &table[name] {
                match s {
                    Some(s) => write!(csv, ",{},{}", s.coint_score, s.corr_score),
                    None => write!(csv, ",,"),
                }
                .expect("writing to a String");
            }
            csv.push('\n');
        }

        art.begin()?;
        art.write("pairs.csv", csv)?;
        art.write_json("selected.json", &selection)?;
        art.finish(&["pairs.csv", "selected.json"])?;
        Ok(art)
    }

    fn selection(&self) -> Result<(Artifact, Selection)> {
        let pairs = self.pairs_artifact()?;
        pairs.require("pairs")?;
        let sel: Selection = pairs.read_json("selected.json")?;
        if sel.interval != self.cfg.interval {
            return Err(CliError::Config(format!("pair was selected at {} but the run uses {}", sel.interval, self.cfg.interval)));
        }
        Ok((pairs, sel))
    }

    pub fn grid_artifact(&self) -> Result<Artifact> {
        let pairs = self.pairs_artifact()?;
        let c = &self.cfg;
        Ok(Artifact::locate(
            self.out(),
            "gridsearch",
            json!({ "pairs": pairs.hash, "grid": c.grid, "fee": c.fee, "initial_cash": c.initial_cash }),
        ))
    }

    /// Backtests the threshold rule at every grid point on the formation span.
    pub fn gridsearch(&self) -> Result<Artifact> {
        let (_, sel) = self.selection()?;
        let art = self.grid_artifact()?;
        let series = self.formation_series(&sel)?;
        let gcfg = GridConfig { initial_cash: self.cfg.initial_cash, ..GridConfig::new(self.fee(self.cfg.fee)?) };
        let outcome = grid_search(&series, &self.cfg.grid, &gcfg)?;
        let best = select_best(&outcome.ranked)?;
        let best = BestPoint { open: best.open, close: best.close, window: best.window, rtot: Some(best.rtot) };

        art.begin()?;
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, &outcome)?;
        art.write("grid.csv", buf)?;
        art.write_json("best.json", &best)?;
        art.finish(&["grid.csv", "best.json"])?;
        Ok(art)
    }

    fn params(&self) -> Result<Params> {
        let (pairs, selection) = self.selection()?;
        let (best, key) = match self.cfg.strategy {
            Some(s) => (BestPoint { open: s.open, close: s.close, window: s.window, rtot: None }, json!({ "pairs": pairs.hash, "strategy": s })),
            None => {
                let grid = self.grid_artifact()?;
                grid.require("gridsearch")?;
                (grid.read_json("best.json")?, json!({ "gridsearch": grid.hash }))
            }
        };
        Ok(Params { selection, thresholds: Thresholds::new(best.open, best.close)?, window: best.window, key })
    }

    fn backtest_artifact(&self, p: &Params, policy: PolicyKind) -> Artifact {
        let c = &self.cfg;
        Artifact::locate(
            self.out(),
            "backtest",
            json!({
                "params": p.key,
                "policy": policy,
                "test": c.test,
                "fee": c.fee,
                "initial_cash": c.initial_cash,
                "risk_free_rate": c.risk_free_rate,
                "seed": c.seed,
            }),
        )
    }

    fn policy(&self, kind: PolicyKind) -> Box<dyn Policy> {
        match kind {
            PolicyKind::Gatev => Box::new(GatevPolicy),
            PolicyKind::Flat => Box::new(FlatPolicy),
            PolicyKind::Random => Box::new(RandomPolicy::new(self.cfg.seed, ActionSet::Discrete)),
        }
    }

    fn run_rule(&self, p: &Params, series: &AlignedPairSeries, kind: PolicyKind, fee: f64) -> Result<pairlab::backtest::BacktestResult> {
        let bcfg = BacktestConfig { initial_cash: self.cfg.initial_cash, ..BacktestConfig::new(p.window, p.thresholds, self.fee(fee)?) };
        Ok(run_backtest(series, self.policy(kind).as_mut(), &bcfg)?)
    }

    /// Trades a rule policy over the test span.
    pub fn backtest(&self, kind: PolicyKind) -> Result<Artifact> {
        let p = self.params()?;
        let art = self.backtest_artifact(&p, kind);
        let series = self.test_series(&p.selection, p.window)?;
        let r = self.run_rule(&p, &series, kind, self.cfg.fee)?;
        let report = MetricsReport::compute(&r.equity, &r.positions, &r.trades, &self.metrics_cfg());

        art.begin()?;
        write_report(&art, &report)?;
        let mut buf = Vec::new();
        write_equity_csv(&mut buf, &r.equity)?;
        art.write("equity.csv", buf)?;
        let mut buf = Vec::new();
        write_blotter(&mut buf, &r.trades)?;
        art.write("blotter.csv", buf)?;
        let mut buf = Vec::new();
        write_action_log(&mut buf, &r.actions)?;
        art.write("actions.csv", buf)?;
        let obs: Vec<_> = r.steps.iter().filter_map(|s| s.observation).collect();
        let mut buf = Vec::new();
        spread::write_trace(&mut buf, &obs)?;
        art.write("spread.csv", buf)?;
        art.write_json(
            "summary.json",
            &json!({
                "pair": series.pair_name(),
                "policy": kind,
                "thresholds": p.thresholds,
                "window": p.window,
                "fee": self.cfg.fee,
                "first_trading_timestamp": r.equity.timestamps.first(),
                "final_value": r.final_value(),
                "skipped_steps": r.skipped_steps,
                "total_fees": r.total_fees,
                "bankrupt": r.bankrupt,
            }),
        )?;
        art.finish(&["metrics.json", "metrics.txt", "equity.csv", "blotter.csv", "actions.csv", "spread.csv", "summary.json"])?;
        Ok(art)
    }

    fn env_config(&self, p: &Params, fee: f64) -> Result<EnvConfig> {
        let e = &self.cfg.env;
        let cfg = EnvConfig {
            fee: self.fee(fee)?,
            gamma: e.gamma,
            reward_weights: e.weights,
            reward_variant: e.reward,
            initial_cash: self.cfg.initial_cash,
            seed: self.cfg.seed,
            history: e.history,
            close_band: e.close_band,
            ..EnvConfig::new(e.mode, p.thresholds, p.window)
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_artifact(&self) -> Result<Artifact> {
        let p = self.params()?;
        Ok(self.train_artifact_for(&p))
    }

    fn train_artifact_for(&self, p: &Params) -> Artifact {
        let c = &self.cfg;
        Artifact::locate(
            self.out(),
            "train",
            json!({ "params": p.key, "env": c.env, "train": c.train, "fee": c.fee, "initial_cash": c.initial_cash }),
        )
    }

    /// Trains the actor–critic on the formation span.
    pub fn train(&self) -> Result<Artifact> {
        let p = self.params()?;
        let art = self.train_artifact_for(&p);
        let series = Arc::new(self.formation_series(&p.selection)?);
        let env_cfg = self.env_config(&p, self.cfg.fee)?;
        let mut tcfg = self.cfg.train.clone();
        tcfg.execution = Execution::Parallel;
        let outcome = train(|slot| TradingEnv::new(series.clone(), EnvConfig { seed: env_cfg.seed + slot as u64, ..env_cfg }), &tcfg)?;

        art.begin()?;
        let meta = CheckpointMeta::describe(&outcome.params, self.cfg.seed, json!({ "env": env_cfg, "train": tcfg, "pair": series.pair_name() }));
        save_checkpoint(&art.path("agent.ckpt"), &outcome.params, &meta)?;
        let mut csv = String::from("episode,return\n");
        for (i, r) in outcome.episode_returns.iter().enumerate() {
            let _ = writeln!(csv, "{i},{r}");
        }
        art.write("training.csv", csv)?;
        art.finish(&["agent.ckpt", "agent.ckpt.json", "training.csv"])?;
        Ok(art)
    }

    fn agent(&self, p: &Params, kind: AgentKind) -> Result<Box<dyn Agent>> {
        let mode = self.cfg.env.mode;
        Ok(match kind {
            AgentKind::A2c => {
                let train = self.train_artifact_for(p);
                train.require("train")?;
                let (params, _) = load_checkpoint(&train.path("agent.ckpt"))?;
                Box::new(ActorCritic::new(params, self.cfg.eval.act, self.cfg.seed))
            }
            AgentKind::Gatev => Box::new(PolicyAgent { policy: GatevPolicy, mode }),
            AgentKind::Flat => Box::new(PolicyAgent { policy: FlatPolicy, mode }),
            AgentKind::Random => {
                let set = if mode == EnvMode::Rl1 { ActionSet::Discrete } else { ActionSet::Continuous };
                Box::new(PolicyAgent { policy: RandomPolicy::new(self.cfg.seed, set), mode })
            }
        })
    }

    fn eval_artifact(&self, p: &Params, kind: AgentKind) -> Artifact {
        let c = &self.cfg;
        let upstream = match kind {
            AgentKind::A2c => json!({ "train": self.train_artifact_for(p).hash }),
            _ => json!({ "params": p.key }),
        };
        Artifact::locate(
            self.out(),
            "eval",
            json!({
                "upstream": upstream,
                "agent": kind,
                "env": c.env,
                "eval": c.eval,
                "test": c.test,
                "fee": c.fee,
                "initial_cash": c.initial_cash,
                "risk_free_rate": c.risk_free_rate,
                "seed": c.seed,
            }),
        )
    }

    /// Runs an agent through the trading environment over the test span.
    pub fn eval(&self, kind: AgentKind) -> Result<Artifact> {
        let p = self.params()?;
        let art = self.eval_artifact(&p, kind);
        let series = Arc::new(self.test_series(&p.selection, p.window)?);
        let env_cfg = self.env_config(&p, self.cfg.fee)?;
        let mut agent = self.agent(&p, kind)?;

        let mut agreement = ZoneAgreement::default();
        let mut returns = Vec::new();
        let mut first = None;
        for _ in 0..self.cfg.eval.episodes {
            let mut env = TradingEnv::new(series.clone(), env_cfg)?;
            returns.push(run_episode(agent.as_mut(), &mut env, &mut agreement)?);
            first.get_or_insert(env);
        }
        let env = first.expect("at least one episode");
        let report = MetricsReport::compute(&env.equity(), env.positions(), env.trades(), &self.metrics_cfg());

        art.begin()?;
        write_report(&art, &report)?;
        let mut buf = Vec::new();
        write_equity_csv(&mut buf, &env.equity())?;
        art.write("equity.csv", buf)?;
        let mut buf = Vec::new();
        write_blotter(&mut buf, env.trades())?;
        art.write("blotter.csv", buf)?;
        let mut buf = Vec::new();
        env::write_trace(&mut buf, env.trace())?;
        art.write("trace.csv", buf)?;
        let mut csv = String::from("episode,return\n");
        for (i, r) in returns.iter().enumerate() {
            let _ = writeln!(csv, "{i},{r}");
        }
        art.write("returns.csv", csv)?;
        art.write_json(
            "summary.json",
            &json!({
                "pair": series.pair_name(),
                "agent": kind,
                "mode": env_cfg.mode,
                "reward": env_cfg.reward_variant,
                "thresholds": p.thresholds,
                "window": p.window,
                "fee": self.cfg.fee,
                "episodes": returns.len(),
                "mean_return": returns.iter().sum::<f64>() / returns.len() as f64,
                "zone_agreement": { "matched": agreement.matched, "total": agreement.total, "rate": agreement.rate() },
            }),
        )?;
        art.finish(&["metrics.json", "metrics.txt", "equity.csv", "blotter.csv", "trace.csv", "returns.csv", "summary.json"])?;
        Ok(art)
    }

    /// Comparison table: the rule strategy (and the trained agent when a
    /// checkpoint exists) at every fee tier, plus any extra run artifacts.
    pub fn report(&self, extra: &[PathBuf]) -> Result<Artifact> {
        let p = self.params()?;
        let train = self.train_artifact_for(&p);
        let trained = train.exists();
        let mut extras = Vec::new();
        for dir in extra {
            let manifest: Value = read_json(&dir.join(crate::artifacts::MANIFEST))?;
            let metrics: Value = read_json(&dir.join("metrics.json"))?;
            let label = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            extras.push((label, manifest, metrics));
        }
        let c = &self.cfg;
        let art = Artifact::locate(
            self.out(),
            "report",
            json!({
                "params": p.key,
                "train": if trained { Value::from(train.hash.clone()) } else { Value::Null },
                "tiers": FEE_TIERS,
                "env": c.env,
                "eval": c.eval,
                "test": c.test,
                "initial_cash": c.initial_cash,
                "risk_free_rate": c.risk_free_rate,
                "seed": c.seed,
                "extra": extras.iter().map(|(_, m, _)| m["hash"].clone()).collect::<Vec<_>>(),
            }),
        );

        let series = Arc::new(self.test_series(&p.selection, p.window)?);
        let mut rows: Vec<(String, Value, Value)> = Vec::new();
        for fee in FEE_TIERS {
            let r = self.run_rule(&p, &series, PolicyKind::Gatev, fee)?;
            let report = MetricsReport::compute(&r.equity, &r.positions, &r.trades, &self.metrics_cfg());
            rows.push(("gatev".into(), json!(fee), to_value(&report)));
            if trained {
                let mut agent = self.agent(&p, AgentKind::A2c)?;
                let mut env = TradingEnv::new(series.clone(), self.env_config(&p, fee)?)?;
                run_episode(agent.as_mut(), &mut env, &mut ZoneAgreement::default())?;
                let report = MetricsReport::compute(&env.equity(), env.positions(), env.trades(), &self.metrics_cfg());
                rows.push((format!("a2c-{}", c.env.mode), json!(fee), to_value(&report)));
            }
        }
        for (label, manifest, metrics) in extras {
            rows.push((label, manifest["key"]["fee"].clone(), metrics));
        }

        art.begin()?;
        art.write("comparison.csv", comparison_csv(&rows))?;
        art.write("comparison.txt", comparison_text(&rows))?;
        let json_rows: Vec<Value> = rows.iter().map(|(s, f, m)| json!({ "strategy": s, "fee": f, "metrics": m })).collect();
        art.write_json("comparison.json", &json_rows)?;
        art.finish(&["comparison.csv", "comparison.txt", "comparison.json"])?;
        Ok(art)
    }

    /// Exposes the environment over line-delimited JSON on the given streams.
    pub fn serve_env(&self, split: Split, input: impl BufRead, output: impl Write) -> Result<()> {
        let p = self.params()?;
        let series = match split {
            Split::Formation => self.formation_series(&p.selection)?,
            Split::Test => self.test_series(&p.selection, p.window)?,
        };
        let mut env = TradingEnv::new(Arc::new(series), self.env_config(&p, self.cfg.fee)?)?;
        serve_external(&mut env, input, output)?;
        Ok(())
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_report(art: &Artifact, report: &MetricsReport) -> Result<()> {
    art.write_json("metrics.json", report)?;
    art.write("metrics.txt", report.to_text())
}

const COLUMNS: [&str; 16] = [
    "cumulative_return",
    "cagr",
    "sharpe",
    "total_actions",
    "won_actions",
    "lost_actions",
    "win_loss_ratio",
    "max_win",
    "max_loss",
    "avg_win",
    "avg_loss",
    "time_in_market",
    "volatility_ann",
    "skew",
    "kurtosis",
    "max_drawdown",
];

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn comparison_csv(rows: &[(String, Value, Value)]) -> String {
    let mut out = format!("strategy,fee,{}\n", COLUMNS.join(","));
    for (s, fee, m) in rows {
        let cells: Vec<String> = COLUMNS.iter().map(|c| cell(&m[*c])).collect();
        let _ = writeln!(out, "{s},{},{}", cell(fee), cells.join(","));
    }
    out
}

/// Metrics down the side, one column per run.
fn comparison_text(rows: &[(String, Value, Value)]) -> String {
    let mut out = format!("{:<20}", "metric");
    for (s, fee, _) in rows {
        let _ = write!(out, " {:>18}", format!("{s}@{}", cell(fee)));
    }
    out.push('\n');
    for c in COLUMNS {
        let _ = write!(out, "{c:<20}");
        for (_, _, m) in rows {
            let v = match &m[c] {
                Value::Number(n) if n.is_f64() => format!("{:.4}", n.as_f64().unwrap_or(f64::NAN)),
                other => cell(other),
            };
            let _ = write!(out, " {v:>18}");
        }
        out.push('\n');
    }
    out
}

/// Wraps stdin/stdout for `serve-env`.
pub fn serve_stdio(p: &Pipeline, split: Split) -> Result<()> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    p.serve_env(split, stdin.lock(), stdout.lock())
}
