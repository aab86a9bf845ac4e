//! Advantage actor–critic written from scratch: a categorical head for RL1,
//! a tanh-squashed Gaussian head for RL2, n-step rollouts, plain SGD with
//! global gradient-norm clipping.
//!
//! Randomness is split by stream: parameter initialisation draws from stream
//! 0 of a ChaCha8 generator seeded with the run seed, rollout slot `i` from
//! stream `i + 1`. Gradients are accumulated in slot order, so parallel and
//! sequential rollouts give bit-identical parameters.

pub mod checkpoint;
mod mlp;

use std::f64::consts::{LN_2, PI};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointMeta, MAGIC};
pub use mlp::{BackwardPass, Forward, Mlp};

use crate::env::{action_component, EnvAction, EnvError, EnvMode, TradingEnv};
use crate::metrics::{MetricsConfig, MetricsReport};
use crate::parallel::{self, Execution};
use crate::policy::{Observation, Policy};
use crate::spread::Zone;

/// z-scores are clipped to ±this before entering the networks.
pub const Z_CLIP: f64 = 10.0;
const LOG_STD_INIT: f64 = -0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("network produced non-finite outputs")]
    NonFiniteParams,
    #[error("training diverged at update {0}")]
    DivergedTraining(u64),
    #[error("agent head {head:?} cannot drive a {mode} environment")]
    HeadMismatch { head: HeadKind, mode: EnvMode },
    #[error("observation has {got} inputs, network expects {expected}")]
    InputMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Three logits over {long, close, short}.
    Categorical,
    /// Mean plus state-independent log σ, squashed by tanh.
    SquashedGaussian,
}

impl HeadKind {
    pub fn for_mode(mode: EnvMode) -> Self {
        match mode {
            EnvMode::Rl1 => HeadKind::Categorical,
            EnvMode::Rl2 => HeadKind::SquashedGaussian,
        }
    }

    fn outputs(self) -> usize {
        match self {
            HeadKind::Categorical => 3,
            HeadKind::SquashedGaussian => 1,
        }
    }
}

/// Network input width for an observation with `history` past z-scores.
pub fn input_len(history: usize) -> usize {
    7 + history
}

/// `[P, z, one-hot zone (5), z history]`, with z values clipped.
pub fn encode_input(obs: &Observation) -> Vec<f64> {
    let mut x = Vec::with_capacity(input_len(obs.z_history.len()));
    x.push(obs.position.clamp(-1.0, 1.0));
    x.push(obs.z.clamp(-Z_CLIP, Z_CLIP));
    x.extend(Zone::ALL.iter().map(|&z| if z == obs.zone { 1.0 } else { 0.0 }));
    x.extend(obs.z_history.iter().map(|z| z.clamp(-Z_CLIP, Z_CLIP)));
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub head: HeadKind,
    pub policy: Mlp,
    pub value: Mlp,
    /// Only used by the Gaussian head.
    pub log_std: f64,
    /// Number of updates applied since initialisation.
    pub version: u64,
}

impl AgentParams {
    pub fn new<R: Rng + ?Sized>(head: HeadKind, input_len: usize, hidden: &[usize], rng: &mut R) -> Self {
        let sizes = |out: usize| [&[input_len][..], hidden, &[out]].concat();
        let policy = Mlp::init(&sizes(head.outputs()), 0.01, rng);
        let value = Mlp::init(&sizes(1), 1.0, rng);
        Self { head, policy, value, log_std: LOG_STD_INIT, version: 0 }
    }

    pub fn input_len(&self) -> usize {
        self.policy.input_len()
    }

    pub fn n_params(&self) -> usize {
        self.policy.params().len() + self.value.params().len() + usize::from(self.head == HeadKind::SquashedGaussian)
    }

    /// Policy parameters, value parameters, then log σ for the Gaussian head.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(self.policy.params());
        v.extend_from_slice(self.value.params());
        if self.head == HeadKind::SquashedGaussian {
            v.push(self.log_std);
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let np = self.policy.params().len();
        let nv = self.value.params().len();
        self.policy.params_mut().copy_from_slice(&flat[..np]);
        self.value.params_mut().copy_from_slice(&flat[np..np + nv]);
        if self.head == HeadKind::SquashedGaussian {
            self.log_std = flat[np + nv];
        }
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|p| p.is_finite())
    }

    /// SHA-256 of the little-endian parameter bytes, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in self.flat() {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    fn check_input(&self, x: &[f64]) -> Result<(), AgentError> {
        if x.len() == self.input_len() {
            Ok(())
        } else {
            Err(AgentError::InputMismatch { got: x.len(), expected: self.input_len() })
        }
    }

    /// Action probabilities of the categorical head.
    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>, AgentError> {
        self.check_input(x)?;
        let p = softmax(self.policy.forward(x).output());
        if p.iter().all(|v| v.is_finite()) {
            Ok(p)
        } else {
            Err(AgentError::NonFiniteParams)
        }
    }

    /// Pre-squash mean and standard deviation of the Gaussian head.
    pub fn gaussian(&self, x: &[f64]) -> Result<(f64, f64), AgentError> {
        self.check_input(x)?;
        let mu = self.policy.forward(x).output()[0];
        let sigma = self.log_std.exp();
        if mu.is_finite() && sigma.is_finite() && sigma > 0.0 {
            Ok((mu, sigma))
        } else {
            Err(AgentError::NonFiniteParams)
        }
    }

    pub fn state_value(&self, x: &[f64]) -> f64 {
        self.value.forward(x).output()[0]
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln(1 - tanh(u)^2)`, stable for large `|u|`.
fn log1m_tanh2(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActMode {
    Stochastic,
    /// Categorical argmax or the squashed Gaussian mean.
    #[default]
    Deterministic,
}

/// A sampled action with what the log-density needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampled {
    Discrete(usize),
    Continuous { pre_squash: f64 },
}

impl Sampled {
    pub fn env_action(self) -> EnvAction {
        match self {
            Sampled::Discrete(i) => EnvAction::discrete(i).expect("categorical head has three actions"),
            Sampled::Continuous { pre_squash } => EnvAction::Quantity(pre_squash.tanh()),
        }
    }
}

pub fn sample_action<R: Rng + ?Sized>(params: &AgentParams, x: &[f64], mode: ActMode, rng: &mut R) -> Result<Sampled, AgentError> {
    match params.head {
        HeadKind::Categorical => {
            let p = params.probabilities(x)?;
            let i = match mode {
                ActMode::Deterministic => (0..3).fold(0, |best, k| if p[k] > p[best] { k } else { best }),
                ActMode::Stochastic => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    (0..3).find(|&k| {
                        acc += p[k];
                        u < acc
                    })
                    .unwrap_or(2)
                }
            };
            Ok(Sampled::Discrete(i))
        }
        HeadKind::SquashedGaussian => {
            let (mu, sigma) = params.gaussian(x)?;
            let pre_squash = match mode {
                ActMode::Deterministic => mu,
                ActMode::Stochastic => mu + sigma * Distribution::<f64>::sample(&StandardNormal, rng),
            };
            Ok(Sampled::Continuous { pre_squash })
        }
    }
}

pub fn act<R: Rng + ?Sized>(params: &AgentParams, obs: &Observation, mode: ActMode, rng: &mut R) -> Result<EnvAction, AgentError> {
    Ok(sample_action(params, &encode_input(obs), mode, rng)?.env_action())
}

/// `ln π(a|x)`, including the tanh change-of-variables term.
pub fn log_prob(params: &AgentParams, x: &[f64], a: Sampled) -> f64 {
    let out = params.policy.forward(x);
    match a {
        Sampled::Discrete(i) => log_softmax(out.output())[i],
        Sampled::Continuous { pre_squash: u } => {
            let z = (u - out.output()[0]) / params.log_std.exp();
            -0.5 * z * z - params.log_std - 0.5 * (2.0 * PI).ln() - log1m_tanh2(u)
        }
    }
}

/// One rollout sample with its detached advantage and n-step return.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub input: Vec<f64>,
    pub action: Sampled,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrads {
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Mean policy entropy (pre-squash for the Gaussian head).
    pub entropy: f64,
    /// Gradient of `policy_loss + value_loss` in [`AgentParams::flat`] order.
    pub grad: Vec<f64>,
}

/// Batch-mean losses and their analytic gradients.
///
/// Policy loss is `-ln π(a|x)·A - entropy_coef·H`; value loss is
/// `value_coef·(V(x) - R)^2`.
pub fn losses(params: &AgentParams, batch: &[Transition], entropy_coef: f64, value_coef: f64, pass: BackwardPass) -> LossGrads {
    let np = params.policy.params().len();
    let nv = params.value.params().len();
    let mut grad = vec![0.0; params.n_params()];
    let n = batch.len().max(1) as f64;
    let (mut pl, mut vl, mut ent) = (0.0, 0.0, 0.0);
    let gaussian_entropy = 0.5 * (2.0 * PI * std::f64::consts::E).ln() + params.log_std;
    for t in batch {
        let fwd = params.policy.forward(&t.input);
        let out = fwd.output();
        let d_out = match t.action {
            Sampled::Discrete(a) => {
                let logp = log_softmax(out);
                let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
                let h = -p.iter().zip(&logp).map(|(pi, li)| pi * li).sum::<f64>();
                pl += (-logp[a] * t.advantage - entropy_coef * h) / n;
                ent += h / n;
                (0..out.len())
                    .map(|k| {
                        let onehot = if k == a { 1.0 } else { 0.0 };
                        (-t.advantage * (onehot - p[k]) + entropy_coef * p[k] * (logp[k] + h)) / n
                    })
                    .collect::<Vec<f64>>()
            }
            Sampled::Continuous { pre_squash: u } => {
                let sigma = params.log_std.exp();
                let z = (u - out[0]) / sigma;
                let logp = -0.5 * z * z - params.log_std - 0.5 * (2.0 * PI).ln() - log1m_tanh2(u);
                pl += (-logp * t.advantage - entropy_coef * gaussian_entropy) / n;
                ent += gaussian_entropy / n;
                grad[np + nv] += (-t.advantage * (z * z - 1.0) - entropy_coef) / n;
                vec![-t.advantage * z / sigma / n]
            }
        };
        params.policy.backward(&fwd, &d_out, &mut grad[..np], pass);

        let vf = params.value.forward(&t.input);
        let err = vf.output()[0] - t.ret;
        vl += value_coef * err * err / n;
        params.value.backward(&vf, &[2.0 * value_coef * err / n], &mut grad[np..np + nv], pass);
    }
    LossGrads { policy_loss: pl, value_loss: vl, entropy: ent, grad }
}

fn policy_loss(params: &AgentParams, batch: &[Transition], entropy_coef: f64) -> f64 {
    let n = batch.len().max(1) as f64;
    batch
        .iter()
        .map(|t| {
            let h = match params.head {
                HeadKind::Categorical => {
                    let logp = log_softmax(params.policy.forward(&t.input).output());
                    -logp.iter().map(|l| l.exp() * l).sum::<f64>()
                }
                HeadKind::SquashedGaussian => 0.5 * (2.0 * PI * std::f64::consts::E).ln() + params.log_std,
            };
            (-log_prob(params, &t.input, t.action) * t.advantage - entropy_coef * h) / n
        })
        .sum()
}

fn value_loss(params: &AgentParams, batch: &[Transition], value_coef: f64) -> f64 {
    let n = batch.len().max(1) as f64;
    batch.iter().map(|t| value_coef * (params.state_value(&t.input) - t.ret).powi(2) / n).sum()
}

/// Largest componentwise relative error between the analytic gradient and
/// central differences with step `1e-5`. Each component's error is
/// `|a - n| / max(|a| + |n|, 1e-4)`, the floor keeping rounding noise on
/// near-zero components from dominating.
pub fn grad_check(params: &AgentParams, batch: &[Transition], entropy_coef: f64, value_coef: f64) -> f64 {
    grad_check_with(params, batch, entropy_coef, value_coef, BackwardPass::Exact)
}

pub fn grad_check_with(params: &AgentParams, batch: &[Transition], entropy_coef: f64, value_coef: f64, pass: BackwardPass) -> f64 {
    const H: f64 = 1e-5;
    let analytic = losses(params, batch, entropy_coef, value_coef, pass).grad;
    let np = params.policy.params().len();
    let nv = params.value.params().len();
    let base = params.flat();
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let eval = |probe: &mut AgentParams, x: f64| {
            let mut flat = base.clone();
            flat[i] = x;
            probe.set_flat(&flat);
            if i >= np && i < np + nv {
                value_loss(probe, batch, value_coef)
            } else {
                policy_loss(probe, batch, entropy_coef)
            }
        };
        let numeric = (eval(&mut probe, base[i] + H) - eval(&mut probe, base[i] - H)) / (2.0 * H);
        let a = analytic[i];
        worst = worst.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-4));
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Rollout length per slot between updates.
    pub n_steps: usize,
    pub gamma: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub total_steps: u64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub max_grad_norm: f64,
    /// Synchronous rollout slots per update.
    pub n_envs: usize,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            n_steps: 5,
            gamma: 0.99,
            entropy_coef: 0.01,
            value_coef: 0.5,
            total_steps: 200_000,
            seed: 0,
            hidden: vec![64, 64],
            max_grad_norm: 0.5,
            n_envs: 1,
            execution: Execution::Sequential,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err("learning_rate must be finite and nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err("gamma must lie in [0, 1)".into());
        }
        if self.n_steps == 0 || self.n_envs == 0 || self.total_steps == 0 {
            return Err("n_steps, n_envs and total_steps must be positive".into());
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 || self.max_grad_norm <= 0.0 {
            return Err("coefficients must be nonnegative and max_grad_norm positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err("hidden layer sizes must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

/// One clipped SGD step on `batch`.
pub fn sgd_step(params: &mut AgentParams, batch: &[Transition], cfg: &TrainConfig) -> Result<UpdateStats, AgentError> {
    let lg = losses(params, batch, cfg.entropy_coef, cfg.value_coef, BackwardPass::Exact);
    let norm = lg.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if !(norm.is_finite() && lg.policy_loss.is_finite() && lg.value_loss.is_finite()) {
        return Err(AgentError::DivergedTraining(params.version));
    }
    let scale = if norm > cfg.max_grad_norm { cfg.max_grad_norm / norm } else { 1.0 };
    let mut flat = params.flat();
    for (p, g) in flat.iter_mut().zip(&lg.grad) {
        *p -= cfg.learning_rate * (scale * g);
    }
    params.set_flat(&flat);
    params.version += 1;
    Ok(UpdateStats { policy_loss: lg.policy_loss, value_loss: lg.value_loss, entropy: lg.entropy, grad_norm: norm })
}

/// Generator for rollout slot `slot` under the stream-splitting rule.
pub fn slot_rng(seed: u64, slot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(slot as u64 + 1);
    rng
}

struct Slot {
    env: TradingEnv,
    rng: ChaCha8Rng,
    obs: Observation,
    running: f64,
    finished: Vec<f64>,
}

fn rollout(params: &AgentParams, slot: &mut Slot, cfg: &TrainConfig) -> Result<Vec<Transition>, AgentError> {
    let mut xs = Vec::with_capacity(cfg.n_steps);
    let mut acts = Vec::with_capacity(cfg.n_steps);
    let mut values = Vec::with_capacity(cfg.n_steps);
    let mut rewards = Vec::with_capacity(cfg.n_steps);
    let mut dones = Vec::with_capacity(cfg.n_steps);
    for _ in 0..cfg.n_steps {
        let x = encode_input(&slot.obs);
        let a = sample_action(params, &x, ActMode::Stochastic, &mut slot.rng)?;
        values.push(params.state_value(&x));
        let r = slot.env.step(a.env_action())?;
        slot.running += r.reward;
        rewards.push(r.reward);
        dones.push(r.done);
        if r.done {
            slot.finished.push(std::mem::take(&mut slot.running));
            slot.obs = slot.env.reset()?;
        } else {
            slot.obs = r.observation;
        }
        xs.push(x);
        acts.push(a);
    }
    let mut ret = if dones.last() == Some(&true) { 0.0 } else { params.state_value(&encode_input(&slot.obs)) };
    let mut out = vec![None; xs.len()];
    for t in (0..xs.len()).rev() {
        ret = rewards[t] + if dones[t] { 0.0 } else { cfg.gamma * ret };
        out[t] = Some(Transition { input: std::mem::take(&mut xs[t]), action: acts[t], advantage: ret - values[t], ret });
    }
    Ok(out.into_iter().flatten().collect())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: AgentParams,
    /// Undiscounted returns of completed training episodes, slot by slot in
    /// completion order.
    pub episode_returns: Vec<f64>,
    pub last_update: Option<UpdateStats>,
}

/// Trains an agent. `make_env(slot)` builds the environment for each rollout
/// slot; all slots must share the same mode and observation length.
pub fn train<F>(make_env: F, cfg: &TrainConfig) -> Result<TrainOutcome, AgentError>
where
    F: Fn(usize) -> Result<TradingEnv, EnvError>,
{
    cfg.validate().map_err(|e| AgentError::Env(EnvError::InvalidConfig(e)))?;
    let mut slots = Vec::with_capacity(cfg.n_envs);
    for i in 0..cfg.n_envs {
        let mut env = make_env(i)?;
        let obs = env.reset()?;
        slots.push(Mutex::new(Slot { env, rng: slot_rng(cfg.seed, i), obs, running: 0.0, finished: Vec::new() }));
    }
    let (mode, history) = {
        let first = slots[0].lock().expect("unpoisoned");
        (first.env.config().mode, first.env.config().history)
    };
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = AgentParams::new(HeadKind::for_mode(mode), input_len(history), &cfg.hidden, &mut init_rng);
    for s in &slots {
        let s = s.lock().expect("unpoisoned");
        if s.env.config().mode != mode || s.env.config().history != history {
            return Err(AgentError::HeadMismatch { head: params.head, mode: s.env.config().mode });
        }
    }

    let per_update = (cfg.n_steps * cfg.n_envs) as u64;
    let updates = cfg.total_steps.div_ceil(per_update);
    let mut last = None;
    for _ in 0..updates {
        let snapshot = &params;
        let batches = parallel::map_range(cfg.execution, slots.len(), |i| rollout(snapshot, &mut slots[i].lock().expect("unpoisoned"), cfg));
        let mut batch = Vec::with_capacity(per_update as usize);
        for b in batches {
            batch.extend(b?);
        }
        last = Some(sgd_step(&mut params, &batch, cfg)?);
    }
    let episode_returns = slots.into_iter().flat_map(|s| s.into_inner().expect("unpoisoned").finished).collect();
    Ok(TrainOutcome { params, episode_returns, last_update: last })
}

/// Anything that can pick environment actions.
pub trait Agent {
    fn act(&mut self, obs: &Observation) -> Result<EnvAction, AgentError>;

    fn name(&self) -> &str;
}

/// A trained network with its own seeded sampler.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub params: AgentParams,
    pub mode: ActMode,
    rng: ChaCha8Rng,
}

impl ActorCritic {
    pub fn new(params: AgentParams, mode: ActMode, seed: u64) -> Self {
        Self { params, mode, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Agent for ActorCritic {
    fn act(&mut self, obs: &Observation) -> Result<EnvAction, AgentError> {
        act(&self.params, obs, self.mode, &mut self.rng)
    }

    fn name(&self) -> &str {
        "a2c"
    }
}

/// Runs a rule policy inside an environment. RL1 maps targets to the nearest
/// of long, close and short.
#[derive(Debug, Clone)]
pub struct PolicyAgent<P> {
    pub policy: P,
    pub mode: EnvMode,
}

impl<P: Policy> Agent for PolicyAgent<P> {
    fn act(&mut self, obs: &Observation) -> Result<EnvAction, AgentError> {
        let t = self.policy.decide(obs).target.clamp(-1.0, 1.0);
        Ok(match self.mode {
            EnvMode::Rl2 => EnvAction::Quantity(t),
            EnvMode::Rl1 if t > 0.5 => EnvAction::OpenLongLeg,
            EnvMode::Rl1 if t < -0.5 => EnvAction::OpenShortLeg,
            EnvMode::Rl1 => EnvAction::Close,
        })
    }

    fn name(&self) -> &str {
        self.policy.name()
    }
}

/// Steps in non-neutral zones, and how many took the zone's rewarded action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ZoneAgreement {
    pub matched: usize,
    pub total: usize,
}

impl ZoneAgreement {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.matched as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    /// Undiscounted reward sum per episode.
    pub returns: Vec<f64>,
    pub reports: Vec<MetricsReport>,
    pub agreement: ZoneAgreement,
}

/// Plays one episode from reset to the end of the series, returning the
/// undiscounted reward sum and adding the episode's zone agreement to `agreement`.
pub fn run_episode(agent: &mut dyn Agent, env: &mut TradingEnv, agreement: &mut ZoneAgreement) -> Result<f64, AgentError> {
    let band = env.config().close_band;
    let mut obs = env.reset()?;
    let mut total = 0.0;
    while !env.is_done() {
        let a = agent.act(&obs)?;
        if !obs.zone.is_neutral() {
            agreement.total += 1;
            agreement.matched += usize::from(action_component(obs.zone, a, band) == 1.0);
        }
        let r = env.step(a)?;
        total += r.reward;
        obs = r.observation;
    }
    Ok(total)
}

/// Runs `episodes` episodes; episode `i` uses the environment from
/// `make_env(i)`.
pub fn evaluate_on<F>(agent: &mut dyn Agent, mut make_env: F, episodes: usize, metrics: &MetricsConfig) -> Result<EvalOutcome, AgentError>
where
    F: FnMut(usize) -> Result<TradingEnv, EnvError>,
{
    let mut out = EvalOutcome { returns: Vec::with_capacity(episodes), reports: Vec::with_capacity(episodes), agreement: ZoneAgreement::default() };
    for i in 0..episodes {
        let mut env = make_env(i)?;
        out.returns.push(run_episode(agent, &mut env, &mut out.agreement)?);
        out.reports.push(MetricsReport::compute(&env.equity(), env.positions(), env.trades(), metrics));
    }
    Ok(out)
}

pub fn evaluate(agent: &mut dyn Agent, env: &TradingEnv, episodes: usize, metrics: &MetricsConfig) -> Result<EvalOutcome, AgentError> {
    evaluate_on(agent, |_| Ok(env.clone()), episodes, metrics)
}

#[cfg(test)]
mod tests;
