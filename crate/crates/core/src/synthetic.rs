//! Seeded synthetic price generators for fixtures, demos and benchmarks.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::market_data::{AlignedPairSeries, Interval};

/// 2023-12-01T00:00:00Z in epoch milliseconds.
pub const EPOCH_2023_12_01: i64 = 1_701_388_800_000;

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_walk<R: Rng + ?Sized>(rng: &mut R, n: usize, start: f64, sigma: f64) -> Vec<f64> {
    let mut x = start;
    (0..n)
        .map(|_| {
            x += sigma * normal(rng);
            x
        })
        .collect()
}

/// Zero-mean AR(1): `x_t = phi x_{t-1} + sigma e_t`.
pub fn ar1<R: Rng + ?Sized>(rng: &mut R, n: usize, phi: f64, sigma: f64) -> Vec<f64> {
    let mut x = 0.0;
    (0..n)
        .map(|_| {
            x = phi * x + sigma * normal(rng);
            x
        })
        .collect()
}

/// `(y, x)` with `x` a random walk around 100 and `y = beta x + u`, `u` a
/// stationary AR(1) with coefficient 0.5 and innovation scale `noise`.
pub fn cointegrated_pair<R: Rng + ?Sized>(rng: &mut R, n: usize, beta: f64, noise: f64) -> (Vec<f64>, Vec<f64>) {
    let x = random_walk(rng, n, 100.0, 1.0);
    let u = ar1(rng, n, 0.5, noise);
    let y = x.iter().zip(&u).map(|(a, e)| beta * a + e).collect();
    (y, x)
}

pub fn independent_walks<R: Rng + ?Sized>(rng: &mut R, n: usize) -> (Vec<f64>, Vec<f64>) {
    (random_walk(rng, n, 100.0, 1.0), random_walk(rng, n, 100.0, 1.0))
}

fn minute_stamps(n: usize, interval: Interval) -> Vec<i64> {
    (0..n as i64).map(|k| EPOCH_2023_12_01 + k * interval.millis()).collect()
}

/// Periodic pair where every window of exactly `period` samples recovers the
/// spread exactly.
///
/// `p_j(t) = 100 + hedge_amp cos(2π·hedge_harmonic·t/period)` and
/// `p_i = 2 p_j + amplitude Σ_h cos(2π·h·t/period + phase)` over
/// `spread_harmonics`. When `hedge_harmonic` is not among the spread
/// harmonics (and none of them hits `period/2`), discrete orthogonality makes
/// the rolling OLS slope exactly 2 and the residual exactly the spread term.
#[derive(Debug, Clone)]
pub struct PeriodicSpread {
    pub period: usize,
    pub spread_harmonics: Vec<usize>,
    pub amplitude: f64,
    pub phase: f64,
    pub hedge_harmonic: usize,
    pub hedge_amp: f64,
}

impl PeriodicSpread {
    /// Single sine spread: `z(t) = √2 sin(2π k t / period)` on full windows.
    pub fn sine(period: usize, cycles: usize) -> Self {
        Self {
            period,
            spread_harmonics: vec![cycles],
            amplitude: 1.0,
            phase: -PI / 2.0,
            hedge_harmonic: cycles + 1,
            hedge_amp: 1.0,
        }
    }

    /// Odd-harmonic pulse train with sharp peaks of ±`harmonics.len()`
    /// amplitude; z-scores reach `√(2·harmonics)`.
    pub fn pulses(period: usize, harmonics: &[usize]) -> Self {
        Self {
            period,
            spread_harmonics: harmonics.to_vec(),
            amplitude: 1.0,
            phase: 0.0,
            hedge_harmonic: 2,
            hedge_amp: 1.0,
        }
    }

    pub fn spread_at(&self, t: usize) -> f64 {
        let theta = 2.0 * PI * t as f64 / self.period as f64;
        self.amplitude * self.spread_harmonics.iter().map(|&h| (h as f64 * theta + self.phase).cos()).sum::<f64>()
    }

    pub fn series(&self, n: usize) -> AlignedPairSeries {
        let theta = |t: usize, h: usize| 2.0 * PI * (h * t) as f64 / self.period as f64;
        let pj: Vec<f64> = (0..n).map(|t| 100.0 + self.hedge_amp * theta(t, self.hedge_harmonic).cos()).collect();
        let pi: Vec<f64> = (0..n).map(|t| 2.0 * pj[t] + self.spread_at(t)).collect();
        AlignedPairSeries::new("SYN_I", "SYN_J", Interval::M1, minute_stamps(n, Interval::M1), pi, pj)
            .expect("periodic fixture prices are positive")
    }
}

/// Mean-reverting pair for learning fixtures: `p_j` a geometric-free random
/// walk around 100, `p_i = 2 p_j + s` with `s` an Ornstein–Uhlenbeck process
/// (discretised as AR(1) with coefficient `1 - theta`).
pub fn ou_pair<R: Rng + ?Sized>(rng: &mut R, n: usize, theta: f64, sigma: f64) -> AlignedPairSeries {
    let pj = random_walk(rng, n, 100.0, 0.05);
    let s = ar1(rng, n, 1.0 - theta, sigma);
    let pi: Vec<f64> = pj.iter().zip(&s).map(|(p, e)| 2.0 * p + e).collect();
    let pj: Vec<f64> = pj.iter().map(|p| p.max(1.0)).collect();
    let pi: Vec<f64> = pi.iter().map(|p| p.max(1.0)).collect();
    AlignedPairSeries::new("OU_I", "OU_J", Interval::M1, minute_stamps(n, Interval::M1), pi, pj)
        .expect("OU fixture prices are positive")
}
