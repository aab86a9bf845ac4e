//! Rule-based decision policies sharing one interface with learned agents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::spread::Zone;

/// What a strategy sees at each decision step: ⟨position, spread z, zone⟩.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub position: f64,
    pub z: f64,
    pub zone: Zone,
    /// Previous z-scores, most recent first (empty unless the environment is
    /// configured with a history length).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub z_history: Vec<f64>,
}

impl Observation {
    pub fn new(position: f64, z: f64, zone: Zone) -> Self {
        Self { position, z, zone, z_history: Vec::new() }
    }
}

/// Target position fraction in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub target: f64,
}

pub trait Policy {
    fn decide(&mut self, obs: &Observation) -> PolicyDecision;

    fn name(&self) -> &str;
}

/// Classic threshold rule: short the spread in the short zone, long it in the
/// long zone, close in the close zone, hold in the neutral zones.
pub fn gatev_policy(obs: &Observation) -> PolicyDecision {
    let target = match obs.zone {
        Zone::ShortZone => -1.0,
        Zone::LongZone => 1.0,
        Zone::CloseZone => 0.0,
        Zone::NeutralShortZone | Zone::NeutralLongZone => obs.position,
    };
    PolicyDecision { target }
}

pub fn flat_policy(_obs: &Observation) -> PolicyDecision {
    PolicyDecision { target: 0.0 }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GatevPolicy;

impl Policy for GatevPolicy {
    fn decide(&mut self, obs: &Observation) -> PolicyDecision {
        gatev_policy(obs)
    }

    fn name(&self) -> &str {
        "gatev"
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FlatPolicy;

impl Policy for FlatPolicy {
    fn decide(&mut self, obs: &Observation) -> PolicyDecision {
        flat_policy(obs)
    }

    fn name(&self) -> &str {
        "flat"
    }
}

/// Action set a random baseline samples from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionSet {
    /// {-1, 0, +1}
    Discrete,
    /// `U[-1, 1]`
    Continuous,
}

#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
    actions: ActionSet,
}

impl RandomPolicy {
    pub fn new(seed: u64, actions: ActionSet) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), actions }
    }
}

impl Policy for RandomPolicy {
    fn decide(&mut self, _obs: &Observation) -> PolicyDecision {
        let target = match self.actions {
            ActionSet::Discrete => [-1.0, 0.0, 1.0][self.rng.random_range(0..3)],
            ActionSet::Continuous => self.rng.random_range(-1.0..=1.0),
        };
        PolicyDecision { target }
    }

    fn name(&self) -> &str {
        "random"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gatev_table() {
        assert_eq!(gatev_policy(&Observation::new(0.0, 2.0, Zone::ShortZone)).target, -1.0);
        assert_eq!(gatev_policy(&Observation::new(0.6, 0.1, Zone::CloseZone)).target, 0.0);
        assert_eq!(gatev_policy(&Observation::new(0.4, -1.0, Zone::NeutralLongZone)).target, 0.4);
        assert_eq!(gatev_policy(&Observation::new(0.0, -2.0, Zone::LongZone)).target, 1.0);
    }

    #[test]
    fn gatev_trades_against_the_deviation() {
        for zone in Zone::ALL {
            for p in [-1.0, 0.0, 1.0] {
                let z = match zone {
                    Zone::ShortZone => 3.0,
                    Zone::NeutralShortZone => 1.0,
                    Zone::CloseZone => 0.0,
                    Zone::NeutralLongZone => -1.0,
                    Zone::LongZone => -3.0,
                };
                let d = gatev_policy(&Observation::new(p, z, zone));
                if !zone.is_neutral() {
                    assert!(d.target * z <= 0.0, "{zone:?}");
                }
            }
        }
    }

    #[test]
    fn flat_and_random() {
        let obs = Observation::new(0.3, 1.0, Zone::NeutralShortZone);
        assert_eq!(FlatPolicy.decide(&obs).target, 0.0);

        let draw = |seed| {
            let mut p = RandomPolicy::new(seed, ActionSet::Continuous);
            (0..50).map(|_| p.decide(&obs).target).collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
        assert_ne!(draw(4), draw(5));

        let mut p = RandomPolicy::new(1, ActionSet::Continuous);
        assert!((0..100_000).all(|_| p.decide(&obs).target.abs() <= 1.0));
        let mut p = RandomPolicy::new(1, ActionSet::Discrete);
        assert!((0..1000).all(|_| [-1.0, 0.0, 1.0].contains(&p.decide(&obs).target)));
    }
}
