//! Deterministic stand-in for "train for one epoch, then evaluate".
//!
//! For a profile seed, each dimension `d` gets a weight `w_d` in `[0.5, 1.5)`
//! and an optimum index `o_d`. With `x_d = idx_d / (|domain_d| - 1)`:
//!
//! ```text
//! base(c)         = sum_d w_d * (x_d - o_d / (|domain_d| - 1))^2
//! eval_loss(c, e) = base(c) * (0.3 + 0.7 * exp(-e / 5)) + 0.01 * base(c) * (2u - 1)
//! ```
//!
//! where `u` in `[0, 1)` is hashed from `(profile_seed, idx_1..idx_D, e)`.
//! All randomness is SplitMix64 so other implementations of the evaluator
//! protocol can reproduce the series bit for bit:
//!
//! * profile: state starts at `profile_seed`; each draw adds `0x9E3779B97F4A7C15`
//!   and returns the mixed state. Per dimension, in order: `w = 0.5 + unit(draw)`,
//!   then `o = draw % |domain|`.
//! * noise: `h = mix(profile_seed ^ NOISE_SALT)`, then `h = mix(h ^ idx)` for every
//!   index, then `h = mix(h ^ epoch)`; `u = unit(h)`.
//! * duration jitter: `h = mix(profile_seed ^ DURATION_SALT)`, `h = mix(h ^ trial_id)`,
//!   `h = mix(h ^ epoch)`; factor `1 + jitter * (2 * unit(h) - 1)`.
//!
//! `unit(v) = (v >> 11) * 2^-53`. `mix` is the SplitMix64 finalizer applied to
//! `v + 0x9E3779B97F4A7C15`.

use crate::space::{Configuration, SearchSpace, SpaceError};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
pub const NOISE_SALT: u64 = 0x6E6F_6973_655F_7631;
pub const DURATION_SALT: u64 = 0x6475_7261_7469_6F6E;

/// Plateau factor of the epoch decay curve.
pub const PLATEAU: f64 = 0.3;
pub const NOISE_AMPLITUDE: f64 = 0.01;

pub fn mix(v: u64) -> u64 {
    let mut z = v.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn unit(v: u64) -> f64 {
    (v >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Epoch-decay multiplier `0.3 + 0.7 * exp(-epoch / 5)`.
pub fn decay(epoch: u32) -> f64 {
    PLATEAU + (1.0 - PLATEAU) * (-(epoch as f64) / 5.0).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProfile {
    seed: u64,
    weights: Vec<f64>,
    optimum: Vec<usize>,
    cards: Vec<usize>,
}

impl SyntheticProfile {
    pub fn new(space: &SearchSpace, profile_seed: u64) -> Self {
        let mut state = profile_seed;
        let mut draw = || {
            state = state.wrapping_add(GOLDEN);
            mix(state.wrapping_sub(GOLDEN))
        };
        let cards = space.cardinalities();
        let mut weights = Vec::with_capacity(cards.len());
        let mut optimum = Vec::with_capacity(cards.len());
        for &n in &cards {
            weights.push(0.5 + unit(draw()));
            optimum.push((draw() % n as u64) as usize);
        }
        Self {
            seed: profile_seed,
            weights,
            optimum,
            cards,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Encoded configuration at which `base` is zero.
    pub fn optimum(&self) -> &[usize] {
        &self.optimum
    }

    pub fn base(&self, encoded: &[usize]) -> f64 {
        encoded
            .iter()
            .enumerate()
            .map(|(d, &i)| {
                let span = (self.cards[d].max(2) - 1) as f64;
                let diff = (i as f64 - self.optimum[d] as f64) / span;
                self.weights[d] * diff * diff
            })
            .sum()
    }

    pub fn noise_unit(&self, encoded: &[usize], epoch: u32) -> f64 {
        let mut h = mix(self.seed ^ NOISE_SALT);
        for &i in encoded {
            h = mix(h ^ i as u64);
        }
        h = mix(h ^ epoch as u64);
        unit(h)
    }

    pub fn eval_loss(&self, encoded: &[usize], epoch: u32) -> f64 {
        let base = self.base(encoded);
        let noise = NOISE_AMPLITUDE * base * (2.0 * self.noise_unit(encoded, epoch) - 1.0);
        base * decay(epoch) + noise
    }

    /// Simulated duration of one epoch, jittered by at most `jitter` (relative).
    pub fn epoch_duration(&self, base_seconds: f64, jitter: f64, trial_id: u64, epoch: u32) -> f64 {
        if jitter == 0.0 {
            return base_seconds;
        }
        let mut h = mix(self.seed ^ DURATION_SALT);
        h = mix(h ^ trial_id);
        h = mix(h ^ epoch as u64);
        base_seconds * (1.0 + jitter * (2.0 * unit(h) - 1.0))
    }
}

/// One epoch's evaluation loss for `config` under the profile drawn from `profile_seed`.
pub fn synthetic_evaluate(
    space: &SearchSpace,
    config: &Configuration,
    epoch: u32,
    profile_seed: u64,
) -> Result<f64, SpaceError> {
    let enc = space.encode(config)?;
    Ok(SyntheticProfile::new(space, profile_seed).eval_loss(&enc, epoch))
}
