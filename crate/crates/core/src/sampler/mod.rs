//! Search strategies: random search, TPE and a random-forest SMAC variant.
//!
//! Every sampler is a pure function of `(space, state, params)`. The random
//! stream for a proposal is ChaCha8 keyed by the run seed, with the stream id
//! set to the proposal counter, so a replayed history reproduces proposals
//! exactly.

mod forest;
mod random;
mod smac;
mod tpe;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::space::{Configuration, SearchSpace};

pub use forest::RandomForest;
pub use random::random_next;
pub use smac::{ei, smac_next, SmacParams};
pub use tpe::{quantile_split, tpe_next, CategoricalDensity, TpeParams};

/// Name of the generator recorded in trial log headers.
pub const RNG_NAME: &str = "chacha8";

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("objective must be finite, got {0}")]
    NonFiniteObjective(f64),
    #[error("observation trial_index {got} does not follow {last}")]
    OutOfOrder { last: u64, got: u64 },
    #[error("no observations to split")]
    EmptyObservations,
    #[error("invalid sampler parameter: {0}")]
    InvalidParam(String),
    #[error("unknown sampler `{0}` (expected random, tpe or smac)")]
    UnknownSampler(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub config: Configuration,
    /// Lower is better.
    pub objective: f64,
    pub trial_index: u64,
}

/// Observation history plus the counters that key the random streams.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    observations: Vec<Observation>,
    pub rng_seed: u64,
    pub proposal_count: u64,
}

impl SamplerState {
    pub fn new(rng_seed: u64) -> Self {
        Self {
            observations: Vec::new(),
            rng_seed,
            proposal_count: 0,
        }
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn observe(&mut self, obs: Observation) -> Result<(), SamplerError> {
        if !obs.objective.is_finite() {
            return Err(SamplerError::NonFiniteObjective(obs.objective));
        }
        if let Some(last) = self.observations.last() {
            if obs.trial_index <= last.trial_index {
                return Err(SamplerError::OutOfOrder {
                    last: last.trial_index,
                    got: obs.trial_index,
                });
            }
        }
        self.observations.push(obs);
        if self.proposal_count < self.observations.len() as u64 {
            self.proposal_count = self.observations.len() as u64;
        }
        Ok(())
    }

    /// Generator for the next proposal. Depends only on seed and counter.
    pub(crate) fn proposal_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(self.proposal_count);
        rng
    }

    pub(crate) fn observed_ranks(&self, space: &SearchSpace) -> HashSet<u64> {
        self.observations
            .iter()
            .filter_map(|o| space.encode(&o.config).ok())
            .map(|e| space.rank(&e))
            .collect()
    }

    /// Lowest objective, ties to the earliest trial.
    pub fn incumbent(&self) -> Option<&Observation> {
        self.observations.iter().min_by(|a, b| {
            a.objective
                .total_cmp(&b.objective)
                .then(a.trial_index.cmp(&b.trial_index))
        })
    }
}

/// Which strategy to run, with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplerSpec {
    Random,
    Tpe(TpeParams),
    Smac(SmacParams),
}

impl SamplerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerSpec::Random => "random",
            SamplerSpec::Tpe(_) => "tpe",
            SamplerSpec::Smac(_) => "smac",
        }
    }

    /// Applies a `key=value` override to the sampler's parameters.
    pub fn set_param(&mut self, key: &str, value: &str) -> Result<(), SamplerError> {
        match self {
            SamplerSpec::Random => Err(SamplerError::InvalidParam(format!(
                "random search takes no parameters (got `{key}`)"
            ))),
            SamplerSpec::Tpe(p) => p.set(key, value),
            SamplerSpec::Smac(p) => p.set(key, value),
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        match self {
            SamplerSpec::Random => Ok(()),
            SamplerSpec::Tpe(p) => p.validate(),
            SamplerSpec::Smac(p) => p.validate(),
        }
    }

    pub fn propose(&self, space: &SearchSpace, state: &SamplerState) -> Configuration {
        match self {
            SamplerSpec::Random => random_next(space, state),
            SamplerSpec::Tpe(p) => tpe_next(space, state, p),
            SamplerSpec::Smac(p) => smac_next(space, state, p),
        }
    }
}

impl FromStr for SamplerSpec {
    type Err = SamplerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(SamplerSpec::Random),
            "tpe" => Ok(SamplerSpec::Tpe(TpeParams::default())),
            "smac" => Ok(SamplerSpec::Smac(SmacParams::default())),
            other => Err(SamplerError::UnknownSampler(other.to_string())),
        }
    }
}

impl fmt::Display for SamplerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub(crate) fn parse_param<T: FromStr>(key: &str, value: &str) -> Result<T, SamplerError> {
    value
        .parse()
        .map_err(|_| SamplerError::InvalidParam(format!("cannot parse `{value}` for `{key}`")))
}

/// Picks the best-scoring candidate. Unobserved candidates win over observed
/// ones; equal scores go to the lower lexicographic rank.
pub(crate) fn select_best(
    candidates: impl IntoIterator<Item = (Vec<usize>, f64)>,
    space: &SearchSpace,
    observed: &HashSet<u64>,
) -> Option<Vec<usize>> {
    let mut best: Option<(bool, f64, u64, Vec<usize>)> = None;
    for (enc, score) in candidates {
        let rank = space.rank(&enc);
        let fresh = !observed.contains(&rank);
        let better = match &best {
            None => true,
            Some((bf, bs, br, _)) => {
                (fresh, score, std::cmp::Reverse(rank)) > (*bf, *bs, std::cmp::Reverse(*br))
            }
        };
        if better {
            best = Some((fresh, score, rank, enc));
        }
    }
    best.map(|(_, _, _, enc)| enc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_rejects_bad_observations() {
        let space = SearchSpace::hofvsr();
        let cfg = space.decode(&[0, 0, 0]).unwrap();
        let mut st = SamplerState::new(1);
        assert!(st
            .observe(Observation {
                config: cfg.clone(),
                objective: f64::NAN,
                trial_index: 0
            })
            .is_err());
        st.observe(Observation {
            config: cfg.clone(),
            objective: 1.0,
            trial_index: 3,
        })
        .unwrap();
        assert!(matches!(
            st.observe(Observation {
                config: cfg,
                objective: 1.0,
                trial_index: 3
            }),
            Err(SamplerError::OutOfOrder { .. })
        ));
        assert!(st.proposal_count >= st.observations().len() as u64);
    }

    #[test]
    fn select_best_prefers_fresh_then_score_then_rank() {
        let space = SearchSpace::hofvsr();
        let observed: HashSet<u64> = [space.rank(&[0, 0, 1])].into_iter().collect();
        let pick = select_best(
            vec![(vec![0, 0, 1], 9.0), (vec![0, 0, 3], 1.0), (vec![0, 0, 2], 1.0)],
            &space,
            &observed,
        );
        assert_eq!(pick, Some(vec![0, 0, 2]));
        let pick = select_best(vec![(vec![0, 0, 1], 9.0)], &space, &observed);
        assert_eq!(pick, Some(vec![0, 0, 1]));
    }

    #[test]
    fn sampler_names_parse() {
        for name in ["random", "tpe", "smac"] {
            assert_eq!(name.parse::<SamplerSpec>().unwrap().name(), name);
        }
        assert!("grid".parse::<SamplerSpec>().is_err());
        let mut s: SamplerSpec = "tpe".parse().unwrap();
        s.set_param("gamma", "0.5").unwrap();
        assert!(s.set_param("gamma", "1.5").is_err() || s.validate().is_err());
        assert!(SamplerSpec::Random.set_param("x", "1").is_err());
    }
}
