//! Tree-structured Parzen estimator over ordinal domains.
//!
//! Observations are split at the `gamma` quantile into a good and a bad set.
//! Each dimension gets a smoothed categorical density per set; candidates are
//! drawn from the good densities and ranked by the likelihood ratio.

use rand::Rng;

use super::{parse_param, random_next, select_best, Observation, SamplerError, SamplerState};
use crate::space::{Configuration, SearchSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct TpeParams {
    pub gamma: f64,
    pub n_startup: usize,
    pub n_candidates: usize,
    /// Pseudo-count added to every category.
    pub smoothing: f64,
}

impl Default for TpeParams {
    fn default() -> Self {
        Self {
            gamma: 0.25,
            n_startup: 8,
            n_candidates: 24,
            smoothing: 1.0,
        }
    }
}

impl TpeParams {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(SamplerError::InvalidParam(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if self.n_startup == 0 || self.n_candidates == 0 {
            return Err(SamplerError::InvalidParam(
                "n_startup and n_candidates must be at least 1".into(),
            ));
        }
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            return Err(SamplerError::InvalidParam(format!(
                "smoothing must be positive, got {}",
                self.smoothing
            )));
        }
        Ok(())
    }

    pub(crate) fn set(&mut self, key: &str, value: &str) -> Result<(), SamplerError> {
        match key {
            "gamma" => self.gamma = parse_param(key, value)?,
            "n_startup" => self.n_startup = parse_param(key, value)?,
            "n_candidates" => self.n_candidates = parse_param(key, value)?,
            "smoothing" => self.smoothing = parse_param(key, value)?,
            _ => return Err(SamplerError::InvalidParam(format!("unknown TPE parameter `{key}`"))),
        }
        self.validate()
    }
}

/// Splits into the `ceil(gamma * n)` best observations and the rest.
///
/// Ties in objective go to the lower trial index.
pub fn quantile_split(
    observations: &[Observation],
    gamma: f64,
) -> Result<(Vec<&Observation>, Vec<&Observation>), SamplerError> {
    if observations.is_empty() {
        return Err(SamplerError::EmptyObservations);
    }
    let mut sorted: Vec<&Observation> = observations.iter().collect();
    sorted.sort_by(|a, b| {
        a.objective
            .total_cmp(&b.objective)
            .then(a.trial_index.cmp(&b.trial_index))
    });
    let n_good = ((gamma * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let bad = sorted.split_off(n_good);
    Ok((sorted, bad))
}

/// Laplace-smoothed categorical distribution over one domain's indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDensity {
    probs: Vec<f64>,
}

impl CategoricalDensity {
    pub fn fit(indices: impl IntoIterator<Item = usize>, cardinality: usize, smoothing: f64) -> Self {
        let mut counts = vec![0usize; cardinality];
        let mut n = 0usize;
        for i in indices {
            counts[i] += 1;
            n += 1;
        }
        let denom = n as f64 + smoothing * cardinality as f64;
        Self {
            probs: counts
                .into_iter()
                .map(|c| (c as f64 + smoothing) / denom)
                .collect(),
        }
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

pub(crate) struct TpeModel {
    good: Vec<CategoricalDensity>,
    bad: Vec<CategoricalDensity>,
}

impl TpeModel {
    pub(crate) fn fit(space: &SearchSpace, observations: &[Observation], params: &TpeParams) -> Self {
        let (good, bad) = quantile_split(observations, params.gamma).expect("nonempty");
        let enc = |set: &[&Observation]| -> Vec<Vec<usize>> {
            set.iter()
                .map(|o| space.encode(&o.config).expect("observed configs are valid"))
                .collect()
        };
        let good_enc = enc(&good);
        let bad_enc = enc(&bad);
        let per_dim = |rows: &[Vec<usize>]| -> Vec<CategoricalDensity> {
            space
                .domains()
                .iter()
                .enumerate()
                .map(|(d, dom)| {
                    CategoricalDensity::fit(rows.iter().map(|r| r[d]), dom.len(), params.smoothing)
                })
                .collect()
        };
        Self {
            good: per_dim(&good_enc),
            bad: per_dim(&bad_enc),
        }
    }

    /// log of prod_d l(v_d) / g(v_d).
    pub(crate) fn log_ratio(&self, enc: &[usize]) -> f64 {
        enc.iter()
            .enumerate()
            .map(|(d, &i)| self.good[d].prob(i).ln() - self.bad[d].prob(i).ln())
            .sum()
    }
}

pub fn tpe_next(space: &SearchSpace, state: &SamplerState, params: &TpeParams) -> Configuration {
    let obs = state.observations();
    if obs.len() < params.n_startup || obs.is_empty() {
        return random_next(space, state);
    }
    let model = TpeModel::fit(space, obs, params);
    let mut rng = state.proposal_rng();
    let candidates: Vec<(Vec<usize>, f64)> = (0..params.n_candidates)
        .map(|_| {
            let enc: Vec<usize> = model.good.iter().map(|l| l.sample(&mut rng)).collect();
            let score = model.log_ratio(&enc);
            (enc, score)
        })
        .collect();
    let observed = state.observed_ranks(space);
    let best = select_best(candidates, space, &observed).expect("n_candidates >= 1");
    space.decode(&best).expect("sampled indices are in range")
}
