use std::f64::consts::PI;

use super::random::uniform_encoded;
use super::{parse_param, random_next, select_best, RandomForest, SamplerError, SamplerState};
use crate::space::{Configuration, SearchSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct SmacParams {
    pub n_trees: usize,
    pub n_startup: usize,
    pub n_candidates: usize,
    /// Every `interleave_every`-th proposal is drawn uniformly at random.
    pub interleave_every: u64,
    pub bootstrap_fraction: f64,
}

impl Default for SmacParams {
    fn default() -> Self {
        Self {
            n_trees: 10,
            n_startup: 8,
            n_candidates: 100,
            interleave_every: 2,
            bootstrap_fraction: 1.0,
        }
    }
}

impl SmacParams {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.n_trees == 0 || self.n_startup == 0 || self.n_candidates == 0 || self.interleave_every == 0 {
            return Err(SamplerError::InvalidParam(
                "SMAC counts must all be at least 1".into(),
            ));
        }
        if !(self.bootstrap_fraction > 0.0 && self.bootstrap_fraction.is_finite()) {
            return Err(SamplerError::InvalidParam(format!(
                "bootstrap_fraction must be positive, got {}",
                self.bootstrap_fraction
            )));
        }
        Ok(())
    }

    pub(crate) fn set(&mut self, key: &str, value: &str) -> Result<(), SamplerError> {
        match key {
            "n_trees" => self.n_trees = parse_param(key, value)?,
            "n_startup" => self.n_startup = parse_param(key, value)?,
            "n_candidates" => self.n_candidates = parse_param(key, value)?,
            "interleave_every" => self.interleave_every = parse_param(key, value)?,
            "bootstrap_fraction" => self.bootstrap_fraction = parse_param(key, value)?,
            _ => return Err(SamplerError::InvalidParam(format!("unknown SMAC parameter `{key}`"))),
        }
        self.validate()
    }
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `incumbent` of a normal with the given moments.
pub fn ei(mean: f64, std: f64, incumbent: f64) -> f64 {
    if std <= 0.0 {
        return (incumbent - mean).max(0.0);
    }
    let z = (incumbent - mean) / std;
    (std * (z * std_normal_cdf(z) + std_normal_pdf(z))).max(0.0)
}

fn neighbors(space: &SearchSpace, center: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for (d, dom) in space.domains().iter().enumerate() {
        if center[d] > 0 {
            let mut n = center.to_vec();
            n[d] -= 1;
            out.push(n);
        }
        if center[d] + 1 < dom.len() {
            let mut n = center.to_vec();
            n[d] += 1;
            out.push(n);
        }
    }
    out
}

pub fn smac_next(space: &SearchSpace, state: &SamplerState, params: &SmacParams) -> Configuration {
    let obs = state.observations();
    if obs.len() < params.n_startup
        || obs.is_empty()
        || state.proposal_count.is_multiple_of(params.interleave_every)
    {
        return random_next(space, state);
    }
    let mut rng = state.proposal_rng();
    let x: Vec<Vec<f64>> = obs
        .iter()
        .map(|o| {
            space
                .encode(&o.config)
                .expect("observed configs are valid")
                .into_iter()
                .map(|i| i as f64)
                .collect()
        })
        .collect();
    let y: Vec<f64> = obs.iter().map(|o| o.objective).collect();
    let forest = RandomForest::fit(&x, &y, params.n_trees, params.bootstrap_fraction, &mut rng);

    let incumbent = state.incumbent().expect("nonempty");
    let best_y = incumbent.objective;
    let inc_enc = space.encode(&incumbent.config).expect("valid");

    let mut pool: Vec<Vec<usize>> = (0..params.n_candidates)
        .map(|_| uniform_encoded(space, &mut rng))
        .collect();
    pool.extend(neighbors(space, &inc_enc));
    let scored = pool.into_iter().map(|enc| {
        let xf: Vec<f64> = enc.iter().map(|&i| i as f64).collect();
        let (m, s) = forest.predict(&xf);
        let score = ei(m, s, best_y);
        (enc, score)
    });
    let observed = state.observed_ranks(space);
    let best = select_best(scored, space, &observed).expect("pool is nonempty");
    space.decode(&best).expect("candidate indices are in range")
}
