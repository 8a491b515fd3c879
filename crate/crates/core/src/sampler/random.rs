use rand::Rng;

use super::SamplerState;
use crate::space::{Configuration, SearchSpace};

/// Retries spent trying to avoid an already-observed configuration.
const DEDUP_RETRIES: usize = 10;

pub(crate) fn uniform_encoded<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Vec<usize> {
    space
        .domains()
        .iter()
        .map(|d| rng.random_range(0..d.len()))
        .collect()
}

/// Uniform draw per domain, re-drawn up to ten times if it repeats an observation.
pub fn random_next(space: &SearchSpace, state: &SamplerState) -> Configuration {
    let mut rng = state.proposal_rng();
    let observed = state.observed_ranks(space);
    let mut enc = uniform_encoded(space, &mut rng);
    for _ in 0..DEDUP_RETRIES {
        if !observed.contains(&space.rank(&enc)) {
            break;
        }
        enc = uniform_encoded(space, &mut rng);
    }
    space.decode(&enc).expect("drawn indices are in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::Observation;
    use crate::space::build_space;

    #[test]
    fn size_one_space_yields_the_only_config() {
        let space = build_space([("a", vec![4]), ("b", vec![9])]).unwrap();
        let st = SamplerState::new(17);
        let c = random_next(&space, &st);
        assert_eq!(c.get("a"), Some(4));
        assert_eq!(c.get("b"), Some(9));
    }

    #[test]
    fn deterministic_for_same_state() {
        let space = SearchSpace::hofvsr();
        let mut st = SamplerState::new(5);
        st.proposal_count = 3;
        assert_eq!(random_next(&space, &st), random_next(&space, &st));
        let mut other = st.clone();
        other.proposal_count = 4;
        // different stream; equality would be a 1/800 coincidence for this seed
        assert_ne!(random_next(&space, &st), random_next(&space, &other));
    }

    #[test]
    fn avoids_observed_configs_when_possible() {
        let space = build_space([("a", vec![1, 2])]).unwrap();
        for seed in 0..50 {
            let mut st = SamplerState::new(seed);
            st.observe(Observation {
                config: space.decode(&[0]).unwrap(),
                objective: 1.0,
                trial_index: 0,
            })
            .unwrap();
            // 11 draws all hitting the observed value has probability 2^-11
            let c = random_next(&space, &st);
            if seed < 40 {
                assert_eq!(c.get("a"), Some(2), "seed {seed}");
            }
        }
    }

    /// Chi-square goodness of fit over 8000 draws from the 800-config space.
    #[test]
    fn draws_are_uniform_over_builtin_space() {
        let space = SearchSpace::hofvsr();
        let mut counts = vec![0u32; 800];
        let draws = 8000u32;
        for k in 0..draws as u64 {
            let mut st = SamplerState::new(2024);
            st.proposal_count = k;
            let c = random_next(&space, &st);
            counts[space.rank(&space.encode(&c).unwrap()) as usize] += 1;
        }
        let expected = draws as f64 / 800.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 799 dof: mean 799, sd ~40; 3 sigma band
        assert!((799.0 - 120.0..=799.0 + 120.0).contains(&chi2), "chi2 = {chi2}");
        // per-cell 3-sigma binomial check, allowing the handful of excursions
        // a 800-cell table produces by chance
        let sigma = (draws as f64 * (1.0 / 800.0) * (799.0 / 800.0)).sqrt();
        let outliers = counts
            .iter()
            .filter(|&&c| (c as f64 - expected).abs() > 3.0 * sigma)
            .count();
        assert!(outliers <= 8, "{outliers} cells outside 3 sigma");
    }
}
