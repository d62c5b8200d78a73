//! Seeded random instances for property checks.
//!
//! Priors are independent uniform draws normalized to sum to one; utilities
//! are uniform on [−2, 2]. When `force_nonnegative` is set, one state per
//! location is reflected to a nonnegative utility so that persuasion has
//! something to work with.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{DecentralizedMechanism, LocationModel, SystemModel};

pub const UTILITY_RANGE: f64 = 2.0;
const MAX_REJECTIONS: usize = 10_000;

/// Independent stream for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

pub fn random_distribution<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let unit = Uniform::new(f64::EPSILON, 1.0);
    let raw: Vec<f64> = (0..n).map(|_| unit.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

pub fn random_location<R: Rng + ?Sized>(
    rng: &mut R,
    name: String,
    num_states: usize,
    force_nonnegative: bool,
) -> LocationModel {
    let prior = random_distribution(rng, num_states);
    let u = Uniform::new_inclusive(-UTILITY_RANGE, UTILITY_RANGE);
    let mut utility: Vec<f64> = (0..num_states).map(|_| u.sample(rng)).collect();
    if force_nonnegative {
        let i = rng.gen_range(0..num_states);
        utility[i] = utility[i].abs();
    }
    LocationModel::with_indexed_states(name, prior, utility)
}

/// K locations with state counts drawn from `states`.
pub fn random_independent<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    states: std::ops::RangeInclusive<usize>,
    force_nonnegative: bool,
) -> Result<SystemModel> {
    let locations = (0..k)
        .map(|i| {
            let n = rng.gen_range(states.clone());
            random_location(rng, format!("loc{}", i + 1), n, force_nonnegative)
        })
        .collect();
    SystemModel::independent(locations)
}

/// Like [`random_independent`], but every location has negative expected
/// utility, a nonnegative-utility state, and a payoff uniform on (0, 3].
pub fn random_assumption1<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    states: std::ops::RangeInclusive<usize>,
) -> Result<SystemModel> {
    let payoff = Uniform::new_inclusive(f64::EPSILON, 3.0);
    let mut locations = Vec::with_capacity(k);
    for i in 0..k {
        let mut tries = 0;
        let loc = loop {
            let n = rng.gen_range(states.clone());
            let loc = random_location(rng, format!("loc{}", i + 1), n, true);
            if loc.expected_utility() < 0.0 {
                break loc;
            }
            tries += 1;
            if tries >= MAX_REJECTIONS {
                return Err(Error::Internal("rejection sampling did not converge".into()));
            }
        };
        locations.push(loc.with_payoff(payoff.sample(rng)));
    }
    SystemModel::independent(locations)
}

/// K binary-state locations with a random joint table over {0,1}^K.
pub fn random_joint_binary<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Result<SystemModel> {
    let locations = (0..k)
        .map(|i| random_location(rng, format!("loc{}", i + 1), 2, true))
        .collect();
    let table = random_distribution(rng, 1 << k);
    SystemModel::joint_with_marginals(locations, table)
}

/// Binary decentralized mechanism with σ_k(1|ω_k) uniform on [0, 1].
pub fn random_binary_mechanism<R: Rng + ?Sized>(rng: &mut R, system: &SystemModel) -> DecentralizedMechanism {
    let rows: Vec<Vec<f64>> = system
        .locations
        .iter()
        .map(|l| (0..l.num_states()).map(|_| rng.gen::<f64>()).collect())
        .collect();
    DecentralizedMechanism::binary(&rows).expect("probabilities lie in [0, 1]")
}

/// Vector in [0,1]^K with Σ x ≤ 1.
pub fn random_admissible_vector<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let scale: f64 = rng.gen();
    random_distribution(rng, k).into_iter().map(|p| (p * scale).min(1.0)).collect()
}
