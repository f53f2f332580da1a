//! Seeded random sources. Every stochastic routine owns a ChaCha stream so
//! results are reproducible across platforms.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Deterministic child seed from a master seed and a path of indices
/// (SplitMix64 finalizer over the mixed inputs).
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut h = master ^ 0x9E37_79B9_7F4A_7C15;
    for &p in path {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws an index with probability proportional to `weights`.
///
/// Weights need not be normalized; zero-weight entries are never returned
/// as long as some weight is positive.
pub fn sample_categorical<T: Scalar, R: RngCore + ?Sized>(weights: &[T], rng: &mut R) -> usize {
    let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.iter().enumerate() {
        let w = w.as_f64();
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Random dense model with strictly positive probabilities and rewards in
/// `[-10, 10]`, for property tests.
pub fn random_pomdp<R: Rng + ?Sized>(
    states: usize,
    actions: usize,
    observations: usize,
    discount: f64,
    rng: &mut R,
) -> crate::pomdp::Pomdp<f64> {
    let mut rows = |count: usize, width: usize| -> Vec<f64> {
        (0..count)
            .flat_map(|_| {
                let w: Vec<f64> = (0..width).map(|_| rng.gen_range(0.05..1.0)).collect();
                let total: f64 = w.iter().sum();
                w.into_iter().map(move |x| x / total)
            })
            .collect()
    };
    let transition = rows(states * actions, states);
    let observation = rows(actions * states, observations);
    let initial = rows(1, states);
    let reward = (0..states * actions).map(|_| rng.gen_range(-10.0..10.0)).collect();
    crate::pomdp::Pomdp::new(
        crate::pomdp::Labels::numbered(states, actions, observations),
        transition,
        observation,
        initial,
        reward,
        discount,
    )
    .expect("normalized rows")
}

/// Trace generated by uniformly random actions in `model`.
pub fn random_trace<R: Rng + ?Sized>(
    model: &crate::pomdp::Pomdp<f64>,
    len: usize,
    rng: &mut R,
) -> crate::pomdp::DemoTrace {
    let mut s = sample_categorical(model.initial(), rng);
    let steps = (0..len)
        .map(|_| {
            let action = rng.gen_range(0..model.n_actions());
            s = sample_categorical(model.transition_row(s, action), rng);
            let observation = sample_categorical(model.observation_row(action, s), rng);
            crate::pomdp::Step { action, observation }
        })
        .collect();
    crate::pomdp::DemoTrace::new(steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categorical_frequencies() {
        let mut rng = rng_from_seed(1);
        let w = [0.2, 0.0, 0.5, 0.3];
        let mut counts = [0usize; 4];
        for _ in 0..100_000 {
            counts[sample_categorical(&w, &mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        for (c, p) in counts.iter().zip(w) {
            assert!((*c as f64 / 1e5 - p).abs() < 0.01);
        }
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(7, &[0, 1]), derive_seed(7, &[1, 0]));
        assert_eq!(derive_seed(7, &[3, 4]), derive_seed(7, &[3, 4]));
        assert_ne!(derive_seed(7, &[3]), derive_seed(8, &[3]));
    }
}
