//! Parameter estimators from a demonstration: the posterior sampler and MAP
//! search that use the expert's actions, and two IO-HMM baselines (EM and a
//! Gibbs sampler) that only see the environment's responses.

mod em;
mod map;
mod sampling;

pub use em::{expected_counts, iohmm_em, EmConfig, EmResult};
pub use map::{map_estimate, MapConfig, MapResult};
pub use sampling::{
    bernoulli_counts, conditional_draw, iohmm_gibbs, mcmc_posterior, metropolis_accept, McmcConfig, SampleSet,
};
