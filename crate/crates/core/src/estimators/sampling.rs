use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{action_loglik, ffbs, StateSequence};
use crate::model::{ParamRole, ParamVector, ParametricTemplate, RowRef, TiedRow};
use crate::pomdp::{DemoTrace, PolicyConfig, ValueFunction};
use crate::random::rng_from_seed;
use crate::solver::{solve, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub total_sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig { total_sweeps: 1000, burn_in: 100, thin: 10, seed: 0 }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.total_sweeps {
            return Err(Error::InvalidConfig(format!(
                "burn_in ({}) must be below total_sweeps ({})",
                self.burn_in, self.total_sweeps
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".into()));
        }
        if self.sample_count() == 0 {
            return Err(Error::InvalidConfig("schedule retains no samples".into()));
        }
        Ok(())
    }

    /// Number of retained samples: every `thin`-th sweep after burn-in.
    pub fn sample_count(&self) -> usize {
        self.total_sweeps.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    fn keeps(&self, sweep: usize) -> bool {
        sweep >= self.burn_in && (sweep - self.burn_in + 1).is_multiple_of(self.thin)
    }
}

/// Retained chain states `θ_1 … θ_M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub samples: Vec<ParamVector>,
    /// Solved expert value function of each sample, when the sampler had one.
    #[serde(skip)]
    pub value_functions: Vec<Option<ValueFunction<f64>>>,
    pub acceptance_rate: f64,
}

impl SampleSet {
    pub fn new(samples: Vec<ParamVector>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidConfig("a sample set needs at least one sample".into()));
        }
        let value_functions = vec![None; samples.len()];
        Ok(SampleSet { samples, value_functions, acceptance_rate: 1.0 })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Per-component sample mean.
    pub fn mean(&self) -> ParamVector {
        let n = self.samples.len() as f64;
        let k = self.samples[0].len();
        (0..k).map(|j| self.samples.iter().map(|s| s[j]).sum::<f64>() / n).collect()
    }

    /// Per-component sample standard deviation (`n - 1` denominator).
    pub fn sd(&self) -> ParamVector {
        let mean = self.mean();
        let n = self.samples.len();
        if n < 2 {
            return vec![0.0; mean.len()];
        }
        mean.iter()
            .enumerate()
            .map(|(j, m)| {
                let ss: f64 = self.samples.iter().map(|s| (s[j] - m).powi(2)).sum();
                (ss / (n - 1) as f64).sqrt()
            })
            .collect()
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[k]).collect()
    }
}

/// Metropolis rule: accepts with probability `min(1, exp(log_new - log_current))`
/// given `u ~ U[0, 1)`. A current value of `-∞` always accepts.
pub fn metropolis_accept(log_current: f64, log_new: f64, u: f64) -> bool {
    if log_current == f64::NEG_INFINITY {
        return true;
    }
    u < (log_new - log_current).exp()
}

/// Success/failure tallies of the tied rows along a hidden-state path.
pub fn bernoulli_counts(rows: &[TiedRow], states: &StateSequence, trace: &DemoTrace) -> (f64, f64) {
    let (mut success, mut failure) = (0.0, 0.0);
    let mut tally = |outcome: usize, row: &TiedRow| {
        if outcome == row.success {
            success += 1.0;
        } else if outcome == row.failure {
            failure += 1.0;
        }
    };
    for row in rows {
        match row.row {
            RowRef::Initial => tally(states.initial(), row),
            RowRef::Transition { s, a } => {
                for (i, step) in trace.steps.iter().enumerate() {
                    if step.action == a && states.states[i] == s {
                        tally(states.states[i + 1], row);
                    }
                }
            }
            RowRef::Observation { a, s2 } => {
                for (i, step) in trace.steps.iter().enumerate() {
                    if step.action == a && states.states[i + 1] == s2 {
                        tally(step.observation, row);
                    }
                }
            }
        }
    }
    (success, failure)
}

fn check_roles(template: &ParametricTemplate) -> Result<Vec<ParamRole>> {
    (0..template.n_params())
        .map(|k| match template.role(k) {
            ParamRole::Unsupported(reason) => {
                Err(Error::UnsupportedParameterRole { name: template.params()[k].name.clone(), reason })
            }
            role => Ok(role),
        })
        .collect()
}

fn draw_with_role<R: Rng + ?Sized>(
    template: &ParametricTemplate,
    k: usize,
    role: &ParamRole,
    states: &StateSequence,
    trace: &DemoTrace,
    rng: &mut R,
) -> Result<f64> {
    let prior = template.params()[k].prior;
    match role {
        ParamRole::Bernoulli(rows) => {
            let (success, failure) = bernoulli_counts(rows, states, trace);
            let posterior = prior.beta_posterior(success, failure).ok_or_else(|| Error::UnsupportedParameterRole {
                name: template.params()[k].name.clone(),
                reason: "probability rows need a Beta prior".into(),
            })?;
            Ok(posterior.sample(rng))
        }
        ParamRole::RewardOnly | ParamRole::Unused => Ok(prior.sample(rng)),
        ParamRole::Unsupported(reason) => {
            Err(Error::UnsupportedParameterRole { name: template.params()[k].name.clone(), reason: reason.clone() })
        }
    }
}

/// Draws `θ_k` from its IO-HMM conditional given a hidden-state path: a Beta
/// posterior for Bernoulli-tied parameters, the prior for parameters without
/// an observation-data term.
pub fn conditional_draw<R: Rng + ?Sized>(
    template: &ParametricTemplate,
    k: usize,
    states: &StateSequence,
    trace: &DemoTrace,
    rng: &mut R,
) -> Result<f64> {
    draw_with_role(template, k, &template.role(k), states, trace, rng)
}

/// Scores proposals by the expert-action likelihood.
struct ActionScorer<'a> {
    cfg: PolicyConfig,
    solver: &'a SolverConfig,
}

impl ActionScorer<'_> {
    fn score(
        &self,
        template: &ParametricTemplate,
        theta: &[f64],
        trace: &DemoTrace,
    ) -> Result<(f64, Option<ValueFunction<f64>>)> {
        let model = template.instantiate(theta)?;
        if self.cfg.beta == 0.0 {
            let uniform = -(trace.len() as f64) * (model.n_actions() as f64).ln();
            return Ok((uniform, None));
        }
        let vf = solve(&model, self.solver)?;
        Ok((action_loglik(&model, &vf, self.cfg, trace), Some(vf)))
    }
}

fn run_chain(
    template: &ParametricTemplate,
    trace: &DemoTrace,
    mcmc: &McmcConfig,
    scorer: Option<ActionScorer<'_>>,
) -> Result<SampleSet> {
    mcmc.validate()?;
    if trace.is_empty() {
        return Err(Error::InvalidConfig("the demonstration is empty".into()));
    }
    let roles = check_roles(template)?;
    let mut rng = rng_from_seed(mcmc.seed);
    let mut theta = template.sample_prior(&mut rng);
    let mut log_p = f64::NEG_INFINITY;
    let mut current_vf: Option<ValueFunction<f64>> = None;
    let mut order: Vec<usize> = (0..template.n_params()).collect();
    let (mut proposals, mut accepted) = (0usize, 0usize);
    let mut samples = Vec::with_capacity(mcmc.sample_count());
    let mut value_functions = Vec::with_capacity(mcmc.sample_count());

    for sweep in 0..mcmc.total_sweeps {
        let model = template.instantiate(&theta)?;
        let states = ffbs(&model, trace, &mut rng)?;
        order.shuffle(&mut rng);
        for &k in &order {
            let mut candidate = theta.clone();
            candidate[k] = draw_with_role(template, k, &roles[k], &states, trace, &mut rng)?;
            proposals += 1;
            match &scorer {
                None => {
                    theta = candidate;
                    accepted += 1;
                }
                Some(scorer) => {
                    let (log_new, vf) = scorer.score(template, &candidate, trace)?;
                    if metropolis_accept(log_p, log_new, rng.gen::<f64>()) {
                        theta = candidate;
                        log_p = log_new;
                        current_vf = vf;
                        accepted += 1;
                    }
                }
            }
        }
        if mcmc.keeps(sweep) {
            samples.push(theta.clone());
            value_functions.push(current_vf.clone());
        }
    }
    Ok(SampleSet {
        samples,
        value_functions,
        acceptance_rate: if proposals == 0 { 1.0 } else { accepted as f64 / proposals as f64 },
    })
}

/// Metropolis-within-Gibbs sampler for `p(θ | D)`.
///
/// Each sweep draws a hidden-state path by FFBS under the current `θ`, then
/// visits the components in a fresh random order. A component proposal comes
/// from its IO-HMM conditional and is accepted on the ratio of expert-action
/// likelihoods alone; together these target the full posterior. The chain
/// starts at a prior draw whose action likelihood counts as zero, so the first
/// proposal is always accepted.
pub fn mcmc_posterior(
    template: &ParametricTemplate,
    trace: &DemoTrace,
    cfg: PolicyConfig,
    mcmc: &McmcConfig,
    solver: &SolverConfig,
) -> Result<SampleSet> {
    solver.validate()?;
    run_chain(template, trace, mcmc, Some(ActionScorer { cfg, solver }))
}

/// Gibbs sampler for the IO-HMM posterior: the same sweeps as
/// [`mcmc_posterior`] with every proposal accepted and no solver calls.
pub fn iohmm_gibbs(template: &ParametricTemplate, trace: &DemoTrace, mcmc: &McmcConfig) -> Result<SampleSet> {
    run_chain(template, trace, mcmc, None)
}
