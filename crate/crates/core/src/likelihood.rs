//! Demonstration likelihoods and hidden-state inference.
//!
//! A demonstration factorizes into the expert-action term
//! `Π_i π̃(b_i, a_i)` and the environment-response term
//! `Π_i P(z_i | b_i, a_i)`, where `b_1 = b0` and `b_{i+1}` folds in
//! `(a_i, z_i)`. Impossible combinations evaluate to `-∞` rather than
//! erroring, so optimizers and samplers can treat them as rejections.
//!
//! Hidden-state sequences include the state before the first action:
//! `s_0 ~ b0`, `s_i ~ T(s_{i-1}, a_i, ·)`, `z_i ~ O(a_i, s_i, ·)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParametricTemplate;
use crate::pomdp::{softmax_in_place, DemoTrace, PolicyConfig, Pomdp, ValueFunction};
use crate::random::sample_categorical;
use crate::scalar::Scalar;
use crate::solver::{solve, SolverConfig};

/// Log of the environment-response likelihood, by the scaled forward
/// algorithm.
pub fn obs_loglik<T: Scalar>(model: &Pomdp<T>, trace: &DemoTrace) -> T {
    let mut belief = model.initial().to_vec();
    let mut next = vec![T::zero(); model.n_states()];
    let mut total = T::zero();
    for step in &trace.steps {
        let norm = model.propagate_into(&belief, step.action, step.observation, &mut next);
        if !(norm > T::zero()) {
            return T::neg_infinity();
        }
        total = total + norm.ln();
        for (b, x) in belief.iter_mut().zip(&next) {
            *b = *x / norm;
        }
    }
    total
}

fn action_terms<T: Scalar>(
    model: &Pomdp<T>,
    vf: &ValueFunction<T>,
    cfg: PolicyConfig,
    trace: &DemoTrace,
    include_observations: bool,
) -> T {
    let beta = T::cast(cfg.beta);
    let uniform = -T::cast(model.n_actions() as f64).ln();
    let mut belief = model.initial().to_vec();
    let mut next = vec![T::zero(); model.n_states()];
    let mut q = vec![T::zero(); model.n_actions()];
    let mut total = T::zero();
    let last = trace.len().saturating_sub(1);
    for (i, step) in trace.steps.iter().enumerate() {
        total = total
            + if beta == T::zero() {
                uniform
            } else {
                vf.q_values_into(&belief, &mut q);
                softmax_in_place(&mut q, beta);
                q[step.action].ln()
            };
        if i == last && !include_observations {
            break;
        }
        let norm = model.propagate_into(&belief, step.action, step.observation, &mut next);
        if !(norm > T::zero()) {
            return T::neg_infinity();
        }
        if include_observations {
            total = total + norm.ln();
        }
        for (b, x) in belief.iter_mut().zip(&next) {
            *b = *x / norm;
        }
    }
    total
}

/// Log-likelihood that a soft-max expert over `vf` emits the demonstrated
/// actions. The `i`-th action is scored at the belief after the first `i-1`
/// steps, so `a_1` is scored at `b0`.
pub fn action_loglik<T: Scalar>(
    model: &Pomdp<T>,
    vf: &ValueFunction<T>,
    cfg: PolicyConfig,
    trace: &DemoTrace,
) -> T {
    action_terms(model, vf, cfg, trace, false)
}

/// Full demonstration log-likelihood accumulated step by step:
/// `Σ_i [log π̃(b_i, a_i) + log P(z_i | b_i, a_i)]`.
pub fn demo_loglik<T: Scalar>(
    model: &Pomdp<T>,
    vf: &ValueFunction<T>,
    cfg: PolicyConfig,
    trace: &DemoTrace,
) -> T {
    action_terms(model, vf, cfg, trace, true)
}

/// The three additive parts of the unnormalized log posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTerms {
    pub log_prior: f64,
    pub obs: f64,
    pub action: f64,
}

impl PosteriorTerms {
    pub fn total(&self) -> f64 {
        self.log_prior + self.obs + self.action
    }

    fn rejected() -> Self {
        PosteriorTerms { log_prior: f64::NEG_INFINITY, obs: f64::NEG_INFINITY, action: f64::NEG_INFINITY }
    }
}

/// Evaluates `log p(θ) + log p(z | θ, a) + log p(a | θ, π̃*_θ, z)`.
///
/// Solves `P_θ` for the expert's value function unless `β = 0`, where the
/// soft-max policy is uniform and the solve is skipped. Returns the solved
/// value function alongside the terms.
pub fn posterior_terms(
    template: &ParametricTemplate,
    theta: &[f64],
    trace: &DemoTrace,
    cfg: PolicyConfig,
    solver_cfg: &SolverConfig,
) -> Result<(PosteriorTerms, Option<ValueFunction<f64>>)> {
    let log_prior = template.log_prior(theta);
    if log_prior == f64::NEG_INFINITY {
        return Ok((PosteriorTerms::rejected(), None));
    }
    let model = match template.instantiate(theta) {
        Ok(m) => m,
        Err(Error::OutOfSupport { .. }) => return Ok((PosteriorTerms::rejected(), None)),
        Err(e) => return Err(e),
    };
    trace.validate(&model)?;
    let obs = obs_loglik(&model, trace);
    if cfg.beta == 0.0 {
        let action = -(trace.len() as f64) * (model.n_actions() as f64).ln();
        return Ok((PosteriorTerms { log_prior, obs, action }, None));
    }
    let vf = solve(&model, solver_cfg)?;
    let action = action_loglik(&model, &vf, cfg, trace);
    Ok((PosteriorTerms { log_prior, obs, action }, Some(vf)))
}

/// Unnormalized log posterior; `-∞` outside the support or for impossible
/// traces.
pub fn log_posterior(
    template: &ParametricTemplate,
    theta: &[f64],
    trace: &DemoTrace,
    cfg: PolicyConfig,
    solver_cfg: &SolverConfig,
) -> Result<f64> {
    Ok(posterior_terms(template, theta, trace, cfg, solver_cfg)?.0.total())
}

/// Exact per-step posteriors of the hidden states given the whole trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothing<T: Scalar = f64> {
    /// `P(s_i | D)` for `i = 0..=L`.
    pub marginals: Vec<Vec<T>>,
    /// `P(s_{i-1} = s, s_i = s' | D)` for `i = 1..=L`, row-major `[s][s']`.
    pub pairwise: Vec<Vec<T>>,
    pub loglik: T,
}

/// Forward pass storing every filtered belief; `None` on a zero-probability step.
fn forward<T: Scalar>(model: &Pomdp<T>, trace: &DemoTrace) -> Option<(Vec<Vec<T>>, Vec<T>)> {
    let ns = model.n_states();
    let mut filtered = Vec::with_capacity(trace.len() + 1);
    let mut norms = Vec::with_capacity(trace.len());
    filtered.push(model.initial().to_vec());
    for step in &trace.steps {
        let mut next = vec![T::zero(); ns];
        let norm = model.propagate_into(filtered.last().unwrap(), step.action, step.observation, &mut next);
        if !(norm > T::zero()) {
            return None;
        }
        next.iter_mut().for_each(|x| *x = *x / norm);
        filtered.push(next);
        norms.push(norm);
    }
    Some((filtered, norms))
}

/// Forward-backward smoothing with actions treated as exogenous inputs.
pub fn smoothed_marginals<T: Scalar>(model: &Pomdp<T>, trace: &DemoTrace) -> Result<Smoothing<T>> {
    trace.validate(model)?;
    let ns = model.n_states();
    let (filtered, norms) = forward(model, trace).ok_or(Error::ImpossibleTrace)?;
    let len = trace.len();

    let mut backward = vec![vec![T::one(); ns]; len + 1];
    for i in (1..=len).rev() {
        let step = trace.steps[i - 1];
        let (head, tail) = backward.split_at_mut(i);
        let (prev, next) = (&mut head[i - 1], &tail[0]);
        for (s, slot) in prev.iter_mut().enumerate() {
            let mut acc = T::zero();
            for &(s2, p) in model.successors(s, step.action) {
                acc = acc + p * model.observation(step.action, s2, step.observation) * next[s2];
            }
            *slot = acc / norms[i - 1];
        }
    }

    let normalize = |v: &mut Vec<T>| {
        let total: T = v.iter().copied().sum();
        v.iter_mut().for_each(|x| *x = *x / total);
    };
    let marginals = filtered
        .iter()
        .zip(&backward)
        .map(|(f, b)| {
            let mut m: Vec<T> = f.iter().zip(b).map(|(x, y)| *x * *y).collect();
            normalize(&mut m);
            m
        })
        .collect();
    let pairwise = (1..=len)
        .map(|i| {
            let step = trace.steps[i - 1];
            let mut xi = vec![T::zero(); ns * ns];
            for (s, &f) in filtered[i - 1].iter().enumerate() {
                for &(s2, p) in model.successors(s, step.action) {
                    xi[s * ns + s2] =
                        f * p * model.observation(step.action, s2, step.observation) * backward[i][s2] / norms[i - 1];
                }
            }
            normalize(&mut xi);
            xi
        })
        .collect();
    let loglik = norms.iter().map(|n| n.ln()).sum();
    Ok(Smoothing { marginals, pairwise, loglik })
}

/// Hidden-state sequence `(s_0, s_1, …, s_L)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSequence {
    pub states: Vec<usize>,
}

impl StateSequence {
    /// State before the first action.
    pub fn initial(&self) -> usize {
        self.states[0]
    }

    /// `s_i` for `i` in `1..=L`.
    pub fn after_step(&self, i: usize) -> usize {
        self.states[i]
    }
}

/// Exact joint draw from `p(s_0..s_L | D)` by forward filtering, backward
/// sampling.
pub fn ffbs<T: Scalar, R: Rng + ?Sized>(model: &Pomdp<T>, trace: &DemoTrace, rng: &mut R) -> Result<StateSequence> {
    trace.validate(model)?;
    let (filtered, _) = forward(model, trace).ok_or(Error::ImpossibleTrace)?;
    let len = trace.len();
    let ns = model.n_states();
    let mut states = vec![0; len + 1];
    states[len] = sample_categorical(&filtered[len], rng);
    let mut weights = vec![T::zero(); ns];
    for i in (1..=len).rev() {
        let action = trace.steps[i - 1].action;
        let next = states[i];
        for (s, w) in weights.iter_mut().enumerate() {
            *w = filtered[i - 1][s] * model.transition(s, action, next);
        }
        states[i - 1] = sample_categorical(&weights, rng);
    }
    Ok(StateSequence { states })
}
