//! Acting under parameter uncertainty: the POMDP over `S × {1..M}` whose
//! hidden sample index `m` is uniform at the start and never changes.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::estimators::SampleSet;
use crate::model::ParametricTemplate;
use crate::pomdp::{argmax, Belief, Labels, Policy, Pomdp, ValueFunction};
use crate::solver::{solve, SolverConfig};

/// Block-diagonal mixture of the sampled models.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedPomdp {
    model: Pomdp<f64>,
    base_states: usize,
    samples: usize,
}

impl ExtendedPomdp {
    pub fn model(&self) -> &Pomdp<f64> {
        &self.model
    }

    pub fn base_states(&self) -> usize {
        self.base_states
    }

    pub fn sample_count(&self) -> usize {
        self.samples
    }

    /// Extended index of `[s, m]`.
    pub fn index(&self, s: usize, m: usize) -> usize {
        m * self.base_states + s
    }

    /// `(s, m)` of an extended index.
    pub fn split(&self, i: usize) -> (usize, usize) {
        (i % self.base_states, i / self.base_states)
    }

    /// Marginal over the sample index of an extended belief.
    pub fn sample_marginal(&self, belief: &[f64]) -> Vec<f64> {
        belief.chunks_exact(self.base_states).map(|block| block.iter().sum()).collect()
    }
}

/// Builds the extended model: `T̃([s,m],a,[s',m']) = [m = m'] T_m(s,a,s')`,
/// `Õ` and `R̃` from block `m`'s model, `b̃0([s,m]) = b0_m(s) / M`.
pub fn extend(samples: &SampleSet, template: &ParametricTemplate) -> Result<ExtendedPomdp> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("cannot extend over an empty sample set".into()));
    }
    if let Some(reason) = template.episodic_structure() {
        return Err(Error::EpisodicTemplate(reason));
    }
    let models = samples.samples.iter().map(|theta| template.instantiate(theta)).collect::<Result<Vec<_>>>()?;
    let (ns, na, nz) = (template.n_states(), template.n_actions(), template.n_observations());
    let count = models.len();
    let n = ns * count;
    let weight = 1.0 / count as f64;

    let mut transition = vec![0.0; n * na * n];
    let mut observation = vec![0.0; na * n * nz];
    let mut initial = vec![0.0; n];
    let mut reward = vec![0.0; n * na];
    for (m, model) in models.iter().enumerate() {
        for s in 0..ns {
            let i = m * ns + s;
            initial[i] = model.initial()[s] * weight;
            for a in 0..na {
                reward[i * na + a] = model.reward(s, a);
                for s2 in 0..ns {
                    transition[(i * na + a) * n + m * ns + s2] = model.transition(s, a, s2);
                }
                observation[(a * n + i) * nz..(a * n + i + 1) * nz].copy_from_slice(model.observation_row(a, s));
            }
        }
    }
    let base = template.labels();
    let labels = Labels {
        states: (0..count).flat_map(|m| base.states.iter().map(move |s| format!("{s}@{m}"))).collect(),
        actions: base.actions.clone(),
        observations: base.observations.clone(),
    };
    let model = Pomdp::new(labels, transition, observation, initial, reward, template.discount())?;
    Ok(ExtendedPomdp { model, base_states: ns, samples: count })
}

/// A solved extended model, ready to act.
#[derive(Debug, Clone)]
pub struct PosteriorPlan {
    pub extended: ExtendedPomdp,
    pub value_function: ValueFunction<f64>,
}

impl PosteriorPlan {
    /// A fresh agent starting from `b̃0`.
    pub fn agent(&self) -> PosteriorAgent<'_> {
        let model = self.extended.model();
        PosteriorAgent {
            plan: self,
            belief: model.initial().to_vec(),
            scratch: vec![0.0; model.n_states()],
            q: vec![0.0; model.n_actions()],
            resets: 0,
        }
    }
}

/// Extends over `samples` and solves the result.
pub fn plan_posterior(samples: &SampleSet, template: &ParametricTemplate, solver: &SolverConfig) -> Result<PosteriorPlan> {
    let extended = extend(samples, template)?;
    let value_function = solve(extended.model(), solver)?;
    Ok(PosteriorPlan { extended, value_function })
}

/// Greedy agent over the extended belief. The environment only supplies
/// observations; the belief follows the extended model's own dynamics.
///
/// An observation that every sample deems impossible resets the belief to
/// `b̃0`; such events are counted in [`PosteriorAgent::resets`].
#[derive(Debug, Clone)]
pub struct PosteriorAgent<'a> {
    plan: &'a PosteriorPlan,
    belief: Vec<f64>,
    scratch: Vec<f64>,
    q: Vec<f64>,
    resets: usize,
}

impl PosteriorAgent<'_> {
    pub fn belief(&self) -> Belief<f64> {
        Belief::from_normalized(self.belief.clone())
    }

    /// Current `P(m | history)`.
    pub fn sample_marginal(&self) -> Vec<f64> {
        self.plan.extended.sample_marginal(&self.belief)
    }

    pub fn resets(&self) -> usize {
        self.resets
    }
}

impl Policy<f64> for PosteriorAgent<'_> {
    fn reset(&mut self) {
        self.belief.copy_from_slice(self.plan.extended.model().initial());
    }

    fn choose(&mut self, _rng: &mut dyn RngCore) -> usize {
        self.plan.value_function.q_values_into(&self.belief, &mut self.q);
        argmax(&self.q)
    }

    fn observe(&mut self, action: usize, observation: usize) -> Result<()> {
        let model = self.plan.extended.model();
        let norm = model.propagate_into(&self.belief, action, observation, &mut self.scratch);
        if norm > 0.0 {
            for (b, x) in self.belief.iter_mut().zip(&self.scratch) {
                *b = x / norm;
            }
        } else {
            self.resets += 1;
            self.reset();
        }
        Ok(())
    }
}
