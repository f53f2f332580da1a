//! Finite POMDPs, Bayes filtering, α-vector value functions and the
//! soft-max expert.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random::{rng_from_seed, sample_categorical};
use crate::scalar::{normalization_tolerance, Scalar};

/// Human-readable names for the index sets of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
}

impl Labels {
    /// `s0, s1, ..`, `a0, ..`, `z0, ..`.
    pub fn numbered(states: usize, actions: usize, observations: usize) -> Self {
        let names = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i}")).collect();
        Labels {
            states: names("s", states),
            actions: names("a", actions),
            observations: names("z", observations),
        }
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == name)
    }

    pub fn observation_index(&self, name: &str) -> Option<usize> {
        self.observations.iter().position(|z| z == name)
    }
}

/// A fully specified finite POMDP `<S, A, Z, T, O, b0, R, γ>`.
///
/// Tables are dense and row-major: `T[s][a][s']`, `O[a][s'][z]`, `R[s][a]`.
/// The non-zero successors of every `(s, a)` are cached so that filtering
/// block-structured models stays linear in the number of non-zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Pomdp<T: Scalar = f64> {
    labels: Labels,
    transition: Vec<T>,
    observation: Vec<T>,
    initial: Vec<T>,
    reward: Vec<T>,
    discount: T,
    successors: Vec<Vec<(usize, T)>>,
}

fn check_distribution<T: Scalar>(row: &[T], what: impl Fn() -> String) -> Result<()> {
    let tol = normalization_tolerance::<T>();
    let mut sum = T::zero();
    for &p in row {
        if !(p >= T::zero() && p <= T::one()) {
            return Err(Error::InvalidModel(format!("{}: entry {p} outside [0,1]", what())));
        }
        sum = sum + p;
    }
    if (sum - T::one()).abs() > tol {
        return Err(Error::InvalidModel(format!("{}: sums to {sum}", what())));
    }
    Ok(())
}

impl<T: Scalar> Pomdp<T> {
    pub fn new(
        labels: Labels,
        transition: Vec<T>,
        observation: Vec<T>,
        initial: Vec<T>,
        reward: Vec<T>,
        discount: T,
    ) -> Result<Self> {
        let ns = labels.states.len();
        let na = labels.actions.len();
        let nz = labels.observations.len();
        if ns == 0 || na == 0 || nz == 0 {
            return Err(Error::InvalidModel("empty state, action or observation set".into()));
        }
        let expect = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::InvalidModel(format!("{name} table has {got} entries, expected {want}")))
            }
        };
        expect("transition", transition.len(), ns * na * ns)?;
        expect("observation", observation.len(), na * ns * nz)?;
        expect("initial", initial.len(), ns)?;
        expect("reward", reward.len(), ns * na)?;
        if !(discount >= T::zero() && discount < T::one()) {
            return Err(Error::InvalidModel(format!("discount {discount} outside [0,1)")));
        }
        for s in 0..ns {
            for a in 0..na {
                let row = &transition[(s * na + a) * ns..(s * na + a + 1) * ns];
                check_distribution(row, || format!("T({s},{a},·)"))?;
            }
        }
        for a in 0..na {
            for s2 in 0..ns {
                let row = &observation[(a * ns + s2) * nz..(a * ns + s2 + 1) * nz];
                check_distribution(row, || format!("O({a},{s2},·)"))?;
            }
        }
        check_distribution(&initial, || "b0".to_string())?;
        if let Some(r) = reward.iter().find(|r| !r.is_finite()) {
            return Err(Error::InvalidModel(format!("non-finite reward {r}")));
        }

        let successors = (0..ns * na)
            .map(|sa| {
                transition[sa * ns..(sa + 1) * ns]
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p > T::zero())
                    .map(|(s2, &p)| (s2, p))
                    .collect()
            })
            .collect();

        Ok(Pomdp { labels, transition, observation, initial, reward, discount, successors })
    }

    pub fn n_states(&self) -> usize {
        self.labels.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.labels.actions.len()
    }

    pub fn n_observations(&self) -> usize {
        self.labels.observations.len()
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    #[inline]
    pub fn transition(&self, s: usize, a: usize, s2: usize) -> T {
        let ns = self.n_states();
        self.transition[(s * self.n_actions() + a) * ns + s2]
    }

    #[inline]
    pub fn observation(&self, a: usize, s2: usize, z: usize) -> T {
        let nz = self.n_observations();
        self.observation[(a * self.n_states() + s2) * nz + z]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> T {
        self.reward[s * self.n_actions() + a]
    }

    pub fn initial(&self) -> &[T] {
        &self.initial
    }

    pub fn initial_belief(&self) -> Belief<T> {
        Belief(self.initial.clone())
    }

    pub fn discount(&self) -> T {
        self.discount
    }

    /// Non-zero entries of `T(s, a, ·)`.
    #[inline]
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, T)] {
        &self.successors[s * self.n_actions() + a]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[T] {
        let ns = self.n_states();
        let i = (s * self.n_actions() + a) * ns;
        &self.transition[i..i + ns]
    }

    pub fn observation_row(&self, a: usize, s2: usize) -> &[T] {
        let nz = self.n_observations();
        let i = (a * self.n_states() + s2) * nz;
        &self.observation[i..i + nz]
    }

    /// Largest absolute reward.
    pub fn max_abs_reward(&self) -> T {
        self.reward.iter().fold(T::zero(), |m, r| m.max(r.abs()))
    }

    /// Writes `Σ_s T(s,a,s') b(s)` into `out`.
    pub(crate) fn predict_into(&self, b: &[T], a: usize, out: &mut [T]) {
        out.iter_mut().for_each(|x| *x = T::zero());
        for (s, &w) in b.iter().enumerate() {
            if w > T::zero() {
                for &(s2, p) in self.successors(s, a) {
                    out[s2] = out[s2] + w * p;
                }
            }
        }
    }

    /// Unnormalized Bayes filter step; returns `P(z | b, a)`.
    pub(crate) fn propagate_into(&self, b: &[T], a: usize, z: usize, out: &mut [T]) -> T {
        self.predict_into(b, a, out);
        let mut norm = T::zero();
        for (s2, x) in out.iter_mut().enumerate() {
            *x = *x * self.observation(a, s2, z);
            norm = norm + *x;
        }
        norm
    }

    pub(crate) fn check_action(&self, a: usize) -> Result<()> {
        if a < self.n_actions() {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!("action index {a} out of range")))
        }
    }
}

/// Probability distribution over hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief<T: Scalar = f64>(Vec<T>);

impl<T: Scalar> Belief<T> {
    pub fn new(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidModel("empty belief".into()));
        }
        check_distribution(&weights, || "belief".to_string())?;
        Ok(Belief(weights))
    }

    pub fn uniform(n: usize) -> Self {
        Belief(vec![T::one() / T::cast(n as f64); n])
    }

    pub fn point(n: usize, s: usize) -> Self {
        let mut w = vec![T::zero(); n];
        w[s] = T::one();
        Belief(w)
    }

    pub(crate) fn from_normalized(weights: Vec<T>) -> Self {
        Belief(weights)
    }

    pub fn weights(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn l1_distance(&self, other: &Belief<T>) -> T {
        self.0.iter().zip(&other.0).map(|(x, y)| (*x - *y).abs()).sum()
    }

    pub fn dot(&self, values: &[T]) -> T {
        dot(&self.0, values)
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T: Scalar> std::ops::Index<usize> for Belief<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// One Bayes filter step: `b'(s') ∝ O(a,s',z) Σ_s T(s,a,s') b(s)`.
///
/// Returns the normalized belief together with the normalizer `P(z | b, a)`.
pub fn belief_update<T: Scalar>(
    model: &Pomdp<T>,
    b: &Belief<T>,
    a: usize,
    z: usize,
) -> Result<(Belief<T>, T)> {
    model.check_action(a)?;
    if z >= model.n_observations() {
        return Err(Error::InvalidModel(format!("observation index {z} out of range")));
    }
    let mut out = vec![T::zero(); model.n_states()];
    let norm = model.propagate_into(b.weights(), a, z, &mut out);
    if !(norm > T::zero()) {
        return Err(Error::ZeroProbabilityObservation { action: a, observation: z });
    }
    out.iter_mut().for_each(|x| *x = *x / norm);
    Ok((Belief(out), norm))
}

/// α-vector tagged with the action whose plan it values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVector<T: Scalar = f64> {
    pub action: usize,
    pub values: Vec<T>,
}

/// Piecewise-linear convex value function given by per-action α-vector sets.
///
/// `Q(b, a) = max_{α ∈ Γ(a)} α·b` and `V(b) = max_a Q(b, a)`. Every `Γ(a)` is
/// non-empty so that `Q` is defined for all actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction<T: Scalar = f64> {
    n_states: usize,
    sets: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> ValueFunction<T> {
    pub fn new(n_states: usize, sets: Vec<Vec<Vec<T>>>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::InvalidModel("value function without actions".into()));
        }
        for (a, set) in sets.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::InvalidModel(format!("Γ({a}) is empty")));
            }
            for alpha in set {
                if alpha.len() != n_states {
                    return Err(Error::InvalidModel(format!(
                        "α-vector in Γ({a}) has length {}, expected {n_states}",
                        alpha.len()
                    )));
                }
                if alpha.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidModel(format!("non-finite α-vector in Γ({a})")));
                }
            }
        }
        Ok(ValueFunction { n_states, sets })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.sets.len()
    }

    /// `Γ(a)`.
    pub fn set(&self, a: usize) -> &[Vec<T>] {
        &self.sets[a]
    }

    pub fn sets(&self) -> &[Vec<Vec<T>>] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn alpha_vectors(&self) -> impl Iterator<Item = AlphaVector<T>> + '_ {
        self.sets.iter().enumerate().flat_map(|(action, set)| {
            set.iter().map(move |values| AlphaVector { action, values: values.clone() })
        })
    }

    #[inline]
    pub fn q_value(&self, b: &[T], a: usize) -> T {
        self.sets[a].iter().map(|alpha| dot(alpha, b)).fold(T::neg_infinity(), T::max)
    }

    pub(crate) fn q_values_into(&self, b: &[T], out: &mut [T]) {
        for (a, q) in out.iter_mut().enumerate() {
            *q = self.q_value(b, a);
        }
    }

    pub fn value(&self, b: &Belief<T>) -> T {
        (0..self.n_actions()).map(|a| self.q_value(b.weights(), a)).fold(T::neg_infinity(), T::max)
    }

    /// Adds `c` to every entry of every α-vector.
    pub fn shifted(&self, c: T) -> Self {
        self.map_values(|v| v + c)
    }

    /// Multiplies every entry of every α-vector by `k`.
    pub fn scaled(&self, k: T) -> Self {
        self.map_values(|v| v * k)
    }

    fn map_values(&self, f: impl Fn(T) -> T) -> Self {
        let sets = self
            .sets
            .iter()
            .map(|set| set.iter().map(|alpha| alpha.iter().map(|&v| f(v)).collect()).collect())
            .collect();
        ValueFunction { n_states: self.n_states, sets }
    }
}

/// `Q(b, ·)` and `V(b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionValues<T: Scalar = f64> {
    pub q: Vec<T>,
    pub value: T,
}

pub fn action_values<T: Scalar>(vf: &ValueFunction<T>, b: &Belief<T>) -> ActionValues<T> {
    let mut q = vec![T::zero(); vf.n_actions()];
    vf.q_values_into(b.weights(), &mut q);
    let value = q.iter().copied().fold(T::neg_infinity(), T::max);
    ActionValues { q, value }
}

/// Inverse temperature of the soft-max expert.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub beta: f64,
}

impl PolicyConfig {
    pub fn new(beta: f64) -> Result<Self> {
        if beta.is_finite() && beta >= 0.0 {
            Ok(PolicyConfig { beta })
        } else {
            Err(Error::InvalidConfig(format!("beta must be finite and non-negative, got {beta}")))
        }
    }
}

/// Boltzmann distribution `exp(βq_a) / Σ exp(βq_a')`, shifted by `max q`.
pub fn softmax<T: Scalar>(q: &[T], beta: T) -> Vec<T> {
    let mut out = q.to_vec();
    softmax_in_place(&mut out, beta);
    out
}

pub(crate) fn softmax_in_place<T: Scalar>(q: &mut [T], beta: T) {
    if beta == T::zero() {
        let u = T::one() / T::cast(q.len() as f64);
        q.iter_mut().for_each(|x| *x = u);
        return;
    }
    let max = q.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in q.iter_mut() {
        *x = (beta * (*x - max)).exp();
        sum = sum + *x;
    }
    q.iter_mut().for_each(|x| *x = *x / sum);
}

pub fn softmax_policy<T: Scalar>(vf: &ValueFunction<T>, cfg: PolicyConfig, b: &Belief<T>) -> Vec<T> {
    softmax(&action_values(vf, b).q, T::cast(cfg.beta))
}

/// Index of the first maximum.
pub(crate) fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// `argmax_a Q(b, a)`, ties going to the lowest action index.
pub fn greedy_action<T: Scalar>(vf: &ValueFunction<T>, b: &Belief<T>) -> usize {
    argmax(&action_values(vf, b).q)
}

/// One demonstration step `(a_i, z_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Step {
    pub action: usize,
    pub observation: usize,
}

/// Demonstration `D = (a_1 z_1 … a_L z_L)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoTrace {
    pub steps: Vec<Step>,
}

impl DemoTrace {
    pub fn new(steps: Vec<Step>) -> Self {
        DemoTrace { steps }
    }

    pub fn from_pairs(pairs: &[(usize, usize)]) -> Self {
        DemoTrace {
            steps: pairs.iter().map(|&(action, observation)| Step { action, observation }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate<T: Scalar>(&self, model: &Pomdp<T>) -> Result<()> {
        for (i, step) in self.steps.iter().enumerate() {
            if step.action >= model.n_actions() || step.observation >= model.n_observations() {
                return Err(Error::InvalidModel(format!(
                    "trace step {} ({}, {}) out of range",
                    i + 1,
                    step.action,
                    step.observation
                )));
            }
        }
        Ok(())
    }

    /// First `len` steps.
    pub fn prefix(&self, len: usize) -> DemoTrace {
        DemoTrace { steps: self.steps[..len.min(self.steps.len())].to_vec() }
    }

    /// Number of steps whose action satisfies `pred`.
    pub fn count_actions(&self, pred: impl Fn(usize) -> bool) -> usize {
        self.steps.iter().filter(|s| pred(s.action)).count()
    }
}

/// An agent that acts in an environment it only sees through observations.
pub trait Policy<T: Scalar> {
    /// Returns to the state before the first action.
    fn reset(&mut self);

    fn choose(&mut self, rng: &mut dyn RngCore) -> usize;

    fn observe(&mut self, action: usize, observation: usize) -> Result<()>;
}

/// How a [`BeliefAgent`] turns its current belief into an action.
#[derive(Debug, Clone, Copy)]
pub enum DecisionRule<'a, T: Scalar> {
    Greedy(&'a ValueFunction<T>),
    Softmax(&'a ValueFunction<T>, PolicyConfig),
    Fixed(usize),
    Uniform,
}

/// Tracks the belief of a concrete model with Bayes filtering and acts on it.
#[derive(Debug, Clone)]
pub struct BeliefAgent<'a, T: Scalar = f64> {
    model: &'a Pomdp<T>,
    rule: DecisionRule<'a, T>,
    belief: Vec<T>,
    scratch: Vec<T>,
    q: Vec<T>,
}

impl<'a, T: Scalar> BeliefAgent<'a, T> {
    pub fn new(model: &'a Pomdp<T>, rule: DecisionRule<'a, T>) -> Self {
        BeliefAgent {
            model,
            rule,
            belief: model.initial().to_vec(),
            scratch: vec![T::zero(); model.n_states()],
            q: vec![T::zero(); model.n_actions()],
        }
    }

    pub fn greedy(model: &'a Pomdp<T>, vf: &'a ValueFunction<T>) -> Self {
        Self::new(model, DecisionRule::Greedy(vf))
    }

    pub fn softmax(model: &'a Pomdp<T>, vf: &'a ValueFunction<T>, cfg: PolicyConfig) -> Self {
        Self::new(model, DecisionRule::Softmax(vf, cfg))
    }

    pub fn belief(&self) -> Belief<T> {
        Belief(self.belief.clone())
    }
}

impl<T: Scalar> Policy<T> for BeliefAgent<'_, T> {
    fn reset(&mut self) {
        self.belief.copy_from_slice(self.model.initial());
    }

    fn choose(&mut self, rng: &mut dyn RngCore) -> usize {
        match self.rule {
            DecisionRule::Greedy(vf) => {
                vf.q_values_into(&self.belief, &mut self.q);
                argmax(&self.q)
            }
            DecisionRule::Softmax(vf, cfg) => {
                vf.q_values_into(&self.belief, &mut self.q);
                softmax_in_place(&mut self.q, T::cast(cfg.beta));
                sample_categorical(&self.q, rng)
            }
            DecisionRule::Fixed(a) => a,
            DecisionRule::Uniform => rng.gen_range(0..self.model.n_actions()),
        }
    }

    fn observe(&mut self, action: usize, observation: usize) -> Result<()> {
        let norm = self.model.propagate_into(&self.belief, action, observation, &mut self.scratch);
        if !(norm > T::zero()) {
            return Err(Error::ZeroProbabilityObservation { action, observation });
        }
        for (b, x) in self.belief.iter_mut().zip(&self.scratch) {
            *b = *x / norm;
        }
        Ok(())
    }
}

/// Outcome of running a policy in an environment model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub trace: DemoTrace,
    pub total_reward: f64,
    pub average_reward: f64,
    /// Batch-means standard error of `average_reward`.
    pub standard_error: f64,
}

fn batch_means_standard_error(rewards: &[f64]) -> f64 {
    let n = rewards.len();
    if n < 4 {
        return f64::NAN;
    }
    let batches = (n / 100).clamp(2, 50);
    let size = n / batches;
    let means: Vec<f64> = rewards
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Runs `policy` for `steps` steps in `model`, sampling hidden states,
/// transitions and observations from the model.
pub fn simulate<T: Scalar>(
    model: &Pomdp<T>,
    policy: &mut dyn Policy<T>,
    steps: usize,
    seed: u64,
) -> Result<Simulation> {
    if steps == 0 {
        return Err(Error::InvalidConfig("simulate needs at least one step".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut state = sample_categorical(model.initial(), &mut rng);
    policy.reset();
    let mut trace = Vec::with_capacity(steps);
    let mut rewards = Vec::with_capacity(steps);
    for _ in 0..steps {
        let action = policy.choose(&mut rng);
        model.check_action(action)?;
        rewards.push(model.reward(state, action).as_f64());
        state = sample_categorical(model.transition_row(state, action), &mut rng);
        let observation = sample_categorical(model.observation_row(action, state), &mut rng);
        policy.observe(action, observation)?;
        trace.push(Step { action, observation });
    }
    let total_reward: f64 = rewards.iter().sum();
    Ok(Simulation {
        trace: DemoTrace::new(trace),
        total_reward,
        average_reward: total_reward / steps as f64,
        standard_error: batch_means_standard_error(&rewards),
    })
}

/// Samples an expert demonstration: soft-max actions over `vf_true`.
pub fn generate_demo<T: Scalar>(
    model: &Pomdp<T>,
    vf_true: &ValueFunction<T>,
    cfg: PolicyConfig,
    len: usize,
    seed: u64,
) -> Result<DemoTrace> {
    if len == 0 {
        return Ok(DemoTrace::default());
    }
    let mut expert = BeliefAgent::softmax(model, vf_true, cfg);
    Ok(simulate(model, &mut expert, len, seed)?.trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Hand-built Tiger at p_i, p_l = p_r = p, r_t = -100.
    fn tiger(p_i: f64, p: f64) -> Pomdp {
        let mut t = Vec::new();
        for _s in 0..2 {
            t.extend([1.0, 0.0]); // placeholder for listen, fixed below
            t.extend([p_i, 1.0 - p_i]);
            t.extend([p_i, 1.0 - p_i]);
        }
        // listen keeps the tiger in place
        t[0] = 1.0;
        t[1] = 0.0;
        t[6] = 0.0;
        t[7] = 1.0;
        let o = vec![p, 1.0 - p, 1.0 - p, p, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5];
        let r = vec![-1.0, -100.0, 10.0, -1.0, 10.0, -100.0];
        Pomdp::new(Labels::numbered(2, 3, 2), t, o, vec![p_i, 1.0 - p_i], r, 0.9).unwrap()
    }

    fn single_alpha_vf(sets: Vec<Vec<Vec<f64>>>) -> ValueFunction {
        let n = sets[0][0].len();
        ValueFunction::new(n, sets).unwrap()
    }

    #[test]
    fn rejects_unnormalized_rows() {
        let err = Pomdp::new(
            Labels::numbered(1, 1, 1),
            vec![0.9],
            vec![1.0],
            vec![1.0],
            vec![0.0],
            0.5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidModel(_)));
        let err =
            Pomdp::new(Labels::numbered(1, 1, 1), vec![1.0], vec![1.0], vec![1.0], vec![0.0], 1.0)
                .unwrap_err();
        assert!(matches!(err, Error::InvalidModel(_)));
    }

    #[test]
    fn identity_transition_uniform_observation_keeps_belief() {
        let m = Pomdp::new(
            Labels::numbered(3, 1, 2),
            vec![1., 0., 0., 0., 1., 0., 0., 0., 1.],
            vec![0.5; 6],
            vec![0.2, 0.3, 0.5],
            vec![0.0; 3],
            0.9,
        )
        .unwrap();
        let b = Belief::new(vec![0.1, 0.6, 0.3]).unwrap();
        let (b2, norm) = belief_update(&m, &b, 0, 1).unwrap();
        assert_eq!(b2.weights(), b.weights());
        assert_eq!(norm, 0.5);
    }

    #[test]
    fn tiger_listening_updates() {
        let m = tiger(0.6, 0.85);
        let b = Belief::new(vec![0.5, 0.5]).unwrap();
        let (b1, norm) = belief_update(&m, &b, 0, 0).unwrap();
        assert_relative_eq!(b1[0], 0.85, epsilon = 1e-12);
        assert_relative_eq!(norm, 0.5, epsilon = 1e-12);
        let (b2, _) = belief_update(&m, &b1, 0, 0).unwrap();
        let expected = 0.85f64.powi(2) / (0.85f64.powi(2) + 0.15f64.powi(2));
        assert_relative_eq!(b2[0], expected, epsilon = 1e-12);
        assert_relative_eq!(b2[0], 0.969_798_657_718_120_8, epsilon = 1e-12);
    }

    #[test]
    fn opening_redraws_tiger() {
        let m = tiger(0.6, 0.85);
        for b0 in [0.0, 0.3, 0.97] {
            let b = Belief::new(vec![b0, 1.0 - b0]).unwrap();
            for a in 1..3 {
                for z in 0..2 {
                    let (b2, _) = belief_update(&m, &b, a, z).unwrap();
                    assert_relative_eq!(b2[0], 0.6, epsilon = 1e-12);
                    assert_relative_eq!(b2[1], 0.4, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn impossible_observation_is_an_error() {
        let m = Pomdp::new(
            Labels::numbered(1, 1, 2),
            vec![1.0],
            vec![1.0, 0.0],
            vec![1.0],
            vec![0.0],
            0.5,
        )
        .unwrap();
        let err = belief_update(&m, &m.initial_belief(), 0, 1).unwrap_err();
        assert_eq!(err, Error::ZeroProbabilityObservation { action: 0, observation: 1 });
    }

    #[test]
    fn action_values_examples() {
        let zero = single_alpha_vf(vec![vec![vec![0.0, 0.0]]]);
        let b = Belief::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(action_values(&zero, &b).q, vec![0.0]);

        let vf = single_alpha_vf(vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]]);
        let av = action_values(&vf, &b);
        assert_relative_eq!(av.q[0], 0.7);
        assert_relative_eq!(av.value, 0.7);

        let set = vec![vec![1.0, -2.0], vec![0.5, 0.5]];
        let twin = single_alpha_vf(vec![set.clone(), set]);
        for p in [0.0, 0.25, 0.8, 1.0] {
            let b = Belief::new(vec![p, 1.0 - p]).unwrap();
            let q = action_values(&twin, &b).q;
            assert_eq!(q[0], q[1]);
        }
    }

    #[test]
    fn empty_action_set_is_rejected() {
        assert!(ValueFunction::<f64>::new(2, vec![vec![vec![0.0, 0.0]], vec![]]).is_err());
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[1.0, 0.0], 0.3);
        assert_relative_eq!(p[0], 0.574_442_516_811_659, epsilon = 1e-12);
        assert_relative_eq!(p[1], 1.0 - 0.574_442_516_811_659, epsilon = 1e-12);
        assert_eq!(softmax(&[5.0, -3.0, 2.0], 0.0), vec![1.0 / 3.0; 3]);
        assert_eq!(softmax(&[4.0, 4.0], 7.0), vec![0.5, 0.5]);
        // Extreme gaps stay finite.
        let p = softmax(&[1e6, 0.0], 10.0);
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn softmax_in_f32() {
        let p = softmax(&[1.0f32, 0.0], 0.3);
        assert!((p[0] - 0.574_442_5).abs() < 1e-6);
    }

    #[test]
    fn greedy_examples_and_tie_break() {
        let b = Belief::new(vec![1.0]).unwrap();
        let vf = single_alpha_vf(vec![vec![vec![1.0]], vec![vec![2.0]], vec![vec![0.0]]]);
        assert_eq!(greedy_action(&vf, &b), 1);
        let vf = single_alpha_vf(vec![vec![vec![2.0]], vec![vec![2.0]], vec![vec![0.0]]]);
        assert_eq!(greedy_action(&vf, &b), 0);
    }

    #[test]
    fn always_listen_earns_minus_one() {
        let m = tiger(0.6, 0.85);
        let mut agent = BeliefAgent::new(&m, DecisionRule::Fixed(0));
        let sim = simulate(&m, &mut agent, 500, 3).unwrap();
        assert_eq!(sim.average_reward, -1.0);
        assert_eq!(sim.trace.len(), 500);
    }

    #[test]
    fn zero_reward_model_averages_zero() {
        let m = Pomdp::new(
            Labels::numbered(2, 2, 2),
            vec![0.5; 8],
            vec![0.3, 0.7, 0.6, 0.4, 0.5, 0.5, 0.1, 0.9],
            vec![0.5, 0.5],
            vec![0.0; 4],
            0.9,
        )
        .unwrap();
        let mut agent = BeliefAgent::new(&m, DecisionRule::Uniform);
        assert_eq!(simulate(&m, &mut agent, 1000, 9).unwrap().average_reward, 0.0);
    }

    #[test]
    fn simulation_is_reproducible() {
        let m = tiger(0.6, 0.85);
        let mut agent = BeliefAgent::new(&m, DecisionRule::Uniform);
        let a = simulate(&m, &mut agent, 2000, 42).unwrap();
        let b = simulate(&m, &mut agent, 2000, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate(&m, &mut agent, 2000, 43).unwrap();
        assert_ne!(a.trace, c.trace);
    }

    #[test]
    fn zero_steps_rejected() {
        let m = tiger(0.6, 0.85);
        let mut agent = BeliefAgent::new(&m, DecisionRule::Uniform);
        assert!(simulate(&m, &mut agent, 0, 0).is_err());
    }

    #[test]
    fn trace_validation() {
        let m = tiger(0.6, 0.85);
        assert!(DemoTrace::from_pairs(&[(0, 1), (2, 0)]).validate(&m).is_ok());
        assert!(DemoTrace::from_pairs(&[(3, 0)]).validate(&m).is_err());
        assert!(DemoTrace::from_pairs(&[(0, 2)]).validate(&m).is_err());
    }
}
