//! Point-based value iteration over a belief set reachable from `b0`.
//!
//! Every `Γ(a)` starts from the blind-policy vector of `a` (value of
//! repeating `a` forever), which is a lower bound on `Q*(·, a)`. Backups at
//! each retained belief produce one candidate vector per action, so `Q(b, a)`
//! tracks the backed-up value of every action and not only the greedy one.
//! A set never loses its last vector.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pomdp::{dot, AlphaVector, Belief, Pomdp, ValueFunction};
use crate::random::{rng_from_seed, sample_categorical, SimRng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Sweeps stop once no `Q(b, a)` on the belief set improves by this much.
    pub precision: f64,
    pub max_iterations: usize,
    /// Wall-clock budget in seconds; `0` means unlimited.
    pub time_budget: f64,
    pub belief_set_limit: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            precision: 1e-3,
            max_iterations: 500,
            time_budget: 0.0,
            belief_set_limit: 256,
            seed: 0,
        }
    }
}

/// Environment variable overriding every solver time budget, in seconds.
pub const TIME_BUDGET_ENV: &str = "APL_TIME_BUDGET_SECS";

impl SolverConfig {
    /// Applies the time budget from [`TIME_BUDGET_ENV`] when it is set.
    pub fn with_env_budget(mut self) -> Result<Self> {
        if let Ok(raw) = std::env::var(TIME_BUDGET_ENV) {
            let secs: f64 = raw
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{TIME_BUDGET_ENV}={raw:?} is not a number")))?;
            self.time_budget = secs;
            self.validate()?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.precision > 0.0 && self.precision.is_finite()) {
            return Err(Error::InvalidConfig(format!("precision must be > 0, got {}", self.precision)));
        }
        if self.belief_set_limit == 0 {
            return Err(Error::InvalidConfig("belief_set_limit must be at least 1".into()));
        }
        if !(self.time_budget >= 0.0) {
            return Err(Error::InvalidConfig(format!("negative time budget {}", self.time_budget)));
        }
        Ok(())
    }

    fn deadline(&self, start: Instant) -> Option<Instant> {
        (self.time_budget > 0.0).then(|| start + Duration::from_secs_f64(self.time_budget))
    }
}

/// Solver output together with the belief set it was computed on.
#[derive(Debug, Clone)]
pub struct Solution<T: Scalar = f64> {
    pub value_function: ValueFunction<T>,
    pub beliefs: Vec<Belief<T>>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest `Q(b, a)` gain on the belief set during the last sweep.
    pub last_improvement: f64,
}

/// Value of repeating each action forever, from below.
///
/// Iterates `α ← R(·,a) + γ T_a α` starting at the constant
/// `min_s R(s,a) / (1-γ)`; every iterate is a lower bound.
pub fn blind_vectors<T: Scalar>(model: &Pomdp<T>) -> Vec<Vec<T>> {
    let ns = model.n_states();
    let gamma = model.discount();
    let tol = T::cast(1e-11) * (T::one() + model.max_abs_reward() / (T::one() - gamma));
    (0..model.n_actions())
        .map(|a| {
            let min_r = (0..ns).map(|s| model.reward(s, a)).fold(T::infinity(), T::min);
            let mut alpha = vec![min_r / (T::one() - gamma); ns];
            let mut next = alpha.clone();
            for _ in 0..100_000 {
                let mut change = T::zero();
                for (s, slot) in next.iter_mut().enumerate() {
                    let future: T = model.successors(s, a).iter().map(|&(s2, p)| p * alpha[s2]).sum();
                    *slot = model.reward(s, a) + gamma * future;
                    change = change.max((*slot - alpha[s]).abs());
                }
                std::mem::swap(&mut alpha, &mut next);
                if change <= tol {
                    break;
                }
            }
            alpha
        })
        .collect()
}

/// Scratch space for Bellman backups at a single belief.
struct Backup<T: Scalar> {
    tau: Vec<T>,
    scores: Vec<T>,
    /// Index into the flattened vector list picked for each `(a, z)`.
    chosen: Vec<Vec<usize>>,
    /// Backed-up vector per action.
    vectors: Vec<Vec<T>>,
}

impl<T: Scalar> Backup<T> {
    fn new(model: &Pomdp<T>) -> Self {
        Backup {
            tau: vec![T::zero(); model.n_states()],
            scores: Vec::new(),
            chosen: vec![vec![0; model.n_observations()]; model.n_actions()],
            vectors: vec![vec![T::zero(); model.n_states()]; model.n_actions()],
        }
    }

    /// Fills `self.vectors[a]` with the point backup of action `a` at `b`,
    /// choosing per `(a, z)` the best vector of `alphas` at the successor belief.
    fn run(&mut self, model: &Pomdp<T>, alphas: &Candidates<T>, b: &[T]) {
        let ns = model.n_states();
        let nz = model.n_observations();
        let gamma = model.discount();
        for a in 0..model.n_actions() {
            for z in 0..nz {
                model.propagate_into(b, a, z, &mut self.tau);
                self.chosen[a][z] = alphas.best(&self.tau, &mut self.scores);
            }
            let chosen = &self.chosen[a];
            let g = &mut self.vectors[a];
            for (s, slot) in g.iter_mut().enumerate().take(ns) {
                let mut future = T::zero();
                for &(s2, p) in model.successors(s, a) {
                    let mut inner = T::zero();
                    for (z, &i) in chosen.iter().enumerate() {
                        let o = model.observation(a, s2, z);
                        if o > T::zero() {
                            inner = inner + o * alphas.get(i, s2);
                        }
                    }
                    future = future + p * inner;
                }
                *slot = model.reward(s, a) + gamma * future;
            }
        }
    }
}

/// Candidate vectors stored column-major so that scoring all of them
/// against one belief is a sequence of contiguous axpy passes.
struct Candidates<T: Scalar> {
    count: usize,
    /// `columns[s * count + i] = α_i(s)`
    columns: Vec<T>,
}

impl<T: Scalar> Candidates<T> {
    fn new<'a>(n_states: usize, vectors: impl Iterator<Item = &'a Vec<T>> + Clone) -> Self {
        let count = vectors.clone().count();
        let mut columns = vec![T::zero(); n_states * count];
        for (i, alpha) in vectors.enumerate() {
            for (s, &v) in alpha.iter().enumerate() {
                columns[s * count + i] = v;
            }
        }
        Candidates { count, columns }
    }

    fn get(&self, i: usize, s: usize) -> T {
        self.columns[s * self.count + i]
    }

    /// Index of the first vector maximizing `α · x`.
    fn best(&self, x: &[T], scores: &mut Vec<T>) -> usize {
        scores.clear();
        scores.resize(self.count, T::zero());
        for (s, &w) in x.iter().enumerate() {
            if w != T::zero() {
                let column = &self.columns[s * self.count..(s + 1) * self.count];
                for (acc, &v) in scores.iter_mut().zip(column) {
                    *acc = *acc + w * v;
                }
            }
        }
        crate::pomdp::argmax(scores)
    }
}

/// Point-based Bellman backup of `vf` at `b`.
///
/// Returns the backed-up vector of the action whose backup is largest at `b`
/// (lowest index on ties).
pub fn point_backup<T: Scalar>(model: &Pomdp<T>, vf: &ValueFunction<T>, b: &Belief<T>) -> AlphaVector<T> {
    let alphas = Candidates::new(model.n_states(), vf.sets().iter().flatten());
    let mut backup = Backup::new(model);
    backup.run(model, &alphas, b.weights());
    let values: Vec<T> = backup.vectors.iter().map(|g| dot(g, b.weights())).collect();
    let action = crate::pomdp::argmax(&values);
    AlphaVector { action, values: backup.vectors.swap_remove(action) }
}

/// Beliefs reachable from `b0`, grown by repeatedly adding, for each point,
/// its sampled successor farthest (L1) from the current set.
pub fn expand_beliefs<T: Scalar>(model: &Pomdp<T>, limit: usize, rng: &mut SimRng) -> Vec<Belief<T>> {
    let min_gap = T::cast(1e-6);
    let ns = model.n_states();
    let mut set = vec![model.initial_belief()];
    let mut scratch = vec![T::zero(); ns];
    let mut stale_rounds = 0;
    while set.len() < limit && stale_rounds < 3 {
        let round = set.len();
        let mut added = 0;
        for i in 0..round {
            if set.len() >= limit {
                break;
            }
            let mut best: Option<(T, Vec<T>)> = None;
            for a in 0..model.n_actions() {
                let s = sample_categorical(set[i].weights(), rng);
                let s2 = sample_categorical(model.transition_row(s, a), rng);
                let z = sample_categorical(model.observation_row(a, s2), rng);
                let norm = model.propagate_into(set[i].weights(), a, z, &mut scratch);
                if !(norm > T::zero()) {
                    continue;
                }
                let next: Vec<T> = scratch.iter().map(|x| *x / norm).collect();
                let gap = set
                    .iter()
                    .map(|b| b.weights().iter().zip(&next).map(|(x, y)| (*x - *y).abs()).sum::<T>())
                    .fold(T::infinity(), T::min);
                if best.as_ref().is_none_or(|(g, _)| gap > *g) {
                    best = Some((gap, next));
                }
            }
            if let Some((gap, next)) = best {
                if gap > min_gap {
                    set.push(Belief::from_normalized(next));
                    added += 1;
                }
            }
        }
        stale_rounds = if added == 0 { stale_rounds + 1 } else { 0 };
    }
    set
}

/// Keeps, per action, the vectors that are maximal within `Γ(a)` at some
/// retained belief. Ties keep the earliest vector.
fn prune<T: Scalar>(sets: &mut [Vec<Vec<T>>], beliefs: &[Belief<T>]) {
    for set in sets.iter_mut() {
        if set.len() <= 1 {
            continue;
        }
        let mut keep = vec![false; set.len()];
        for b in beliefs {
            let mut best = 0;
            let mut best_val = T::neg_infinity();
            for (i, alpha) in set.iter().enumerate() {
                let v = b.dot(alpha);
                if v > best_val {
                    best_val = v;
                    best = i;
                }
            }
            keep[best] = true;
        }
        let mut i = 0;
        set.retain(|_| {
            i += 1;
            keep[i - 1]
        });
    }
}

fn q_table<T: Scalar>(sets: &[Vec<Vec<T>>], beliefs: &[Belief<T>]) -> Vec<Vec<T>> {
    beliefs
        .iter()
        .map(|b| {
            sets.iter()
                .map(|set| set.iter().map(|alpha| b.dot(alpha)).fold(T::neg_infinity(), T::max))
                .collect()
        })
        .collect()
}

pub fn solve<T: Scalar>(model: &Pomdp<T>, config: &SolverConfig) -> Result<ValueFunction<T>> {
    Ok(solve_detailed(model, config)?.value_function)
}

pub fn solve_detailed<T: Scalar>(model: &Pomdp<T>, config: &SolverConfig) -> Result<Solution<T>> {
    config.validate()?;
    let start = Instant::now();
    let deadline = config.deadline(start);
    let mut rng = rng_from_seed(config.seed);
    let beliefs = expand_beliefs(model, config.belief_set_limit, &mut rng);

    let mut sets: Vec<Vec<Vec<T>>> = blind_vectors(model).into_iter().map(|v| vec![v]).collect();
    let mut q = q_table(&sets, &beliefs);
    let mut backup = Backup::new(model);
    let precision = T::cast(config.precision);
    let mut iterations = 0;
    let mut converged = false;
    let mut last_improvement = f64::INFINITY;

    while iterations < config.max_iterations {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        iterations += 1;
        let mut fresh: Vec<(usize, Vec<T>)> = Vec::new();
        // Backups that pick the same vectors for every observation are identical.
        let mut seen: HashSet<(usize, Vec<usize>)> = HashSet::new();
        {
            let alphas = Candidates::new(model.n_states(), sets.iter().flatten());
            for (b, q_b) in beliefs.iter().zip(&q) {
                backup.run(model, &alphas, b.weights());
                for (a, g) in backup.vectors.iter().enumerate() {
                    let v = b.dot(g);
                    let slack = T::cast(1e-10).max(v.abs() * T::epsilon() * T::cast(16.0));
                    if v > q_b[a] + slack && seen.insert((a, backup.chosen[a].clone())) {
                        fresh.push((a, g.clone()));
                    }
                }
            }
        }
        for (a, g) in fresh {
            sets[a].push(g);
        }
        prune(&mut sets, &beliefs);
        let next_q = q_table(&sets, &beliefs);
        let gain = q
            .iter()
            .zip(&next_q)
            .flat_map(|(old, new)| old.iter().zip(new).map(|(o, n)| *n - *o))
            .fold(T::zero(), T::max);
        q = next_q;
        last_improvement = gain.as_f64();
        if gain < precision {
            converged = true;
            break;
        }
    }

    Ok(Solution {
        value_function: ValueFunction::new(model.n_states(), sets)?,
        beliefs,
        iterations,
        converged,
        last_improvement,
    })
}
