//! Parametric POMDP families `P_θ` whose table entries are affine in `θ`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::expr::ParamExpr;
use super::prior::Prior;
use crate::error::{Error, Result};
use crate::pomdp::{Labels, Pomdp};
use crate::random::rng_from_seed;
use crate::scalar::Scalar;

/// Probability parameters are clamped into `[CLAMP, 1 - CLAMP]` before a
/// model is instantiated.
pub const PROBABILITY_CLAMP: f64 = 1e-6;

const IDENTITY_TOLERANCE: f64 = 1e-12;

pub type ParamVector = Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub prior: Prior,
}

/// A distribution row of the template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowRef {
    Transition { s: usize, a: usize },
    Observation { a: usize, s2: usize },
    Initial,
}

/// A row `(…, θ_k at success, …, 1-θ_k at failure, …)` with zeros elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TiedRow {
    pub row: RowRef,
    pub success: usize,
    pub failure: usize,
}

/// Where a parameter enters the model, which decides how it can be updated
/// from hidden-state data.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamRole {
    /// Only in Bernoulli-tied probability rows.
    Bernoulli(Vec<TiedRow>),
    /// Only in reward entries: no term in the observation likelihood.
    RewardOnly,
    Unused,
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParametricTemplate {
    labels: Labels,
    discount: f64,
    params: Vec<ParamSpec>,
    /// `[s][a][s']`
    transition: Vec<ParamExpr>,
    /// `[a][s'][z]`
    observation: Vec<ParamExpr>,
    initial: Vec<ParamExpr>,
    /// `[s][a]`
    reward: Vec<ParamExpr>,
}

impl ParametricTemplate {
    /// Checks table shapes and prior hyperparameters. The probabilistic
    /// invariants are checked by [`validate_template`].
    pub fn new(
        labels: Labels,
        discount: f64,
        params: Vec<ParamSpec>,
        transition: Vec<ParamExpr>,
        observation: Vec<ParamExpr>,
        initial: Vec<ParamExpr>,
        reward: Vec<ParamExpr>,
    ) -> Result<Self> {
        let ns = labels.states.len();
        let na = labels.actions.len();
        let nz = labels.observations.len();
        let mut problems = Vec::new();
        if ns == 0 || na == 0 || nz == 0 {
            problems.push("empty state, action or observation set".to_string());
        }
        for (name, got, want) in [
            ("transition", transition.len(), ns * na * ns),
            ("observation", observation.len(), na * ns * nz),
            ("initial", initial.len(), ns),
            ("reward", reward.len(), ns * na),
        ] {
            if got != want {
                problems.push(format!("{name} table has {got} entries, expected {want}"));
            }
        }
        for p in &params {
            if let Err(Error::InvalidTemplate(v)) = p.prior.validate() {
                problems.extend(v.into_iter().map(|m| format!("{}: {m}", p.name)));
            }
        }
        for (i, p) in params.iter().enumerate() {
            if params[..i].iter().any(|q| q.name == p.name) {
                problems.push(format!("duplicate parameter name {}", p.name));
            }
        }
        let k = params.len();
        let all = transition.iter().chain(&observation).chain(&initial).chain(&reward);
        if all.flat_map(|e| e.terms.iter()).any(|&(_, j)| j >= k) {
            problems.push("expression references an unknown parameter".into());
        }
        if !problems.is_empty() {
            return Err(Error::InvalidTemplate(problems));
        }
        Ok(ParametricTemplate { labels, discount, params, transition, observation, initial, reward })
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
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

    pub fn transition_expr(&self, s: usize, a: usize, s2: usize) -> &ParamExpr {
        &self.transition[(s * self.n_actions() + a) * self.n_states() + s2]
    }

    pub fn observation_expr(&self, a: usize, s2: usize, z: usize) -> &ParamExpr {
        &self.observation[(a * self.n_states() + s2) * self.n_observations() + z]
    }

    pub fn initial_expr(&self, s: usize) -> &ParamExpr {
        &self.initial[s]
    }

    pub fn reward_expr(&self, s: usize, a: usize) -> &ParamExpr {
        &self.reward[s * self.n_actions() + a]
    }

    pub fn row(&self, row: RowRef) -> &[ParamExpr] {
        let (ns, na, nz) = (self.n_states(), self.n_actions(), self.n_observations());
        match row {
            RowRef::Transition { s, a } => &self.transition[(s * na + a) * ns..(s * na + a + 1) * ns],
            RowRef::Observation { a, s2 } => &self.observation[(a * ns + s2) * nz..(a * ns + s2 + 1) * nz],
            RowRef::Initial => &self.initial,
        }
    }

    /// Every distribution row: `T(s,a,·)`, `O(a,s',·)` and `b0`.
    pub fn rows(&self) -> Vec<RowRef> {
        let mut rows = Vec::new();
        for s in 0..self.n_states() {
            for a in 0..self.n_actions() {
                rows.push(RowRef::Transition { s, a });
            }
        }
        for a in 0..self.n_actions() {
            for s2 in 0..self.n_states() {
                rows.push(RowRef::Observation { a, s2 });
            }
        }
        rows.push(RowRef::Initial);
        rows
    }

    pub fn row_name(&self, row: RowRef) -> String {
        let l = &self.labels;
        match row {
            RowRef::Transition { s, a } => format!("T({}, {}, ·)", l.states[s], l.actions[a]),
            RowRef::Observation { a, s2 } => format!("O({}, {}, ·)", l.actions[a], l.states[s2]),
            RowRef::Initial => "b0".to_string(),
        }
    }

    pub fn prior_mean(&self) -> ParamVector {
        self.params.iter().map(|p| p.prior.mean()).collect()
    }

    pub fn prior_mode(&self) -> ParamVector {
        self.params.iter().map(|p| p.prior.mode()).collect()
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        self.params.iter().map(|p| p.prior.sample(rng)).collect()
    }

    /// `Σ_k log p(θ_k)`; `-∞` outside the support.
    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        if theta.len() != self.params.len() {
            return f64::NEG_INFINITY;
        }
        self.params.iter().zip(theta).map(|(p, &x)| p.prior.ln_pdf(x)).sum()
    }

    /// Checks the support and applies the probability clamp.
    pub fn clamp(&self, theta: &[f64]) -> Result<ParamVector> {
        if theta.len() != self.params.len() {
            return Err(Error::InvalidConfig(format!(
                "θ has {} components, template has {}",
                theta.len(),
                self.params.len()
            )));
        }
        self.params
            .iter()
            .zip(theta)
            .map(|(p, &x)| {
                if !p.prior.in_support(x) {
                    return Err(Error::OutOfSupport { name: p.name.clone(), value: x });
                }
                Ok(if p.prior.is_probability() {
                    x.clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)
                } else {
                    x
                })
            })
            .collect()
    }

    pub fn instantiate(&self, theta: &[f64]) -> Result<Pomdp<f64>> {
        self.instantiate_as(theta)
    }

    /// [`ParametricTemplate::instantiate`] in a chosen scalar precision.
    pub fn instantiate_as<T: Scalar>(&self, theta: &[f64]) -> Result<Pomdp<T>> {
        let theta = self.clamp(theta)?;
        let prob = |e: &ParamExpr| {
            let v = e.eval(&theta);
            let v = if v < 0.0 && v > -IDENTITY_TOLERANCE {
                0.0
            } else if v > 1.0 && v < 1.0 + IDENTITY_TOLERANCE {
                1.0
            } else {
                v
            };
            T::cast(v)
        };
        Pomdp::new(
            self.labels.clone(),
            self.transition.iter().map(prob).collect(),
            self.observation.iter().map(prob).collect(),
            self.initial.iter().map(prob).collect(),
            self.reward.iter().map(|e| T::cast(e.eval(&theta))).collect(),
            T::cast(self.discount),
        )
    }

    /// Closed bounds of each parameter's support.
    pub fn support_bounds(&self) -> Vec<(f64, f64)> {
        self.params.iter().map(|p| p.prior.support()).collect()
    }

    pub fn role(&self, k: usize) -> ParamRole {
        let in_reward = self.reward.iter().any(|e| e.mentions(k));
        let mut tied = Vec::new();
        for row in self.rows() {
            let entries = self.row(row);
            if !entries.iter().any(|e| e.mentions(k)) {
                continue;
            }
            let success: Vec<usize> =
                (0..entries.len()).filter(|&j| entries[j] == ParamExpr::param(k)).collect();
            let failure: Vec<usize> =
                (0..entries.len()).filter(|&j| entries[j] == ParamExpr::complement(k)).collect();
            let rest_zero = entries
                .iter()
                .enumerate()
                .all(|(j, e)| success.contains(&j) || failure.contains(&j) || *e == ParamExpr::constant(0.0));
            if success.len() != 1 || failure.len() != 1 || !rest_zero {
                return ParamRole::Unsupported(format!(
                    "{} is not of the form (θ, 1-θ, 0, …)",
                    self.row_name(row)
                ));
            }
            tied.push(TiedRow { row, success: success[0], failure: failure[0] });
        }
        match (tied.is_empty(), in_reward) {
            (false, true) => ParamRole::Unsupported("appears in both reward and probability entries".into()),
            (false, false) => ParamRole::Bernoulli(tied),
            (true, true) => ParamRole::RewardOnly,
            (true, false) => ParamRole::Unused,
        }
    }

    /// Describes an absorbing zero-reward state, if the template has one.
    pub fn episodic_structure(&self) -> Option<String> {
        let theta = self.prior_mean();
        (0..self.n_states()).find_map(|s| {
            let absorbing = (0..self.n_actions()).all(|a| {
                self.transition_expr(s, a, s).eval(&theta) == 1.0 && self.reward_expr(s, a).eval(&theta) == 0.0
            });
            absorbing.then(|| format!("state {} is an absorbing terminal state", self.labels.states[s]))
        })
    }
}

/// Checks the template invariants: every distribution row sums to one
/// identically in `θ`, every probability entry stays within `[0, 1]` over the
/// prior support, and instantiation succeeds at 100 prior samples.
pub fn validate_template(template: &ParametricTemplate) -> std::result::Result<(), Vec<String>> {
    let mut violations = Vec::new();
    if !(0.0..1.0).contains(&template.discount) {
        violations.push(format!("discount {} outside [0,1)", template.discount));
    }
    let bounds = template.support_bounds();
    for row in template.rows() {
        let entries = template.row(row);
        let constant: f64 = entries.iter().map(|e| e.constant).sum();
        let mut identity = (constant - 1.0).abs() <= IDENTITY_TOLERANCE;
        for k in 0..template.n_params() {
            let coefficient: f64 = entries.iter().map(|e| e.coefficient(k)).sum();
            identity &= coefficient.abs() <= IDENTITY_TOLERANCE;
        }
        if !identity {
            violations.push(format!("row sum ≠ 1 in {}", template.row_name(row)));
        }
        for (j, e) in entries.iter().enumerate() {
            let (lo, hi) = e.range(&bounds);
            if !(lo >= -IDENTITY_TOLERANCE && hi <= 1.0 + IDENTITY_TOLERANCE) {
                violations.push(format!(
                    "range exceeds [0,1] at entry {j} of {}: [{lo}, {hi}]",
                    template.row_name(row)
                ));
            }
        }
    }
    if violations.is_empty() {
        let mut rng = rng_from_seed(0x7e57);
        for i in 0..100 {
            let theta = template.sample_prior(&mut rng);
            if let Err(e) = template.instantiate(&theta) {
                violations.push(format!("prior sample {i} {theta:?}: {e}"));
                break;
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

fn flatten3(t: &[Vec<Vec<String>>]) -> Vec<&String> {
    t.iter().flatten().flatten().collect()
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normal: Option<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    states: Vec<String>,
    actions: Vec<String>,
    observations: Vec<String>,
    discount: f64,
    params: Vec<ParamEntry>,
    transition: Vec<Vec<Vec<String>>>,
    observation: Vec<Vec<Vec<String>>>,
    initial: Vec<String>,
    reward: Vec<Vec<String>>,
}

impl ParametricTemplate {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: TemplateFile = serde_json::from_str(text)?;
        let params = file
            .params
            .into_iter()
            .map(|p| {
                let prior = match (p.beta, p.normal) {
                    (Some([a, b]), None) => Prior::beta(a, b),
                    (None, Some([mu, sigma])) => Prior::normal(mu, sigma),
                    _ => {
                        return Err(Error::InvalidTemplate(vec![format!(
                            "parameter {} needs exactly one of `beta` or `normal`",
                            p.name
                        )]))
                    }
                };
                Ok(ParamSpec { name: p.name, prior })
            })
            .collect::<Result<Vec<_>>>()?;
        let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
        let parse_all = |cells: Vec<&String>| -> Result<Vec<ParamExpr>> {
            cells.into_iter().map(|c| ParamExpr::parse(c, &names)).collect()
        };
        let (ns, na, nz) = (file.states.len(), file.actions.len(), file.observations.len());
        let shape_ok = file.transition.len() == ns
            && file.transition.iter().all(|r| r.len() == na && r.iter().all(|c| c.len() == ns))
            && file.observation.len() == na
            && file.observation.iter().all(|r| r.len() == ns && r.iter().all(|c| c.len() == nz))
            && file.reward.len() == ns
            && file.reward.iter().all(|r| r.len() == na);
        if !shape_ok {
            return Err(Error::InvalidTemplate(vec!["table shapes do not match the index sets".into()]));
        }
        let transition = parse_all(flatten3(&file.transition))?;
        let observation = parse_all(flatten3(&file.observation))?;
        let initial = parse_all(file.initial.iter().collect())?;
        let reward = parse_all(file.reward.iter().flatten().collect())?;
        ParametricTemplate::new(
            Labels { states: file.states, actions: file.actions, observations: file.observations },
            file.discount,
            params,
            transition,
            observation,
            initial,
            reward,
        )
    }

    pub fn to_json(&self) -> String {
        let names = self.param_names();
        let fmt = |e: &ParamExpr| e.format(&names);
        let (ns, na, nz) = (self.n_states(), self.n_actions(), self.n_observations());
        let file = TemplateFile {
            states: self.labels.states.clone(),
            actions: self.labels.actions.clone(),
            observations: self.labels.observations.clone(),
            discount: self.discount,
            params: self
                .params
                .iter()
                .map(|p| match p.prior {
                    Prior::Beta { alpha, beta } => {
                        ParamEntry { name: p.name.clone(), beta: Some([alpha, beta]), normal: None }
                    }
                    Prior::Normal { mean, sd } => {
                        ParamEntry { name: p.name.clone(), beta: None, normal: Some([mean, sd]) }
                    }
                })
                .collect(),
            transition: (0..ns)
                .map(|s| (0..na).map(|a| (0..ns).map(|s2| fmt(self.transition_expr(s, a, s2))).collect()).collect())
                .collect(),
            observation: (0..na)
                .map(|a| (0..ns).map(|s2| (0..nz).map(|z| fmt(self.observation_expr(a, s2, z))).collect()).collect())
                .collect(),
            initial: self.initial.iter().map(fmt).collect(),
            reward: (0..ns).map(|s| (0..na).map(|a| fmt(self.reward_expr(s, a))).collect()).collect(),
        };
        serde_json::to_string_pretty(&file).expect("template serializes")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
