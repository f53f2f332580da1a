use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{obs_loglik, smoothed_marginals, Smoothing};
use crate::model::{ParamRole, ParamVector, ParametricTemplate, Prior, RowRef, TiedRow};
use crate::pomdp::DemoTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Stops once the observation log posterior improves by less than this.
    pub tolerance: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { max_iterations: 200, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmResult {
    pub theta: ParamVector,
    /// `log p(θ) + log p(z | θ, a)` before the first and after every update.
    pub log_posterior_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Expected success/failure counts of the tied rows under the smoothed
/// hidden-state posterior.
pub fn expected_counts(rows: &[TiedRow], smoothing: &Smoothing<f64>, trace: &DemoTrace) -> (f64, f64) {
    let ns = smoothing.marginals[0].len();
    let (mut success, mut failure) = (0.0, 0.0);
    for row in rows {
        match row.row {
            RowRef::Initial => {
                success += smoothing.marginals[0][row.success];
                failure += smoothing.marginals[0][row.failure];
            }
            RowRef::Transition { s, a } => {
                for (step, xi) in trace.steps.iter().zip(&smoothing.pairwise) {
                    if step.action == a {
                        success += xi[s * ns + row.success];
                        failure += xi[s * ns + row.failure];
                    }
                }
            }
            RowRef::Observation { a, s2 } => {
                for (i, step) in trace.steps.iter().enumerate() {
                    if step.action != a {
                        continue;
                    }
                    let weight = smoothing.marginals[i + 1][s2];
                    if step.observation == row.success {
                        success += weight;
                    } else if step.observation == row.failure {
                        failure += weight;
                    }
                }
            }
        }
    }
    (success, failure)
}

/// Posterior mode of a Beta prior updated with (possibly fractional) counts.
fn beta_mode(prior: Prior, success: f64, failure: f64) -> f64 {
    let Prior::Beta { alpha, beta } = prior else { unreachable!("tied parameters carry Beta priors") };
    let num = success + alpha - 1.0;
    let den = success + failure + alpha + beta - 2.0;
    if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        prior.mean()
    }
}

fn observation_log_posterior(template: &ParametricTemplate, theta: &[f64], trace: &DemoTrace) -> Result<f64> {
    let model = template.instantiate(theta)?;
    Ok(template.log_prior(theta) + obs_loglik(&model, trace))
}

/// MAP expectation-maximization for the IO-HMM view of the template.
///
/// Bernoulli-tied parameters are re-estimated from expected counts plus the
/// Beta pseudo-counts `α - 1` and `β - 1`; parameters without an
/// observation-data term stay at their prior mean. Starts at the prior mean.
pub fn iohmm_em(template: &ParametricTemplate, trace: &DemoTrace, cfg: &EmConfig) -> Result<EmResult> {
    if trace.is_empty() {
        return Err(Error::InvalidConfig("the demonstration is empty".into()));
    }
    let mut roles = Vec::with_capacity(template.n_params());
    for k in 0..template.n_params() {
        match template.role(k) {
            ParamRole::Unsupported(reason) => {
                return Err(Error::UnsupportedParameterRole { name: template.params()[k].name.clone(), reason })
            }
            ParamRole::Bernoulli(_) if !template.params()[k].prior.is_probability() => {
                return Err(Error::UnsupportedParameterRole {
                    name: template.params()[k].name.clone(),
                    reason: "probability rows need a Beta prior".into(),
                })
            }
            role => roles.push(role),
        }
    }

    let mut theta = template.prior_mean();
    let mut current = observation_log_posterior(template, &theta, trace)?;
    if current == f64::NEG_INFINITY {
        return Err(Error::ImpossibleTrace);
    }
    let mut log_posterior_trace = vec![current];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let smoothing = smoothed_marginals(&template.instantiate(&theta)?, trace)?;
        let next: ParamVector = roles
            .iter()
            .enumerate()
            .map(|(k, role)| match role {
                ParamRole::Bernoulli(rows) => {
                    let (success, failure) = expected_counts(rows, &smoothing, trace);
                    beta_mode(template.params()[k].prior, success, failure)
                }
                _ => theta[k],
            })
            .collect();
        let value = observation_log_posterior(template, &next, trace)?;
        theta = next;
        log_posterior_trace.push(value);
        let gain = value - current;
        current = value;
        if gain < cfg.tolerance {
            converged = true;
            break;
        }
    }
    Ok(EmResult { theta, log_posterior_trace, iterations, converged })
}
