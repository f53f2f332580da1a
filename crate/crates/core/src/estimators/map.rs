use std::cell::RefCell;
use std::collections::HashMap;

use cobyla::{minimize, RhoBeg, StopTols};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::log_posterior;
use crate::model::{ParamVector, ParametricTemplate, Prior};
use crate::pomdp::{DemoTrace, PolicyConfig};
use crate::solver::SolverConfig;

/// Objective value handed to the optimizer in place of `-∞`.
const INFEASIBLE: f64 = 1e30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    /// Start point; the prior mean when absent.
    pub start: Option<ParamVector>,
    pub max_evaluations: usize,
    /// Final trust-region radius, relative to each parameter's box width.
    pub step_tolerance: f64,
    /// Probability parameters are searched in `[ε, 1 - ε]`.
    pub probability_margin: f64,
    /// Normal parameters are searched in `μ ± width·σ`.
    pub normal_width: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig { start: None, max_evaluations: 200, step_tolerance: 1e-3, probability_margin: 1e-4, normal_width: 4.0 }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_evaluations == 0 {
            return Err(Error::InvalidConfig("max_evaluations must be at least 1".into()));
        }
        if !(self.step_tolerance > 0.0 && self.step_tolerance < 1.0) {
            return Err(Error::InvalidConfig(format!("step tolerance {} outside (0, 1)", self.step_tolerance)));
        }
        if !(self.probability_margin >= 0.0 && self.probability_margin < 0.5) {
            return Err(Error::InvalidConfig(format!("probability margin {} outside [0, 0.5)", self.probability_margin)));
        }
        if !(self.normal_width > 0.0) {
            return Err(Error::InvalidConfig("normal_width must be positive".into()));
        }
        Ok(())
    }

    fn bounds(&self, template: &ParametricTemplate) -> Vec<(f64, f64)> {
        template
            .params()
            .iter()
            .map(|p| match p.prior {
                Prior::Beta { .. } => (self.probability_margin, 1.0 - self.probability_margin),
                Prior::Normal { mean, sd } => (mean - self.normal_width * sd, mean + self.normal_width * sd),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub theta: ParamVector,
    pub log_posterior: f64,
    pub start_log_posterior: f64,
    pub evaluations: usize,
}

/// Local derivative-free maximization of the log posterior (COBYLA) inside a
/// box around the prior support. Every objective evaluation solves `P_θ` for
/// the expert policy. Returns the best point evaluated.
pub fn map_estimate(
    template: &ParametricTemplate,
    trace: &DemoTrace,
    cfg: PolicyConfig,
    map: &MapConfig,
    solver: &SolverConfig,
) -> Result<MapResult> {
    map.validate()?;
    solver.validate()?;
    let bounds = map.bounds(template);
    let start = map.start.clone().unwrap_or_else(|| template.prior_mean());
    if start.len() != template.n_params() {
        return Err(Error::NoFeasibleStart(format!("start has {} components", start.len())));
    }
    if let Err(e) = template.clamp(&start) {
        return Err(Error::NoFeasibleStart(e.to_string()));
    }
    let start: ParamVector = start.iter().zip(&bounds).map(|(x, (lo, hi))| x.clamp(*lo, *hi)).collect();

    let to_theta = |u: &[f64]| -> ParamVector {
        u.iter().zip(&bounds).map(|(x, (lo, hi))| lo + x.clamp(0.0, 1.0) * (hi - lo)).collect()
    };
    let to_unit: Vec<f64> = start.iter().zip(&bounds).map(|(x, (lo, hi))| (x - lo) / (hi - lo)).collect();

    struct Search {
        best: Option<(f64, ParamVector)>,
        memo: HashMap<Vec<u64>, f64>,
        error: Option<Error>,
    }
    let state = RefCell::new(Search { best: None, memo: HashMap::new(), error: None });
    let evaluate = |theta: ParamVector| -> f64 {
        let key: Vec<u64> = theta.iter().map(|x| x.to_bits()).collect();
        if let Some(v) = state.borrow().memo.get(&key) {
            return *v;
        }
        let value = match log_posterior(template, &theta, trace, cfg, solver) {
            Ok(v) => v,
            Err(e) => {
                state.borrow_mut().error.get_or_insert(e);
                f64::NEG_INFINITY
            }
        };
        let mut s = state.borrow_mut();
        s.memo.insert(key, value);
        if s.best.as_ref().is_none_or(|(b, _)| value > *b) {
            s.best = Some((value, theta));
        }
        value
    };

    let start_value = evaluate(start.clone());
    if let Some(e) = state.borrow_mut().error.take() {
        return Err(e);
    }
    if start_value == f64::NEG_INFINITY {
        return Err(Error::NoFeasibleStart("log posterior is -inf at the start point".into()));
    }

    let objective = |u: &[f64], _: &mut ()| -> f64 {
        let v = evaluate(to_theta(u));
        if v.is_finite() {
            -v
        } else {
            INFEASIBLE
        }
    };
    let unit_box = vec![(0.0, 1.0); bounds.len()];
    let stop = StopTols { xtol_abs: vec![map.step_tolerance; bounds.len()], ..StopTols::default() };
    let no_constraints: &[fn(&[f64], &mut ()) -> f64] = &[];
    // Failure statuses still leave the best evaluated point in `state`.
    let _ = minimize(objective, &to_unit, &unit_box, no_constraints, (), map.max_evaluations, RhoBeg::All(0.1), Some(stop));

    let search = state.into_inner();
    if let Some(e) = search.error {
        return Err(e);
    }
    let (log_posterior, theta) = search.best.expect("start point was evaluated");
    Ok(MapResult { theta, log_posterior, start_log_posterior: start_value, evaluations: search.memo.len() })
}
