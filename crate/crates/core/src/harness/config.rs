use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EmConfig, MapConfig, McmcConfig};
use crate::model::{tiger_template, ParamVector, ParametricTemplate, TIGER_TRUE_THETA};
use crate::pomdp::PolicyConfig;
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Map,
    Mcmc,
    Em,
    Gibbs,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Map, Method::Mcmc, Method::Em, Method::Gibbs];

    pub fn name(self) -> &'static str {
        match self {
            Method::Map => "map",
            Method::Mcmc => "mcmc",
            Method::Em => "em",
            Method::Gibbs => "gibbs",
        }
    }

    /// Column heading used in reports.
    pub fn title(self) -> &'static str {
        match self {
            Method::Map => "MAP",
            Method::Mcmc => "Posterior sampler",
            Method::Em => "IO-HMM EM (MAP-EM)",
            Method::Gibbs => "IO-HMM Gibbs",
        }
    }

    pub fn is_sampler(self) -> bool {
        matches!(self, Method::Mcmc | Method::Gibbs)
    }

    /// Whether the method uses the expert's actions, and with them can
    /// estimate reward parameters.
    pub fn uses_actions(self) -> bool {
        matches!(self, Method::Map | Method::Mcmc)
    }

    pub fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}` (expected map, mcmc, em or gibbs)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Template file; the built-in Tiger template when absent.
    pub template: Option<PathBuf>,
    pub true_theta: ParamVector,
    pub beta: f64,
    pub demo_length: usize,
    pub demos: usize,
    pub methods: Vec<Method>,
    pub mcmc: McmcConfig,
    pub map: MapConfig,
    pub em: EmConfig,
    pub solver: SolverConfig,
    /// Solver settings for the extended models built from sample sets.
    pub extended_solver: SolverConfig,
    pub evaluation_steps: usize,
    /// Steps used to estimate the expert's own average reward.
    pub expert_steps: usize,
    pub histogram_lower: f64,
    pub histogram_upper: f64,
    pub histogram_width: f64,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            template: None,
            true_theta: TIGER_TRUE_THETA.to_vec(),
            beta: 0.3,
            demo_length: 100,
            demos: 10,
            methods: Method::ALL.to_vec(),
            mcmc: McmcConfig { total_sweeps: 500, burn_in: 100, thin: 10, seed: 0 },
            map: MapConfig::default(),
            em: EmConfig::default(),
            solver: SolverConfig::default(),
            extended_solver: SolverConfig::default(),
            evaluation_steps: 10_000,
            expert_steps: 100_000,
            histogram_lower: -1.0,
            histogram_upper: 2.0,
            histogram_width: 0.25,
            seed: 2013,
            output: None,
        }
    }
}

impl ExperimentConfig {
    /// The full-size protocol: 100 demonstrations, 1000 sweeps, 100k
    /// evaluation steps.
    pub fn full_scale() -> Self {
        ExperimentConfig {
            demos: 100,
            mcmc: McmcConfig { total_sweeps: 1000, burn_in: 100, thin: 10, seed: 0 },
            evaluation_steps: 100_000,
            ..Default::default()
        }
    }

    pub fn load_template(&self) -> Result<ParametricTemplate> {
        match &self.template {
            Some(path) => ParametricTemplate::load(path),
            None => Ok(tiger_template()),
        }
    }

    pub fn policy(&self) -> PolicyConfig {
        PolicyConfig { beta: self.beta }
    }

    /// Checks every sub-configuration against `template`.
    pub fn validate(&self, template: &ParametricTemplate) -> Result<()> {
        PolicyConfig::new(self.beta)?;
        self.mcmc.validate()?;
        self.map.validate()?;
        self.solver.validate()?;
        self.extended_solver.validate()?;
        template.clamp(&self.true_theta)?;
        if self.demos == 0 || self.demo_length == 0 {
            return Err(Error::InvalidConfig("need at least one demonstration of at least one step".into()));
        }
        if self.evaluation_steps == 0 || self.expert_steps == 0 {
            return Err(Error::InvalidConfig("evaluation needs at least one step".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no estimators selected".into()));
        }
        if !(self.histogram_width > 0.0 && self.histogram_lower < self.histogram_upper) {
            return Err(Error::InvalidConfig("histogram needs lower < upper and a positive width".into()));
        }
        Ok(())
    }

    /// Applies the environment's solver time budget override to every solver.
    pub fn with_env_budget(mut self) -> Result<Self> {
        self.solver = self.solver.with_env_budget()?;
        self.extended_solver = self.extended_solver.with_env_budget()?;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
