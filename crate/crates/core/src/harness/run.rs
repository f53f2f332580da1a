use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimators::{iohmm_em, iohmm_gibbs, map_estimate, mcmc_posterior, McmcConfig, SampleSet};
use crate::model::tiger::{OPEN_LEFT, OPEN_RIGHT};
use crate::model::{ParamRole, ParamVector, ParametricTemplate};
use crate::planning::plan_posterior;
use crate::pomdp::{generate_demo, simulate, BeliefAgent, DemoTrace, Pomdp, ValueFunction};
use crate::random::derive_seed;
use crate::solver::solve;

use super::config::{ExperimentConfig, Method};

const EXPERT_STREAM: u64 = 0;
const DEMO_STREAM: u64 = 1;
const ESTIMATOR_STREAM: u64 = 2;
const EVALUATION_STREAM: u64 = 3;

pub fn expert_seed(master: u64) -> u64 {
    derive_seed(master, &[EXPERT_STREAM])
}

pub fn demo_seed(master: u64, demo: usize) -> u64 {
    derive_seed(master, &[DEMO_STREAM, demo as u64])
}

pub fn estimator_seed(master: u64, demo: usize, method: Method) -> u64 {
    derive_seed(master, &[ESTIMATOR_STREAM, demo as u64, method.index()])
}

pub fn evaluation_seed(master: u64, demo: usize, method: Method) -> u64 {
    derive_seed(master, &[EVALUATION_STREAM, demo as u64, method.index()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertBaseline {
    pub average_reward: f64,
    pub standard_error: f64,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoRecord {
    pub index: usize,
    pub seed: u64,
    /// Number of door openings, i.e. completed episodes for episodic
    /// templates shaped like Tiger.
    pub episodes: usize,
    pub trace: DemoTrace,
}

/// Outcome of one (demonstration, estimator) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub demo: usize,
    pub method: Method,
    pub estimator_seed: u64,
    pub evaluation_seed: u64,
    /// Point estimate: the optimum for MAP/EM, the sample mean for samplers.
    pub estimate: Option<ParamVector>,
    /// `estimate - θ_true`.
    pub error: Option<ParamVector>,
    pub samples: Option<Vec<ParamVector>>,
    /// Per-parameter standard deviation of the retained samples.
    pub sample_sd: Option<ParamVector>,
    pub acceptance_rate: Option<f64>,
    pub log_posterior: Option<f64>,
    pub average_reward: Option<f64>,
    pub reward_standard_error: Option<f64>,
    /// Belief resets of the extended-model agent during evaluation.
    pub resets: Option<usize>,
    pub wall_clock_secs: f64,
    pub failure: Option<String>,
}

impl RunRecord {
    fn empty(demo: usize, method: Method, master: u64) -> Self {
        RunRecord {
            demo,
            method,
            estimator_seed: estimator_seed(master, demo, method),
            evaluation_seed: evaluation_seed(master, demo, method),
            estimate: None,
            error: None,
            samples: None,
            sample_sd: None,
            acceptance_rate: None,
            log_posterior: None,
            average_reward: None,
            reward_standard_error: None,
            resets: None,
            wall_clock_secs: 0.0,
            failure: None,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.failure.is_none() && self.average_reward.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lower: f64,
    pub width: f64,
    /// Values below `lower`.
    pub less: usize,
    pub counts: Vec<usize>,
    /// Values at or above the last bin's upper edge.
    pub more: usize,
}

impl Histogram {
    pub fn new(lower: f64, upper: f64, width: f64) -> Self {
        let bins = ((upper - lower) / width - 1e-9).ceil().max(1.0) as usize;
        Histogram { lower, width, less: 0, counts: vec![0; bins], more: 0 }
    }

    pub fn upper(&self) -> f64 {
        self.lower + self.width * self.counts.len() as f64
    }

    pub fn add(&mut self, x: f64) {
        if x < self.lower {
            self.less += 1;
            return;
        }
        let bin = ((x - self.lower) / self.width).floor() as usize;
        match self.counts.get_mut(bin) {
            Some(c) => *c += 1,
            None => self.more += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.less + self.more + self.counts.iter().sum::<usize>()
    }

    /// `[lo, hi)` edges of bin `i`.
    pub fn edges(&self, i: usize) -> (f64, f64) {
        let lo = self.lower + self.width * i as f64;
        (lo, lo + self.width)
    }
}

/// Aggregates over the successful runs of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub failures: usize,
    pub mean_error: ParamVector,
    pub rmse: ParamVector,
    /// Average within-chain standard deviation; samplers only.
    pub sd_samples: Option<ParamVector>,
    pub reward_mean: f64,
    pub reward_median: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsBundle {
    pub config: ExperimentConfig,
    pub param_names: Vec<String>,
    pub true_theta: ParamVector,
    pub prior_mean: ParamVector,
    pub prior_mean_error: ParamVector,
    /// Whether each parameter enters the IO-HMM likelihood; the others can
    /// only be learned from the expert's actions.
    pub in_iohmm: Vec<bool>,
    pub expert: ExpertBaseline,
    pub demos: Vec<DemoRecord>,
    pub runs: Vec<RunRecord>,
    pub summaries: Vec<MethodSummary>,
}

impl ResultsBundle {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn runs_for(&self, method: Method) -> impl Iterator<Item = &RunRecord> + '_ {
        self.runs.iter().filter(move |r| r.method == method)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Everything shared by the cells of one experiment.
pub struct Setup {
    pub config: ExperimentConfig,
    pub template: ParametricTemplate,
    pub true_model: Pomdp<f64>,
    pub expert: ValueFunction<f64>,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let template = config.load_template()?;
        config.validate(&template)?;
        let true_model = template.instantiate(&config.true_theta)?;
        let expert = solve(&true_model, &config.solver)?;
        Ok(Setup { config: config.clone(), template, true_model, expert })
    }

    pub fn demo(&self, index: usize) -> Result<DemoRecord> {
        let seed = demo_seed(self.config.seed, index);
        let trace = generate_demo(&self.true_model, &self.expert, self.config.policy(), self.config.demo_length, seed)?;
        let episodes = count_openings(&self.template, &trace);
        Ok(DemoRecord { index, seed, episodes, trace })
    }

    pub fn expert_baseline(&self) -> Result<ExpertBaseline> {
        let seed = expert_seed(self.config.seed);
        let mut agent = BeliefAgent::softmax(&self.true_model, &self.expert, self.config.policy());
        let sim = simulate(&self.true_model, &mut agent, self.config.expert_steps, seed)?;
        Ok(ExpertBaseline {
            average_reward: sim.average_reward,
            standard_error: sim.standard_error,
            steps: self.config.expert_steps,
            seed,
        })
    }

    /// Runs one estimator on one demonstration and evaluates the derived
    /// policy. Failures are recorded, never propagated.
    pub fn run_cell(&self, demo: &DemoRecord, method: Method) -> RunRecord {
        let mut record = RunRecord::empty(demo.index, method, self.config.seed);
        let start = Instant::now();
        if let Err(e) = self.fill_cell(&demo.trace, &mut record) {
            record.failure = Some(e.to_string());
        }
        record.wall_clock_secs = start.elapsed().as_secs_f64();
        record
    }

    fn fill_cell(&self, trace: &DemoTrace, record: &mut RunRecord) -> Result<()> {
        let cfg = &self.config;
        let mcmc = McmcConfig { seed: record.estimator_seed, ..cfg.mcmc };
        let samples = match record.method {
            Method::Map => {
                let res = map_estimate(&self.template, trace, cfg.policy(), &cfg.map, &cfg.solver)?;
                record.log_posterior = Some(res.log_posterior);
                self.set_estimate(record, res.theta);
                None
            }
            Method::Em => {
                let res = iohmm_em(&self.template, trace, &cfg.em)?;
                record.log_posterior = res.log_posterior_trace.last().copied();
                self.set_estimate(record, res.theta);
                None
            }
            Method::Mcmc => Some(mcmc_posterior(&self.template, trace, cfg.policy(), &mcmc, &cfg.solver)?),
            Method::Gibbs => Some(iohmm_gibbs(&self.template, trace, &mcmc)?),
        };
        match samples {
            Some(set) => self.evaluate_samples(record, set),
            None => {
                let theta = record.estimate.as_ref().expect("point estimate recorded");
                let model = self.template.instantiate(theta)?;
                let vf = solve(&model, &cfg.solver)?;
                let mut agent = BeliefAgent::greedy(&model, &vf);
                let sim = simulate(&self.true_model, &mut agent, cfg.evaluation_steps, record.evaluation_seed)?;
                record.average_reward = Some(sim.average_reward);
                record.reward_standard_error = Some(sim.standard_error);
                Ok(())
            }
        }
    }

    fn evaluate_samples(&self, record: &mut RunRecord, set: SampleSet) -> Result<()> {
        record.acceptance_rate = Some(set.acceptance_rate);
        record.sample_sd = Some(set.sd());
        self.set_estimate(record, set.mean());
        record.samples = Some(set.samples.clone());
        let plan = plan_posterior(&set, &self.template, &self.config.extended_solver)?;
        let mut agent = plan.agent();
        let sim = simulate(&self.true_model, &mut agent, self.config.evaluation_steps, record.evaluation_seed)?;
        record.average_reward = Some(sim.average_reward);
        record.reward_standard_error = Some(sim.standard_error);
        record.resets = Some(agent.resets());
        Ok(())
    }

    fn set_estimate(&self, record: &mut RunRecord, theta: ParamVector) {
        record.error = Some(theta.iter().zip(&self.config.true_theta).map(|(e, t)| e - t).collect());
        record.estimate = Some(theta);
    }
}

/// Door openings in a Tiger-shaped demonstration; zero for templates whose
/// action labels differ.
fn count_openings(template: &ParametricTemplate, trace: &DemoTrace) -> usize {
    let labels = &template.labels().actions;
    let tiger_like = labels.len() > OPEN_RIGHT && labels[OPEN_LEFT] == "open-left" && labels[OPEN_RIGHT] == "open-right";
    if tiger_like {
        trace.count_actions(|a| a == OPEN_LEFT || a == OPEN_RIGHT)
    } else {
        0
    }
}

pub fn summarize(config: &ExperimentConfig, method: Method, runs: &[&RunRecord]) -> MethodSummary {
    let n_params = config.true_theta.len();
    let ok: Vec<&RunRecord> = runs.iter().copied().filter(|r| r.succeeded()).collect();
    let mut mean_error = vec![0.0; n_params];
    let mut sq = vec![0.0; n_params];
    let mut sd = vec![0.0; n_params];
    let mut sd_runs = 0usize;
    for r in &ok {
        let err = r.error.as_ref().expect("successful run has an error vector");
        for k in 0..n_params {
            mean_error[k] += err[k];
            sq[k] += err[k] * err[k];
        }
        if let Some(s) = &r.sample_sd {
            sd_runs += 1;
            for k in 0..n_params {
                sd[k] += s[k];
            }
        }
    }
    let n = ok.len().max(1) as f64;
    let mean_error: ParamVector = mean_error.iter().map(|x| x / n).collect();
    let rmse: ParamVector = sq.iter().map(|x| (x / n).sqrt()).collect();
    let sd_samples = (method.is_sampler() && sd_runs > 0).then(|| sd.iter().map(|x| x / sd_runs as f64).collect());

    let mut rewards: Vec<f64> = ok.iter().filter_map(|r| r.average_reward).collect();
    rewards.sort_by(f64::total_cmp);
    let mut histogram = Histogram::new(config.histogram_lower, config.histogram_upper, config.histogram_width);
    for &x in &rewards {
        histogram.add(x);
    }
    MethodSummary {
        method,
        runs: ok.len(),
        failures: runs.len() - ok.len(),
        mean_error,
        rmse,
        sd_samples,
        reward_mean: rewards.iter().sum::<f64>() / rewards.len().max(1) as f64,
        reward_median: median(&rewards),
        histogram,
    }
}

/// Median of sorted values; NaN when empty.
pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => sorted[n / 2],
        _ => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}

/// Runs every configured estimator on every demonstration.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultsBundle> {
    run_experiment_with(config, |_| {})
}

/// [`run_experiment`] with a callback invoked as each cell finishes.
pub fn run_experiment_with(config: &ExperimentConfig, progress: impl Fn(&RunRecord) + Sync) -> Result<ResultsBundle> {
    let setup = Setup::new(config)?;
    let expert = setup.expert_baseline()?;
    let demos: Vec<DemoRecord> = (0..config.demos).map(|d| setup.demo(d)).collect::<Result<_>>()?;
    let cells: Vec<(usize, Method)> =
        (0..config.demos).flat_map(|d| config.methods.iter().map(move |&m| (d, m))).collect();
    let runs: Vec<RunRecord> = cells
        .into_par_iter()
        .map(|(d, m)| {
            let record = setup.run_cell(&demos[d], m);
            progress(&record);
            record
        })
        .collect();

    let summaries = config
        .methods
        .iter()
        .map(|&m| {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.method == m).collect();
            summarize(config, m, &mine)
        })
        .collect();
    let prior_mean = setup.template.prior_mean();
    let prior_mean_error = prior_mean.iter().zip(&config.true_theta).map(|(p, t)| p - t).collect();
    Ok(ResultsBundle {
        config: config.clone(),
        param_names: setup.template.param_names(),
        true_theta: config.true_theta.clone(),
        prior_mean,
        prior_mean_error,
        in_iohmm: (0..setup.template.n_params())
            .map(|k| matches!(setup.template.role(k), ParamRole::Bernoulli(_)))
            .collect(),
        expert,
        demos,
        runs,
        summaries,
    })
}

/// Reproduces one cell of [`run_experiment`] from the configuration alone.
pub fn run_single(config: &ExperimentConfig, demo: usize, method: Method) -> Result<RunRecord> {
    let setup = Setup::new(config)?;
    let record = setup.demo(demo)?;
    Ok(setup.run_cell(&record, method))
}
