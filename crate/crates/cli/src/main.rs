use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use apl::estimators::{iohmm_em, iohmm_gibbs, map_estimate, mcmc_posterior, McmcConfig, SampleSet};
use apl::harness::{self, load_trace, report, run_experiment_with, save_trace, write_trace, ExperimentConfig, Method, ResultsBundle};
use apl::planning::plan_posterior;
use apl::{generate_demo, simulate, solve, BeliefAgent, Error, ParametricTemplate, PolicyConfig, SolverConfig, TIGER_TRUE_THETA};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "apl", version, about = "Learn POMDP parameters from expert demonstrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a demonstration from the soft-max expert of the true model.
    GenDemo {
        #[command(flatten)]
        model: ModelArgs,
        /// Demonstration length.
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trace file to write; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate parameters from a demonstration file.
    Estimate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_parser = parse_method)]
        method: Method,
        /// Demonstration trace file.
        #[arg(long)]
        demo: PathBuf,
        #[command(flatten)]
        mcmc: McmcArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON result file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a model (or the extended model of an estimate's samples) and
    /// report its values at the initial belief.
    Plan {
        #[command(flatten)]
        model: ModelArgs,
        /// Estimate file from `estimate`; plans over its samples when it has
        /// any, otherwise over its point estimate.
        #[arg(long)]
        estimate: Option<PathBuf>,
        /// Value function JSON to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a greedy policy in the true model.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Policy source, as for `plan`; the true model when absent.
        #[arg(long)]
        estimate: Option<PathBuf>,
        /// Run the soft-max expert instead of a greedy policy.
        #[arg(long)]
        expert: bool,
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trace file for the simulated history.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every estimator on a batch of demonstrations.
    Experiment {
        /// Experiment configuration JSON; flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the full-size protocol as the base configuration.
        #[arg(long)]
        full_scale: bool,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        theta: Option<Vec<f64>>,
        #[arg(long)]
        beta: Option<f64>,
        /// Demonstration length.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        demos: Option<usize>,
        /// Comma-separated estimator list.
        #[arg(long, value_delimiter = ',', value_parser = parse_method)]
        methods: Option<Vec<Method>>,
        #[arg(long)]
        eval_steps: Option<usize>,
        #[arg(long)]
        mcmc_sweeps: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Results bundle JSON to write.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Print the table for a results bundle and write histogram data.
    Report {
        /// Results bundle JSON.
        bundle: PathBuf,
        /// Histogram CSV to write; printed after the table when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Template file; the built-in Tiger template when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Parameter vector of the true model, comma-separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    theta: Option<Vec<f64>>,
    /// Expert inverse temperature.
    #[arg(long, default_value_t = 0.3)]
    beta: f64,
}

#[derive(Args)]
struct McmcArgs {
    #[arg(long, default_value_t = 1000)]
    mcmc_sweeps: usize,
    #[arg(long, default_value_t = 100)]
    burn_in: usize,
    #[arg(long, default_value_t = 10)]
    thin: usize,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_)
            | Error::InvalidTemplate(_)
            | Error::InvalidModel(_)
            | Error::OutOfSupport { .. }
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::NoFeasibleStart(_)
            | Error::EpisodicTemplate(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

struct Loaded {
    template: ParametricTemplate,
    theta: Vec<f64>,
    policy: PolicyConfig,
}

impl ModelArgs {
    fn load(&self) -> CliResult<Loaded> {
        let template = match &self.model {
            Some(p) => ParametricTemplate::load(p)?,
            None => apl::tiger_template(),
        };
        let theta = match (&self.theta, &self.model) {
            (Some(t), _) => t.clone(),
            (None, None) => TIGER_TRUE_THETA.to_vec(),
            (None, Some(_)) => template.prior_mean(),
        };
        template.clamp(&theta)?;
        Ok(Loaded { template, theta, policy: PolicyConfig::new(self.beta)? })
    }
}

fn solver() -> CliResult<SolverConfig> {
    Ok(SolverConfig::default().with_env_budget()?)
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Config(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn gen_demo(model: &ModelArgs, steps: usize, seed: u64, out: Option<&Path>) -> CliResult<()> {
    let m = model.load()?;
    let pomdp = m.template.instantiate(&m.theta)?;
    let vf = solve(&pomdp, &solver()?)?;
    let trace = generate_demo(&pomdp, &vf, m.policy, steps, seed)?;
    match out {
        Some(p) => Ok(save_trace(p, &trace, m.template.labels())?),
        None => emit(&write_trace(&trace, m.template.labels()), None),
    }
}

fn estimate(model: &ModelArgs, method: Method, demo: &Path, mcmc: &McmcArgs, seed: u64, out: Option<&Path>) -> CliResult<()> {
    let m = model.load()?;
    let trace = load_trace(demo, m.template.labels())?;
    let mcmc = McmcConfig { total_sweeps: mcmc.mcmc_sweeps, burn_in: mcmc.burn_in, thin: mcmc.thin, seed };
    let solver = solver()?;
    let start = Instant::now();
    let mut result = json!({
        "method": method,
        "seed": seed,
        "beta": m.policy.beta,
        "param_names": m.template.param_names(),
        "demo_length": trace.len(),
    });
    let summarize_samples = |set: &SampleSet| {
        json!({
            "estimate": set.mean(),
            "sample_sd": set.sd(),
            "samples": set.samples,
            "acceptance_rate": set.acceptance_rate,
            "mcmc": mcmc,
        })
    };
    let body = match method {
        Method::Map => {
            let r = map_estimate(&m.template, &trace, m.policy, &Default::default(), &solver)?;
            json!({"estimate": r.theta, "log_posterior": r.log_posterior, "evaluations": r.evaluations})
        }
        Method::Em => {
            let r = iohmm_em(&m.template, &trace, &Default::default())?;
            json!({"estimate": r.theta, "iterations": r.iterations, "converged": r.converged,
                   "log_posterior_trace": r.log_posterior_trace})
        }
        Method::Mcmc => summarize_samples(&mcmc_posterior(&m.template, &trace, m.policy, &mcmc, &solver)?),
        Method::Gibbs => summarize_samples(&iohmm_gibbs(&m.template, &trace, &mcmc)?),
    };
    let obj = result.as_object_mut().expect("object literal");
    obj.extend(body.as_object().expect("object literal").clone());
    obj.insert("wall_clock_secs".into(), json!(start.elapsed().as_secs_f64()));
    emit(&pretty(&result), out)
}

/// A policy source read from an `estimate` result.
enum Source {
    Point(Vec<f64>),
    Samples(SampleSet),
}

fn read_source(path: &Path) -> CliResult<Source> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(Error::from)?;
    fn field<T: serde::de::DeserializeOwned>(v: &Value, name: &str) -> Result<Option<T>, Error> {
        Ok(v.get(name).cloned().map(serde_json::from_value).transpose()?)
    }
    if let Some(samples) = field(&v, "samples")? {
        return Ok(Source::Samples(SampleSet::new(samples)?));
    }
    match field(&v, "estimate")? {
        Some(theta) => Ok(Source::Point(theta)),
        None => Err(Failure::Config(format!("{}: no `estimate` or `samples` field", path.display()))),
    }
}

fn plan(model: &ModelArgs, estimate: Option<&Path>, out: Option<&Path>) -> CliResult<()> {
    let m = model.load()?;
    let solver = solver()?;
    let source = estimate.map(read_source).transpose()?.unwrap_or(Source::Point(m.theta.clone()));
    let (vf, b0, states) = match &source {
        Source::Point(theta) => {
            let pomdp = m.template.instantiate(theta)?;
            (solve(&pomdp, &solver)?, pomdp.initial_belief(), pomdp.n_states())
        }
        Source::Samples(set) => {
            let plan = plan_posterior(set, &m.template, &solver)?;
            let b0 = plan.extended.model().initial_belief();
            (plan.value_function, b0, plan.extended.model().n_states())
        }
    };
    let q: Vec<f64> = (0..vf.n_actions()).map(|a| vf.q_value(b0.weights(), a)).collect();
    let best = apl::greedy_action(&vf, &b0);
    println!("states: {states}");
    println!("alpha vectors: {}", vf.len());
    println!("V(b0) = {:.6}", vf.value(&b0));
    for (a, v) in q.iter().enumerate() {
        let marker = if a == best { " *" } else { "" };
        println!("Q(b0, {}) = {v:.6}{marker}", m.template.labels().actions[a]);
    }
    if let Some(p) = out {
        emit(&pretty(&serde_json::to_value(&vf).map_err(Error::from)?), Some(p))?;
    }
    Ok(())
}

fn simulate_cmd(
    model: &ModelArgs,
    estimate: Option<&Path>,
    expert: bool,
    steps: usize,
    seed: u64,
    out: Option<&Path>,
) -> CliResult<()> {
    let m = model.load()?;
    let solver = solver()?;
    let env = m.template.instantiate(&m.theta)?;
    let (sim, resets) = if expert {
        let vf = solve(&env, &solver)?;
        (simulate(&env, &mut BeliefAgent::softmax(&env, &vf, m.policy), steps, seed)?, None)
    } else {
        match estimate.map(read_source).transpose()?.unwrap_or(Source::Point(m.theta.clone())) {
            Source::Point(theta) => {
                let pomdp = m.template.instantiate(&theta)?;
                let vf = solve(&pomdp, &solver)?;
                (simulate(&env, &mut BeliefAgent::greedy(&pomdp, &vf), steps, seed)?, None)
            }
            Source::Samples(set) => {
                let plan = plan_posterior(&set, &m.template, &solver)?;
                let mut agent = plan.agent();
                let sim = simulate(&env, &mut agent, steps, seed)?;
                (sim, Some(agent.resets()))
            }
        }
    };
    println!("steps: {steps}");
    println!("average reward: {:.6} +/- {:.6}", sim.average_reward, sim.standard_error);
    println!("total reward: {:.3}", sim.total_reward);
    if let Some(r) = resets {
        println!("belief resets: {r}");
    }
    if let Some(p) = out {
        save_trace(p, &sim.trace, m.template.labels())?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn experiment_config(
    config: Option<&Path>,
    full_scale: bool,
    model: Option<PathBuf>,
    theta: Option<Vec<f64>>,
    beta: Option<f64>,
    steps: Option<usize>,
    demos: Option<usize>,
    methods: Option<Vec<Method>>,
    eval_steps: Option<usize>,
    mcmc: (Option<usize>, Option<usize>, Option<usize>),
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> CliResult<ExperimentConfig> {
    let mut cfg = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None if full_scale => ExperimentConfig::full_scale(),
        None => ExperimentConfig::default(),
    };
    if model.is_some() {
        cfg.template = model;
    }
    if let Some(t) = theta {
        cfg.true_theta = t;
    } else if cfg.template.is_some() && config.is_none() {
        cfg.true_theta = cfg.load_template()?.prior_mean();
    }
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value {
                $field = v;
            }
        };
    }
    set!(cfg.beta, beta);
    set!(cfg.demo_length, steps);
    set!(cfg.demos, demos);
    set!(cfg.methods, methods);
    set!(cfg.evaluation_steps, eval_steps);
    set!(cfg.mcmc.total_sweeps, mcmc.0);
    set!(cfg.mcmc.burn_in, mcmc.1);
    set!(cfg.mcmc.thin, mcmc.2);
    set!(cfg.seed, seed);
    if out.is_some() {
        cfg.output = out;
    }
    let cfg = cfg.with_env_budget()?;
    cfg.validate(&cfg.load_template()?)?;
    Ok(cfg)
}

fn experiment(cfg: ExperimentConfig, quiet: bool) -> CliResult<()> {
    let total = cfg.demos * cfg.methods.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let bundle = run_experiment_with(&cfg, |r| {
        let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        if !quiet {
            let reward = r.average_reward.map_or("-".to_string(), |x| format!("{x:.3}"));
            let status = r.failure.as_deref().unwrap_or("ok");
            eprintln!(
                "[{n}/{total}] demo {} {:<5} reward {reward} ({:.1}s) {status}",
                r.demo, r.method, r.wall_clock_secs
            );
        }
    })?;
    if let Some(p) = &cfg.output {
        bundle.save(p)?;
    }
    print!("{}", report(&bundle).table);
    Ok(())
}

fn report_cmd(path: &Path, out: Option<&Path>) -> CliResult<()> {
    let bundle = ResultsBundle::load(path)?;
    if bundle.summaries.is_empty() {
        return Err(Failure::Config("bundle has no results".into()));
    }
    let r = harness::report(&bundle);
    print!("{}", r.table);
    match out {
        Some(p) => emit(&r.histogram_csv, Some(p)),
        None => {
            println!();
            emit(&r.histogram_csv, None)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenDemo { model, steps, seed, out } => gen_demo(&model, steps, seed, out.as_deref()),
        Command::Estimate { model, method, demo, mcmc, seed, out } => {
            estimate(&model, method, &demo, &mcmc, seed, out.as_deref())
        }
        Command::Plan { model, estimate, out } => plan(&model, estimate.as_deref(), out.as_deref()),
        Command::Simulate { model, estimate, expert, steps, seed, out } => {
            simulate_cmd(&model, estimate.as_deref(), expert, steps, seed, out.as_deref())
        }
        Command::Experiment {
            config,
            full_scale,
            model,
            theta,
            beta,
            steps,
            demos,
            methods,
            eval_steps,
            mcmc_sweeps,
            burn_in,
            thin,
            seed,
            out,
            quiet,
        } => {
            let cfg = experiment_config(
                config.as_deref(),
                full_scale,
                model,
                theta,
                beta,
                steps,
                demos,
                methods,
                eval_steps,
                (mcmc_sweeps, burn_in, thin),
                seed,
                out,
            )?;
            experiment(cfg, quiet)
        }
        Command::Report { bundle, out } => report_cmd(&bundle, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
