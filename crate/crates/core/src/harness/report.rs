use std::fmt::Write as _;

use super::config::Method;
use super::run::{Histogram, ResultsBundle};

/// Rendered report: a text table of estimation statistics and a CSV of
/// reward histogram counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub table: String,
    pub histogram_csv: String,
}

const NA: &str = "N/A";

fn cell(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.3}"),
        Some(_) => "nan".into(),
        None => String::new(),
    }
}

fn estimable(bundle: &ResultsBundle, method: Method, k: usize) -> bool {
    method.uses_actions() || bundle.in_iohmm.get(k).copied().unwrap_or(true)
}

pub fn report(bundle: &ResultsBundle) -> Report {
    Report { table: table(bundle), histogram_csv: histogram_csv(bundle) }
}

fn table(bundle: &ResultsBundle) -> String {
    let methods: Vec<Method> = bundle.summaries.iter().map(|s| s.method).collect();
    let mut header = vec!["Parameter".to_string(), "Statistic".into(), "Prior mean".into()];
    header.extend(methods.iter().map(|m| m.title().to_string()));

    let mut rows: Vec<Vec<String>> = Vec::new();
    for (k, name) in bundle.param_names.iter().enumerate() {
        let mut mean = vec![name.clone(), "mean error".into(), cell(bundle.prior_mean_error.get(k).copied())];
        let mut rmse = vec![String::new(), "RMSE".into(), String::new()];
        let mut sd = vec![String::new(), "s.d. samples".into(), String::new()];
        for s in &bundle.summaries {
            if !estimable(bundle, s.method, k) {
                mean.push(NA.into());
                rmse.push(NA.into());
                sd.push(if s.method.is_sampler() { NA.into() } else { String::new() });
                continue;
            }
            mean.push(cell(Some(s.mean_error[k])));
            rmse.push(cell(Some(s.rmse[k])));
            sd.push(cell(s.sd_samples.as_ref().map(|v| v[k])));
        }
        rows.push(mean);
        rows.push(rmse);
        if bundle.summaries.iter().any(|s| s.sd_samples.is_some()) {
            rows.push(sd);
        }
    }
    let mut rewards = vec!["reward".to_string(), "median".into(), String::new()];
    let mut reward_means = vec![String::new(), "mean".into(), String::new()];
    let mut runs = vec!["runs".to_string(), "ok/failed".into(), String::new()];
    for s in &bundle.summaries {
        rewards.push(cell(Some(s.reward_median)));
        reward_means.push(cell(Some(s.reward_mean)));
        runs.push(format!("{}/{}", s.runs, s.failures));
    }
    rows.extend([rewards, reward_means, runs]);

    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().chain([&header]).map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, r: &[String]| {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
    };
    line(&mut out, &header);
    writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1))).unwrap();
    for r in &rows {
        line(&mut out, r);
    }
    writeln!(
        out,
        "\nexpert baseline: {:.3} +/- {:.3} per step over {} steps",
        bundle.expert.average_reward, bundle.expert.standard_error, bundle.expert.steps
    )
    .unwrap();
    if methods.contains(&Method::Em) {
        writeln!(out, "EM maximizes the posterior (pseudo-counts from the Beta priors), not the likelihood.").unwrap();
    }
    if bundle.in_iohmm.iter().any(|x| !x) && methods.iter().any(|m| !m.uses_actions()) {
        writeln!(out, "{NA}: the parameter does not enter the IO-HMM likelihood and stays at its prior.").unwrap();
    }
    out
}

fn histogram_csv(bundle: &ResultsBundle) -> String {
    let mut out = String::from("bin,lower,upper");
    for s in &bundle.summaries {
        write!(out, ",{}", s.method).unwrap();
    }
    out.push('\n');
    let Some(first) = bundle.summaries.first() else {
        return out;
    };
    let shape: &Histogram = &first.histogram;
    let row = |out: &mut String, label: &str, lo: f64, hi: f64, pick: &dyn Fn(&Histogram) -> usize| {
        write!(out, "{label},{lo},{hi}").unwrap();
        for s in &bundle.summaries {
            write!(out, ",{}", pick(&s.histogram)).unwrap();
        }
        out.push('\n');
    };
    row(&mut out, "Less", f64::NEG_INFINITY, shape.lower, &|h| h.less);
    for i in 0..shape.counts.len() {
        let (lo, hi) = shape.edges(i);
        row(&mut out, &format!("[{lo:.2},{hi:.2})"), lo, hi, &|h| h.counts[i]);
    }
    row(&mut out, "More", shape.upper(), f64::INFINITY, &|h| h.more);
    out
}
