//! Text format for demonstrations.
//! The header line `#apl-trace v1` followed by one line per step,
//! `<t>\t<action>\t<observation>`, with a 1-based step index and names
//! resolved against the model's labels.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pomdp::{DemoTrace, Labels, Step};

pub const TRACE_HEADER: &str = "#apl-trace v1";

pub fn write_trace(trace: &DemoTrace, labels: &Labels) -> String {
    let mut out = String::with_capacity(16 + trace.len() * 24);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for (i, step) in trace.steps.iter().enumerate() {
        writeln!(out, "{}\t{}\t{}", i + 1, labels.actions[step.action], labels.observations[step.observation])
            .expect("writing to a String");
    }
    out
}

pub fn read_trace(text: &str, labels: &Labels) -> Result<DemoTrace> {
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));
    match lines.next() {
        Some((_, TRACE_HEADER)) => {}
        Some((n, other)) => return Err(parse_err(n, format!("expected header `{TRACE_HEADER}`, found `{other}`"))),
        None => return Err(parse_err(1, "empty file".into())),
    }
    let mut steps = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [t, action, observation] = fields[..] else {
            return Err(parse_err(n, format!("expected 3 tab-separated fields, found {}", fields.len())));
        };
        let expected = steps.len() + 1;
        match t.trim().parse::<usize>() {
            Ok(v) if v == expected => {}
            _ => return Err(parse_err(n, format!("step index `{t}` should be {expected}"))),
        }
        let action = labels.action_index(action).ok_or_else(|| parse_err(n, format!("unknown action `{action}`")))?;
        let observation = labels
            .observation_index(observation)
            .ok_or_else(|| parse_err(n, format!("unknown observation `{observation}`")))?;
        steps.push(Step { action, observation });
    }
    Ok(DemoTrace::new(steps))
}

pub fn save_trace(path: &Path, trace: &DemoTrace, labels: &Labels) -> Result<()> {
    std::fs::write(path, write_trace(trace, labels))?;
    Ok(())
}

pub fn load_trace(path: &Path, labels: &Labels) -> Result<DemoTrace> {
    read_trace(&std::fs::read_to_string(path)?, labels)
}
