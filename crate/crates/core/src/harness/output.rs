//! Plain-text trace and summary files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::benchmarks::{RunTrace, TraceStep};
use crate::error::{Error, Result};

/// Summary statistics of simple regret at one query index.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub config: usize,
    pub step: usize,
    pub mean: f64,
    pub stderr: f64,
    pub runs: usize,
}

fn trace_header(dim: usize) -> String {
    let mut cols = vec!["seed".to_string(), "round".into(), "step".into()];
    cols.extend((1..=dim).map(|i| format!("x{i}")));
    cols.extend(
        [
            "observed",
            "utility",
            "best_so_far",
            "simple_regret",
            "cumulative_regret",
            "gamma_t",
            "beta",
            "bound_value",
        ]
        .map(String::from),
    );
    cols.join(",")
}

/// Writes a trace as CSV. `comments` become leading `#` lines.
pub fn write_trace_file(path: &Path, trace: &RunTrace, comments: &[String]) -> Result<()> {
    let dim = trace.steps.first().map_or(0, |s| s.query.len());
    let mut out = String::new();
    for c in comments {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    let _ = writeln!(out, "{}", trace_header(dim));
    for s in &trace.steps {
        let _ = write!(out, "{},{},{}", trace.seed, s.round, s.step);
        for v in &s.query {
            let _ = write!(out, ",{v:.16e}");
        }
        for v in [
            s.observed,
            s.utility,
            s.best_so_far,
            s.simple_regret,
            s.cumulative_regret,
            s.gamma,
            s.beta,
            s.bound,
        ] {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a file produced by [`write_trace_file`].
pub fn read_trace_file(path: &Path) -> Result<RunTrace> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, message: String| Error::Config { line, message };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or_else(|| Error::input(format!("{}: empty trace", path.display())))?;
    let ncols = header.split(',').count();
    if ncols < 11 {
        return Err(bad(hline + 1, "trace header too short".into()));
    }
    let dim = ncols - 11;
    let mut trace = RunTrace::default();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != ncols {
            return Err(bad(i + 1, format!("expected {ncols} fields, found {}", f.len())));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|e| bad(i + 1, format!("{s:?}: {e}")));
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(i + 1, format!("{s:?}: {e}")));
        trace.seed = int(f[0])?;
        let v = f[3..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
        trace.steps.push(TraceStep {
            round: int(f[1])? as usize,
            step: int(f[2])? as usize,
            query: v[..dim].to_vec(),
            observed: v[dim],
            utility: v[dim + 1],
            best_so_far: v[dim + 2],
            simple_regret: v[dim + 3],
            cumulative_regret: v[dim + 4],
            gamma: v[dim + 5],
            beta: v[dim + 6],
            bound: v[dim + 7],
        });
    }
    Ok(trace)
}

/// Writes suite statistics as CSV with one row per (config, step).
pub fn write_suite_table(path: &Path, rows: &[SuiteRow], labels: &[String]) -> Result<()> {
    let mut out = String::from("config,label,step,runs,mean_simple_regret,stderr\n");
    for r in rows {
        let label = labels.get(r.config).map_or("", String::as_str);
        let _ = writeln!(
            out,
            "{},{},{},{},{:.16e},{:.16e}",
            r.config, label, r.step, r.runs, r.mean, r.stderr
        );
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
