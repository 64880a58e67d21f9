//! The `randsum` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 a checked finding
//! does not hold, 1 I/O failure.

use crate::conditions::condition_report;
use crate::config::{ConfigError, Expectation, Format, ScenarioConfig, Task, TrendKind};
use crate::counterexample::counterexample;
use crate::mc::{cell_distances, run_study, StudyResult, Trend};
use crate::output::{csv_bytes, json_bytes, write_atomic, ConditionRow, StudyRow};
use crate::selfcheck::selfcheck;
use clap::{Parser, Subcommand};
use serde_json::json;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "randsum", version, about = "Condition functionals and distances for random sums of triangular arrays")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides monte_carlo.seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory; overrides outputs.path.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Table format; overrides outputs.format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Fail if any cell fails or any expectation is not met.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Classical and randomized condition functionals over the grid.
    Conditions,
    /// Mixture, random-sum and Monte Carlo Kolmogorov distances over the n grid.
    Distances,
    /// Functionals, distances and trend diagnostics per n.
    Study,
    /// The Shiryaev counterexample findings.
    Counterexample,
    /// Fast deterministic invariant suite.
    Selfcheck,
}

impl Command {
    fn task(self) -> Task {
        match self {
            Command::Conditions => Task::Conditions,
            Command::Distances => Task::Distances,
            Command::Study => Task::Study,
            Command::Counterexample => Task::Counterexample,
            Command::Selfcheck => Task::Selfcheck,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("finding violated: {0}")]
    Finding(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Finding(_) => 4,
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("randsum: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("RANDSUM_THREADS") else {
        return Ok(());
    };
    let threads: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| ConfigError {
            path: "RANDSUM_THREADS".into(),
            message: format!("must be a positive integer, got {v:?}"),
        })?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.monte_carlo.seed = seed;
    }
    if let Some(f) = cli.format {
        cfg.outputs.format = f;
    }
    if let Some(out) = &cli.out {
        cfg.outputs.path = out.to_string_lossy().into_owned();
    }
    cfg.allows(cli.command.task())?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    let needs_config = matches!(cli.command, Command::Conditions | Command::Distances | Command::Study);
    if needs_config && cli.config.is_none() {
        return Err(ConfigError {
            path: "--config".into(),
            message: format!("the `{}` command needs a scenario file", cli.command.task()),
        }
        .into());
    }
    let cfg = load_config(cli)?;
    if cli.dry_run {
        println!("{}", serde_json::to_string_pretty(&cfg.effective()).expect("serializable"));
        return Ok(());
    }
    let out = PathBuf::from(&cfg.outputs.path);
    match cli.command {
        Command::Conditions => cmd_conditions(&cfg, &out, cli.strict),
        Command::Distances => cmd_distances(&cfg, &out, cli.strict),
        Command::Study => cmd_study(&cfg, &out, cli.strict),
        Command::Counterexample => cmd_counterexample(&cfg, &out),
        Command::Selfcheck => cmd_selfcheck(&cfg, cli.out.as_deref()),
    }
}

fn write_config(cfg: &ScenarioConfig, out: &Path) -> Result<(), CliError> {
    write_atomic(&out.join("effective_config.json"), &json_bytes(&cfg.effective())?)?;
    Ok(())
}

fn cell_outcome(total: usize, failed: usize, strict: bool, what: &str) -> Result<(), CliError> {
    if total > 0 && failed == total {
        return Err(CliError::Numeric(format!("all {total} {what} failed")));
    }
    if strict && failed > 0 {
        return Err(CliError::Numeric(format!("{failed} of {total} {what} failed")));
    }
    Ok(())
}

pub fn cmd_conditions(cfg: &ScenarioConfig, out: &Path, strict: bool) -> Result<(), CliError> {
    let array = cfg.require_array()?;
    let label = cfg.label();
    let opts = cfg.numerics.eval_options();
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let (mut cells, mut failed) = (0usize, 0usize);
    for &n in &cfg.grids.n {
        let index = match cfg.index.as_ref().map(|s| s.resolve(n)).transpose() {
            Ok(ix) => ix,
            Err(e) => return Err(ConfigError { path: "index".into(), message: e.to_string() }.into()),
        };
        for &eps in &cfg.grids.epsilon {
            for &delta in &cfg.grids.delta {
                cells += 1;
                match condition_report(array, index.as_ref(), n, eps, delta, &cfg.functionals, opts) {
                    Ok(r) => {
                        rows.extend(r.rows().map(|v| ConditionRow {
                            label: label.clone(),
                            n,
                            epsilon: eps,
                            delta,
                            functional: v.functional.clone(),
                            value: v.value,
                            error_bound: v.error_bound,
                            status: "ok".into(),
                        }));
                        reports.push(json!({ "status": "ok", "report": r }));
                    }
                    Err(e) => {
                        failed += 1;
                        rows.push(ConditionRow {
                            label: label.clone(),
                            n,
                            epsilon: eps,
                            delta,
                            functional: String::new(),
                            value: f64::NAN,
                            error_bound: f64::NAN,
                            status: format!("error: {e}"),
                        });
                        reports.push(json!({ "status": format!("error: {e}"), "n": n, "epsilon": eps, "delta": delta }));
                    }
                }
            }
        }
    }
    match cfg.outputs.format {
        Format::Csv => {
            write_atomic(&out.join("conditions.csv"), &csv_bytes(&rows)?)?;
            write_config(cfg, out)?;
        }
        Format::Json => {
            let doc = json!({ "config": cfg.effective(), "cells": reports });
            write_atomic(&out.join("conditions.json"), &json_bytes(&doc)?)?;
        }
    }
    println!("conditions: {} cells, {} failed, written to {}", cells, failed, out.display());
    cell_outcome(cells, failed, strict, "condition cells")
}

fn distance_rows(label: &str, n: u64, seed: u64, d: &crate::mc::NamedDistance) -> StudyRow {
    StudyRow {
        label: label.to_string(),
        n,
        seed,
        metric: d.name.clone(),
        epsilon: None,
        delta: None,
        value: d.estimate.value,
        bound: d.estimate.bound,
        method: d.estimate.method.clone(),
        status: "ok".into(),
    }
}

fn error_row(label: &str, n: u64, seed: u64, msg: &str) -> StudyRow {
    StudyRow {
        label: label.to_string(),
        n,
        seed,
        metric: String::new(),
        epsilon: None,
        delta: None,
        value: f64::NAN,
        bound: f64::NAN,
        method: String::new(),
        status: format!("error: {msg}"),
    }
}

pub fn cmd_distances(cfg: &ScenarioConfig, out: &Path, strict: bool) -> Result<(), CliError> {
    let plan = cfg.study_plan()?;
    plan.validate().map_err(|e| CliError::Config(ConfigError { path: "<plan>".into(), message: e.to_string() }))?;
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    let mut failed = 0usize;
    for (i, &n) in plan.n_grid.iter().enumerate() {
        let index = plan
            .index
            .resolve(n)
            .map_err(|e| ConfigError { path: "index".into(), message: e.to_string() })?;
        let (ds, errs) = cell_distances(&plan, i as u32, n, &index);
        if !errs.is_empty() {
            failed += 1;
        }
        rows.extend(ds.iter().map(|d| distance_rows(&plan.label, n, plan.seed, d)));
        rows.extend(errs.iter().map(|e| error_row(&plan.label, n, plan.seed, e)));
        cells.push(json!({ "n": n, "index": index, "distances": ds, "errors": errs }));
    }
    match cfg.outputs.format {
        Format::Csv => {
            write_atomic(&out.join("distances.csv"), &csv_bytes(&rows)?)?;
            write_config(cfg, out)?;
        }
        Format::Json => {
            let doc = json!({ "config": cfg.effective(), "seed": plan.seed, "cells": cells });
            write_atomic(&out.join("distances.json"), &json_bytes(&doc)?)?;
        }
    }
    println!("distances: {} cells, {} with failures, written to {}", plan.n_grid.len(), failed, out.display());
    cell_outcome(plan.n_grid.len(), failed, strict, "distance cells")
}

fn study_rows(r: &StudyResult) -> Vec<StudyRow> {
    let mut rows = Vec::new();
    for c in &r.cells {
        for rep in &c.conditions {
            for v in rep.rows() {
                rows.push(StudyRow {
                    label: r.label.clone(),
                    n: c.n,
                    seed: c.seed,
                    metric: v.functional.clone(),
                    epsilon: Some(rep.epsilon),
                    delta: Some(rep.delta),
                    value: v.value,
                    bound: v.error_bound,
                    method: "functional".into(),
                    status: "ok".into(),
                });
            }
        }
        if let Some(v) = &c.matched_normal_rf {
            rows.push(StudyRow {
                label: r.label.clone(),
                n: c.n,
                seed: c.seed,
                metric: v.functional.clone(),
                epsilon: None,
                delta: None,
                value: v.value,
                bound: v.error_bound,
                method: "functional".into(),
                status: "ok".into(),
            });
        }
        rows.extend(c.distances.iter().map(|d| distance_rows(&r.label, c.n, c.seed, d)));
        rows.extend(c.errors.iter().map(|e| error_row(&r.label, c.n, c.seed, e)));
    }
    rows
}

/// Whether the trend meets the expectation, with a one-line description.
pub fn check_expectation(e: &Expectation, t: Option<&Trend>) -> (bool, String) {
    let Some(t) = t else {
        return (false, format!("{}: no such trend", e.metric));
    };
    let mut ok = true;
    let mut parts = Vec::new();
    match e.trend {
        Some(TrendKind::StrictlyDecreasing) => {
            ok &= t.strictly_decreasing;
            parts.push(format!("strictly decreasing: {}", yes_no(t.strictly_decreasing)));
        }
        Some(TrendKind::DecreasingWithinBounds) => {
            ok &= t.decreasing_within_bounds;
            parts.push(format!("decreasing within bounds: {}", yes_no(t.decreasing_within_bounds)));
        }
        None => {}
    }
    if let Some(b) = e.final_below {
        ok &= t.final_value < b;
        parts.push(format!("final {:.4e} < {b:e}: {}", t.final_value, yes_no(t.final_value < b)));
    }
    if let Some(b) = e.final_above {
        ok &= t.final_value > b;
        parts.push(format!("final {:.4e} > {b:e}: {}", t.final_value, yes_no(t.final_value > b)));
    }
    (ok, format!("{}: {}", e.metric, parts.join(", ")))
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

pub fn cmd_study(cfg: &ScenarioConfig, out: &Path, strict: bool) -> Result<(), CliError> {
    let plan = cfg.study_plan()?;
    let run = run_study(&plan).map_err(|e| CliError::Numeric(e.to_string()))?;
    let r = &run.result;
    match cfg.outputs.format {
        Format::Csv => {
            write_atomic(&out.join("study.csv"), &csv_bytes(&study_rows(r))?)?;
            write_config(cfg, out)?;
        }
        Format::Json => {
            let doc = json!({ "config": cfg.effective(), "result": r });
            write_atomic(&out.join("study.json"), &json_bytes(&doc)?)?;
        }
    }
    write_atomic(&out.join("timings.json"), &json_bytes(&run.timings)?)?;
    let mut all_met = true;
    for e in &cfg.expect {
        let (ok, line) = check_expectation(e, r.trend(&e.metric));
        all_met &= ok;
        println!("[{}] {line}", if ok { "pass" } else { "FAIL" });
    }
    if cfg.expect.is_empty() {
        for t in r.trends.iter().filter(|t| !t.metric.contains('@')) {
            println!(
                "[info] {}: final {:.4e}, decreasing within bounds: {}",
                t.metric,
                t.final_value,
                yes_no(t.decreasing_within_bounds)
            );
        }
    }
    println!(
        "verdict {}: {} ({} cells, {} with failures)",
        r.label,
        if all_met { "pass" } else { "fail" },
        r.cells.len(),
        r.failed_cells()
    );
    cell_outcome(r.cells.len(), r.failed_cells(), strict, "study cells")?;
    if strict && !all_met {
        return Err(CliError::Finding(format!("study `{}` did not meet its expectations", r.label)));
    }
    Ok(())
}

pub fn cmd_counterexample(cfg: &ScenarioConfig, out: &Path) -> Result<(), CliError> {
    let report = counterexample(&cfg.counterexample, cfg.monte_carlo.seed, cfg.numerics.eval_options())
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    match cfg.outputs.format {
        Format::Csv => {
            write_atomic(&out.join("counterexample.csv"), &csv_bytes(&report.findings)?)?;
            write_config(cfg, out)?;
        }
        Format::Json => {
            let doc = json!({ "config": cfg.effective(), "report": report });
            write_atomic(&out.join("counterexample.json"), &json_bytes(&doc)?)?;
        }
    }
    let mut names: Vec<&str> = Vec::new();
    for f in &report.findings {
        if !names.contains(&f.name.as_str()) {
            names.push(&f.name);
        }
    }
    for name in names {
        let group: Vec<_> = report.findings.iter().filter(|f| f.name == name).collect();
        let held = group.iter().all(|f| f.holds);
        println!("[{}] {name} ({} cases)", if held { "pass" } else { "FAIL" }, group.len());
    }
    match report.first_violation() {
        None => Ok(()),
        Some(f) => Err(CliError::Finding(format!(
            "{} at n = {}{}: value {:e}, threshold {:e}",
            f.name,
            f.n,
            f.epsilon.map_or(String::new(), |e| format!(", epsilon = {e}")),
            f.value,
            f.threshold
        ))),
    }
}

pub fn cmd_selfcheck(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<(), CliError> {
    let report = selfcheck(cfg.monte_carlo.seed);
    let bytes = json_bytes(&report)?;
    if let Some(dir) = out {
        write_atomic(&dir.join("selfcheck.json"), &bytes)?;
    }
    print!("{}", String::from_utf8(bytes).expect("json is utf-8"));
    if report.passed {
        Ok(())
    } else {
        let names: Vec<_> = report.failures().iter().map(|c| c.name.clone()).collect();
        Err(CliError::Finding(format!("selfcheck failed: {}", names.join(", "))))
    }
}
