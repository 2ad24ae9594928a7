//! `fedsched` command-line front end.
//!
//! Machine-readable verdicts go to stdout, human-readable summaries to
//! stderr. Exit status: 0 success or feasible, 1 infeasible verdict (or
//! invalid task set for `validate`), 2 usage or input error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use fedsched::explorer::{parse_grid, speedup_sweep};
use fedsched::feasibility::{partition_counterexample, processor_items, uniprocessor_edf_feasible, DemandProfile};
use fedsched::federated::{allocate_federated, FederatedOutcome, InfeasibleReason};
use fedsched::generator::{build_counterexample, CounterexampleParams};
use fedsched::simulator::simulate_partitioned_edf;
use fedsched::task_model::validate_task_set;
use fedsched::{ExactTime, Platform, TaskSet};
use serde_json::json;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INFEASIBLE: u8 = 1;
pub const EXIT_ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "fedsched", version, about = "Federated scheduling analysis for sporadic DAG tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the (M, N, K) counterexample task set
    Generate {
        #[arg(long = "M")]
        processors: usize,
        #[arg(long = "N")]
        tasks: usize,
        #[arg(long = "K")]
        growth: ExactTime,
        /// Output file; stdout if omitted
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a task-set file against every structural invariant
    Validate {
        #[arg(short, long)]
        input: PathBuf,
    },
    /// Demand-bound test of the canonical per-subtask partition
    Analyze {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long)]
        speed: ExactTime,
        #[arg(long)]
        processors: usize,
    },
    /// Federated allocation, or an infeasibility certificate
    Federate {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long)]
        speed: ExactTime,
        #[arg(long)]
        processors: usize,
    },
    /// Partitioned EDF simulation of the canonical partition
    Simulate {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long)]
        speed: ExactTime,
        #[arg(long)]
        processors: usize,
        #[arg(long)]
        horizon: Option<ExactTime>,
    },
    /// Minimal federated speed versus the lower bound over a grid
    Sweep {
        /// Semicolon-separated `M,N,K` triples
        #[arg(long)]
        grid: String,
        #[arg(long)]
        precision: ExactTime,
    },
}

/// Parses `args` (including the program name) and runs one subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("usage error");
            let _ = writeln!(err, "{first}");
            return EXIT_ERROR;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8> {
    match command {
        Command::Generate { processors, tasks, growth, output } => generate(processors, tasks, growth, output, out, err),
        Command::Validate { input } => validate(&input, out, err),
        Command::Analyze { input, speed, processors } => analyze(&input, platform(processors, speed)?, out, err),
        Command::Federate { input, speed, processors } => federate(&input, platform(processors, speed)?, out, err),
        Command::Simulate { input, speed, processors, horizon } => {
            simulate(&input, platform(processors, speed)?, horizon, out, err)
        }
        Command::Sweep { grid, precision } => sweep(&grid, precision, out, err),
    }
}

fn platform(processors: usize, speed: ExactTime) -> Result<Platform> {
    Platform::new(processors, speed).map_err(|e| anyhow!("--processors/--speed: {e}"))
}

/// Reads a task-set file; schema errors name the offending field.
pub fn read_task_set(path: &Path) -> Result<TaskSet> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read `{}`", path.display()))?;
    TaskSet::from_json(&text).with_context(|| format!("`{}`", path.display()))
}

/// Reads a task set and rejects it if any invariant is violated.
fn read_valid_task_set(path: &Path) -> Result<TaskSet> {
    let ts = read_task_set(path)?;
    let report = validate_task_set(&ts);
    if let Some(first) = report.violations.first() {
        bail!("`{}` is not a valid task set: {first}", path.display());
    }
    Ok(ts)
}

fn print_json(out: &mut dyn Write, value: &serde_json::Value) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn generate(
    processors: usize,
    tasks: usize,
    growth: ExactTime,
    output: Option<PathBuf>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<u8> {
    let params = CounterexampleParams::new(processors, tasks, growth).context("--M/--N/--K")?;
    let ts = build_counterexample(&params);
    let text = ts.to_json();
    match output {
        Some(path) => {
            fs::write(&path, format!("{text}\n")).with_context(|| format!("cannot write `{}`", path.display()))?;
            writeln!(err, "wrote {} ({} tasks) to {}", ts.name, ts.len(), path.display())?;
        }
        None => writeln!(out, "{text}")?,
    }
    Ok(EXIT_OK)
}

fn validate(input: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8> {
    let ts = read_task_set(input)?;
    let report = validate_task_set(&ts);
    let violations: Vec<_> = report
        .violations
        .iter()
        .map(|v| json!({ "task": v.task, "kind": v.kind.label(), "detail": v.detail }))
        .collect();
    print_json(out, &json!({ "valid": report.is_valid(), "violations": violations }))?;
    for v in &report.violations {
        writeln!(err, "{v}")?;
    }
    writeln!(err, "{}: {} violation(s)", ts.name, report.violations.len())?;
    Ok(if report.is_valid() { EXIT_OK } else { EXIT_INFEASIBLE })
}

fn analyze(input: &Path, plat: Platform, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8> {
    let ts = read_valid_task_set(input)?;
    let pa = partition_counterexample(&ts, plat.processors).context("canonical partition")?;
    let per_proc = processor_items(&ts, &pa).context("canonical partition")?;
    let mut feasible = true;
    let mut table = Vec::with_capacity(per_proc.len());
    for (i, items) in per_proc.iter().enumerate() {
        let ok = uniprocessor_edf_feasible(items, &plat.speed)?;
        feasible &= ok;
        let rows: Vec<_> = DemandProfile::of(items)
            .breakpoints
            .iter()
            .map(|(t, d)| json!({ "t": t, "demand": d, "supply": &plat.speed * t }))
            .collect();
        table.push(json!({ "processor": i + 1, "feasible": ok, "demand": rows }));
    }
    let verdict = if feasible { "feasible" } else { "infeasible" };
    print_json(out, &json!({ "verdict": verdict, "speed": plat.speed, "processors": table }))?;
    writeln!(
        err,
        "{verdict}: canonical partition of {} on {} processors at speed {}",
        ts.name, plat.processors, plat.speed
    )?;
    Ok(if feasible { EXIT_OK } else { EXIT_INFEASIBLE })
}

fn federate(input: &Path, plat: Platform, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8> {
    let ts = read_valid_task_set(input)?;
    let outcome = allocate_federated(&ts, &plat)?;
    print_json(out, &serde_json::to_value(&outcome)?)?;
    match &outcome {
        FederatedOutcome::Feasible(a) => {
            writeln!(
                err,
                "feasible: {} heavy cluster(s), {} shared processor(s), {} of {} processors used",
                a.heavy_grants.len(),
                a.light_partition.len(),
                a.total_processors_used,
                plat.processors
            )?;
            Ok(EXIT_OK)
        }
        FederatedOutcome::Infeasible(cert) => {
            let why = match &cert.reason {
                InfeasibleReason::HeavyOverflow { granted, available } => {
                    format!("heavy clusters need {granted} > {available} processors")
                }
                InfeasibleReason::Unallocatable { task } => format!("task {task} cannot meet its deadline on any cluster"),
                InfeasibleReason::LightOverflow { needed, available } => {
                    format!("light tasks need {needed} > {available} shared processors")
                }
            };
            writeln!(
                err,
                "infeasible: {why}; heavy tasks demand at least {} exclusive processors",
                cert.heavy_demand_lower_bound
            )?;
            Ok(EXIT_INFEASIBLE)
        }
    }
}

fn simulate(
    input: &Path,
    plat: Platform,
    horizon: Option<ExactTime>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<u8> {
    let ts = read_valid_task_set(input)?;
    let pa = partition_counterexample(&ts, plat.processors).context("canonical partition")?;
    let trace = simulate_partitioned_edf(&ts, &pa, &plat, horizon).context("simulation")?;
    writeln!(out, "processor,task,subtask,start,end")?;
    for iv in &trace.intervals {
        writeln!(out, "{},{},{},{},{}", iv.processor, iv.task, iv.subtask, iv.start, iv.end)?;
    }
    writeln!(out, "# misses: {}", trace.misses.len())?;
    for m in &trace.misses {
        let completion = m.completion.as_ref().map_or("unfinished".to_string(), |c| c.to_string());
        writeln!(out, "miss,{},{},{},{}", m.task, m.job, m.deadline, completion)?;
    }
    writeln!(
        err,
        "{} intervals, {} deadline miss(es) at speed {}",
        trace.intervals.len(),
        trace.misses.len(),
        plat.speed
    )?;
    Ok(if trace.is_miss_free() { EXIT_OK } else { EXIT_INFEASIBLE })
}

fn sweep(grid: &str, precision: ExactTime, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8> {
    if !precision.is_positive() {
        bail!("--precision must be positive, got {precision}");
    }
    let grid = parse_grid(grid).map_err(|e| anyhow!("--grid: {e}"))?;
    let rows = speedup_sweep(&grid, &precision)?;
    writeln!(out, "M,N,K,theorem_bound,s_star_lo,s_star_hi,optimal_feasible_at_1")?;
    let mut consistent = true;
    for r in &rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.processors,
            r.tasks,
            r.growth,
            r.theorem_bound,
            r.min_feasible_speed.infeasible,
            r.min_feasible_speed.feasible,
            r.feasible_optimal_at_1
        )?;
        let row_ok = r.feasible_optimal_at_1 && r.min_feasible_speed.feasible >= &r.theorem_bound - &precision;
        if !row_ok {
            writeln!(err, "row (M={}, N={}, K={}) contradicts the lower bound", r.processors, r.tasks, r.growth)?;
        }
        consistent &= row_ok;
    }
    writeln!(err, "{} row(s)", rows.len())?;
    Ok(if consistent { EXIT_OK } else { EXIT_INFEASIBLE })
}
