//! Command-line front end.
//!
//! Exit codes: 0 when the reported solution is feasible, 2 when a solver
//! returned an infeasible solution, 3 when the problem itself is infeasible
//! (a target above its cluster size, or no feasible assignment exists), and
//! 1 for every other error.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::instance::{fig1_fixture, load_instance, InstanceFormat};
use crate::metrics::{make_report, report_for, AverageBr, Report, ReportSource, Timing};
use crate::model::{CoverageRule, DescriptorSolution, ProblemSpec};
use crate::oracle::{exact_descriptors, greedy_baseline, ExactOutcome, DEFAULT_ENUM_BUDGET};
use crate::qubo::{build_qubo, default_penalties, Penalties};
use crate::solver::{anneal, SolverConfig};

pub const EXIT_FEASIBLE: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE_RESULT: i32 = 2;
pub const EXIT_INFEASIBLE_SPEC: i32 = 3;

pub const BUDGET_ENV: &str = "TMCD_ENUM_BUDGET";

#[derive(Debug, Parser)]
#[command(name = "tmcd", version, about = "Disjoint cluster descriptors via QUBO annealing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile to QUBO, anneal, and report the decoded descriptors.
    Solve(SolveArgs),
    /// Solve exactly by enumerating tag assignments (small instances only).
    Exact(ExactArgs),
    /// Evaluate a given solution without solving.
    Eval(EvalArgs),
    /// Run `solve` for several modularity weights.
    Sweep(SweepArgs),
    /// Write the bundled six-object toy instance.
    Fixture(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "json")]
    pub format: String,
    /// `full`, `pct:<p>` or a comma-separated list of per-cluster targets.
    #[arg(long, default_value = "full")]
    pub coverage: String,
}

#[derive(Debug, Args)]
pub struct PenaltyArgs {
    #[arg(long = "penalty-A")]
    pub a: Option<f64>,
    #[arg(long = "penalty-B")]
    pub b: Option<f64>,
    #[arg(long = "penalty-C")]
    pub c: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 2000)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Wall-clock limit in seconds. Truncated runs are not reproducible.
    #[arg(long = "time-budget")]
    pub time_budget: Option<f64>,
    #[arg(long = "temp-initial")]
    pub temp_initial: Option<f64>,
    #[arg(long = "temp-final")]
    pub temp_final: Option<f64>,
    #[arg(long = "offset-increment")]
    pub offset_increment: Option<f64>,
    /// Start restart 0 from the greedy baseline instead of all zeros.
    #[arg(long = "warm-start")]
    pub warm_start: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long = "P", default_value_t = 0.0, allow_negative_numbers = true)]
    pub p: f64,
    #[command(flatten)]
    pub penalties: PenaltyArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Also write the compiled QUBO in sparse text form.
    #[arg(long = "export-qubo")]
    pub export_qubo: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long = "P", default_value_t = 0.0, allow_negative_numbers = true)]
    pub p: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// JSON file `{"descriptors": [["TAG", ...], ...]}`.
    #[arg(long)]
    pub solution: PathBuf,
    #[arg(long = "P", default_value_t = 0.0, allow_negative_numbers = true)]
    pub p: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long = "P", value_delimiter = ',', default_value = "0,1,5", allow_negative_numbers = true)]
    pub p: Vec<f64>,
    #[command(flatten)]
    pub penalties: PenaltyArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long, default_value = "json")]
    pub format: String,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct SolutionDoc {
    descriptors: Vec<Vec<String>>,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    return EXIT_FEASIBLE;
                }
                _ => EXIT_ERROR,
            };
            let _ = write!(stderr, "{}", e.render());
            return code;
        }
    };

    let outcome = match cli.command {
        Command::Solve(a) => cmd_solve(&a, stdout, stderr),
        Command::Exact(a) => cmd_exact(&a, stdout, stderr),
        Command::Eval(a) => cmd_eval(&a, stdout, stderr),
        Command::Sweep(a) => cmd_sweep(&a, stdout, stderr),
        Command::Fixture(a) => cmd_fixture(&a, stdout),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            match e {
                Error::TargetExceedsCluster { .. } => EXIT_INFEASIBLE_SPEC,
                _ => EXIT_ERROR,
            }
        }
    }
}

fn load_spec(input: &InputArgs, p: f64, stderr: &mut dyn Write) -> Result<ProblemSpec> {
    let format: InstanceFormat = input.format.parse()?;
    let file = File::open(&input.input).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", input.input.display())))
    })?;
    let loaded = load_instance(BufReader::new(file), format)?;
    for w in &loaded.warnings {
        writeln!(stderr, "warning: {w}")?;
    }
    let rule: CoverageRule = input.coverage.parse()?;
    ProblemSpec::with_rule(loaded.instance, &rule, p)
}

fn penalties_for(spec: &ProblemSpec, args: &PenaltyArgs) -> Penalties {
    let d = default_penalties(spec);
    Penalties {
        a: args.a.unwrap_or(d.a),
        b: args.b.unwrap_or(d.b),
        c: args.c.unwrap_or(d.c),
    }
}

fn solver_config(args: &SolverArgs) -> Result<SolverConfig> {
    let time_budget = match args.time_budget {
        Some(s) if !(s.is_finite() && s >= 0.0) => {
            return Err(Error::InvalidParameter(format!("time budget must be >= 0, got {s}")))
        }
        Some(s) => Some(Duration::from_secs_f64(s)),
        None => None,
    };
    Ok(SolverConfig {
        sweeps: args.sweeps,
        restarts: args.restarts,
        temp_initial: args.temp_initial,
        temp_final: args.temp_final,
        offset_increment: args.offset_increment,
        seed: args.seed,
        time_budget,
        initial_state: None,
    })
}

fn emit(text: &str, output: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn exit_for(report: &Report) -> i32 {
    if report.feasible {
        EXIT_FEASIBLE
    } else {
        EXIT_INFEASIBLE_RESULT
    }
}

fn solve_report(
    spec: &ProblemSpec,
    penalty_args: &PenaltyArgs,
    solver_args: &SolverArgs,
    export: Option<&Path>,
) -> Result<Report> {
    let model = build_qubo(spec, penalties_for(spec, penalty_args))?;
    if let Some(path) = export {
        let file = File::create(path)?;
        model.qubo().write_sparse(std::io::BufWriter::new(file))?;
    }
    let mut config = solver_config(solver_args)?;
    if solver_args.warm_start {
        config.initial_state = Some(model.encode(&greedy_baseline(spec).solution)?);
    }
    let result = anneal(&model, &config)?;
    let mut report = make_report(
        spec,
        ReportSource::Anneal {
            model: &model,
            result: &result,
            seed: config.seed,
        },
    );
    report.timing = Some(Timing {
        elapsed_seconds: result.elapsed.as_secs_f64(),
    });
    Ok(report)
}

pub fn cmd_solve(args: &SolveArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let spec = load_spec(&args.input, args.p, stderr)?;
    let report = solve_report(&spec, &args.penalties, &args.solver, args.export_qubo.as_deref())?;
    emit(&report.to_json(), args.output.as_deref(), stdout)?;
    Ok(exit_for(&report))
}

fn enum_budget() -> Result<u64> {
    match std::env::var(BUDGET_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("{BUDGET_ENV} must be an integer, got `{v}`"))),
        Err(_) => Ok(DEFAULT_ENUM_BUDGET),
    }
}

pub fn cmd_exact(args: &ExactArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let spec = load_spec(&args.input, args.p, stderr)?;
    let started = Instant::now();
    let outcome = exact_descriptors(&spec, enum_budget()?)?;
    let mut report = make_report(&spec, ReportSource::Exact(&outcome));
    report.timing = Some(Timing {
        elapsed_seconds: started.elapsed().as_secs_f64(),
    });
    emit(&report.to_json(), args.output.as_deref(), stdout)?;
    Ok(match outcome {
        ExactOutcome::Optimal { .. } => EXIT_FEASIBLE,
        ExactOutcome::Infeasible => EXIT_INFEASIBLE_SPEC,
    })
}

pub fn cmd_eval(args: &EvalArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let spec = load_spec(&args.input, args.p, stderr)?;
    let text = std::fs::read_to_string(&args.solution)?;
    let doc: SolutionDoc = serde_json::from_str(&text)?;
    let sol = DescriptorSolution::from_names(spec.instance(), &doc.descriptors)?;
    spec.check_solution(&sol)?;
    let report = report_for(&spec, &sol, ReportSource::Evaluation);
    emit(&report.to_json(), args.output.as_deref(), stdout)?;
    Ok(exit_for(&report))
}

pub fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    if let Some(bad) = args.p.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "modularity weights must be finite and >= 0, got {bad}"
        )));
    }
    let base = load_spec(&args.input, 0.0, stderr)?;

    let mut entries = Vec::with_capacity(args.p.len());
    let mut rows = Vec::with_capacity(args.p.len());
    let mut failed = false;
    let mut infeasible = false;
    for &p in &args.p {
        let run = base
            .with_modularity_weight(p)
            .and_then(|spec| solve_report(&spec, &args.penalties, &args.solver, None));
        match run {
            Ok(report) => {
                infeasible |= !report.feasible;
                rows.push(summary_row(p, &report));
                entries.push(serde_json::to_value(&report)?);
            }
            Err(e) => {
                failed = true;
                writeln!(stderr, "error at P = {p}: {e}")?;
                rows.push(format!("{p:<8} error: {e}"));
                entries.push(serde_json::json!({ "P": p, "error": e.to_string() }));
            }
        }
    }

    let mut json = serde_json::to_string_pretty(&entries)?;
    json.push('\n');
    emit(&json, args.output.as_deref(), stdout)?;

    writeln!(stderr, "{:<8} {:>6} {:>10} {:>8} {:>9}", "P", "tags", "TM", "avg BR", "feasible")?;
    for row in rows {
        writeln!(stderr, "{row}")?;
    }

    Ok(if failed {
        EXIT_ERROR
    } else if infeasible {
        EXIT_INFEASIBLE_RESULT
    } else {
        EXIT_FEASIBLE
    })
}

fn summary_row(p: f64, r: &Report) -> String {
    let tm = r
        .objective
        .tag_modularity
        .map(|v| format!("{:.4}", v.rounded()))
        .unwrap_or_else(|| "n/a".into());
    let br = match r.balance_ratio.average {
        AverageBr::Value(v) => format!("{:.3}", v.rounded()),
        AverageBr::NotApplicable => "n/a".into(),
    };
    format!(
        "{p:<8} {:>6} {tm:>10} {br:>8} {:>9}",
        r.objective.tag_count,
        if r.feasible { "yes" } else { "no" }
    )
}

pub fn cmd_fixture(args: &FixtureArgs, stdout: &mut dyn Write) -> Result<i32> {
    let inst = fig1_fixture();
    let text = match args.format.parse::<InstanceFormat>()? {
        InstanceFormat::Json => inst.to_json(),
        InstanceFormat::EdgeCsv => inst.to_edge_csv(),
    };
    emit(&text, args.output.as_deref(), stdout)?;
    Ok(EXIT_FEASIBLE)
}
