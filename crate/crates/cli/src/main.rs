//! `sbi`: run inference sweeps, aggregate records, and poke at the toolkit
//! primitives from the shell.
//!
//! Every failure exits nonzero after printing a single machine-readable
//! JSON line on stderr; unknown task or method names enumerate the valid
//! choices in that line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use sbi_core::harness::{
    self, across_budgets, aggregate, format_table, read_records, ExperimentConfig, Seeds,
    TableVariant, ORACLE_METHOD,
};
use sbi_core::inference::Method;
use sbi_core::metrics::{c2st, ed2, mmd2};
use sbi_core::sample::{read_csv, write_csv};
use sbi_core::support_points::{sp_objective, support_points, SpConfig};
use sbi_core::tasks::{Task, NAMES};
use sbi_core::{Error, Result};

#[derive(Parser)]
#[command(name = "sbi", version, about = "Simulation-based inference toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an inference sweep and append one JSONL record per cell.
    Run(RunArgs),
    /// Summarize a record file against a baseline method.
    Aggregate(AggregateArgs),
    /// Score two CSV samples against each other.
    Metrics(MetricsArgs),
    /// Reduce a CSV sample to n support points.
    Sp(SpArgs),
    /// Inspect the task registry.
    Tasks(TasksArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task name; repeat for several.
    #[arg(long = "task")]
    tasks: Vec<String>,
    /// Method name (or "oracle"); repeat for several.
    #[arg(long = "method")]
    methods: Vec<String>,
    /// Simulation budget; repeat for several. Defaults to the per-task grid.
    #[arg(long = "budget")]
    budgets: Vec<usize>,
    /// Number of seeds (0, 1, ..., n-1).
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long = "surrogate-mult")]
    surrogate_mult: Option<usize>,
    #[arg(long = "sp-oversample")]
    sp_oversample: Option<usize>,
    #[arg(long)]
    atoms: Option<usize>,
    /// Posterior sample size per run.
    #[arg(long = "n-post")]
    n_post: Option<usize>,
    /// Record file (JSONL). Relative paths resolve under $SBI_OUT_DIR.
    #[arg(long, default_value = "records.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct AggregateArgs {
    /// Record file produced by `run`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Method every other method is compared against.
    #[arg(long, default_value = "regular")]
    baseline: String,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct MetricsArgs {
    /// First sample (headerless CSV, one point per row).
    a: PathBuf,
    /// Second sample, same width.
    b: PathBuf,
    /// Seed for the classifier test.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SpArgs {
    /// Input sample (headerless CSV).
    #[arg(long = "in")]
    input: PathBuf,
    /// Number of support points to keep.
    #[arg(long)]
    n: usize,
    /// Where the reduced sample goes.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TasksArgs {
    #[command(subcommand)]
    command: TasksCommand,
}

#[derive(Subcommand)]
enum TasksCommand {
    /// Print every registered task with its dimensions.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", machine_error(&err));
            ExitCode::FAILURE
        }
    }
}

/// One JSON line per failure; unknown-name errors carry the valid choices.
fn machine_error(err: &Error) -> String {
    let payload = match err {
        Error::UnknownTask(_) => json!({
            "error": err.to_string(),
            "valid_tasks": NAMES,
        }),
        Error::UnknownMethod(_) => {
            let mut methods: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
            methods.push(ORACLE_METHOD);
            json!({
                "error": err.to_string(),
                "valid_methods": methods,
            })
        }
        _ => json!({ "error": err.to_string() }),
    };
    format!("error: {payload}")
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Aggregate(args) => run_aggregate(args),
        Command::Metrics(args) => run_metrics(args),
        Command::Sp(args) => run_sp(args),
        Command::Tasks(args) => match args.command {
            TasksCommand::List => {
                for name in NAMES {
                    let task = Task::by_name(name)?;
                    println!(
                        "{name}\ttheta_dim={}\tx_dim={}",
                        task.theta_dim(),
                        task.x_dim()
                    );
                }
                Ok(())
            }
        },
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::new(&[], &[]),
    };
    if !args.tasks.is_empty() {
        cfg.tasks = args.tasks;
    }
    if !args.methods.is_empty() {
        cfg.methods = args.methods;
    }
    if !args.budgets.is_empty() {
        let mut budgets = args.budgets;
        budgets.sort_unstable();
        budgets.dedup();
        cfg.budgets = Some(budgets);
    }
    if let Some(seeds) = args.seeds {
        cfg.seeds = Seeds::Count(seeds);
    }
    if let Some(rounds) = args.rounds {
        cfg.rounds = rounds;
    }
    if let Some(mult) = args.surrogate_mult {
        cfg.surrogate_multiplier = mult;
    }
    if let Some(oversample) = args.sp_oversample {
        cfg.sp_oversample = oversample;
    }
    if let Some(atoms) = args.atoms {
        cfg.atoms = atoms;
    }
    if let Some(n_post) = args.n_post {
        cfg.n_post = n_post;
    }
    cfg.out = Some(args.out.clone());
    let records = harness::run_experiment(&cfg)?;
    let failed = records.iter().filter(|r| !r.succeeded()).count();
    println!(
        "{}",
        json!({
            "records": records.len(),
            "failed": failed,
            "out": harness::resolve_output(&args.out),
        })
    );
    Ok(())
}

fn run_aggregate(args: AggregateArgs) -> Result<()> {
    let records = read_records(&args.input)?;
    let summaries = aggregate(&records, &args.baseline)?;
    match args.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&summaries)?),
        Format::Csv => print!("{}", summaries_csv(&summaries)),
    }
    // Human-facing across-budget tables go to stderr so stdout stays
    // machine-parseable.
    let rows = across_budgets(&summaries);
    if !rows.is_empty() {
        eprintln!("{}", format_table(&rows, TableVariant::MeanSd));
        eprintln!("{}", format_table(&rows, TableVariant::MedianIqr));
    }
    Ok(())
}

fn summaries_csv(summaries: &[harness::ComparisonSummary]) -> String {
    let mut out = String::from(
        "task,method,budget,pairs,dropped,verdict,\
         mean_red_mmd2,sd_red_mmd2,median_red_mmd2,iqr_red_mmd2,good_bad_mmd2,\
         mean_red_c2st,sd_red_c2st,median_red_c2st,iqr_red_c2st,good_bad_c2st,\
         mean_red_ed2,sd_red_ed2,median_red_ed2,iqr_red_ed2,good_bad_ed2\n",
    );
    for s in summaries {
        let metric = |m: &harness::MetricAggregate| {
            format!(
                "{:.6},{:.6},{:.6},{:.6},{:.6}",
                m.mean_reduction, m.sd_reduction, m.median_reduction, m.iqr_reduction, m.good_bad
            )
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.task,
            s.method,
            s.budget,
            s.pairs,
            s.dropped,
            s.verdict,
            metric(&s.mmd2),
            metric(&s.c2st),
            metric(&s.ed2),
        ));
    }
    out
}

fn run_metrics(args: MetricsArgs) -> Result<()> {
    let a = read_csv(&args.a)?;
    let b = read_csv(&args.b)?;
    let result = json!({
        "mmd2": mmd2(&a.view(), &b.view())?,
        "c2st": c2st(&a.view(), &b.view(), args.seed)?,
        "ed2": ed2(&a.view(), &b.view())?,
    });
    println!("{result}");
    Ok(())
}

fn run_sp(args: SpArgs) -> Result<()> {
    let y = read_csv(&args.input)?;
    let cfg = SpConfig {
        seed: args.seed,
        ..SpConfig::default()
    };
    let points = support_points(&y.view(), args.n, &cfg)?;
    write_csv(&args.out, &points.view())?;
    println!(
        "{}",
        json!({
            "points": points.nrows(),
            "objective": sp_objective(&points.view(), &y.view())?,
            "out": args.out,
        })
    );
    Ok(())
}
