//! `cmbx` command line: generate instances, run checks, solve, and produce
//! verification reports.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or I/O error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use cmbx::conic::{condition_star_falsify, model_condition_star, FalsifyConfig, FalsifyOutcome, StarCheck};
use cmbx::model::{self, BssCriterion, MixedBinaryConicModel};
use cmbx::set_function::SubmodularityCheck;
use cmbx::solver::{
    solve_branch_and_bound, solve_exact_enumeration, solve_relaxation, SolveOptions, SolveResult,
    SolveStatus,
};
use cmbx::verify::{hull_equality_test, midpoint_candidate_report};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cmbx", version, about = "Conic mixed-binary sets: builders, cuts, solves, verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Default seed; the CMBX_SEED environment variable overrides this
    /// default and explicit flags override both.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Feasibility tolerance override.
    #[arg(long, global = true)]
    tol_feas: Option<f64>,
    /// Relative optimality tolerance override.
    #[arg(long, global = true)]
    tol_opt: Option<f64>,
    /// Worker threads for independent solves (hull-test rows).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file for one of the model families.
    Gen(GenArgs),
    /// Run a check on an instance and print witnesses.
    Check(CheckArgs),
    /// Solve an instance.
    Solve(SolveArgs),
    /// Hull equality test: relaxation vs enumeration over random objectives.
    Hulltest(HulltestArgs),
    /// Best subset selection from a CSV dataset.
    Bss(BssArgs),
    /// Report on the worked example's fractional midpoint candidates.
    Example1Report(Example1Args),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    H,
    R,
    M,
    Fractional,
    Bss,
    Drccp,
    Example1,
    CondstarFail,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: Family,
    /// Number of binary variables.
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Continuous variables per conic block.
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// H-type constraints (family m) / ratios (family fractional).
    #[arg(long, default_value_t = 1)]
    count_h: usize,
    /// R-type constraints (family m).
    #[arg(long, default_value_t = 1)]
    count_r: usize,
    /// Samples (family bss).
    #[arg(long, default_value_t = 6)]
    k: usize,
    /// Norm exponent (family drccp).
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Augmentation flag (family drccp).
    #[arg(long, default_value_t = 1)]
    eta2: u8,
    /// Criterion weight (family bss).
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value = "out.json")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckKind {
    Submodular,
    Nonneg,
    Condstar,
}

#[derive(Args)]
struct CheckArgs {
    instance: PathBuf,
    #[arg(long, value_enum)]
    what: CheckKind,
    /// Falsifier samples (condstar).
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMode {
    Relax,
    Exact,
    Bnb,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, value_enum)]
    mode: SolveMode,
    /// Write the result as JSON here (stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a per-iteration trace CSV (relax mode).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct HulltestArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 20)]
    objectives: usize,
    /// Write the report JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-objective rows as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BssArgs {
    /// CSV with a header row; the last column is the response, the rest are
    /// the design matrix, one sample per row.
    #[arg(long)]
    csv: PathBuf,
    #[arg(long, default_value = "aic")]
    criterion: String,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 1e3)]
    bigm: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Example1Args {
    /// Candidate x1 values.
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
    x1: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Verification(String),
}

impl From<cmbx::Error> for CliError {
    fn from(e: cmbx::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(format!("json: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn effective_seed(cli_seed: Option<u64>) -> u64 {
    if let Some(s) = cli_seed {
        return s;
    }
    std::env::var("CMBX_SEED")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

fn solve_options(cli: &Cli) -> SolveOptions {
    let mut opts = SolveOptions::default();
    if let Some(t) = cli.tol_feas {
        opts.tol_feas = t;
    }
    if let Some(t) = cli.tol_opt {
        opts.tol_opt = t;
    }
    opts
}

fn emit<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = effective_seed(cli.seed);
    let opts = solve_options(&cli);
    match &cli.command {
        Command::Gen(args) => {
            let model = generate(args, seed)?;
            model.save(&args.out)?;
            eprintln!("wrote {} instance to {}", model.meta.family, args.out.display());
            Ok(())
        }
        Command::Check(args) => check(args, seed, &cli),
        Command::Solve(args) => solve(args, &opts),
        Command::Hulltest(args) => hulltest(args, seed, cli.threads, &opts),
        Command::Bss(args) => bss(args, &opts),
        Command::Example1Report(args) => {
            let report = midpoint_candidate_report(&args.x1, &opts)?;
            emit(&report, args.out.as_deref())?;
            if !report.all_feasible {
                return Err(CliError::Verification(
                    "a midpoint candidate violated the relaxation".into(),
                ));
            }
            Ok(())
        }
    }
}

fn generate(args: &GenArgs, seed: u64) -> Result<MixedBinaryConicModel, CliError> {
    let model = match args.family {
        Family::H => model::random_h(args.n, args.m, seed)?,
        Family::R => {
            if args.m < 2 {
                return Err(CliError::Usage("family r needs --m >= 2".into()));
            }
            model::random_r(args.n, args.m, seed)?
        }
        Family::M => model::random_m(args.count_h, args.count_r, args.n, args.m, seed)?,
        Family::Fractional => model::random_fractional(args.count_h.max(1), args.n, seed)?,
        Family::Bss => model::random_bss(args.k, args.n, BssCriterion::Aic { alpha: args.alpha }, seed)?,
        Family::Drccp => model::random_drccp(args.p, args.eta2, args.m, args.n, seed)?,
        Family::Example1 => model::build_example1()?,
        Family::CondstarFail => model::build_condstar_fail()?,
    };
    Ok(model)
}

fn check(args: &CheckArgs, seed: u64, cli: &Cli) -> Result<(), CliError> {
    let model = MixedBinaryConicModel::load(&args.instance)?;
    match args.what {
        CheckKind::Submodular => {
            let mut failed = false;
            for (j, f) in model.functions.iter().enumerate() {
                match f.check_submodular()? {
                    SubmodularityCheck::Submodular => {
                        println!("function {j}: submodular");
                    }
                    SubmodularityCheck::Violated { s, t, gap } => {
                        failed = true;
                        println!(
                            "function {j}: violated by S={s:#b} T={t:#b} with gap {gap:.6e}"
                        );
                    }
                }
            }
            if failed {
                return Err(CliError::Verification("submodularity violated".into()));
            }
        }
        CheckKind::Nonneg => {
            let mut failed = false;
            for (j, f) in model.functions.iter().enumerate() {
                match f.check_nonnegative()? {
                    cmbx::set_function::NonnegativityCheck::Nonnegative => {
                        println!("function {j}: nonnegative");
                    }
                    cmbx::set_function::NonnegativityCheck::Violated { subset, value } => {
                        failed = true;
                        println!("function {j}: negative value {value:.6e} on {subset:#b}");
                    }
                }
            }
            if failed {
                return Err(CliError::Verification("nonnegativity violated".into()));
            }
        }
        CheckKind::Condstar => {
            let structural = model_condition_star(&model);
            match structural {
                StarCheck::Holds(p) => println!("structural: holds ({p:?})"),
                StarCheck::Unknown => println!("structural: unknown"),
            }
            let config = FalsifyConfig {
                seed,
                samples: args.samples,
                ..FalsifyConfig::default()
            };
            match condition_star_falsify(&model, &config)? {
                FalsifyOutcome::Witness(w) => {
                    println!(
                        "falsifier: witness at alpha = {} on block {} (violation {:.6e}) x = {:?} z = {:?}",
                        w.alpha, w.block_index, w.violation, w.x, w.z
                    );
                    if structural == StarCheck::Unknown {
                        return Err(CliError::Verification(
                            "scaling-closure condition falsified".into(),
                        ));
                    }
                }
                FalsifyOutcome::NoneFound { samples_tested } => {
                    println!("falsifier: none found ({samples_tested} samples)");
                }
                FalsifyOutcome::Inconclusive { reason } => {
                    println!("falsifier: inconclusive ({reason})");
                }
            }
            let _ = cli;
        }
    }
    Ok(())
}

fn write_trace(path: &Path, result: &SolveResult) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Usage(e.to_string()))?;
    w.write_record(["iteration", "lp_value", "max_violation", "cuts_added"])
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(trace) = &result.trace {
        for row in trace {
            w.write_record([
                row.iteration.to_string(),
                format!("{:.17e}", row.lp_value),
                format!("{:.17e}", row.max_violation),
                row.cuts_added.to_string(),
            ])
            .map_err(|e| CliError::Usage(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn solve(args: &SolveArgs, opts: &SolveOptions) -> Result<(), CliError> {
    let model = MixedBinaryConicModel::load(&args.instance)?;
    let mut opts = opts.clone();
    opts.trace = args.trace.is_some();
    let result = match args.mode {
        SolveMode::Relax => solve_relaxation(&model, &opts)?,
        SolveMode::Exact => solve_exact_enumeration(&model, &opts)?,
        SolveMode::Bnb => solve_branch_and_bound(&model, &opts)?,
    };
    if let Some(path) = &args.trace {
        write_trace(path, &result)?;
    }
    eprintln!(
        "status {:?}, value {:.9}, bound {:.9}, cuts {}, nodes {}",
        result.status, result.value, result.bound, result.cuts_added, result.nodes
    );
    emit(&result, args.out.as_deref())?;
    if result.status == SolveStatus::CapHit {
        return Err(CliError::Verification("iteration or node cap hit".into()));
    }
    Ok(())
}

fn hulltest(args: &HulltestArgs, seed: u64, threads: usize, opts: &SolveOptions) -> Result<(), CliError> {
    let model = MixedBinaryConicModel::load(&args.instance)?;
    let report = hull_equality_test(&model, args.objectives, seed, threads, opts)?;
    eprintln!(
        "instance {}: {}/{} rows passed, max gap {:.3e}, hypotheses {}",
        report.instance,
        report.summary.trials - report.summary.failures,
        report.summary.trials,
        report.summary.max_gap,
        if report.hypotheses_met { "met" } else { "NOT met" },
    );
    if let Some(path) = &args.csv {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Usage(e.to_string()))?;
        w.write_record([
            "objective_seed",
            "relaxation",
            "exact",
            "rel_gap",
            "bound_inflations",
            "failed",
        ])
        .map_err(|e| CliError::Usage(e.to_string()))?;
        for row in &report.rows {
            w.write_record([
                row.objective_seed.to_string(),
                format!("{:.17e}", row.relaxation),
                format!("{:.17e}", row.exact),
                format!("{:.3e}", row.rel_gap),
                row.bound_inflations.to_string(),
                row.failed.to_string(),
            ])
            .map_err(|e| CliError::Usage(e.to_string()))?;
        }
        w.flush()?;
    }
    emit(&report, args.out.as_deref())?;
    if !report.passed() {
        return Err(CliError::Verification(format!(
            "{} hull rows failed",
            report.summary.failures
        )));
    }
    Ok(())
}

fn parse_bss_csv(path: &Path) -> Result<(Vec<Vec<f64>>, Vec<f64>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut u = Vec::new();
    let mut a = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Usage(format!("csv: {e}")))?;
        let line = idx + 2; // header is line 1
        let mut row: Vec<f64> = Vec::with_capacity(record.len());
        for field in record.iter() {
            row.push(field.trim().parse().map_err(|_| {
                CliError::Usage(format!("line {line}: '{field}' is not a number"))
            })?);
        }
        if row.len() < 2 {
            return Err(CliError::Usage(format!(
                "line {line}: need at least one feature and a response"
            )));
        }
        let resp = row.pop().unwrap();
        if let Some(first) = u.first() {
            let len: usize = Vec::len(first);
            if row.len() != len {
                return Err(CliError::Usage(format!(
                    "line {line}: expected {len} features, found {}",
                    row.len()
                )));
            }
        }
        u.push(row);
        a.push(resp);
    }
    if u.is_empty() {
        return Err(CliError::Usage("csv has no data rows".into()));
    }
    Ok((u, a))
}

#[derive(serde::Serialize)]
struct BssOutput {
    selected: Vec<usize>,
    objective: f64,
    coefficients: Vec<f64>,
    result: SolveResult,
}

fn bss(args: &BssArgs, opts: &SolveOptions) -> Result<(), CliError> {
    let (u, a) = parse_bss_csv(&args.csv)?;
    let criterion = match args.criterion.as_str() {
        "aic" => BssCriterion::Aic { alpha: args.alpha },
        "bic" => BssCriterion::Bic { alpha: args.alpha },
        "aicc" => BssCriterion::Aicc { alpha: args.alpha },
        other => {
            return Err(CliError::Usage(format!(
                "unknown criterion '{other}' (aic|bic|aicc)"
            )))
        }
    };
    let model = model::build_bss(&u, &a, args.bigm, criterion, model::DEFAULT_BOX)?;
    let result = solve_branch_and_bound(&model, opts)?;
    if result.status != SolveStatus::Optimal {
        return Err(CliError::Verification(format!(
            "solve ended with status {:?}",
            result.status
        )));
    }
    let selected: Vec<usize> = result
        .point
        .z
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.5)
        .map(|(i, _)| i + 1)
        .collect();
    let coefficients = result.point.x[2..].to_vec();
    eprintln!(
        "selected features {:?}, objective {:.9}",
        selected, result.value
    );
    let out = BssOutput {
        selected,
        objective: result.value,
        coefficients,
        result,
    };
    emit(&out, args.out.as_deref())?;
    Ok(())
}
