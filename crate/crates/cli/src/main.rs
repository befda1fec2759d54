use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context as _;
use clap::{Parser, Subcommand, ValueEnum};

use htnpref::bench::{bench_table, load_suite, run, Mode, RunOptions, RunRecord, Status};
use htnpref::oracle::{cross_check, enumerate_all, Cap, EnumerationCaps, OracleError};
use htnpref::parser::{load_problem, parse_domain_named};
use htnpref::progression::ProgressOptions;
use htnpref::search::{solve, SearchConfig, SearchError, SearchStats};
use htnpref::{Plan, Problem};

const EXIT_NO_PLAN: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;
const EXIT_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "htnpref", version, about = "HTN planning with temporal preferences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Bestfirst,
    Bruteforce,
}

#[derive(Subcommand)]
enum Command {
    /// Find a most preferred plan for one problem.
    Solve {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        prefs: PathBuf,
        #[arg(long, value_enum, default_value = "bestfirst")]
        mode: ModeArg,
        /// Wall-clock limit in seconds.
        #[arg(long, value_parser = seconds)]
        timeout: Option<Duration>,
        /// Print a single JSON record instead of the plan.
        #[arg(long)]
        json: bool,
        /// Break ties among optimal plans by the vector of constituent weights.
        #[arg(long)]
        tiebreak_lex: bool,
        /// Bound hold constructs exactly as published (not admissible).
        #[arg(long)]
        paper_literal_hold: bool,
    },
    /// Run both planners on every problem of a suite and print a table.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, value_parser = seconds, default_value = "60")]
        timeout: Duration,
        /// File receiving one JSON record per run.
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-check the planner against enumeration on every problem of a suite.
    Check {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, value_parser = seconds, default_value = "60")]
        timeout: Duration,
    },
}

fn seconds(s: &str) -> Result<Duration, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(Duration::from_secs_f64(v)),
        _ => Err(format!("`{s}` is not a positive number of seconds")),
    }
}

/// An error carrying its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: EXIT_USAGE, error: e.into() }
    }
}

fn fail(code: u8, error: anyhow::Error) -> Failure {
    Failure { code, error }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load(domain: &Path, problem: &Path, prefs: &Path) -> anyhow::Result<Problem> {
    let d = Arc::new(parse_domain_named(&domain.display().to_string(), &read(domain)?)?);
    Ok(load_problem(d, &problem.display().to_string(), &read(problem)?, &prefs.display().to_string(), &read(prefs)?)?)
}

fn print_stats(
    out: &mut impl std::io::Write,
    mode: &str,
    plan_count: Option<usize>,
    stats: &SearchStats,
) -> std::io::Result<()> {
    writeln!(out, "mode: {mode}")?;
    if let Some(n) = plan_count {
        writeln!(out, "plans: {n}")?;
    }
    writeln!(out, "NE: {}", stats.expanded)?;
    writeln!(out, "NC: {}", stats.considered)?;
    writeln!(out, "PL: {}", stats.plan_length)?;
    writeln!(out, "seconds: {:.3}", stats.elapsed.as_secs_f64())
}

fn print_plan(out: &mut impl std::io::Write, plan: &Plan) -> std::io::Result<()> {
    for op in &plan.ops {
        writeln!(out, "{op}")?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    domain: &Path,
    problem: &Path,
    prefs: &Path,
    mode: ModeArg,
    timeout: Option<Duration>,
    json: bool,
    tiebreak_lex: bool,
    paper_literal_hold: bool,
) -> Result<(), Failure> {
    let p = load(domain, problem, prefs)?;
    let id = problem.file_stem().map_or_else(|| p.name.to_string(), |s| s.to_string_lossy().into_owned());
    let progress = ProgressOptions { paper_literal_hold, ..ProgressOptions::standard() };
    if json {
        let mode = match mode {
            ModeArg::Bestfirst => Mode::BestFirst,
            ModeArg::Bruteforce => Mode::BruteForce,
        };
        let options = RunOptions { timeout, tiebreak_lex, progress };
        let rec: RunRecord = run(&id, &p, mode, &options);
        println!("{}", serde_json::to_string(&rec)?);
        return match rec.status {
            Status::Ok => Ok(()),
            Status::NoPlan => Err(fail(EXIT_NO_PLAN, anyhow::anyhow!("no plan"))),
            Status::Timeout => Err(fail(EXIT_TIMEOUT, anyhow::anyhow!("timeout"))),
        };
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match mode {
        ModeArg::Bestfirst => {
            let config = SearchConfig { timeout, tiebreak_lex, progress, ..SearchConfig::default() };
            match solve(&p, &config) {
                Ok(sol) => {
                    print_plan(&mut out, &sol.plan)?;
                    writeln!(out, "weight: {}", sol.weight)?;
                    print_stats(&mut out, "bestfirst", None, &sol.stats)?;
                    Ok(())
                }
                Err(e) => {
                    print_stats(&mut out, "bestfirst", None, e.stats())?;
                    let code = if matches!(e, SearchError::NoPlan(_)) { EXIT_NO_PLAN } else { EXIT_TIMEOUT };
                    Err(fail(code, e.into()))
                }
            }
        }
        ModeArg::Bruteforce => {
            let caps = EnumerationCaps {
                max_seconds: timeout.map_or(f64::INFINITY, |t| t.as_secs_f64()),
                ..EnumerationCaps::default()
            };
            match enumerate_all(&p, &caps) {
                Ok(r) => match (&r.best_plan, r.best_weight) {
                    (Some(plan), Some(w)) => {
                        print_plan(&mut out, plan)?;
                        writeln!(out, "weight: {w}")?;
                        print_stats(&mut out, "bruteforce", Some(r.plan_count), &r.stats)?;
                        Ok(())
                    }
                    _ => {
                        print_stats(&mut out, "bruteforce", Some(0), &r.stats)?;
                        Err(fail(EXIT_NO_PLAN, anyhow::anyhow!("no plan")))
                    }
                },
                Err(OracleError::CapExceeded { cap, partial }) => {
                    print_stats(&mut out, "bruteforce", Some(partial.plan_count), &partial.stats)?;
                    let code = if cap == Cap::Time { EXIT_TIMEOUT } else { EXIT_FAILED };
                    Err(fail(code, anyhow::anyhow!("enumeration stopped: {cap:?} limit")))
                }
                Err(e) => Err(fail(EXIT_FAILED, e.into())),
            }
        }
    }
}

fn cmd_bench(suite: &Path, timeout: Duration, out_path: &Path) -> Result<(), Failure> {
    let problems = load_suite(suite)?;
    let options = RunOptions { timeout: Some(timeout), ..RunOptions::default() };
    let mut records = Vec::new();
    let mut machine = String::new();
    for sp in &problems {
        for mode in [Mode::BruteForce, Mode::BestFirst] {
            let rec = run(&sp.id, &sp.problem, mode, &options);
            machine.push_str(&serde_json::to_string(&rec)?);
            machine.push('\n');
            records.push(rec);
        }
    }
    fs::write(out_path, machine).with_context(|| format!("cannot write {}", out_path.display()))?;
    let table = bench_table(&records).map_err(|e| fail(EXIT_FAILED, e.into()))?;
    print!("{table}");
    Ok(())
}

fn cmd_check(suite: &Path, timeout: Duration) -> Result<(), Failure> {
    let problems = load_suite(suite)?;
    let caps = EnumerationCaps { max_seconds: timeout.as_secs_f64(), ..EnumerationCaps::default() };
    let mut failed = 0;
    for sp in &problems {
        let report = cross_check(&sp.problem, &caps, &ProgressOptions::standard())
            .map_err(|e| fail(EXIT_FAILED, anyhow::anyhow!("{}: {e}", sp.id)))?;
        print!("{report}");
        if !report.passed() {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(fail(EXIT_FAILED, anyhow::anyhow!("{failed} of {} problems failed", problems.len())));
    }
    println!("all {} problems passed", problems.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Solve { domain, problem, prefs, mode, timeout, json, tiebreak_lex, paper_literal_hold } => {
            cmd_solve(&domain, &problem, &prefs, mode, timeout, json, tiebreak_lex, paper_literal_hold)
        }
        Command::Bench { suite, timeout, out } => cmd_bench(&suite, timeout, &out),
        Command::Check { suite, timeout } => cmd_check(&suite, timeout),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = std::io::stdout().flush();
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
