//! Benchmark runs of the best-first planner against exhaustive enumeration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::Weight;
use crate::model::Problem;
use crate::oracle::{enumerate_all, Cap, EnumerationCaps, OracleError};
use crate::parser::{load_problem, parse_domain_named, ParseError};
use crate::progression::ProgressOptions;
use crate::search::{solve, SearchConfig, SearchError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    BestFirst,
    BruteForce,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::BestFirst => "bestfirst",
            Mode::BruteForce => "bruteforce",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Timeout,
    NoPlan,
}

/// One planner run. Field names follow the published statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub mode: Mode,
    /// Plans enumerated; brute force only. A lower bound on timeout.
    #[serde(rename = "planCount")]
    pub plan_count: Option<usize>,
    #[serde(rename = "NE")]
    pub ne: u64,
    #[serde(rename = "NC")]
    pub nc: u64,
    pub seconds: f64,
    #[serde(rename = "PL")]
    pub pl: usize,
    /// Best weight found, written as in preference files.
    pub weight: Option<String>,
    pub status: Status,
}

impl RunRecord {
    pub fn weight(&self) -> Option<Weight> {
        self.weight.as_deref().and_then(Weight::parse)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub timeout: Option<Duration>,
    pub tiebreak_lex: bool,
    pub progress: ProgressOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            timeout: Some(Duration::from_secs(60)),
            tiebreak_lex: false,
            progress: ProgressOptions::standard(),
        }
    }
}

pub fn run(id: &str, problem: &Problem, mode: Mode, options: &RunOptions) -> RunRecord {
    let mut rec = RunRecord {
        problem: id.to_string(),
        mode,
        plan_count: None,
        ne: 0,
        nc: 0,
        seconds: 0.0,
        pl: 0,
        weight: None,
        status: Status::Ok,
    };
    match mode {
        Mode::BestFirst => {
            let config = SearchConfig {
                timeout: options.timeout,
                tiebreak_lex: options.tiebreak_lex,
                progress: options.progress.clone(),
                ..SearchConfig::default()
            };
            let stats = match solve(problem, &config) {
                Ok(sol) => {
                    rec.weight = Some(sol.weight.to_string());
                    sol.stats
                }
                Err(e) => {
                    rec.status = match &e {
                        SearchError::NoPlan(_) => Status::NoPlan,
                        SearchError::ResourceLimit { .. } => Status::Timeout,
                    };
                    e.stats().clone()
                }
            };
            rec.ne = stats.expanded;
            rec.nc = stats.considered;
            rec.seconds = stats.elapsed.as_secs_f64();
            rec.pl = stats.plan_length;
        }
        Mode::BruteForce => {
            let max_seconds = options.timeout.map_or(f64::INFINITY, |t| t.as_secs_f64());
            let caps = EnumerationCaps { max_seconds, ..EnumerationCaps::default() };
            let result = match enumerate_all(problem, &caps) {
                Ok(r) => r,
                Err(OracleError::CapExceeded { cap, partial }) => {
                    rec.status = Status::Timeout;
                    if cap == Cap::Time {
                        rec.seconds = max_seconds;
                    }
                    *partial
                }
                Err(OracleError::Semantics(e)) => panic!("grounded preference failed to evaluate: {e}"),
            };
            if result.complete && result.plan_count == 0 {
                rec.status = Status::NoPlan;
            }
            rec.plan_count = Some(result.plan_count);
            rec.ne = result.stats.expanded;
            rec.nc = result.stats.considered;
            if rec.status != Status::Timeout {
                rec.seconds = result.stats.elapsed.as_secs_f64();
            }
            rec.pl = result.stats.plan_length;
            rec.weight = result.best_weight.map(|w| w.to_string());
        }
    }
    rec
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{0}: no problems found")]
    Empty(PathBuf),
}

#[derive(Debug, Clone)]
pub struct SuiteProblem {
    /// `NAME-k`.
    pub id: String,
    pub problem: Problem,
}

fn read(path: &Path) -> Result<String, SuiteError> {
    std::fs::read_to_string(path).map_err(|source| SuiteError::Io { path: path.to_path_buf(), source })
}

/// Loads every `NAME-k.prob` with its `NAME.htn` domain and `NAME-k.pref`
/// preference (a missing preference file means no preference), ordered by
/// name and then by k.
pub fn load_suite(dir: &Path) -> Result<Vec<SuiteProblem>, SuiteError> {
    let entries = std::fs::read_dir(dir).map_err(|source| SuiteError::Io { path: dir.to_path_buf(), source })?;
    let mut found: Vec<(String, u32, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|source| SuiteError::Io { path: dir.to_path_buf(), source })?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("prob") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        let Some((name, k)) = stem.rsplit_once('-') else { continue };
        let Ok(k) = k.parse::<u32>() else { continue };
        found.push((name.to_string(), k, path.clone()));
    }
    found.sort();
    if found.is_empty() {
        return Err(SuiteError::Empty(dir.to_path_buf()));
    }
    let mut out = Vec::new();
    let mut domain: Option<(String, Arc<crate::model::Domain>)> = None;
    for (name, k, prob_path) in found {
        let d = match &domain {
            Some((n, d)) if *n == name => d.clone(),
            _ => {
                let path = dir.join(format!("{name}.htn"));
                let d = Arc::new(parse_domain_named(&path.display().to_string(), &read(&path)?)?);
                domain = Some((name.clone(), d.clone()));
                d
            }
        };
        let pref_path = dir.join(format!("{name}-{k}.pref"));
        let pref = if pref_path.exists() { read(&pref_path)? } else { String::new() };
        let problem = load_problem(
            d,
            &prob_path.display().to_string(),
            &read(&prob_path)?,
            &pref_path.display().to_string(),
            &pref,
        )?;
        out.push(SuiteProblem { id: format!("{name}-{k}"), problem });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub brute: RunRecord,
    pub best: RunRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{problem}: best-first weight {best} but brute force found {brute}")]
pub struct WeightMismatch {
    pub problem: String,
    pub best: String,
    pub brute: String,
}

/// Pairs the two runs of every problem, sorted by the number of plans the
/// brute-force run enumerated. Fails when best-first returns a worse weight
/// than enumeration found, or a different one when both finished.
pub fn bench_table(records: &[RunRecord]) -> Result<BenchTable, WeightMismatch> {
    let mut rows = Vec::new();
    for brute in records.iter().filter(|r| r.mode == Mode::BruteForce) {
        let Some(best) = records.iter().find(|r| r.mode == Mode::BestFirst && r.problem == brute.problem) else {
            continue;
        };
        let mismatch = match (best.weight(), brute.weight()) {
            (Some(b), Some(o)) => b > o || (b != o && brute.status == Status::Ok && best.status == Status::Ok),
            (None, Some(_)) => best.status == Status::NoPlan,
            (Some(_), None) => brute.status == Status::NoPlan,
            (None, None) => false,
        };
        if mismatch {
            return Err(WeightMismatch {
                problem: brute.problem.clone(),
                best: best.weight.clone().unwrap_or_else(|| "none".into()),
                brute: brute.weight.clone().unwrap_or_else(|| "none".into()),
            });
        }
        rows.push(BenchRow { brute: brute.clone(), best: best.clone() });
    }
    rows.sort_by_key(|r| (r.brute.plan_count.unwrap_or(0), r.brute.status == Status::Timeout));
    Ok(BenchTable { rows })
}

fn marked(value: String, timeout: bool) -> String {
    if timeout {
        format!(">{value}")
    } else {
        value
    }
}

impl fmt::Display for BenchTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>9} | {:>9} {:>9} | {:>9} {:>9} {:>9} {:>4} | {:>7}",
            "problem", "# plans", "NE", "time", "NE", "NC", "time", "PL", "weight"
        )?;
        writeln!(f, "{:<16} {:>9} | {:^19} | {:^41} |", "", "", "brute force", "best first")?;
        for r in &self.rows {
            let bt = r.brute.status == Status::Timeout;
            let ft = r.best.status == Status::Timeout;
            let weight = match (&r.best.weight, &r.brute.weight) {
                (Some(w), _) | (None, Some(w)) => w.clone(),
                _ => "-".into(),
            };
            writeln!(
                f,
                "{:<16} {:>9} | {:>9} {:>9} | {:>9} {:>9} {:>9} {:>4} | {:>7}",
                r.brute.problem,
                marked(r.brute.plan_count.unwrap_or(0).to_string(), bt),
                marked(r.brute.ne.to_string(), bt),
                marked(format!("{:.3}", r.brute.seconds), bt),
                marked(r.best.ne.to_string(), ft),
                marked(r.best.nc.to_string(), ft),
                marked(format!("{:.3}", r.best.seconds), ft),
                if r.best.status == Status::Ok { r.best.pl.to_string() } else { "-".into() },
                weight
            )?;
        }
        Ok(())
    }
}
