//! Exhaustive plan enumeration with posthoc preference evaluation, and a
//! cross-check of the best-first planner against it.

use std::fmt;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::decompose::{Cursor, Decomposer};
use crate::formula::{Bdf, Weight};
use crate::model::{Plan, Problem, Trace};
use crate::progression::{Bounds, Lookahead, ProgressOptions, ProgressedFormula, Progressor, Reachability};
use crate::search::{solve, SearchConfig, SearchError, SearchStats};
use crate::semantics::{satisfies, weight_gpf, SemanticsError};
use crate::validate::check_solution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumerationCaps {
    pub max_plans: usize,
    /// Maximum number of nested task instances.
    pub max_depth: usize,
    pub max_seconds: f64,
}

impl Default for EnumerationCaps {
    fn default() -> Self {
        EnumerationCaps { max_plans: 1_000_000, max_depth: 64, max_seconds: 600.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cap {
    Plans,
    Depth,
    Time,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub plan_count: usize,
    pub best_plan: Option<Plan>,
    pub best_trace: Option<Trace>,
    pub best_weight: Option<Weight>,
    /// Weight of every plan, in enumeration order.
    pub all_weights: Vec<Weight>,
    /// `expanded` counts operator applications; `elapsed` excludes preference evaluation.
    pub stats: SearchStats,
    pub complete: bool,
}

#[derive(Debug, Clone, Error)]
pub enum OracleError {
    #[error("enumeration cap exceeded ({cap:?}) after {} plans", partial.plan_count)]
    CapExceeded { cap: Cap, partial: Box<OracleResult> },
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

enum Stop {
    Cap(Cap),
    Semantics(SemanticsError),
}

struct Enumerator<'a> {
    problem: &'a Problem,
    caps: EnumerationCaps,
    decomposer: Decomposer<'a>,
    universe: Vec<crate::model::Symbol>,
    start: Instant,
    evaluating: Duration,
    result: OracleResult,
}

impl Enumerator<'_> {
    fn record(&mut self, trace: &Trace) -> Result<(), Stop> {
        if self.result.plan_count >= self.caps.max_plans {
            return Err(Stop::Cap(Cap::Plans));
        }
        let t0 = Instant::now();
        let w = weight_gpf(trace, &self.problem.preference, &self.universe).map_err(Stop::Semantics)?;
        self.result.plan_count += 1;
        self.result.all_weights.push(w);
        if self.result.best_weight.is_none_or(|b| w < b) {
            self.result.best_weight = Some(w);
            self.result.best_plan = Some(trace.plan());
            self.result.best_trace = Some(trace.clone());
        }
        self.evaluating += t0.elapsed();
        Ok(())
    }

    fn dfs(&mut self, cursor: &Cursor, trace: &mut Trace) -> Result<(), Stop> {
        if cursor.is_terminal() {
            return self.record(trace);
        }
        if self.start.elapsed().as_secs_f64() > self.caps.max_seconds {
            return Err(Stop::Cap(Cap::Time));
        }
        let steps = self.decomposer.expand(cursor).map_err(|_| Stop::Cap(Cap::Depth))?;
        for step in steps {
            if step.applied_operator {
                self.result.stats.expanded += 1;
            }
            let len = trace.events.len();
            trace.events.extend(step.events);
            trace.states.extend(step.states);
            let r = self.dfs(&step.cursor, trace);
            trace.events.truncate(len);
            trace.states.truncate(len + 1);
            r?;
        }
        Ok(())
    }
}

/// Enumerates every solution plan depth-first in method declaration and
/// grounding order and evaluates each with the direct semantics.
pub fn enumerate_all(problem: &Problem, caps: &EnumerationCaps) -> Result<OracleResult, OracleError> {
    let mut e = Enumerator {
        problem,
        caps: *caps,
        decomposer: Decomposer::new(&problem.domain, caps.max_depth),
        universe: problem.universe(),
        start: Instant::now(),
        evaluating: Duration::ZERO,
        result: OracleResult {
            plan_count: 0,
            best_plan: None,
            best_trace: None,
            best_weight: None,
            all_weights: Vec::new(),
            stats: SearchStats::default(),
            complete: false,
        },
    };
    let root = Decomposer::root(&problem.network, &problem.init);
    let mut trace = Trace::new(problem.init.clone());
    let outcome = e.dfs(&root, &mut trace);
    e.result.stats.elapsed = e.start.elapsed().saturating_sub(e.evaluating);
    e.result.stats.considered = e.result.stats.expanded;
    e.result.stats.plan_length = e.result.best_plan.as_ref().map_or(0, Plan::len);
    match outcome {
        Ok(()) => {
            e.result.complete = true;
            Ok(e.result)
        }
        Err(Stop::Cap(cap)) => Err(OracleError::CapExceeded { cap, partial: Box::new(e.result) }),
        Err(Stop::Semantics(s)) => Err(OracleError::Semantics(s)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossCheckReport {
    pub problem: String,
    pub plans: usize,
    pub lines: Vec<CheckLine>,
}

impl CrossCheckReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }

    fn line(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.lines.push(CheckLine { name: name.into(), passed, detail: detail.into() });
    }
}

impl fmt::Display for CrossCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{} {} {}: {}", if l.passed { "PASS" } else { "FAIL" }, self.problem, l.name, l.detail)?;
        }
        Ok(())
    }
}

/// Violation tallies gathered while walking every plan with progression.
#[derive(Default)]
struct Tally {
    plans: usize,
    progression_mismatch: usize,
    prefix_violations: usize,
    desire_violations: usize,
    /// Up to three examples per check, keyed by check.
    examples: [Vec<String>; 3],
}

impl Tally {
    fn note(&mut self, check: usize, what: String) {
        if self.examples[check].len() < 3 {
            self.examples[check].push(what);
        }
    }

    fn examples(&self, check: usize) -> String {
        self.examples[check].iter().map(|e| format!("; {e}")).collect()
    }
}

struct PrefixNode {
    bounds: Bounds,
    /// Optimistic and pessimistic status of every basic desire.
    desires: Vec<(bool, bool)>,
}

struct Walker<'a> {
    problem: &'a Problem,
    progressor: Progressor,
    reach: Reachability,
    decomposer: Decomposer<'a>,
    /// Grounded basic desires in leaf order, for direct evaluation.
    leaves: Vec<Bdf>,
    path: Vec<PrefixNode>,
    tally: Tally,
    start: Instant,
    caps: EnumerationCaps,
}

impl Walker<'_> {
    fn snapshot(&self, cursor: &Cursor, formula: &ProgressedFormula) -> PrefixNode {
        let set = cursor.agenda.lookahead(&self.reach);
        let look = Lookahead { reach: &self.reach, set: Some(&set), state: &cursor.state };
        PrefixNode {
            bounds: formula.bounds(&self.progressor, &look),
            desires: formula
                .leaves
                .iter()
                .map(|b| (self.progressor.optimistic(b, &look), self.progressor.pessimistic(b)))
                .collect(),
        }
    }

    fn complete(&mut self, trace: &Trace, formula: &ProgressedFormula) -> Result<(), Stop> {
        let universe = self.progressor.universe().to_vec();
        let direct = weight_gpf(trace, &self.problem.preference, &universe).map_err(Stop::Semantics)?;
        let progressed = formula.terminal_weight(&self.progressor, trace.last_state());
        let t = &mut self.tally;
        t.plans += 1;
        let plan = || trace.plan().ops.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ");
        if progressed != direct {
            t.progression_mismatch += 1;
            t.note(0, format!("plan [{}]: progressed {progressed}, direct {direct}", plan()));
        }
        for (i, node) in self.path.iter().enumerate() {
            let b = node.bounds;
            let mut bad = !(b.opt <= direct && direct <= b.pess);
            if i > 0 {
                let prev = self.path[i - 1].bounds;
                bad |= b.opt < prev.opt || b.pess > prev.pess;
                bad |= prev.is_exact() && !b.is_exact();
            }
            if b.is_exact() && b.opt != direct {
                bad = true;
            }
            if bad {
                t.prefix_violations += 1;
                t.note(1, format!("plan [{}]: prefix {i} bounds ({}, {}) vs final {direct}", plan(), b.opt, b.pess));
            }
        }
        let truths: Vec<bool> = self
            .leaves
            .iter()
            .map(|l| satisfies(trace, 0, l, &universe))
            .collect::<Result<_, _>>()
            .map_err(Stop::Semantics)?;
        for (i, node) in self.path.iter().enumerate() {
            for (k, &(opt, pess)) in node.desires.iter().enumerate() {
                if (pess && !truths[k]) || (!opt && truths[k]) {
                    self.tally.desire_violations += 1;
                    let detail = format!(
                        "plan [{}]: desire {k} at prefix {i} opt {opt} pess {pess} holds {}",
                        plan(),
                        truths[k]
                    );
                    self.tally.note(2, detail);
                }
            }
        }
        Ok(())
    }

    fn dfs(&mut self, cursor: &Cursor, formula: &ProgressedFormula, trace: &mut Trace) -> Result<(), Stop> {
        let node = self.snapshot(cursor, formula);
        self.path.push(node);
        let r = self.visit(cursor, formula, trace);
        self.path.pop();
        r
    }

    fn visit(&mut self, cursor: &Cursor, formula: &ProgressedFormula, trace: &mut Trace) -> Result<(), Stop> {
        if cursor.is_terminal() {
            return self.complete(trace, formula);
        }
        if self.start.elapsed().as_secs_f64() > self.caps.max_seconds {
            return Err(Stop::Cap(Cap::Time));
        }
        let steps = self.decomposer.expand(cursor).map_err(|_| Stop::Cap(Cap::Depth))?;
        for step in steps {
            let child =
                formula.progress_events(&self.progressor, &step.events, &step.states, step.cursor.is_terminal());
            let len = trace.events.len();
            trace.events.extend(step.events);
            trace.states.extend(step.states);
            let r = self.dfs(&step.cursor, &child, trace);
            trace.events.truncate(len);
            trace.states.truncate(len + 1);
            r?;
        }
        Ok(())
    }
}

fn stop_error(stop: Stop, partial: OracleResult) -> OracleError {
    match stop {
        Stop::Cap(cap) => OracleError::CapExceeded { cap, partial: Box::new(partial) },
        Stop::Semantics(s) => OracleError::Semantics(s),
    }
}

/// Runs the planner and the oracle on `problem` and checks optimality,
/// soundness, progression against the direct semantics, and the prefix bound
/// properties on every enumerated plan.
pub fn cross_check(
    problem: &Problem,
    caps: &EnumerationCaps,
    options: &ProgressOptions,
) -> Result<CrossCheckReport, OracleError> {
    let oracle = enumerate_all(problem, caps)?;
    let mut report =
        CrossCheckReport { problem: problem.name.to_string(), plans: oracle.plan_count, lines: Vec::new() };

    let consistent =
        oracle.all_weights.len() == oracle.plan_count && oracle.best_weight == oracle.all_weights.iter().min().copied();
    report.line("oracle consistency", consistent, format!("{} plans", oracle.plan_count));

    let config = SearchConfig {
        depth_cap: caps.max_depth,
        timeout: Some(Duration::from_secs_f64(caps.max_seconds)),
        progress: options.clone(),
        ..SearchConfig::default()
    };
    let universe = problem.universe();
    match (solve(problem, &config), oracle.best_weight) {
        (Ok(sol), Some(best)) => {
            report.line("optimal weight", sol.weight == best, format!("search {}, oracle {best}", sol.weight));
            let valid = check_solution(problem, &sol.trace);
            let direct = weight_gpf(&sol.trace, &problem.preference, &universe)?;
            let sound = valid.is_ok() && sol.trace.plan() == sol.plan && direct == sol.weight;
            let detail = match valid {
                Ok(()) => format!("{} operators, direct weight {direct}", sol.plan.len()),
                Err(e) => e.to_string(),
            };
            report.line("solution sound", sound, detail);
        }
        (Err(SearchError::NoPlan(_)), None) => report.line("optimal weight", true, "no plan either way"),
        (Ok(sol), None) => {
            report.line("optimal weight", false, format!("search found weight {} but oracle has no plan", sol.weight))
        }
        (Err(e), best) => report.line("optimal weight", false, format!("search failed ({e}), oracle {best:?}")),
    }

    let progressor = Progressor::new(problem, options.clone());
    let leaves = problem.preference.leaves().into_iter().map(|b| b.ground(&universe)).collect();
    let mut w = Walker {
        problem,
        reach: Reachability::new(&problem.domain),
        decomposer: Decomposer::new(&problem.domain, caps.max_depth),
        leaves,
        path: Vec::new(),
        tally: Tally::default(),
        start: Instant::now(),
        caps: *caps,
        progressor,
    };
    let root = Decomposer::root(&problem.network, &problem.init);
    let formula = ProgressedFormula::new(&w.progressor, &problem.preference, &problem.init, root.is_terminal());
    let mut trace = Trace::new(problem.init.clone());
    if let Err(stop) = w.dfs(&root, &formula, &mut trace) {
        return Err(stop_error(stop, oracle));
    }
    let t = &w.tally;
    report.line(
        "progression matches semantics",
        t.progression_mismatch == 0 && t.plans == oracle.plan_count,
        format!("{} mismatches over {} plans{}", t.progression_mismatch, t.plans, t.examples(0)),
    );
    report.line(
        "prefix bounds",
        t.prefix_violations == 0,
        format!("{} violations{}", t.prefix_violations, t.examples(1)),
    );
    report.line(
        "desire bounds",
        t.desire_violations == 0,
        format!("{} violations{}", t.desire_violations, t.examples(2)),
    );
    Ok(report)
}
