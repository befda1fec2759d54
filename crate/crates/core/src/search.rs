//! Best-first search over partial decompositions.
//!
//! Every frontier node sits just after an operator (or at the root) and carries
//! the preference formula progressed along its trace. Nodes are popped in order
//! of optimistic weight, then pessimistic weight, then plan length, then
//! insertion order; the first complete node popped is optimal because the
//! optimistic weight never overestimates the weight of any completion.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::decompose::{Cursor, Decomposer, Step};
use crate::formula::Weight;
use crate::model::{Event, Plan, Problem, Trace};
use crate::progression::{Bounds, Lookahead, ProgressOptions, ProgressedFormula, Progressor, Reachability};

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub max_expansions: Option<u64>,
    pub timeout: Option<Duration>,
    /// Maximum number of nested task instances.
    pub depth_cap: usize,
    /// Among plans of optimal weight prefer the lexicographically smallest
    /// vector of top-level constituent weights.
    pub tiebreak_lex: bool,
    pub progress: ProgressOptions,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_expansions: None,
            timeout: None,
            depth_cap: 64,
            tiebreak_lex: false,
            progress: ProgressOptions::standard(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Operator applications (NE).
    pub expanded: u64,
    /// Frontier insertions, root included (NC).
    pub considered: u64,
    pub elapsed: Duration,
    /// Operators in the returned plan (PL).
    pub plan_length: usize,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub plan: Plan,
    pub trace: Trace,
    pub weight: Weight,
    pub stats: SearchStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limit {
    Expansions,
    Time,
    Depth,
}

#[derive(Debug, Clone, Error)]
pub enum SearchError {
    #[error("no plan exists")]
    NoPlan(SearchStats),
    #[error("resource limit reached ({limit:?})")]
    ResourceLimit { limit: Limit, stats: SearchStats },
}

impl SearchError {
    pub fn stats(&self) -> &SearchStats {
        match self {
            SearchError::NoPlan(s) | SearchError::ResourceLimit { stats: s, .. } => s,
        }
    }
}

/// Events of a node's trace, stored as shared segments back to the root.
#[derive(Debug)]
struct Segment {
    events: Vec<Event>,
    prev: Option<Arc<Segment>>,
}

fn materialize(problem: &Problem, last: &Option<Arc<Segment>>) -> Trace {
    let mut segments = Vec::new();
    let mut cur = last.as_deref();
    while let Some(s) = cur {
        segments.push(s);
        cur = s.prev.as_deref();
    }
    let mut trace = Trace::new(problem.init.clone());
    for s in segments.iter().rev() {
        for e in &s.events {
            trace.push(e.clone()).expect("search emits legal events");
        }
    }
    trace
}

#[derive(Debug)]
struct Node {
    cursor: Cursor,
    formula: ProgressedFormula,
    bounds: Bounds,
    plan_length: usize,
    trace: Option<Arc<Segment>>,
}

struct Entry {
    key: (Weight, Weight, usize, u64),
    node: Node,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

#[derive(Default)]
struct Frontier {
    heap: BinaryHeap<Reverse<Entry>>,
    seq: u64,
}

impl Frontier {
    fn push(&mut self, node: Node) {
        let key = (node.bounds.opt, node.bounds.pess, node.plan_length, self.seq);
        self.seq += 1;
        self.heap.push(Reverse(Entry { key, node }));
    }

    fn pop(&mut self) -> Option<Node> {
        self.heap.pop().map(|Reverse(e)| e.node)
    }

    fn peek_opt(&self) -> Option<Weight> {
        self.heap.peek().map(|Reverse(e)| e.key.0)
    }
}

struct Searcher<'a> {
    problem: &'a Problem,
    config: &'a SearchConfig,
    progressor: Progressor,
    reach: Reachability,
    decomposer: Decomposer<'a>,
    stats: SearchStats,
    start: Instant,
}

impl Searcher<'_> {
    fn bounds(&self, cursor: &Cursor, formula: &ProgressedFormula) -> Bounds {
        let set = cursor.agenda.lookahead(&self.reach);
        formula.bounds(&self.progressor, &Lookahead { reach: &self.reach, set: Some(&set), state: &cursor.state })
    }

    fn root(&self) -> Node {
        let cursor = Decomposer::root(&self.problem.network, &self.problem.init);
        let formula = ProgressedFormula::new(
            &self.progressor,
            &self.problem.preference,
            &self.problem.init,
            cursor.is_terminal(),
        );
        let bounds = self.bounds(&cursor, &formula);
        Node { cursor, formula, bounds, plan_length: 0, trace: None }
    }

    fn child(&self, parent: &Node, step: Step) -> Node {
        let terminal = step.cursor.is_terminal();
        let formula = parent.formula.progress_events(&self.progressor, &step.events, &step.states, terminal);
        let bounds = self.bounds(&step.cursor, &formula);
        Node {
            cursor: step.cursor,
            formula,
            bounds,
            plan_length: parent.plan_length + usize::from(step.applied_operator),
            trace: Some(Arc::new(Segment { events: step.events, prev: parent.trace.clone() })),
        }
    }

    /// Bounds are guaranteed admissible unless a comparison or fault mode is on.
    fn admissible(&self) -> bool {
        !self.config.progress.paper_literal_hold && !self.config.progress.fault
    }

    fn limit(&self) -> Option<Limit> {
        if self.config.max_expansions.is_some_and(|m| self.stats.expanded >= m) {
            return Some(Limit::Expansions);
        }
        if self.config.timeout.is_some_and(|t| self.start.elapsed() >= t) {
            return Some(Limit::Time);
        }
        None
    }

    fn fail(&mut self, limit: Limit) -> SearchError {
        self.stats.elapsed = self.start.elapsed();
        SearchError::ResourceLimit { limit, stats: self.stats.clone() }
    }

    fn expand(&mut self, node: &Node, frontier: &mut Frontier) -> Result<(), SearchError> {
        let steps = match self.decomposer.expand(&node.cursor) {
            Ok(s) => s,
            Err(_) => return Err(self.fail(Limit::Depth)),
        };
        for step in steps {
            if step.applied_operator {
                self.stats.expanded += 1;
            }
            let child = self.child(node, step);
            debug_assert!(
                !self.admissible() || (child.bounds.opt >= node.bounds.opt && child.bounds.pess <= node.bounds.pess)
            );
            frontier.push(child);
            self.stats.considered += 1;
        }
        Ok(())
    }

    fn run(&mut self) -> Result<Solution, SearchError> {
        let mut frontier = Frontier::default();
        frontier.push(self.root());
        self.stats.considered = 1;
        let mut max_popped = Weight::MIN;
        let mut best: Option<(Vec<Weight>, Node)> = None;
        loop {
            if let Some((_, found)) = &best {
                if frontier.peek_opt().is_none_or(|w| w > found.bounds.opt) {
                    break;
                }
            }
            let Some(node) = frontier.pop() else { break };
            debug_assert!(!self.admissible() || node.bounds.opt >= max_popped, "frontier order violated");
            max_popped = max_popped.max(node.bounds.opt);
            if node.cursor.is_terminal() {
                debug_assert!(node.bounds.is_exact());
                if !self.config.tiebreak_lex {
                    best = Some((Vec::new(), node));
                    break;
                }
                let look = Lookahead { reach: &self.reach, set: None, state: &node.cursor.state };
                let vector: Vec<Weight> =
                    node.formula.constituent_bounds(&self.progressor, &look).iter().map(|b| b.pess).collect();
                if best.as_ref().is_none_or(|(v, _)| vector < *v) {
                    best = Some((vector, node));
                }
                continue;
            }
            if let Some(limit) = self.limit() {
                return Err(self.fail(limit));
            }
            self.expand(&node, &mut frontier)?;
        }
        self.stats.elapsed = self.start.elapsed();
        let Some((_, node)) = best else {
            return Err(SearchError::NoPlan(self.stats.clone()));
        };
        debug_assert!(!self.admissible() || max_popped <= node.bounds.opt, "popped a node above the optimal weight");
        let trace = materialize(self.problem, &node.trace);
        let plan = trace.plan();
        self.stats.plan_length = plan.len();
        Ok(Solution { plan, trace, weight: node.bounds.opt, stats: self.stats.clone() })
    }
}

/// Finds a plan of minimal preference weight.
pub fn solve(problem: &Problem, config: &SearchConfig) -> Result<Solution, SearchError> {
    let start = Instant::now();
    let mut s = Searcher {
        problem,
        config,
        progressor: Progressor::new(problem, config.progress.clone()),
        reach: Reachability::new(&problem.domain),
        decomposer: Decomposer::new(&problem.domain, config.depth_cap),
        stats: SearchStats::default(),
        start,
    };
    s.run()
}
