//! Independent solution checker.
//!
//! Replays a trace from the initial state and parses its start/end structure
//! back into a decomposition of the problem's task network, checking every
//! method choice, precondition, ordering and before-constraint along the way.
//! It deliberately does not reuse [`crate::decompose`].

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{Bindings, Event, Problem, Task, TaskNetwork, Trace, UnitKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid solution at event {index}: {message}")]
pub struct ValidationError {
    pub index: usize,
    pub message: String,
}

struct Checker<'a> {
    problem: &'a Problem,
    trace: &'a Trace,
    /// Start position to end position for every unit instance.
    ends: BTreeMap<usize, usize>,
}

fn fail<T>(index: usize, message: impl Into<String>) -> Result<T, ValidationError> {
    Err(ValidationError { index, message: message.into() })
}

impl Checker<'_> {
    /// Parses `network` starting at event `pos`; returns the position after it.
    fn network(&self, network: &TaskNetwork, pos: usize, limit: usize) -> Result<usize, ValidationError> {
        if !network.unordered {
            let mut p = pos;
            for (k, t) in network.tasks.iter().enumerate() {
                p = self.member(network, k, t, p, limit)?;
            }
            return Ok(p);
        }
        let mut remaining: Vec<usize> = (0..network.tasks.len()).collect();
        self.unordered(network, &mut remaining, pos, limit)
    }

    fn unordered(
        &self,
        network: &TaskNetwork,
        remaining: &mut Vec<usize>,
        pos: usize,
        limit: usize,
    ) -> Result<usize, ValidationError> {
        if remaining.is_empty() {
            return Ok(pos);
        }
        let mut last_err = None;
        for i in 0..remaining.len() {
            let k = remaining.remove(i);
            let attempt = self
                .member(network, k, &network.tasks[k], pos, limit)
                .and_then(|p| self.unordered(network, remaining, p, limit));
            remaining.insert(i, k);
            match attempt {
                Ok(p) => return Ok(p),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.expect("nonempty"))
    }

    fn member(
        &self,
        network: &TaskNetwork,
        k: usize,
        t: &Task,
        pos: usize,
        limit: usize,
    ) -> Result<usize, ValidationError> {
        for c in network.constraints.iter().filter(|c| c.subtask == k) {
            if !self.trace.states[pos].holds(&c.literal) {
                return fail(pos, format!("before-constraint {} does not hold", c.literal));
            }
        }
        self.task(t, pos, limit)
    }

    fn task(&self, t: &Task, pos: usize, limit: usize) -> Result<usize, ValidationError> {
        let Some(args) = t.ground_args() else { return fail(pos, format!("task {t} is not ground")) };
        if pos >= limit {
            return fail(pos, format!("task {t} has no events"));
        }
        let event = &self.trace.events[pos];
        if let Some(op) = self.problem.domain.operator(&t.symbol) {
            return match event {
                Event::Op { op: g, .. } if g.action.name == op.name && g.action.args == args => {
                    let expected =
                        op.ground(&args).map_err(|e| ValidationError { index: pos, message: e.to_string() })?;
                    if **g != expected {
                        return fail(pos, format!("operator {} has the wrong effects", g.action));
                    }
                    Ok(pos + 1)
                }
                _ => fail(pos, format!("expected operator {t}, found {event}")),
            };
        }
        let Event::Start(task_unit) = event else { return fail(pos, format!("expected start of {t}, found {event}")) };
        match &*task_unit.kind {
            UnitKind::Task { symbol, args: a } if *symbol == t.symbol && *a == args => {}
            _ => return fail(pos, format!("expected start of {t}, found {event}")),
        }
        let end = self.ends[&pos];
        if end >= limit {
            return fail(pos, format!("{t} ends outside its parent"));
        }
        let mpos = pos + 1;
        let Some(Event::Start(method_unit)) = self.trace.events.get(mpos) else {
            return fail(mpos, format!("{t} is not decomposed by a method"));
        };
        let UnitKind::Method { branch, task, bindings } = &*method_unit.kind else {
            return fail(mpos, "expected a method start");
        };
        if *task != t.symbol {
            return fail(mpos, format!("method {branch} applied to the wrong task"));
        }
        let Some(m) = self.problem.domain.method_branch(branch) else {
            return fail(mpos, format!("unknown method {branch}"));
        };
        if m.params.len() != bindings.len() {
            return fail(mpos, format!("method {branch} has {} bound values", bindings.len()));
        }
        let b: Bindings = m.params.iter().cloned().zip(bindings.iter().cloned()).collect();
        if m.head.substitute(&b).ground_args().as_ref() != Some(&args) || m.head.symbol != t.symbol {
            return fail(mpos, format!("method {branch} does not decompose {t}"));
        }
        for l in &m.pre {
            if !self.trace.states[mpos].holds(&l.substitute(&b)) {
                return fail(mpos, format!("method {branch} precondition {} fails", l.substitute(&b)));
            }
        }
        let mend = self.ends[&mpos];
        if mend + 1 != end {
            return fail(mend, format!("method {branch} does not end right before {t}"));
        }
        let sub = TaskNetwork {
            tasks: m.network.tasks.iter().map(|s| s.substitute(&b)).collect(),
            unordered: m.network.unordered,
            constraints: m
                .network
                .constraints
                .iter()
                .map(|c| crate::model::BeforeConstraint { literal: c.literal.substitute(&b), subtask: c.subtask })
                .collect(),
        };
        let after = self.network(&sub, mpos + 1, mend)?;
        if after != mend {
            return fail(after, format!("unexpected event inside {branch}"));
        }
        Ok(end + 1)
    }
}

/// Checks that `trace` is a legal decomposition of `problem` ending with every
/// task accomplished.
pub fn check_solution(problem: &Problem, trace: &Trace) -> Result<(), ValidationError> {
    if trace.states.first() != Some(&problem.init) {
        return fail(0, "trace does not start in the initial state");
    }
    trace.validate().map_err(|e| ValidationError { index: 0, message: e.to_string() })?;
    let mut open = BTreeMap::new();
    let mut ends = BTreeMap::new();
    for (i, e) in trace.events.iter().enumerate() {
        match e {
            Event::Start(u) => {
                open.insert(u.id, i);
            }
            Event::End(u) => {
                let s = open.remove(&u.id).expect("validated traces end only started units");
                ends.insert(s, i);
            }
            Event::Op { .. } => {}
        }
    }
    if let Some((_, &i)) = open.iter().next() {
        return fail(i, "unit never ends");
    }
    let c = Checker { problem, trace, ends };
    let n = trace.events.len();
    let end = c.network(&problem.network, 0, n)?;
    if end != n {
        return fail(end, "events after the task network is complete");
    }
    Ok(())
}
