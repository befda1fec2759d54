//! Formula progression through situations and optimistic/pessimistic bounds.
//!
//! A situation is the state reached after some prefix of a trace together with
//! the event that produced it. The formula stored after situation `i` speaks
//! about situations `i + 1, i + 2, ...`; at the last situation of a complete
//! trace every formula progresses to a constant.
//!
//! Before/hold constructs are progressed through three-valued monitors instead
//! of being collapsed to the weight of the current prefix, so a construct that
//! can still be satisfied later is never counted as violated.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rustc_hash::{FxHashMap, FxHasher};

use crate::formula::{Bdf, Gpf, MethodRef, Monitor, MonitorKind, Target, TaskRef, Weight};
use crate::model::{Bindings, Domain, Event, Literal, Problem, State, Symbol, Term, Trace};

#[derive(Debug, Clone, Default)]
pub struct ProgressOptions {
    /// Flatten `and`/`or`, drop constants and duplicates after every step.
    pub simplify: bool,
    /// Bound pending before/hold constructs by their current-prefix value.
    pub paper_literal_hold: bool,
    /// Deliberately wrong progression rule, used to check that cross-checking catches it.
    #[doc(hidden)]
    pub fault: bool,
}

impl ProgressOptions {
    pub fn standard() -> ProgressOptions {
        ProgressOptions { simplify: true, ..ProgressOptions::default() }
    }
}

/// What a progression step looks at.
#[derive(Debug, Clone, Copy)]
pub struct Situation<'a> {
    /// The event that produced `state`; `None` for the initial state.
    pub last: Option<&'a Event>,
    pub state: &'a State,
    /// No further events follow.
    pub terminal: bool,
}

fn consts(args: &[Term]) -> Vec<Symbol> {
    args.iter()
        .map(|t| match t {
            Term::Const(c) => c.clone(),
            Term::Var(v) => panic!("variable ?{v} survived grounding"),
        })
        .collect()
}

fn key<T: Hash + ?Sized>(tag: u8, x: &T) -> u64 {
    let mut h = FxHasher::default();
    tag.hash(&mut h);
    x.hash(&mut h);
    h.finish()
}

/// Structural hash computed bottom-up through the nodes `Progressor::assume`
/// descends into. Every such subformula's hash is passed to `sink`.
fn node_key(phi: &Bdf, sink: &mut dyn FnMut(u64)) -> u64 {
    let mut combine = |tag: u8, children: &mut dyn Iterator<Item = &Bdf>| {
        let mut h = FxHasher::default();
        tag.hash(&mut h);
        for c in children {
            node_key(c, sink).hash(&mut h);
        }
        h.finish()
    };
    let k = match phi {
        Bdf::And(xs) => combine(1, &mut xs.iter()),
        Bdf::Or(xs) => combine(2, &mut xs.iter()),
        Bdf::Next(x) => combine(3, &mut std::iter::once(&**x)),
        Bdf::WeakNext(x) => combine(4, &mut std::iter::once(&**x)),
        Bdf::Always(x) => combine(5, &mut std::iter::once(&**x)),
        Bdf::Eventually(x) => combine(6, &mut std::iter::once(&**x)),
        Bdf::Until(a, b) => combine(7, &mut [&**a, &**b].into_iter()),
        Bdf::Release(a, b) => combine(8, &mut [&**a, &**b].into_iter()),
        Bdf::Final(l) => {
            sink(key(1, &l.atom));
            key(0, phi)
        }
        _ => key(0, phi),
    };
    sink(k);
    k
}

/// Keys a sibling must contain for `fact` to change it.
fn fact_keys(fact: &Bdf, value: bool) -> Vec<u64> {
    let mut probe = vec![node_key(fact, &mut |_| {})];
    match fact {
        Bdf::Final(l) if l.atom.is_ground() => probe.push(key(1, &l.atom)),
        Bdf::Always(x) if value => probe.push(node_key(x, &mut |_| {})),
        Bdf::Eventually(x) if !value => probe.push(node_key(x, &mut |_| {})),
        _ => {}
    }
    probe
}

fn constant(b: bool) -> Bdf {
    if b {
        Bdf::True
    } else {
        Bdf::False
    }
}

fn occurred(t: &TaskRef, e: Option<&Event>) -> bool {
    e.is_some_and(|e| e.is_task_occurrence(&t.symbol, &consts(&t.args)))
}

fn applied(m: &MethodRef, e: Option<&Event>) -> bool {
    e.is_some_and(|e| e.is_method_start(&m.branch, &consts(&m.args)))
}

fn task_terminated(t: &TaskRef, s: &State) -> bool {
    let args = consts(&t.args);
    s.any_terminated(|k| k.matches_task(&t.symbol, &args))
}

fn task_executing(t: &TaskRef, s: &State) -> bool {
    let args = consts(&t.args);
    s.any_executing(|k| k.matches_task(&t.symbol, &args))
}

fn target_terminated(x: &Target, s: &State) -> bool {
    match x {
        Target::Task(t) => task_terminated(t, s),
        Target::Method(m) => {
            let args = consts(&m.args);
            s.any_terminated(|k| k.matches_method(&m.branch, &args))
        }
    }
}

/// First task terminated, second neither executing nor terminated.
fn before_ready(t1: &TaskRef, t2: &TaskRef, s: &State) -> bool {
    task_terminated(t1, s) && !task_executing(t2, s) && !task_terminated(t2, s)
}

#[derive(Debug, Clone)]
pub struct Progressor {
    statics: BTreeSet<Symbol>,
    /// Predicates some operator adds.
    added: BTreeSet<Symbol>,
    domain: Arc<Domain>,
    init: State,
    universe: Vec<Symbol>,
    pub options: ProgressOptions,
    /// Leaf progressions keyed by formula, then by the truth of every
    /// observation the formula reads in the situation.
    memo: RefCell<FxHashMap<Bdf, Vec<MemoEntry>>>,
}

const MEMO_LIMIT: usize = 1 << 16;

/// Observation truth values, terminal flag, progressed result.
type MemoEntry = (Vec<bool>, bool, Arc<Bdf>);

impl Progressor {
    pub fn new(problem: &Problem, options: ProgressOptions) -> Progressor {
        Progressor {
            statics: problem.domain.static_predicates(),
            added: problem.domain.operators.iter().flat_map(|o| o.add.iter().map(|a| a.pred.clone())).collect(),
            domain: problem.domain.clone(),
            init: problem.init.clone(),
            universe: problem.universe(),
            options,
            memo: RefCell::default(),
        }
    }

    /// Expands quantifiers, then replaces literals that can never change and
    /// occurrences of operators that can never apply by constants.
    pub fn ground(&self, phi: &Bdf) -> Bdf {
        if self.options.simplify {
            self.ground_fold(phi)
        } else {
            phi.ground(&self.universe)
        }
    }

    fn ground_fold(&self, phi: &Bdf) -> Bdf {
        use Bdf::*;
        match phi {
            Exists(v, body) | Forall(v, body) => {
                let parts = self
                    .universe
                    .iter()
                    .map(|c| self.ground_fold(&body.substitute(&Bindings::from([(v.clone(), c.clone())]))))
                    .collect();
                if matches!(phi, Exists(..)) {
                    self.or_flat(parts)
                } else {
                    self.and_flat(parts)
                }
            }
            Lit(l) if self.statics.contains(&l.atom.pred) => constant(self.init.holds(l)),
            Lit(l) if self.never_true(l) => constant(!l.positive),
            Occ(t) if !self.can_occur(t) => False,
            Not(x) => match self.ground_fold(x) {
                c @ (True | False) => c.negate(),
                y => Not(Box::new(y)),
            },
            _ => self.rebuild(phi, |x| self.ground_fold(x), |x| self.ground_fold(x)),
        }
    }

    /// A ground atom false initially over a predicate no operator adds.
    fn never_true(&self, l: &Literal) -> bool {
        !self.added.contains(&l.atom.pred) && l.atom.is_ground() && !self.init.facts.contains(&l.atom)
    }

    /// False only for an operator that can never be applicable with the given
    /// leading arguments, judged by preconditions over static or never added
    /// predicates.
    fn can_occur(&self, t: &TaskRef) -> bool {
        let Some(op) = self.domain.operator(&t.symbol) else { return true };
        if t.args.len() > op.params.len() || !t.args.iter().all(Term::is_ground) {
            return true;
        }
        let bindings: Bindings = op.params.iter().cloned().zip(consts(&t.args)).collect();
        op.pre.iter().all(|l| {
            let g = l.substitute(&bindings);
            if !g.atom.is_ground() {
                return true;
            }
            if self.statics.contains(&g.atom.pred) {
                return self.init.holds(&g);
            }
            !(g.positive && self.never_true(&g))
        })
    }

    /// Rebuilds a boolean or temporal node from rewritten children, folding
    /// constants. `now` maps children evaluated at the node's own point,
    /// `later` those evaluated at later points. Other nodes are returned as is.
    fn rebuild(&self, phi: &Bdf, now: impl Fn(&Bdf) -> Bdf, later: impl Fn(&Bdf) -> Bdf) -> Bdf {
        use Bdf::*;
        match phi {
            And(xs) => self.and_flat(xs.iter().map(&now).collect()),
            Or(xs) => self.or_flat(xs.iter().map(&now).collect()),
            Next(x) => match later(x) {
                False => False,
                y => Next(Box::new(y)),
            },
            WeakNext(x) => match later(x) {
                True => True,
                y => WeakNext(Box::new(y)),
            },
            Always(x) => match later(x) {
                c @ (True | False) => c,
                y => Always(Box::new(y)),
            },
            Eventually(x) => match later(x) {
                c @ (True | False) => c,
                y => Eventually(Box::new(y)),
            },
            Until(a, b) => match (later(a), later(b)) {
                (_, c @ (True | False)) => c,
                (False, b) => b,
                (True, b) => Eventually(Box::new(b)),
                (a, b) => Until(Box::new(a), Box::new(b)),
            },
            Release(a, b) => match (later(a), later(b)) {
                (_, c @ (True | False)) => c,
                (True, b) => b,
                (False, b) => Always(Box::new(b)),
                (a, b) => Release(Box::new(a), Box::new(b)),
            },
            _ => phi.clone(),
        }
    }

    pub fn universe(&self) -> &[Symbol] {
        &self.universe
    }

    fn and(&self, xs: Vec<Bdf>) -> Bdf {
        if !self.options.simplify {
            return Bdf::And(xs);
        }
        match self.and_flat(xs) {
            Bdf::And(items) => match self.contextual(&items, true) {
                Some(rewritten) => self.and(rewritten),
                None => Bdf::And(items),
            },
            other => other,
        }
    }

    /// Flattening, constant folding and duplicate removal.
    fn and_flat(&self, xs: Vec<Bdf>) -> Bdf {
        let mut out: Vec<Bdf> = Vec::with_capacity(xs.len());
        for x in xs {
            match x {
                Bdf::True => {}
                Bdf::False => return Bdf::False,
                Bdf::And(ys) => {
                    for y in ys {
                        if !out.contains(&y) {
                            out.push(y);
                        }
                    }
                }
                other => {
                    if !out.contains(&other) {
                        out.push(other);
                    }
                }
            }
        }
        match out.len() {
            0 => Bdf::True,
            1 => out.pop().expect("one"),
            _ => Bdf::And(out),
        }
    }

    /// Context simplification among the items of a conjunction (`value`
    /// true) or disjunction (`value` false). A conjunct `c` is true wherever
    /// its siblings evaluate it at the current point, and `always x` makes `x`
    /// true at every later point too; a pending `final` has one truth value
    /// over the whole trace. Disjunctions are dual. Returns the rewritten items
    /// if anything changed.
    fn contextual(&self, items: &[Bdf], value: bool) -> Option<Vec<Bdf>> {
        if items.len() < 2 {
            return None;
        }
        let mut out = items.to_vec();
        let mut index: FxHashMap<u64, Vec<usize>> = FxHashMap::default();
        for (j, x) in out.iter().enumerate() {
            node_key(x, &mut |h| index.entry(h).or_default().push(j));
        }
        let mut changed = false;
        for k in 0..out.len() {
            let mut targets: Vec<usize> = fact_keys(&out[k], value)
                .iter()
                .filter_map(|h| index.get(h))
                .flatten()
                .copied()
                .filter(|&j| j != k)
                .collect();
            if targets.is_empty() {
                continue;
            }
            targets.sort_unstable();
            targets.dedup();
            let fact = out[k].clone();
            for j in targets {
                let y = self.assume(&out[j], &fact, value, true);
                if y != out[j] {
                    node_key(&y, &mut |h| index.entry(h).or_default().push(j));
                    out[j] = y;
                    changed = true;
                }
            }
        }
        changed.then_some(out)
    }

    /// Rewrites `phi` under the assumption that `fact` has truth `value`.
    /// `now` is set while `phi` is evaluated at the same point as `fact`.
    fn assume(&self, phi: &Bdf, fact: &Bdf, value: bool, now: bool) -> Bdf {
        use Bdf::*;
        if now && phi == fact {
            return constant(value);
        }
        match (fact, phi) {
            (Final(l), Final(m)) if m.atom == l.atom && l.atom.is_ground() => return constant((m == l) == value),
            (Always(x), _) if value && **x == *phi => return True,
            (Eventually(x), _) if !value && **x == *phi => return False,
            _ => {}
        }
        self.rebuild(phi, |x| self.assume(x, fact, value, now), |x| self.assume(x, fact, value, false))
    }

    fn or(&self, xs: Vec<Bdf>) -> Bdf {
        if !self.options.simplify {
            return Bdf::Or(xs);
        }
        match self.or_flat(xs) {
            Bdf::Or(items) => match self.contextual(&items, false) {
                Some(rewritten) => self.or(rewritten),
                None => Bdf::Or(items),
            },
            other => other,
        }
    }

    fn or_flat(&self, xs: Vec<Bdf>) -> Bdf {
        let mut out: Vec<Bdf> = Vec::with_capacity(xs.len());
        for x in xs {
            match x {
                Bdf::False => {}
                Bdf::True => return Bdf::True,
                Bdf::Or(ys) => {
                    for y in ys {
                        if !out.contains(&y) {
                            out.push(y);
                        }
                    }
                }
                other => {
                    if !out.contains(&other) {
                        out.push(other);
                    }
                }
            }
        }
        match out.len() {
            0 => Bdf::False,
            1 => out.pop().expect("one"),
            _ => Bdf::Or(out),
        }
    }

    fn holds(&self, l: &Literal, s: &State) -> bool {
        s.holds(l)
    }

    /// Same as [`Progressor::progress`], reusing earlier results for a formula
    /// whose observations have the same truth values.
    pub fn progress_cached(&self, phi: &Bdf, cx: Situation<'_>) -> Arc<Bdf> {
        let mut obs = Vec::new();
        if !self.observe(phi, cx, &mut obs) {
            return Arc::new(self.progress(phi, cx));
        }
        if let Some(hits) = self.memo.borrow().get(phi) {
            if let Some((_, _, r)) = hits.iter().find(|(o, t, _)| *o == obs && *t == cx.terminal) {
                return r.clone();
            }
        }
        let r = Arc::new(self.progress(phi, cx));
        let mut memo = self.memo.borrow_mut();
        if memo.len() >= MEMO_LIMIT {
            memo.clear();
        }
        memo.entry(phi.clone()).or_default().push((obs, cx.terminal, r.clone()));
        r
    }

    /// Records the truth of everything `progress` reads from `cx` while
    /// progressing `phi`. False if `phi` depends on the situation otherwise.
    fn observe(&self, phi: &Bdf, cx: Situation<'_>, obs: &mut Vec<bool>) -> bool {
        use Bdf::*;
        match phi {
            True | False | Occ(_) | Apply(_) => true,
            Lit(l) => {
                obs.push(self.holds(l, cx.state));
                true
            }
            Final(l) => {
                if cx.terminal || self.statics.contains(&l.atom.pred) {
                    obs.push(self.holds(l, cx.state));
                }
                true
            }
            OccNext(t) => {
                obs.push(occurred(t, cx.last));
                true
            }
            ApplyNext(m) => {
                obs.push(applied(m, cx.last));
                true
            }
            Terminated(x) => {
                obs.push(target_terminated(x, cx.state));
                true
            }
            Not(x) | Next(x) | WeakNext(x) | Always(x) | Eventually(x) => self.observe(x, cx, obs),
            And(xs) | Or(xs) => xs.iter().all(|x| self.observe(x, cx, obs)),
            Until(a, b) | Release(a, b) => self.observe(a, cx, obs) && self.observe(b, cx, obs),
            Before(..) | HoldBefore(..) | HoldAfter(..) | HoldBetween(..) | Monitor(_) | Exists(..) | Forall(..) => {
                false
            }
        }
    }

    /// Progresses `phi` through one situation.
    pub fn progress(&self, phi: &Bdf, cx: Situation<'_>) -> Bdf {
        use Bdf::*;
        let Situation { last, state, terminal } = cx;
        match phi {
            True | False => phi.clone(),
            Lit(l) => constant(self.holds(l, state)),
            Final(l) => {
                if terminal || self.statics.contains(&l.atom.pred) {
                    constant(self.holds(l, state))
                } else {
                    phi.clone()
                }
            }
            Occ(t) => {
                if terminal {
                    False
                } else {
                    self.and(vec![OccNext(t.clone()), Bdf::eventually(Terminated(Target::Task(t.clone())))])
                }
            }
            Apply(m) => {
                if terminal {
                    False
                } else {
                    self.and(vec![ApplyNext(m.clone()), Bdf::eventually(Terminated(Target::Method(m.clone())))])
                }
            }
            OccNext(t) => constant(occurred(t, last)),
            ApplyNext(m) => constant(applied(m, last)),
            Terminated(x) => constant(target_terminated(x, state)),
            Before(a, b) => self.fresh_monitor(MonitorKind::Before(a.clone(), b.clone()), cx),
            HoldBefore(t, f) => self.fresh_monitor(MonitorKind::HoldBefore(t.clone(), f.clone()), cx),
            HoldAfter(t, f) => self.fresh_monitor(MonitorKind::HoldAfter(t.clone(), f.clone()), cx),
            HoldBetween(a, f, b) => self.fresh_monitor(MonitorKind::HoldBetween(a.clone(), f.clone(), b.clone()), cx),
            Monitor(m) => self.step_monitor(m, cx),
            Not(x) => match &**x {
                Occ(t) if !terminal => Not(Box::new(OccNext(t.clone()))),
                Apply(m) if !terminal => Not(Box::new(ApplyNext(m.clone()))),
                Occ(_) | Apply(_) => True,
                inner => self.progress(inner, cx).negate(),
            },
            And(xs) => self.and(xs.iter().map(|x| self.progress(x, cx)).collect()),
            Or(xs) => self.or(xs.iter().map(|x| self.progress(x, cx)).collect()),
            Exists(..) | Forall(..) => self.progress(&self.ground(phi), cx),
            Next(x) => {
                if terminal {
                    False
                } else {
                    (**x).clone()
                }
            }
            WeakNext(x) => {
                if terminal {
                    True
                } else {
                    (**x).clone()
                }
            }
            Always(x) => {
                let now = self.progress(x, cx);
                if terminal {
                    now
                } else {
                    self.and(vec![now, phi.clone()])
                }
            }
            Eventually(x) => {
                let now = self.progress(x, cx);
                if terminal {
                    if self.options.fault {
                        True
                    } else {
                        now
                    }
                } else {
                    self.or(vec![now, phi.clone()])
                }
            }
            Until(a, b) => {
                let now = self.progress(b, cx);
                if terminal {
                    now
                } else {
                    let keep = self.and(vec![self.progress(a, cx), phi.clone()]);
                    self.or(vec![now, keep])
                }
            }
            Release(a, b) => {
                let now = self.progress(b, cx);
                if terminal {
                    now
                } else {
                    let stop = self.or(vec![self.progress(a, cx), phi.clone()]);
                    self.and(vec![now, stop])
                }
            }
        }
    }

    /// A construct first met at this situation: its window starts here, so the
    /// event that produced the situation is not part of it.
    fn fresh_monitor(&self, kind: MonitorKind, cx: Situation<'_>) -> Bdf {
        let s = cx.state;
        let flag = match &kind {
            MonitorKind::Before(t1, t2) => before_ready(t1, t2, s),
            MonitorKind::HoldBefore(_, f) => self.holds(f, s),
            MonitorKind::HoldAfter(t, f) => {
                if task_terminated(t, s) && self.holds(f, s) {
                    return Bdf::True;
                }
                false
            }
            MonitorKind::HoldBetween(t1, f, t2) => before_ready(t1, t2, s) && self.holds(f, s),
        };
        if cx.terminal {
            Bdf::False
        } else {
            Bdf::Monitor(Monitor { kind, flag })
        }
    }

    /// Advances a pending monitor by one situation.
    pub fn step_monitor(&self, m: &Monitor, cx: Situation<'_>) -> Bdf {
        let s = cx.state;
        let mut flag = m.flag;
        match &m.kind {
            MonitorKind::Before(t1, t2) => {
                if occurred(t2, cx.last) {
                    // Once the second task has started it stays executing or terminated.
                    return constant(flag);
                }
                flag |= before_ready(t1, t2, s);
            }
            MonitorKind::HoldBefore(t, f) => {
                if flag && occurred(t, cx.last) {
                    return Bdf::True;
                }
                flag = self.holds(f, s);
            }
            MonitorKind::HoldAfter(t, f) => {
                if task_terminated(t, s) && self.holds(f, s) {
                    return Bdf::True;
                }
            }
            MonitorKind::HoldBetween(t1, f, t2) => {
                if occurred(t2, cx.last) {
                    return constant(flag);
                }
                flag = (flag || before_ready(t1, t2, s)) && self.holds(f, s);
            }
        }
        if cx.terminal {
            Bdf::False
        } else {
            Bdf::Monitor(Monitor { kind: m.kind.clone(), flag })
        }
    }

    /// Progresses `phi` along a whole trace: the initial state first, then every event.
    pub fn progress_trace(&self, phi: &Bdf, trace: &Trace) -> Bdf {
        let n = trace.events.len();
        let mut cur = self.progress(phi, Situation { last: None, state: &trace.states[0], terminal: n == 0 });
        for (i, e) in trace.events.iter().enumerate() {
            cur = self.progress(&cur, Situation { last: Some(e), state: &trace.states[i + 1], terminal: i + 1 == n });
        }
        cur
    }

    /// Whether some completion may still satisfy `phi`.
    pub fn optimistic(&self, phi: &Bdf, look: &Lookahead<'_>) -> bool {
        use Bdf::*;
        match phi {
            True => true,
            False => false,
            And(xs) => xs.iter().all(|x| self.optimistic(x, look)),
            Or(xs) => xs.iter().any(|x| self.optimistic(x, look)),
            Occ(t) | OccNext(t) => look.may_occur(t),
            Apply(m) | ApplyNext(m) => look.may_apply(m),
            Terminated(x) => look.may_terminate(x),
            Before(_, t2) | HoldBetween(_, _, t2) => look.may_occur(t2),
            HoldBefore(t, _) => look.may_occur(t),
            HoldAfter(t, _) => look.may_terminate(&Target::Task(t.clone())),
            Monitor(m) => {
                if self.options.paper_literal_hold {
                    return false;
                }
                match &m.kind {
                    MonitorKind::Before(_, t) | MonitorKind::HoldBetween(_, _, t) | MonitorKind::HoldBefore(t, _) => {
                        look.may_occur(t)
                    }
                    MonitorKind::HoldAfter(t, _) => look.may_terminate(&Target::Task(t.clone())),
                }
            }
            Eventually(x) | Next(x) | Always(x) => self.optimistic(x, look),
            Until(_, b) | Release(_, b) => self.optimistic(b, look),
            Exists(_, x) => !self.universe.is_empty() && self.optimistic(x, look),
            Lit(_) | Final(_) | Not(_) | WeakNext(_) | Forall(..) => true,
        }
    }

    /// Whether every completion satisfies `phi`.
    pub fn pessimistic(&self, phi: &Bdf) -> bool {
        match phi {
            Bdf::True => true,
            Bdf::And(xs) => xs.iter().all(|x| self.pessimistic(x)),
            Bdf::Or(xs) => xs.iter().any(|x| self.pessimistic(x)),
            Bdf::Not(x) if self.options.paper_literal_hold => matches!(**x, Bdf::Monitor(_)),
            _ => false,
        }
    }
}

/// Task symbols and method branches that may still occur, derived from the
/// pending part of an agenda. `None` means anything may occur.
#[derive(Debug, Clone)]
pub struct Lookahead<'a> {
    pub reach: &'a Reachability,
    pub set: Option<&'a LookSet>,
    pub state: &'a State,
}

impl Lookahead<'_> {
    fn may_occur(&self, t: &TaskRef) -> bool {
        match self.set {
            None => true,
            Some(set) => self.reach.task_id(&t.symbol).is_some_and(|i| set.tasks.contains(i)),
        }
    }

    fn may_apply(&self, m: &MethodRef) -> bool {
        match self.set {
            None => true,
            Some(set) => self.reach.branch_id(&m.branch).is_some_and(|i| set.methods.contains(i)),
        }
    }

    fn may_terminate(&self, x: &Target) -> bool {
        if self.set.is_none() || target_terminated(x, self.state) {
            return true;
        }
        match x {
            Target::Task(t) => task_executing(t, self.state) || self.may_occur(t),
            Target::Method(m) => {
                let args = consts(&m.args);
                self.state.any_executing(|k| k.matches_method(&m.branch, &args)) || self.may_apply(m)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookSet {
    pub tasks: FixedBitSet,
    pub methods: FixedBitSet,
}

/// Per task symbol, every task symbol and method branch its decompositions can reach.
#[derive(Debug, Clone)]
pub struct Reachability {
    tasks: HashMap<Symbol, usize>,
    branches: HashMap<Symbol, usize>,
    closure: Vec<LookSet>,
}

impl Reachability {
    pub fn new(domain: &Domain) -> Reachability {
        let mut tasks: HashMap<Symbol, usize> = HashMap::new();
        for o in &domain.operators {
            let n = tasks.len();
            tasks.entry(o.name.clone()).or_insert(n);
        }
        for m in &domain.methods {
            let n = tasks.len();
            tasks.entry(m.head.symbol.clone()).or_insert(n);
            for t in &m.network.tasks {
                let n = tasks.len();
                tasks.entry(t.symbol.clone()).or_insert(n);
            }
        }
        let branches: HashMap<Symbol, usize> =
            domain.methods.iter().enumerate().map(|(i, m)| (m.branch.clone(), i)).collect();
        let (nt, nm) = (tasks.len(), domain.methods.len());
        let mut closure =
            vec![LookSet { tasks: FixedBitSet::with_capacity(nt), methods: FixedBitSet::with_capacity(nm) }; nt];
        for (sym, &id) in &tasks {
            let set = &mut closure[id];
            let mut stack = vec![sym.clone()];
            set.tasks.insert(id);
            while let Some(s) = stack.pop() {
                for (mi, m) in domain.methods.iter().enumerate().filter(|(_, m)| m.head.symbol == s) {
                    set.methods.insert(mi);
                    for t in &m.network.tasks {
                        let ti = tasks[&t.symbol];
                        if !set.tasks.put(ti) {
                            stack.push(t.symbol.clone());
                        }
                    }
                }
            }
        }
        Reachability { tasks, branches, closure }
    }

    pub fn task_id(&self, symbol: &str) -> Option<usize> {
        self.tasks.get(symbol).copied()
    }

    pub fn branch_id(&self, branch: &str) -> Option<usize> {
        self.branches.get(branch).copied()
    }

    pub fn empty(&self) -> LookSet {
        LookSet {
            tasks: FixedBitSet::with_capacity(self.tasks.len()),
            methods: FixedBitSet::with_capacity(self.branches.len()),
        }
    }

    /// Adds everything a pending task with this symbol may produce.
    pub fn add_task(&self, set: &mut LookSet, symbol: &str) {
        if let Some(i) = self.task_id(symbol) {
            set.tasks.union_with(&self.closure[i].tasks);
            set.methods.union_with(&self.closure[i].methods);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bounds {
    pub opt: Weight,
    pub pess: Weight,
}

impl Bounds {
    fn exact(w: Weight) -> Bounds {
        Bounds { opt: w, pess: w }
    }

    pub fn is_exact(&self) -> bool {
        self.opt == self.pess
    }
}

/// A preference formula with every basic desire progressed to the current situation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressedFormula {
    pub skeleton: Arc<Gpf>,
    /// One entry per basic desire, in the order of [`Gpf::leaves`].
    pub leaves: Vec<Arc<Bdf>>,
}

impl ProgressedFormula {
    /// Grounds quantifiers and progresses through the initial state.
    pub fn new(pr: &Progressor, gpf: &Gpf, initial: &State, terminal: bool) -> ProgressedFormula {
        let cx = Situation { last: None, state: initial, terminal };
        let leaves = gpf.leaves().into_iter().map(|b| Arc::new(pr.progress(&pr.ground(b), cx))).collect();
        ProgressedFormula { skeleton: Arc::new(gpf.clone()), leaves }
    }

    pub fn progress(&self, pr: &Progressor, cx: Situation<'_>) -> ProgressedFormula {
        ProgressedFormula {
            skeleton: self.skeleton.clone(),
            leaves: self.leaves.iter().map(|b| pr.progress_cached(b, cx)).collect(),
        }
    }

    /// Progresses through a run of events; the last one is terminal when `terminal` is set.
    pub fn progress_events(
        &self,
        pr: &Progressor,
        events: &[Event],
        states: &[State],
        terminal: bool,
    ) -> ProgressedFormula {
        let mut cur = self.clone();
        for (i, (e, s)) in events.iter().zip(states).enumerate() {
            let cx = Situation { last: Some(e), state: s, terminal: terminal && i + 1 == events.len() };
            cur = cur.progress(pr, cx);
        }
        cur
    }

    pub fn bounds(&self, pr: &Progressor, look: &Lookahead<'_>) -> Bounds {
        let mut i = 0;
        self.gpf_bounds(&self.skeleton, pr, look, &mut i)
    }

    fn gpf_bounds(&self, g: &Gpf, pr: &Progressor, look: &Lookahead<'_>, i: &mut usize) -> Bounds {
        match g {
            Gpf::Atomic(apf) => {
                let leaves = &self.leaves[*i..*i + apf.alternatives.len()];
                *i += apf.alternatives.len();
                let pick = |sat: &dyn Fn(&Bdf) -> bool| {
                    leaves.iter().zip(&apf.alternatives).find(|(b, _)| sat(b)).map_or(Weight::MAX, |(_, (_, w))| *w)
                };
                Bounds { opt: pick(&|b| pr.optimistic(b, look)), pess: pick(&|b| pr.pessimistic(b)) }
            }
            Gpf::Conditional(_, body) => {
                let cond = &self.leaves[*i];
                *i += 1;
                let inner = self.gpf_bounds(body, pr, look, i);
                if !pr.optimistic(cond, look) {
                    Bounds::exact(Weight::MIN)
                } else if pr.pessimistic(cond) {
                    inner
                } else {
                    Bounds { opt: Weight::MIN, pess: inner.pess }
                }
            }
            Gpf::Conj(xs) => xs.iter().fold(Bounds::exact(Weight::MIN), |acc, x| {
                let b = self.gpf_bounds(x, pr, look, i);
                Bounds { opt: acc.opt.max(b.opt), pess: acc.pess.max(b.pess) }
            }),
            Gpf::Disj(xs) => xs.iter().fold(Bounds::exact(Weight::MAX), |acc, x| {
                let b = self.gpf_bounds(x, pr, look, i);
                Bounds { opt: acc.opt.min(b.opt), pess: acc.pess.min(b.pess) }
            }),
        }
    }

    /// Bounds of each top-level constituent of a general conjunction or
    /// disjunction, or of the whole formula otherwise.
    pub fn constituent_bounds(&self, pr: &Progressor, look: &Lookahead<'_>) -> Vec<Bounds> {
        let mut i = 0;
        match &*self.skeleton {
            Gpf::Conj(xs) | Gpf::Disj(xs) => xs.iter().map(|x| self.gpf_bounds(x, pr, look, &mut i)).collect(),
            g => vec![self.gpf_bounds(g, pr, look, &mut i)],
        }
    }

    /// Exact weight once the formula has been progressed through a terminal situation.
    pub fn terminal_weight(&self, pr: &Progressor, state: &State) -> Weight {
        let reach = Reachability { tasks: HashMap::new(), branches: HashMap::new(), closure: Vec::new() };
        let empty = reach.empty();
        let b = self.bounds(pr, &Lookahead { reach: &reach, set: Some(&empty), state });
        debug_assert!(b.is_exact() || pr.options.paper_literal_hold, "terminal bounds {b:?}");
        b.pess
    }
}

/// Weight of a complete trace computed purely by progression.
pub fn progressed_weight(pr: &Progressor, gpf: &Gpf, trace: &Trace) -> Weight {
    let n = trace.events.len();
    let pf = ProgressedFormula::new(pr, gpf, &trace.states[0], n == 0);
    let pf = pf.progress_events(pr, &trace.events, &trace.states[1..], true);
    pf.terminal_weight(pr, trace.last_state())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::Apf;
    use crate::model::{sym, Atom, GroundAction, GroundOperator, UnitKind, UnitRef};
    use crate::parser::{parse_domain, parse_problem};

    fn progressor(simplify: bool) -> Progressor {
        let d = Arc::new(
            parse_domain(
                "(domain t (:predicates (p) (q))
                  (:operator (!a) :add ((p)))
                  (:operator (!b))
                  (:method (top) :name m :tasks ((!a) (!b))))",
            )
            .unwrap(),
        );
        let p = parse_problem("(problem x :domain t :tasks ((top)))", d).unwrap();
        Progressor::new(&p, ProgressOptions { simplify, ..ProgressOptions::default() })
    }

    fn op_event(id: u32, name: &str) -> Event {
        let op = GroundOperator {
            action: GroundAction { name: sym(name), args: vec![] },
            pre: vec![],
            add: vec![],
            del: vec![],
        };
        Event::Op { id, op: Arc::new(op) }
    }

    fn task(id: u32, s: &str) -> UnitRef {
        UnitRef { id, kind: Arc::new(UnitKind::Task { symbol: sym(s), args: vec![] }) }
    }

    fn tref(s: &str) -> TaskRef {
        TaskRef { symbol: sym(s), args: vec![] }
    }

    fn trace_of(events: Vec<Event>) -> Trace {
        let mut tr = Trace::new(State::default());
        for e in events {
            tr.push(e).unwrap();
        }
        tr
    }

    #[test]
    fn occurrence_progresses_to_true_once_terminated() {
        let pr = progressor(true);
        let s0 = State::default();
        let root = pr.progress(&Bdf::occ("!book-train", &[]), Situation { last: None, state: &s0, terminal: false });
        assert!(matches!(root, Bdf::And(_)));
        let e = op_event(1, "!book-train");
        let s1 = s0.apply_event(&e).unwrap();
        let next = pr.progress(&root, Situation { last: Some(&e), state: &s1, terminal: false });
        assert_eq!(next, Bdf::True);
    }

    #[test]
    fn eventually_stays_pending_and_always_false_collapses() {
        let pr = progressor(true);
        let s = State::default();
        let p = Bdf::eventually(Bdf::Lit(Literal::pos(Atom::new("p", &[]))));
        let e = op_event(1, "!b");
        let cx = Situation { last: Some(&e), state: &s, terminal: false };
        assert_eq!(pr.progress(&p, cx), p);
        assert_eq!(pr.progress(&Bdf::always(Bdf::False), cx), Bdf::False);
    }

    fn before_monitor(events: Vec<Event>) -> Bdf {
        let pr = progressor(true);
        let phi = Bdf::Before(tref("arrange-trans"), tref("arrange-acc"));
        pr.progress_trace(&phi, &trace_of(events))
    }

    #[test]
    fn before_monitor_outcomes() {
        let (t, a) = (task(1, "arrange-trans"), task(2, "arrange-acc"));
        let ok = before_monitor(vec![
            Event::Start(t.clone()),
            Event::End(t.clone()),
            Event::Start(a.clone()),
            Event::End(a.clone()),
        ]);
        assert_eq!(ok, Bdf::True);
        let overlap = before_monitor(vec![
            Event::Start(t.clone()),
            Event::Start(a.clone()),
            Event::End(t.clone()),
            Event::End(a.clone()),
        ]);
        assert_eq!(overlap, Bdf::False);
        let missing = before_monitor(vec![Event::Start(t.clone()), Event::End(t)]);
        assert_eq!(missing, Bdf::False);
    }

    fn look<'a>(reach: &'a Reachability, set: Option<&'a LookSet>, s: &'a State) -> Lookahead<'a> {
        Lookahead { reach, set, state: s }
    }

    #[test]
    fn bounds_examples() {
        let pr = progressor(true);
        let d = parse_domain("(domain t (:operator (!a)))").unwrap();
        let reach = Reachability::new(&d);
        let s = State::default();
        let l = look(&reach, None, &s);
        let pending = ProgressedFormula {
            skeleton: Arc::new(Gpf::Atomic(Apf::single(Bdf::True))),
            leaves: vec![Arc::new(Bdf::eventually(Bdf::occ("!a", &[])))],
        };
        assert_eq!(pending.bounds(&pr, &l), Bounds { opt: Weight::MIN, pess: Weight::MAX });
        let falsified = ProgressedFormula { leaves: vec![Arc::new(Bdf::False)], ..pending.clone() };
        assert_eq!(falsified.bounds(&pr, &l), Bounds::exact(Weight::MAX));
        let w4 = Weight::parse("0.4").unwrap();
        let apf = Gpf::Atomic(Apf { alternatives: vec![(Bdf::False, Weight::MIN), (Bdf::True, w4)] });
        let pf = ProgressedFormula { skeleton: Arc::new(apf), leaves: vec![Arc::new(Bdf::False), Arc::new(Bdf::True)] };
        assert_eq!(pf.bounds(&pr, &l), Bounds::exact(w4));
    }

    #[test]
    fn lookahead_rules_out_unreachable_occurrences() {
        let pr = progressor(true);
        let d = parse_domain(
            "(domain t (:operator (!a)) (:operator (!b))
               (:method (top) :name m :tasks ((sub)))
               (:method (sub) :name n :tasks ((!a))))",
        )
        .unwrap();
        let reach = Reachability::new(&d);
        let s = State::default();
        let mut set = reach.empty();
        reach.add_task(&mut set, "top");
        let l = look(&reach, Some(&set), &s);
        assert!(pr.optimistic(&Bdf::eventually(Bdf::occ("!a", &[])), &l));
        assert!(pr.optimistic(&Bdf::eventually(Bdf::apply("n", &[])), &l));
        assert!(!pr.optimistic(&Bdf::eventually(Bdf::occ("!b", &[])), &l));
        assert!(!pr.optimistic(&Bdf::OccNext(tref("!b")), &l));
    }

    #[test]
    fn simplification_does_not_change_terminal_values() {
        let (t, a) = (task(1, "arrange-trans"), task(2, "arrange-acc"));
        let tr = trace_of(vec![
            Event::Start(t.clone()),
            op_event(3, "!a"),
            Event::End(t),
            Event::Start(a.clone()),
            Event::End(a),
        ]);
        let p = Bdf::Lit(Literal::pos(Atom::new("p", &[])));
        let formulas = [
            Bdf::always(Bdf::eventually(p.clone())),
            Bdf::Until(Box::new(Bdf::occ("arrange-trans", &[]).negate()), Box::new(p.clone())),
            Bdf::Next(Box::new(Bdf::occ("!a", &[]))),
            Bdf::eventually(Bdf::HoldAfter(tref("arrange-trans"), Literal::pos(Atom::new("p", &[])))),
            Bdf::Before(tref("arrange-trans"), tref("arrange-acc")).negate(),
        ];
        for phi in formulas {
            let direct = crate::semantics::satisfies(&tr, 0, &phi, &[]).unwrap();
            for simplify in [true, false] {
                let pr = progressor(simplify);
                let g = Gpf::Atomic(Apf::single(phi.clone()));
                let w = progressed_weight(&pr, &g, &tr);
                assert_eq!(w == Weight::MIN, direct, "{phi:?} simplify={simplify}");
            }
        }
    }
}
