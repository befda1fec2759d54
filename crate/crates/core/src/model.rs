//! Ground symbolic vocabulary for HTN planning.
//!
//! States are immutable values: applying an event yields a fresh [`State`]
//! that shares unchanged parts with its predecessor through `Arc`s.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub type Symbol = Arc<str>;

pub fn sym(s: &str) -> Symbol {
    Arc::from(s)
}

/// Variable name to constant.
pub type Bindings = BTreeMap<Symbol, Symbol>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const(Symbol),
    /// Stored without the leading `?`.
    Var(Symbol),
}

impl Term {
    pub fn is_ground(&self) -> bool {
        matches!(self, Term::Const(_))
    }

    pub fn resolve(&self, bindings: &Bindings) -> Option<Symbol> {
        match self {
            Term::Const(c) => Some(c.clone()),
            Term::Var(v) => bindings.get(v).cloned(),
        }
    }

    pub fn substitute(&self, bindings: &Bindings) -> Term {
        match self {
            Term::Var(v) => match bindings.get(v) {
                Some(c) => Term::Const(c.clone()),
                None => self.clone(),
            },
            Term::Const(_) => self.clone(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "{c}"),
            Term::Var(v) => write!(f, "?{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub pred: Symbol,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: &str, args: &[&str]) -> Atom {
        Atom {
            pred: sym(pred),
            args: args
                .iter()
                .map(|a| match a.strip_prefix('?') {
                    Some(v) => Term::Var(sym(v)),
                    None => Term::Const(sym(a)),
                })
                .collect(),
        }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    pub fn substitute(&self, bindings: &Bindings) -> Atom {
        Atom { pred: self.pred.clone(), args: self.args.iter().map(|t| t.substitute(bindings)).collect() }
    }

    pub fn vars(&self) -> impl Iterator<Item = &Symbol> {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        })
    }

    /// Extends `bindings` so that this atom equals the ground `fact`.
    fn unify_ground(&self, fact: &Atom, bindings: &Bindings) -> Option<Bindings> {
        if self.pred != fact.pred || self.args.len() != fact.args.len() {
            return None;
        }
        let mut out = bindings.clone();
        for (pat, val) in self.args.iter().zip(&fact.args) {
            let Term::Const(val) = val else { return None };
            match pat {
                Term::Const(c) if c == val => {}
                Term::Const(_) => return None,
                Term::Var(v) => match out.get(v) {
                    Some(bound) if bound == val => {}
                    Some(_) => return None,
                    None => {
                        out.insert(v.clone(), val.clone());
                    }
                },
            }
        }
        Some(out)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.pred)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub atom: Atom,
    pub positive: bool,
}

impl Literal {
    pub fn pos(atom: Atom) -> Literal {
        Literal { atom, positive: true }
    }

    pub fn neg(atom: Atom) -> Literal {
        Literal { atom, positive: false }
    }

    pub fn negated(&self) -> Literal {
        Literal { atom: self.atom.clone(), positive: !self.positive }
    }

    pub fn substitute(&self, bindings: &Bindings) -> Literal {
        Literal { atom: self.atom.substitute(bindings), positive: self.positive }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "{}", self.atom)
        } else {
            write!(f, "(not {})", self.atom)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Primitive,
    Nonprimitive,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Task {
    pub symbol: Symbol,
    pub args: Vec<Term>,
    pub kind: TaskKind,
}

impl Task {
    pub fn is_primitive(&self) -> bool {
        self.kind == TaskKind::Primitive
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    pub fn substitute(&self, bindings: &Bindings) -> Task {
        Task {
            symbol: self.symbol.clone(),
            args: self.args.iter().map(|t| t.substitute(bindings)).collect(),
            kind: self.kind,
        }
    }

    /// Constant arguments of a ground task.
    pub fn ground_args(&self) -> Option<Vec<Symbol>> {
        self.args
            .iter()
            .map(|t| match t {
                Term::Const(c) => Some(c.clone()),
                Term::Var(_) => None,
            })
            .collect()
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.symbol)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

/// A literal that must hold immediately before the indexed subtask begins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeforeConstraint {
    pub literal: Literal,
    pub subtask: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskNetwork {
    pub tasks: Vec<Task>,
    /// When set the tasks form one unordered group; otherwise they are totally ordered.
    pub unordered: bool,
    pub constraints: Vec<BeforeConstraint>,
}

impl TaskNetwork {
    pub fn ordered(tasks: Vec<Task>) -> TaskNetwork {
        TaskNetwork { tasks, unordered: false, constraints: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operator {
    pub name: Symbol,
    pub params: Vec<Symbol>,
    pub pre: Vec<Literal>,
    pub add: Vec<Atom>,
    pub del: Vec<Atom>,
}

/// A fully instantiated operator.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundOperator {
    pub action: GroundAction,
    pub pre: Vec<Literal>,
    pub add: Vec<Atom>,
    pub del: Vec<Atom>,
}

impl Operator {
    pub fn ground(&self, args: &[Symbol]) -> Result<GroundOperator, ModelError> {
        if args.len() != self.params.len() {
            return Err(ModelError::ArityMismatch {
                name: self.name.to_string(),
                expected: self.params.len(),
                found: args.len(),
            });
        }
        let bindings: Bindings = self.params.iter().cloned().zip(args.iter().cloned()).collect();
        Ok(GroundOperator {
            action: GroundAction { name: self.name.clone(), args: args.to_vec() },
            pre: self.pre.iter().map(|l| l.substitute(&bindings)).collect(),
            add: self.add.iter().map(|a| a.substitute(&bindings)).collect(),
            del: self.del.iter().map(|a| a.substitute(&bindings)).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Method {
    pub branch: Symbol,
    pub head: Task,
    /// Variables in order of first appearance: head, preconditions, subtasks.
    pub params: Vec<Symbol>,
    pub pre: Vec<Literal>,
    pub network: TaskNetwork,
}

impl Method {
    /// Unifies the head with a ground task.
    pub fn unify_head(&self, task: &Task) -> Option<Bindings> {
        if self.head.symbol != task.symbol || self.head.args.len() != task.args.len() {
            return None;
        }
        let mut b = Bindings::new();
        for (pat, val) in self.head.args.iter().zip(&task.args) {
            let Term::Const(val) = val else { return None };
            match pat {
                Term::Const(c) if c == val => {}
                Term::Const(_) => return None,
                Term::Var(v) => match b.get(v) {
                    Some(bound) if bound == val => {}
                    Some(_) => return None,
                    None => {
                        b.insert(v.clone(), val.clone());
                    }
                },
            }
        }
        Some(b)
    }

    /// Every extension of `head_bindings` satisfying the preconditions in `state`,
    /// positive literals matched against facts in order, negative ones checked last.
    pub fn groundings(&self, head_bindings: &Bindings, state: &State) -> Vec<Bindings> {
        let mut partial = vec![head_bindings.clone()];
        for lit in self.pre.iter().filter(|l| l.positive) {
            let mut next = Vec::new();
            for b in &partial {
                let pat = lit.atom.substitute(b);
                if pat.is_ground() {
                    if state.facts.contains(&pat) {
                        next.push(b.clone());
                    }
                    continue;
                }
                for fact in state.facts.iter().filter(|f| f.pred == pat.pred) {
                    if let Some(ext) = pat.unify_ground(fact, b) {
                        next.push(ext);
                    }
                }
            }
            partial = next;
            if partial.is_empty() {
                return partial;
            }
        }
        let mut out: Vec<Bindings> = Vec::new();
        for b in partial {
            let ok = self.pre.iter().filter(|l| !l.positive).all(|l| {
                let atom = l.atom.substitute(&b);
                atom.is_ground() && !state.facts.contains(&atom)
            });
            if ok && !out.contains(&b) {
                out.push(b);
            }
        }
        out
    }

    /// Parameter values under `bindings`, in parameter order.
    pub fn bound_args(&self, bindings: &Bindings) -> Vec<Symbol> {
        self.params.iter().filter_map(|p| bindings.get(p).cloned()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundAction {
    pub name: Symbol,
    pub args: Vec<Symbol>,
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.name)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

pub type InstanceId = u32;

/// What a unit instance, or a terminated operator event, stands for.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnitKind {
    Task { symbol: Symbol, args: Vec<Symbol> },
    Method { branch: Symbol, task: Symbol, bindings: Vec<Symbol> },
    Operator(GroundAction),
}

impl UnitKind {
    /// Prefix match: `args` must equal the leading arguments of the instance.
    pub fn matches_task(&self, symbol: &str, args: &[Symbol]) -> bool {
        match self {
            UnitKind::Task { symbol: s, args: a } => &**s == symbol && a.starts_with(args),
            UnitKind::Operator(act) => &*act.name == symbol && act.args.starts_with(args),
            UnitKind::Method { .. } => false,
        }
    }

    pub fn matches_method(&self, branch: &str, args: &[Symbol]) -> bool {
        match self {
            UnitKind::Method { branch: b, bindings, .. } => &**b == branch && bindings.starts_with(args),
            _ => false,
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnitKind::Task { symbol, args } => {
                write!(f, "({symbol}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                write!(f, ")")
            }
            UnitKind::Method { branch, bindings, .. } => {
                write!(f, "[{branch}")?;
                for a in bindings {
                    write!(f, " {a}")?;
                }
                write!(f, "]")
            }
            UnitKind::Operator(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UnitRef {
    pub id: InstanceId,
    pub kind: Arc<UnitKind>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Op { id: InstanceId, op: Arc<GroundOperator> },
    Start(UnitRef),
    End(UnitRef),
}

impl Event {
    pub fn id(&self) -> InstanceId {
        match self {
            Event::Op { id, .. } => *id,
            Event::Start(u) | Event::End(u) => u.id,
        }
    }

    /// True when this event is an occurrence of the task `symbol(args..)`:
    /// the operator event itself for primitive tasks, the start for compound ones.
    pub fn is_task_occurrence(&self, symbol: &str, args: &[Symbol]) -> bool {
        match self {
            Event::Op { op, .. } => &*op.action.name == symbol && op.action.args.starts_with(args),
            Event::Start(u) => matches!(&*u.kind, UnitKind::Task { .. }) && u.kind.matches_task(symbol, args),
            Event::End(_) => false,
        }
    }

    pub fn is_method_start(&self, branch: &str, args: &[Symbol]) -> bool {
        match self {
            Event::Start(u) => u.kind.matches_method(branch, args),
            _ => false,
        }
    }

    pub fn action(&self) -> Option<&GroundAction> {
        match self {
            Event::Op { op, .. } => Some(&op.action),
            _ => None,
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Op { op, .. } => write!(f, "{}", op.action),
            Event::Start(u) => write!(f, "start{}#{}", u.kind, u.id),
            Event::End(u) => write!(f, "end{}#{}", u.kind, u.id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct State {
    pub facts: Arc<BTreeSet<Atom>>,
    pub executing: Arc<BTreeMap<InstanceId, Arc<UnitKind>>>,
    pub terminated: Arc<BTreeMap<InstanceId, Arc<UnitKind>>>,
}

impl State {
    pub fn from_facts(facts: impl IntoIterator<Item = Atom>) -> State {
        State { facts: Arc::new(facts.into_iter().collect()), ..State::default() }
    }

    /// Closed-world truth of a ground literal.
    pub fn holds(&self, lit: &Literal) -> bool {
        self.facts.contains(&lit.atom) == lit.positive
    }

    pub fn any_executing(&self, pred: impl Fn(&UnitKind) -> bool) -> bool {
        self.executing.values().any(|k| pred(k))
    }

    pub fn any_terminated(&self, pred: impl Fn(&UnitKind) -> bool) -> bool {
        self.terminated.values().any(|k| pred(k))
    }

    pub fn apply_operator(&self, op: &GroundOperator, id: InstanceId) -> Result<State, ModelError> {
        if let Some(lit) = op.pre.iter().find(|l| !self.holds(l)) {
            return Err(ModelError::PreconditionViolation(lit.to_string()));
        }
        let mut facts = (*self.facts).clone();
        for d in &op.del {
            facts.remove(d);
        }
        for a in &op.add {
            facts.insert(a.clone());
        }
        let mut terminated = (*self.terminated).clone();
        terminated.insert(id, Arc::new(UnitKind::Operator(op.action.clone())));
        Ok(State { facts: Arc::new(facts), executing: self.executing.clone(), terminated: Arc::new(terminated) })
    }

    pub fn apply_event(&self, event: &Event) -> Result<State, ModelError> {
        match event {
            Event::Op { id, op } => {
                if self.executing.contains_key(id) || self.terminated.contains_key(id) {
                    return Err(ModelError::IllegalEvent(format!("{event}: id {id} already used")));
                }
                self.apply_operator(op, *id)
            }
            Event::Start(u) => {
                if self.executing.contains_key(&u.id) || self.terminated.contains_key(&u.id) {
                    return Err(ModelError::IllegalEvent(format!("{event}: already started")));
                }
                if matches!(*u.kind, UnitKind::Operator(_)) {
                    return Err(ModelError::IllegalEvent(format!("{event}: operators have no start")));
                }
                let mut executing = (*self.executing).clone();
                executing.insert(u.id, u.kind.clone());
                Ok(State {
                    facts: self.facts.clone(),
                    executing: Arc::new(executing),
                    terminated: self.terminated.clone(),
                })
            }
            Event::End(u) => {
                if !self.executing.contains_key(&u.id) {
                    return Err(ModelError::IllegalEvent(format!("{event}: not executing")));
                }
                let mut executing = (*self.executing).clone();
                let kind = executing.remove(&u.id).expect("checked above");
                let mut terminated = (*self.terminated).clone();
                terminated.insert(u.id, kind);
                Ok(State {
                    facts: self.facts.clone(),
                    executing: Arc::new(executing),
                    terminated: Arc::new(terminated),
                })
            }
        }
    }
}

/// Events paired with the states they pass through; `states[i + 1]` follows `events[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<Event>,
    pub states: Vec<State>,
}

impl Trace {
    pub fn new(initial: State) -> Trace {
        Trace { events: Vec::new(), states: vec![initial] }
    }

    pub fn push(&mut self, event: Event) -> Result<(), ModelError> {
        let next = self.last_state().apply_event(&event)?;
        self.events.push(event);
        self.states.push(next);
        Ok(())
    }

    pub fn last_state(&self) -> &State {
        self.states.last().expect("trace always has an initial state")
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn plan(&self) -> Plan {
        Plan { ops: self.events.iter().filter_map(|e| e.action().cloned()).collect() }
    }

    /// Checks the structural invariants: state chain, unique ids, balanced starts and ends.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.states.len() != self.events.len() + 1 {
            return Err(ModelError::IllegalEvent(format!(
                "{} states for {} events",
                self.states.len(),
                self.events.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for (i, e) in self.events.iter().enumerate() {
            let fresh = match e {
                Event::Op { .. } | Event::Start(_) => seen.insert(e.id()),
                Event::End(_) => true,
            };
            if !fresh {
                return Err(ModelError::IllegalEvent(format!("duplicate instance id {}", e.id())));
            }
            let next = self.states[i].apply_event(e)?;
            if next != self.states[i + 1] {
                return Err(ModelError::IllegalEvent(format!("state {} does not follow event {e}", i + 1)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Plan {
    pub ops: Vec<GroundAction>,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for op in &self.ops {
            writeln!(f, "{op}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Domain {
    pub name: Symbol,
    pub operators: Vec<Operator>,
    pub methods: Vec<Method>,
    /// Declared predicate arities, including every predicate used by operators and methods.
    pub predicates: BTreeMap<Symbol, usize>,
    op_index: HashMap<Symbol, usize>,
}

impl Domain {
    pub fn new(
        name: Symbol,
        operators: Vec<Operator>,
        methods: Vec<Method>,
        predicates: BTreeMap<Symbol, usize>,
    ) -> Domain {
        let op_index = operators.iter().enumerate().map(|(i, o)| (o.name.clone(), i)).collect();
        Domain { name, operators, methods, predicates, op_index }
    }

    pub fn operator(&self, name: &str) -> Option<&Operator> {
        self.op_index.get(name).map(|&i| &self.operators[i])
    }

    pub fn is_compound(&self, symbol: &str) -> bool {
        self.methods.iter().any(|m| &*m.head.symbol == symbol)
    }

    pub fn compound_arity(&self, symbol: &str) -> Option<usize> {
        self.methods.iter().find(|m| &*m.head.symbol == symbol).map(|m| m.head.args.len())
    }

    pub fn method_branch(&self, branch: &str) -> Option<&Method> {
        self.methods.iter().find(|m| &*m.branch == branch)
    }

    /// Methods whose head unifies with a ground nonprimitive task, in declaration order.
    pub fn relevant_methods(&self, task: &Task) -> Result<Vec<(&Method, Bindings)>, ModelError> {
        if task.is_primitive() || self.operator(&task.symbol).is_some() {
            return Err(ModelError::NotNonprimitive(task.to_string()));
        }
        if !task.is_ground() {
            return Err(ModelError::NotGround(task.to_string()));
        }
        Ok(self.methods.iter().filter_map(|m| m.unify_head(task).map(|b| (m, b))).collect())
    }

    /// Predicates no operator adds or deletes.
    pub fn static_predicates(&self) -> BTreeSet<Symbol> {
        let dynamic: BTreeSet<&Symbol> =
            self.operators.iter().flat_map(|o| o.add.iter().chain(&o.del).map(|a| &a.pred)).collect();
        self.predicates.keys().filter(|p| !dynamic.contains(p)).cloned().collect()
    }

    /// Constants mentioned anywhere in the domain.
    pub fn constants(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        let mut terms = |ts: &[Term]| {
            for t in ts {
                if let Term::Const(c) = t {
                    out.insert(c.clone());
                }
            }
        };
        for o in &self.operators {
            for l in &o.pre {
                terms(&l.atom.args);
            }
            for a in o.add.iter().chain(&o.del) {
                terms(&a.args);
            }
        }
        for m in &self.methods {
            terms(&m.head.args);
            for l in &m.pre {
                terms(&l.atom.args);
            }
            for t in &m.network.tasks {
                terms(&t.args);
            }
            for c in &m.network.constraints {
                terms(&c.literal.atom.args);
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub name: Symbol,
    pub domain: Arc<Domain>,
    pub init: State,
    pub network: TaskNetwork,
    pub objects: BTreeSet<Symbol>,
    pub preference: crate::formula::Gpf,
}

impl Problem {
    /// The quantification universe: declared objects plus every constant in the
    /// initial state, the task network and the domain.
    pub fn universe(&self) -> Vec<Symbol> {
        let mut out = self.objects.clone();
        for f in self.init.facts.iter() {
            for t in &f.args {
                if let Term::Const(c) = t {
                    out.insert(c.clone());
                }
            }
        }
        for t in &self.network.tasks {
            for a in &t.args {
                if let Term::Const(c) = a {
                    out.insert(c.clone());
                }
            }
        }
        out.extend(self.domain.constants());
        out.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("illegal event: {0}")]
    IllegalEvent(String),
    #[error("task {0} is primitive")]
    NotNonprimitive(String),
    #[error("task {0} is not ground")]
    NotGround(String),
    #[error("{name}: expected {expected} arguments, found {found}")]
    ArityMismatch { name: String, expected: usize, found: usize },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(name: &str, params: &[&str], pre: Vec<Literal>, add: Vec<Atom>, del: Vec<Atom>) -> Operator {
        Operator { name: sym(name), params: params.iter().map(|p| sym(p)).collect(), pre, add, del }
    }

    fn task(symbol: &str, args: &[&str], kind: TaskKind) -> Task {
        Task { symbol: sym(symbol), args: Atom::new("x", args).args, kind }
    }

    fn method(branch: &str, head: Task) -> Method {
        Method { branch: sym(branch), head, params: vec![], pre: vec![], network: TaskNetwork::ordered(vec![]) }
    }

    #[test]
    fn drive_moves_the_car() {
        let drive = op(
            "!drive",
            &["a", "b"],
            vec![Literal::pos(Atom::new("at", &["?a"]))],
            vec![Atom::new("at", &["?b"])],
            vec![Atom::new("at", &["?a"])],
        );
        let s = State::from_facts([Atom::new("at", &["c1"])]);
        let g = drive.ground(&[sym("c1"), sym("c2")]).unwrap();
        let next = s.apply_operator(&g, 0).unwrap();
        assert_eq!(*next.facts, BTreeSet::from([Atom::new("at", &["c2"])]));
        assert!(next.terminated.contains_key(&0));
    }

    #[test]
    fn empty_effects_leave_facts_alone() {
        let noop = op("!wait", &[], vec![], vec![], vec![]);
        let s = State::from_facts([Atom::new("p", &[])]);
        let next = s.apply_operator(&noop.ground(&[]).unwrap(), 3).unwrap();
        assert_eq!(next.facts, s.facts);
    }

    #[test]
    fn failed_precondition_is_reported() {
        let o = op("!go", &[], vec![Literal::neg(Atom::new("blocked", &[]))], vec![], vec![]);
        let s = State::from_facts([Atom::new("blocked", &[])]);
        let err = s.apply_operator(&o.ground(&[]).unwrap(), 0).unwrap_err();
        assert_eq!(err, ModelError::PreconditionViolation("(not (blocked))".into()));
    }

    #[test]
    fn start_then_end_moves_instance_to_terminated() {
        let unit = UnitRef { id: 1, kind: Arc::new(UnitKind::Task { symbol: sym("m"), args: vec![] }) };
        let s = State::default();
        let s1 = s.apply_event(&Event::Start(unit.clone())).unwrap();
        assert_eq!(s1.executing.keys().copied().collect::<Vec<_>>(), vec![1]);
        let s2 = s1.apply_event(&Event::End(unit.clone())).unwrap();
        assert!(s2.executing.is_empty());
        assert_eq!(s2.terminated.keys().copied().collect::<Vec<_>>(), vec![1]);
        assert!(matches!(s2.apply_event(&Event::Start(unit.clone())), Err(ModelError::IllegalEvent(_))));
        assert!(matches!(s.apply_event(&Event::End(unit)), Err(ModelError::IllegalEvent(_))));
    }

    #[test]
    fn operator_events_never_execute() {
        let o = op("!go", &[], vec![], vec![], vec![]);
        let e = Event::Op { id: 7, op: Arc::new(o.ground(&[]).unwrap()) };
        let s = State::default().apply_event(&e).unwrap();
        assert!(s.executing.is_empty());
        assert!(s.any_terminated(|k| k.matches_task("!go", &[])));
        assert!(!s.any_executing(|k| k.matches_task("!go", &[])));
    }

    #[test]
    fn relevant_methods_in_declaration_order() {
        let head = task("arrange-trans", &[], TaskKind::Nonprimitive);
        let domain = Domain::new(
            sym("travel"),
            vec![],
            vec![
                method("by-flight-trans", head.clone()),
                method("by-train-trans", head.clone()),
                method("other", task("arrange-acc", &[], TaskKind::Nonprimitive)),
            ],
            BTreeMap::new(),
        );
        let found = domain.relevant_methods(&head).unwrap();
        let names: Vec<&str> = found.iter().map(|(m, _)| &*m.branch).collect();
        assert_eq!(names, ["by-flight-trans", "by-train-trans"]);
    }

    #[test]
    fn relevant_methods_rejects_primitive_and_mismatch() {
        let domain = Domain::new(
            sym("d"),
            vec![op("!pay", &["c"], vec![], vec![], vec![])],
            vec![method("m", task("go", &["home"], TaskKind::Nonprimitive))],
            BTreeMap::new(),
        );
        let prim = task("!pay", &["visa"], TaskKind::Primitive);
        assert!(matches!(domain.relevant_methods(&prim), Err(ModelError::NotNonprimitive(_))));
        let other = task("go", &["work"], TaskKind::Nonprimitive);
        assert!(domain.relevant_methods(&other).unwrap().is_empty());
    }

    #[test]
    fn method_grounding_enumerates_facts() {
        let m = Method {
            branch: sym("pick"),
            head: task("choose", &[], TaskKind::Nonprimitive),
            params: vec![sym("x")],
            pre: vec![Literal::pos(Atom::new("item", &["?x"])), Literal::neg(Atom::new("bad", &["?x"]))],
            network: TaskNetwork::ordered(vec![]),
        };
        let s = State::from_facts([
            Atom::new("item", &["a"]),
            Atom::new("item", &["b"]),
            Atom::new("item", &["c"]),
            Atom::new("bad", &["b"]),
        ]);
        let gs = m.groundings(&Bindings::new(), &s);
        let xs: Vec<String> = gs.iter().map(|b| b[&sym("x")].to_string()).collect();
        assert_eq!(xs, ["a", "c"]);
    }

    #[test]
    fn trace_validation_catches_tampering() {
        let unit = UnitRef { id: 0, kind: Arc::new(UnitKind::Task { symbol: sym("t"), args: vec![] }) };
        let mut tr = Trace::new(State::default());
        tr.push(Event::Start(unit.clone())).unwrap();
        tr.push(Event::End(unit)).unwrap();
        assert!(tr.validate().is_ok());
        tr.states[1] = State::default();
        assert!(tr.validate().is_err());
    }
}
