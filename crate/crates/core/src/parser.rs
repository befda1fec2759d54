//! Domain (`.htn`), problem (`.prob`) and preference (`.pref`) files.
//!
//! Domain:
//! ```text
//! (domain travel
//!   (:predicates (avail ?t) (hasTicket ?t))
//!   (:operator (!book-train ?t) :pre ((avail ?t)) :del ((avail ?t)) :add ((hasTicket ?t)))
//!   (:method (arrange-trans) :name by-train-trans :pre ((avail ?t)) :tasks ((!book-train ?t))))
//! ```
//! Problem: `(problem NAME [:domain D] [:objects (c*)] :init (atom*) :tasks (task*) [:unordered])`.
//! Preference: a single general preference formula.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::formula::{Apf, Bdf, Gpf, MethodRef, MonitorKind, Target, TaskRef, Weight};
use crate::model::{
    Atom, BeforeConstraint, Domain, Literal, Method, Operator, Problem, State, Symbol, Task, TaskKind, TaskNetwork,
    Term,
};
use crate::sexpr::{read_all, read_one, Pos, SExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    InvalidUtf8,
    DuplicateName,
    ArityMismatch,
    UnknownTask,
    UnknownPredicate,
    UnknownMethodName,
    UnboundVariable,
    NonGroundInit,
    NonGroundTask,
    BadValueOrder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub file: String,
    /// 1-based.
    pub line: usize,
    /// 1-based.
    pub column: usize,
    pub message: String,
    pub token: String,
}

impl ParseError {
    pub(crate) fn at(file: &str, pos: Pos, message: &str, token: &str) -> ParseError {
        ParseError::kind(ParseErrorKind::Syntax, file, pos, message, token)
    }

    fn kind(kind: ParseErrorKind, file: &str, pos: Pos, message: &str, token: &str) -> ParseError {
        ParseError {
            kind,
            file: file.to_string(),
            line: pos.line.max(1),
            column: pos.column.max(1),
            message: message.to_string(),
            token: token.to_string(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}", self.file, self.line, self.column, self.message)?;
        if !self.token.is_empty() {
            write!(f, " near `{}`", self.token)?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

type Result<T> = std::result::Result<T, ParseError>;

struct Cx<'a> {
    file: &'a str,
}

impl Cx<'_> {
    fn err(&self, kind: ParseErrorKind, at: &SExpr, message: impl AsRef<str>) -> ParseError {
        ParseError::kind(kind, self.file, at.pos(), message.as_ref(), &at.token())
    }

    fn syntax(&self, at: &SExpr, message: impl AsRef<str>) -> ParseError {
        self.err(ParseErrorKind::Syntax, at, message)
    }

    fn list<'s>(&self, e: &'s SExpr, what: &str) -> Result<&'s [SExpr]> {
        e.as_list().ok_or_else(|| self.syntax(e, format!("expected a list for {what}")))
    }

    fn symbol<'s>(&self, e: &'s SExpr, what: &str) -> Result<&'s str> {
        match e.as_atom() {
            Some(s) if !s.starts_with('?') && !s.starts_with(':') => Ok(s),
            _ => Err(self.syntax(e, format!("expected a symbol for {what}"))),
        }
    }

    fn variable(&self, e: &SExpr) -> Result<Symbol> {
        match e.as_atom().and_then(|s| s.strip_prefix('?')) {
            Some(v) if !v.is_empty() => Ok(v.into()),
            _ => Err(self.syntax(e, "expected a variable")),
        }
    }

    fn term(&self, e: &SExpr) -> Result<Term> {
        match e {
            SExpr::Atom(s, _) if s.starts_with('?') => Ok(Term::Var(self.variable(e)?)),
            SExpr::Atom(s, _) if !s.starts_with(':') => Ok(Term::Const(s.as_str().into())),
            _ => Err(self.syntax(e, "expected a term")),
        }
    }

    fn atom(&self, e: &SExpr) -> Result<Atom> {
        let xs = self.list(e, "an atom")?;
        let Some(head) = xs.first() else {
            return Err(self.syntax(e, "empty atom"));
        };
        let pred = self.symbol(head, "a predicate")?;
        if pred == "not" {
            return Err(self.syntax(e, "negation is not allowed here"));
        }
        Ok(Atom { pred: pred.into(), args: xs[1..].iter().map(|a| self.term(a)).collect::<Result<_>>()? })
    }

    fn literal(&self, e: &SExpr) -> Result<Literal> {
        if e.head() == Some("not") {
            let xs = e.as_list().expect("head checked");
            if xs.len() != 2 {
                return Err(self.syntax(e, "not takes one atom"));
            }
            return Ok(Literal::neg(self.atom(&xs[1])?));
        }
        Ok(Literal::pos(self.atom(e)?))
    }

    fn raw_task(&self, e: &SExpr) -> Result<(Symbol, Vec<Term>)> {
        let xs = self.list(e, "a task")?;
        let Some(head) = xs.first() else {
            return Err(self.syntax(e, "empty task"));
        };
        let symbol = self.symbol(head, "a task symbol")?;
        Ok((symbol.into(), xs[1..].iter().map(|a| self.term(a)).collect::<Result<_>>()?))
    }

    /// Splits `:key value` pairs and bare `:flag`s following `start`.
    fn keywords<'s>(&self, xs: &'s [SExpr], flags: &[&str]) -> Result<Vec<(&'s str, Option<&'s SExpr>, &'s SExpr)>> {
        let mut out: Vec<(&str, Option<&SExpr>, &SExpr)> = Vec::new();
        let mut i = 0;
        while i < xs.len() {
            let key = match xs[i].as_atom() {
                Some(k) if k.starts_with(':') => k,
                _ => return Err(self.syntax(&xs[i], "expected a keyword")),
            };
            if out.iter().any(|(k, _, _)| *k == key) {
                return Err(self.syntax(&xs[i], format!("repeated keyword {key}")));
            }
            if flags.contains(&key) {
                out.push((key, None, &xs[i]));
                i += 1;
            } else {
                let Some(v) = xs.get(i + 1) else {
                    return Err(self.syntax(&xs[i], format!("missing value for {key}")));
                };
                out.push((key, Some(v), &xs[i]));
                i += 2;
            }
        }
        Ok(out)
    }
}

/// Parses a domain file.
pub fn parse_domain(text: &str) -> Result<Domain> {
    parse_domain_named("<domain>", text)
}

pub fn parse_domain_named(file: &str, text: &str) -> Result<Domain> {
    let cx = Cx { file };
    let top = read_one(file, text)?;
    let xs = cx.list(&top, "a domain")?;
    if xs.first().and_then(SExpr::as_atom) != Some("domain") {
        return Err(cx.syntax(&top, "expected (domain NAME ...)"));
    }
    let name = cx.symbol(xs.get(1).ok_or_else(|| cx.syntax(&top, "missing domain name"))?, "the domain name")?;

    let mut predicates: BTreeMap<Symbol, usize> = BTreeMap::new();
    let mut operators: Vec<Operator> = Vec::new();
    let mut raw_methods: Vec<&SExpr> = Vec::new();

    let note_pred = |cx: &Cx, at: &SExpr, atom: &Atom, preds: &mut BTreeMap<Symbol, usize>| -> Result<()> {
        match preds.get(&atom.pred) {
            Some(&n) if n != atom.args.len() => Err(cx.err(
                ParseErrorKind::ArityMismatch,
                at,
                format!("predicate {} used with {} arguments, declared with {n}", atom.pred, atom.args.len()),
            )),
            Some(_) => Ok(()),
            None => {
                preds.insert(atom.pred.clone(), atom.args.len());
                Ok(())
            }
        }
    };

    for item in &xs[2..] {
        match item.head() {
            Some(":predicates") => {
                for p in &item.as_list().expect("list")[1..] {
                    let atom = cx.atom(p)?;
                    note_pred(&cx, p, &atom, &mut predicates)?;
                }
            }
            Some(":operator") => {
                let op = parse_operator(&cx, item)?;
                if operators.iter().any(|o| o.name == op.name) {
                    return Err(cx.err(ParseErrorKind::DuplicateName, item, format!("duplicate operator {}", op.name)));
                }
                for (lit_atom, at) in op.pre.iter().map(|l| &l.atom).chain(&op.add).chain(&op.del).map(|a| (a, item)) {
                    note_pred(&cx, at, lit_atom, &mut predicates)?;
                }
                operators.push(op);
            }
            Some(":method") => raw_methods.push(item),
            _ => return Err(cx.syntax(item, "expected :predicates, :operator or :method")),
        }
    }

    // Compound task arities come from method heads.
    let mut compound: BTreeMap<Symbol, usize> = BTreeMap::new();
    for m in &raw_methods {
        let xs = m.as_list().expect("list");
        let head = xs.get(1).ok_or_else(|| cx.syntax(m, "missing method head"))?;
        let (symbol, args) = cx.raw_task(head)?;
        if symbol.starts_with('!') {
            return Err(cx.syntax(head, "method heads must be compound tasks"));
        }
        match compound.get(&symbol) {
            Some(&n) if n != args.len() => {
                return Err(cx.err(
                    ParseErrorKind::ArityMismatch,
                    head,
                    format!("task {symbol} has {n} arguments elsewhere"),
                ));
            }
            _ => {
                compound.insert(symbol, args.len());
            }
        }
    }

    let ops: BTreeMap<Symbol, usize> = operators.iter().map(|o| (o.name.clone(), o.params.len())).collect();
    let tasks = TaskTable { ops: &ops, compound: &compound };
    let mut methods: Vec<Method> = Vec::new();
    for m in raw_methods {
        let method = parse_method(&cx, m, &tasks)?;
        if methods.iter().any(|x| x.branch == method.branch) {
            return Err(cx.err(ParseErrorKind::DuplicateName, m, format!("duplicate method name {}", method.branch)));
        }
        for l in method.pre.iter().chain(method.network.constraints.iter().map(|c| &c.literal)) {
            note_pred(&cx, m, &l.atom, &mut predicates)?;
        }
        methods.push(method);
    }
    Ok(Domain::new(name.into(), operators, methods, predicates))
}

struct TaskTable<'a> {
    ops: &'a BTreeMap<Symbol, usize>,
    compound: &'a BTreeMap<Symbol, usize>,
}

impl TaskTable<'_> {
    fn resolve(&self, cx: &Cx, at: &SExpr, symbol: Symbol, args: Vec<Term>) -> Result<Task> {
        let (kind, arity) = if let Some(&n) = self.ops.get(&symbol) {
            (TaskKind::Primitive, n)
        } else if let Some(&n) = self.compound.get(&symbol) {
            (TaskKind::Nonprimitive, n)
        } else {
            return Err(cx.err(ParseErrorKind::UnknownTask, at, format!("unknown task {symbol}")));
        };
        if args.len() != arity {
            return Err(cx.err(
                ParseErrorKind::ArityMismatch,
                at,
                format!("task {symbol} takes {arity} arguments, found {}", args.len()),
            ));
        }
        Ok(Task { symbol, args, kind })
    }
}

fn parse_operator(cx: &Cx, e: &SExpr) -> Result<Operator> {
    let xs = e.as_list().expect("list");
    let head = xs.get(1).ok_or_else(|| cx.syntax(e, "missing operator head"))?;
    let hx = cx.list(head, "an operator head")?;
    let name = cx.symbol(hx.first().ok_or_else(|| cx.syntax(head, "empty operator head"))?, "an operator name")?;
    if !name.starts_with('!') || name.len() < 2 {
        return Err(cx.syntax(head, "operator names start with '!'"));
    }
    let params: Vec<Symbol> = hx[1..].iter().map(|p| cx.variable(p)).collect::<Result<_>>()?;
    if params.iter().collect::<BTreeSet<_>>().len() != params.len() {
        return Err(cx.syntax(head, "repeated operator parameter"));
    }
    let mut op = Operator { name: name.into(), params, pre: vec![], add: vec![], del: vec![] };
    for (key, value, at) in cx.keywords(&xs[2..], &[])? {
        let items = cx.list(value.expect("valued"), key)?;
        match key {
            ":pre" => op.pre = items.iter().map(|l| cx.literal(l)).collect::<Result<_>>()?,
            ":add" => op.add = items.iter().map(|a| cx.atom(a)).collect::<Result<_>>()?,
            ":del" => op.del = items.iter().map(|a| cx.atom(a)).collect::<Result<_>>()?,
            _ => return Err(cx.syntax(at, format!("unknown operator keyword {key}"))),
        }
    }
    let bound: BTreeSet<&Symbol> = op.params.iter().collect();
    for atom in op.pre.iter().map(|l| &l.atom).chain(&op.add).chain(&op.del) {
        if let Some(v) = atom.vars().find(|v| !bound.contains(v)) {
            return Err(cx.err(
                ParseErrorKind::UnboundVariable,
                e,
                format!("variable ?{v} is not a parameter of {name}"),
            ));
        }
    }
    Ok(op)
}

fn parse_constraints(cx: &Cx, e: &SExpr, n_tasks: usize) -> Result<Vec<BeforeConstraint>> {
    let mut out = Vec::new();
    for c in cx.list(e, ":constraints")? {
        let xs = cx.list(c, "a constraint")?;
        if xs.len() != 3 || xs[0].as_atom() != Some("before") {
            return Err(cx.syntax(c, "expected (before INDEX LITERAL)"));
        }
        let idx: usize = xs[1]
            .as_atom()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| cx.syntax(&xs[1], "expected a subtask index"))?;
        if idx >= n_tasks {
            return Err(cx.syntax(&xs[1], "subtask index out of range"));
        }
        out.push(BeforeConstraint { literal: cx.literal(&xs[2])?, subtask: idx });
    }
    Ok(out)
}

fn parse_method(cx: &Cx, e: &SExpr, tasks: &TaskTable) -> Result<Method> {
    let xs = e.as_list().expect("list");
    let head_e = &xs[1];
    let (symbol, args) = cx.raw_task(head_e)?;
    let head = tasks.resolve(cx, head_e, symbol, args)?;
    let mut branch: Option<Symbol> = None;
    let mut pre = Vec::new();
    let mut subtasks = Vec::new();
    let mut unordered = false;
    let mut constraints_e: Option<&SExpr> = None;
    for (key, value, at) in cx.keywords(&xs[2..], &[":unordered"])? {
        match key {
            ":name" => branch = Some(cx.symbol(value.expect("valued"), "a method name")?.into()),
            ":pre" => {
                pre = cx.list(value.expect("valued"), key)?.iter().map(|l| cx.literal(l)).collect::<Result<_>>()?
            }
            ":tasks" => {
                for t in cx.list(value.expect("valued"), key)? {
                    let (s, a) = cx.raw_task(t)?;
                    subtasks.push(tasks.resolve(cx, t, s, a)?);
                }
            }
            ":unordered" => unordered = true,
            ":constraints" => constraints_e = value,
            _ => return Err(cx.syntax(at, format!("unknown method keyword {key}"))),
        }
    }
    let branch = branch.ok_or_else(|| cx.syntax(e, "method needs :name"))?;
    let constraints = match constraints_e {
        Some(c) => parse_constraints(cx, c, subtasks.len())?,
        None => Vec::new(),
    };

    let mut params: Vec<Symbol> = Vec::new();
    let mut note = |v: &Symbol| {
        if !params.contains(v) {
            params.push(v.clone());
        }
    };
    let term_vars = |ts: &[Term]| -> Vec<Symbol> {
        ts.iter().filter_map(|t| if let Term::Var(v) = t { Some(v.clone()) } else { None }).collect()
    };
    term_vars(&head.args).iter().for_each(&mut note);
    let bindable: BTreeSet<Symbol> = term_vars(&head.args)
        .into_iter()
        .chain(pre.iter().filter(|l| l.positive).flat_map(|l| l.atom.vars().cloned()))
        .collect();
    for l in &pre {
        l.atom.vars().for_each(&mut note);
    }
    for t in &subtasks {
        term_vars(&t.args).iter().for_each(&mut note);
    }
    for c in &constraints {
        c.literal.atom.vars().for_each(&mut note);
    }
    if let Some(v) = params.iter().find(|v| !bindable.contains(*v)) {
        return Err(cx.err(
            ParseErrorKind::UnboundVariable,
            e,
            format!("variable ?{v} of {branch} is bound by neither the head nor a positive precondition"),
        ));
    }
    Ok(Method { branch, head, params, pre, network: TaskNetwork { tasks: subtasks, unordered, constraints } })
}

/// Parses a problem against an already parsed domain. The preference is left trivial.
pub fn parse_problem(text: &str, domain: Arc<Domain>) -> Result<Problem> {
    parse_problem_named("<problem>", text, domain)
}

pub fn parse_problem_named(file: &str, text: &str, domain: Arc<Domain>) -> Result<Problem> {
    let cx = Cx { file };
    let top = read_one(file, text)?;
    let xs = cx.list(&top, "a problem")?;
    if xs.first().and_then(SExpr::as_atom) != Some("problem") {
        return Err(cx.syntax(&top, "expected (problem NAME ...)"));
    }
    let name = cx.symbol(xs.get(1).ok_or_else(|| cx.syntax(&top, "missing problem name"))?, "the problem name")?;
    let mut objects = BTreeSet::new();
    let mut facts = BTreeSet::new();
    let mut raw_tasks: Vec<&SExpr> = Vec::new();
    let mut unordered = false;
    let mut constraints_e = None;
    let mut saw_tasks = false;
    for (key, value, at) in cx.keywords(&xs[2..], &[":unordered"])? {
        match key {
            ":domain" => {
                let d = cx.symbol(value.expect("valued"), "a domain name")?;
                if d != &*domain.name {
                    return Err(
                        cx.syntax(value.expect("valued"), format!("problem is for domain {d}, not {}", domain.name))
                    );
                }
            }
            ":objects" => {
                for o in cx.list(value.expect("valued"), key)? {
                    objects.insert(Symbol::from(cx.symbol(o, "an object")?));
                }
            }
            ":init" => {
                for f in cx.list(value.expect("valued"), key)? {
                    let atom = cx.atom(f)?;
                    if !atom.is_ground() {
                        return Err(cx.err(ParseErrorKind::NonGroundInit, f, "initial facts must be ground"));
                    }
                    check_predicate(&cx, &domain, f, &atom)?;
                    facts.insert(atom);
                }
            }
            ":tasks" => {
                saw_tasks = true;
                raw_tasks = cx.list(value.expect("valued"), key)?.iter().collect();
            }
            ":unordered" => unordered = true,
            ":constraints" => constraints_e = value,
            _ => return Err(cx.syntax(at, format!("unknown problem keyword {key}"))),
        }
    }
    if !saw_tasks {
        return Err(cx.syntax(&top, "problem needs :tasks"));
    }
    let ops: BTreeMap<Symbol, usize> = domain.operators.iter().map(|o| (o.name.clone(), o.params.len())).collect();
    let compound: BTreeMap<Symbol, usize> =
        domain.methods.iter().map(|m| (m.head.symbol.clone(), m.head.args.len())).collect();
    let table = TaskTable { ops: &ops, compound: &compound };
    let mut tasks = Vec::new();
    for t in raw_tasks {
        let (s, a) = cx.raw_task(t)?;
        let task = table.resolve(&cx, t, s, a)?;
        if !task.is_ground() {
            return Err(cx.err(ParseErrorKind::NonGroundTask, t, "initial tasks must be ground"));
        }
        tasks.push(task);
    }
    let constraints = match constraints_e {
        Some(c) => parse_constraints(&cx, c, tasks.len())?,
        None => Vec::new(),
    };
    for c in &constraints {
        if !c.literal.atom.is_ground() {
            return Err(cx.err(
                ParseErrorKind::NonGroundTask,
                constraints_e.expect("set"),
                "constraints must be ground",
            ));
        }
    }
    Ok(Problem {
        name: name.into(),
        domain,
        init: State::from_facts(facts),
        network: TaskNetwork { tasks, unordered, constraints },
        objects,
        preference: Gpf::trivial(),
    })
}

fn check_predicate(cx: &Cx, domain: &Domain, at: &SExpr, atom: &Atom) -> Result<()> {
    match domain.predicates.get(&atom.pred) {
        None => Err(cx.err(ParseErrorKind::UnknownPredicate, at, format!("unknown predicate {}", atom.pred))),
        Some(&n) if n != atom.args.len() => {
            Err(cx.err(ParseErrorKind::ArityMismatch, at, format!("predicate {} takes {n} arguments", atom.pred)))
        }
        Some(_) => Ok(()),
    }
}

/// Parses a preference file. Empty input yields the preference every plan satisfies.
pub fn parse_preference(text: &str, domain: &Domain) -> Result<Gpf> {
    parse_preference_named("<preference>", text, domain)
}

pub fn parse_preference_named(file: &str, text: &str, domain: &Domain) -> Result<Gpf> {
    let cx = Cx { file };
    let all = read_all(file, text)?;
    let top = match all.as_slice() {
        [] => return Ok(Gpf::Atomic(Apf::single(Bdf::And(vec![])))),
        [one] => one,
        [_, second, ..] => return Err(cx.syntax(second, "trailing expression")),
    };
    let p = PrefParser { cx, domain };
    p.gpf(top, &mut Vec::new())
}

/// Parses problem, then attaches the preference.
pub fn load_problem(
    domain: Arc<Domain>,
    problem_file: &str,
    problem_text: &str,
    pref_file: &str,
    pref_text: &str,
) -> Result<Problem> {
    let mut p = parse_problem_named(problem_file, problem_text, domain)?;
    p.preference = parse_preference_named(pref_file, pref_text, &p.domain)?;
    Ok(p)
}

struct PrefParser<'a> {
    cx: Cx<'a>,
    domain: &'a Domain,
}

impl PrefParser<'_> {
    fn gpf(&self, e: &SExpr, scope: &mut Vec<Symbol>) -> Result<Gpf> {
        let cx = &self.cx;
        match e.head() {
            Some(">>") => {
                let xs = e.as_list().expect("list");
                if xs.len() < 2 {
                    return Err(cx.syntax(e, ">> needs at least one alternative"));
                }
                let mut alternatives: Vec<(Bdf, Weight)> = Vec::new();
                for alt in &xs[1..] {
                    let ax = cx.list(alt, "an alternative")?;
                    if ax.len() != 2 {
                        return Err(cx.syntax(alt, "expected (FORMULA VALUE)"));
                    }
                    let w = ax[1]
                        .as_atom()
                        .and_then(Weight::parse)
                        .ok_or_else(|| cx.syntax(&ax[1], "expected a value in [0, 1]"))?;
                    let ok = match alternatives.last() {
                        None => w == Weight::MIN,
                        Some((_, prev)) => *prev < w,
                    };
                    if !ok {
                        return Err(cx.err(
                            ParseErrorKind::BadValueOrder,
                            &ax[1],
                            "values must start at 0 and strictly increase",
                        ));
                    }
                    alternatives.push((self.bdf(&ax[0], scope)?, w));
                }
                Ok(Gpf::Atomic(Apf { alternatives }))
            }
            Some("if") => {
                let xs = e.as_list().expect("list");
                if xs.len() != 3 {
                    return Err(cx.syntax(e, "expected (if CONDITION PREFERENCE)"));
                }
                Ok(Gpf::Conditional(self.bdf(&xs[1], scope)?, Box::new(self.gpf(&xs[2], scope)?)))
            }
            Some(op @ ("&!" | "|!")) => {
                let xs = e.as_list().expect("list");
                if xs.len() < 3 {
                    return Err(cx.syntax(e, format!("{op} needs at least two preferences")));
                }
                let parts = xs[1..].iter().map(|x| self.gpf(x, scope)).collect::<Result<Vec<_>>>()?;
                Ok(if op == "&!" { Gpf::Conj(parts) } else { Gpf::Disj(parts) })
            }
            _ => Ok(Gpf::Atomic(Apf::single(self.bdf(e, scope)?))),
        }
    }

    fn check_terms(&self, at: &SExpr, args: &[Term], scope: &[Symbol]) -> Result<()> {
        for a in args {
            if let Term::Var(v) = a {
                if !scope.contains(v) {
                    return Err(self.cx.err(
                        ParseErrorKind::UnboundVariable,
                        at,
                        format!("variable ?{v} is not quantified"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn literal(&self, e: &SExpr, scope: &[Symbol]) -> Result<Literal> {
        let l = self.cx.literal(e)?;
        check_predicate(&self.cx, self.domain, e, &l.atom)?;
        self.check_terms(e, &l.atom.args, scope)?;
        Ok(l)
    }

    fn task_ref(&self, e: &SExpr, scope: &[Symbol]) -> Result<TaskRef> {
        let (symbol, args) = self.cx.raw_task(e)?;
        let bang: Symbol = format!("!{symbol}").into();
        let (symbol, arity) = if let Some(op) = self.domain.operator(&symbol) {
            (symbol, op.params.len())
        } else if let Some(n) = self.domain.compound_arity(&symbol) {
            (symbol, n)
        } else if let Some(op) = self.domain.operator(&bang) {
            (bang, op.params.len())
        } else {
            return Err(self.cx.err(ParseErrorKind::UnknownTask, e, format!("unknown task {symbol}")));
        };
        if args.len() > arity {
            return Err(self.cx.err(
                ParseErrorKind::ArityMismatch,
                e,
                format!("task {symbol} takes {arity} arguments"),
            ));
        }
        self.check_terms(e, &args, scope)?;
        Ok(TaskRef { symbol, args })
    }

    fn method_ref(&self, e: &SExpr, scope: &[Symbol]) -> Result<MethodRef> {
        let (branch, args) = self.cx.raw_task(e)?;
        let Some(m) = self.domain.method_branch(&branch) else {
            return Err(self.cx.err(ParseErrorKind::UnknownMethodName, e, format!("unknown method {branch}")));
        };
        if args.len() > m.params.len() {
            return Err(self.cx.err(
                ParseErrorKind::ArityMismatch,
                e,
                format!("method {branch} has {} parameters", m.params.len()),
            ));
        }
        self.check_terms(e, &args, scope)?;
        Ok(MethodRef { branch, args })
    }

    fn bdf(&self, e: &SExpr, scope: &mut Vec<Symbol>) -> Result<Bdf> {
        let cx = &self.cx;
        let xs = cx.list(e, "a formula")?;
        let Some(head) = xs.first().and_then(SExpr::as_atom) else {
            return Err(cx.syntax(e, "expected a formula"));
        };
        let args = &xs[1..];
        let arity = |n: usize| -> Result<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(cx.syntax(e, format!("{head} takes {n} argument(s)")))
            }
        };
        let b = |x: Bdf| Box::new(x);
        Ok(match head {
            "and" => Bdf::And(args.iter().map(|a| self.bdf(a, scope)).collect::<Result<_>>()?),
            "or" => Bdf::Or(args.iter().map(|a| self.bdf(a, scope)).collect::<Result<_>>()?),
            "not" => {
                arity(1)?;
                self.bdf(&args[0], scope)?.negate()
            }
            "next" => {
                arity(1)?;
                Bdf::Next(b(self.bdf(&args[0], scope)?))
            }
            "always" => {
                arity(1)?;
                Bdf::Always(b(self.bdf(&args[0], scope)?))
            }
            "eventually" => {
                arity(1)?;
                Bdf::Eventually(b(self.bdf(&args[0], scope)?))
            }
            "until" => {
                arity(2)?;
                Bdf::Until(b(self.bdf(&args[0], scope)?), b(self.bdf(&args[1], scope)?))
            }
            "exists" | "forall" => {
                arity(2)?;
                let vars = cx.list(&args[0], "quantified variables")?;
                if vars.is_empty() {
                    return Err(cx.syntax(&args[0], "no quantified variables"));
                }
                let vars: Vec<Symbol> = vars.iter().map(|v| cx.variable(v)).collect::<Result<_>>()?;
                for (i, v) in vars.iter().enumerate() {
                    if scope.contains(v) || vars[..i].contains(v) {
                        return Err(cx.syntax(&args[0], format!("variable ?{v} is quantified twice")));
                    }
                }
                let depth = scope.len();
                scope.extend(vars.iter().cloned());
                let body = self.bdf(&args[1], scope);
                scope.truncate(depth);
                let mut out = body?;
                for v in vars.into_iter().rev() {
                    out = if head == "exists" { Bdf::Exists(v, b(out)) } else { Bdf::Forall(v, b(out)) };
                }
                out
            }
            "final" => {
                arity(1)?;
                Bdf::Final(self.literal(&args[0], scope)?)
            }
            "occ" => {
                arity(1)?;
                Bdf::Occ(self.task_ref(&args[0], scope)?)
            }
            "apply" => {
                arity(1)?;
                Bdf::Apply(self.method_ref(&args[0], scope)?)
            }
            "before" => {
                arity(2)?;
                Bdf::Before(self.task_ref(&args[0], scope)?, self.task_ref(&args[1], scope)?)
            }
            "hold-before" => {
                arity(2)?;
                Bdf::HoldBefore(self.task_ref(&args[0], scope)?, self.literal(&args[1], scope)?)
            }
            "hold-after" => {
                arity(2)?;
                Bdf::HoldAfter(self.task_ref(&args[0], scope)?, self.literal(&args[1], scope)?)
            }
            "hold-between" => {
                arity(3)?;
                Bdf::HoldBetween(
                    self.task_ref(&args[0], scope)?,
                    self.literal(&args[1], scope)?,
                    self.task_ref(&args[2], scope)?,
                )
            }
            ">>" | "if" | "&!" | "|!" => {
                return Err(cx.syntax(e, format!("{head} is not allowed inside a basic formula")))
            }
            _ => Bdf::Lit(self.literal(e, scope)?),
        })
    }
}

// ---------------------------------------------------------------------------
// Printing

fn join<T: fmt::Display>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn print_task_ref(t: &TaskRef) -> String {
    if t.args.is_empty() {
        format!("({})", t.symbol)
    } else {
        format!("({} {})", t.symbol, join(&t.args))
    }
}

fn print_method_ref(m: &MethodRef) -> String {
    if m.args.is_empty() {
        format!("({})", m.branch)
    } else {
        format!("({} {})", m.branch, join(&m.args))
    }
}

/// Prints a basic desire formula; internal progression constructs use
/// names the parser does not accept.
pub fn print_bdf(b: &Bdf) -> String {
    let one = |k: &str, x: &Bdf| format!("({k} {})", print_bdf(x));
    match b {
        Bdf::True => "(and)".into(),
        Bdf::False => "(or)".into(),
        Bdf::Lit(l) => l.to_string(),
        Bdf::Final(l) => format!("(final {l})"),
        Bdf::Occ(t) => format!("(occ {})", print_task_ref(t)),
        Bdf::Apply(m) => format!("(apply {})", print_method_ref(m)),
        Bdf::Before(x, y) => format!("(before {} {})", print_task_ref(x), print_task_ref(y)),
        Bdf::HoldBefore(x, l) => format!("(hold-before {} {l})", print_task_ref(x)),
        Bdf::HoldAfter(x, l) => format!("(hold-after {} {l})", print_task_ref(x)),
        Bdf::HoldBetween(x, l, y) => format!("(hold-between {} {l} {})", print_task_ref(x), print_task_ref(y)),
        Bdf::Not(x) => one("not", x),
        Bdf::And(xs) if xs.is_empty() => "(and)".into(),
        Bdf::Or(xs) if xs.is_empty() => "(or)".into(),
        Bdf::And(xs) => format!("(and {})", join(xs.iter().map(print_bdf))),
        Bdf::Or(xs) => format!("(or {})", join(xs.iter().map(print_bdf))),
        Bdf::Exists(v, x) => format!("(exists (?{v}) {})", print_bdf(x)),
        Bdf::Forall(v, x) => format!("(forall (?{v}) {})", print_bdf(x)),
        Bdf::Next(x) => one("next", x),
        Bdf::WeakNext(x) => format!("(not (next {}))", print_bdf(&x.negate())),
        Bdf::Always(x) => one("always", x),
        Bdf::Eventually(x) => one("eventually", x),
        Bdf::Until(x, y) => format!("(until {} {})", print_bdf(x), print_bdf(y)),
        Bdf::Release(x, y) => format!("(not (until {} {}))", print_bdf(&x.negate()), print_bdf(&y.negate())),
        Bdf::OccNext(t) => format!("(occ-next {})", print_task_ref(t)),
        Bdf::ApplyNext(m) => format!("(apply-next {})", print_method_ref(m)),
        Bdf::Terminated(Target::Task(t)) => format!("(terminated {})", print_task_ref(t)),
        Bdf::Terminated(Target::Method(m)) => format!("(terminated {})", print_method_ref(m)),
        Bdf::Monitor(m) => {
            let inner = match &m.kind {
                MonitorKind::Before(x, y) => Bdf::Before(x.clone(), y.clone()),
                MonitorKind::HoldBefore(x, l) => Bdf::HoldBefore(x.clone(), l.clone()),
                MonitorKind::HoldAfter(x, l) => Bdf::HoldAfter(x.clone(), l.clone()),
                MonitorKind::HoldBetween(x, l, y) => Bdf::HoldBetween(x.clone(), l.clone(), y.clone()),
            };
            format!("(monitor {} {})", m.flag, print_bdf(&inner))
        }
    }
}

pub fn print_gpf(g: &Gpf) -> String {
    match g {
        Gpf::Atomic(apf) if apf.alternatives.len() == 1 => print_bdf(&apf.alternatives[0].0),
        Gpf::Atomic(apf) => {
            format!("(>> {})", join(apf.alternatives.iter().map(|(b, w)| format!("({} {w})", print_bdf(b)))))
        }
        Gpf::Conditional(c, body) => format!("(if {} {})", print_bdf(c), print_gpf(body)),
        Gpf::Conj(xs) => format!("(&! {})", join(xs.iter().map(print_gpf))),
        Gpf::Disj(xs) => format!("(|! {})", join(xs.iter().map(print_gpf))),
    }
}

fn print_list<T: fmt::Display>(xs: &[T]) -> String {
    format!("({})", join(xs))
}

fn print_network_tail(n: &TaskNetwork) -> String {
    let mut s = format!(" :tasks {}", print_list(&n.tasks));
    if n.unordered {
        s.push_str(" :unordered");
    }
    if !n.constraints.is_empty() {
        let cs: Vec<String> = n.constraints.iter().map(|c| format!("(before {} {})", c.subtask, c.literal)).collect();
        s.push_str(&format!(" :constraints {}", print_list(&cs)));
    }
    s
}

pub fn print_domain(d: &Domain) -> String {
    let mut out = format!("(domain {}\n", d.name);
    if !d.predicates.is_empty() {
        let preds: Vec<String> = d
            .predicates
            .iter()
            .map(|(p, &n)| {
                let vars: Vec<String> = (0..n).map(|i| format!("?a{i}")).collect();
                if vars.is_empty() {
                    format!("({p})")
                } else {
                    format!("({p} {})", vars.join(" "))
                }
            })
            .collect();
        out.push_str(&format!("  (:predicates {})\n", preds.join(" ")));
    }
    for o in &d.operators {
        let params: Vec<String> = o.params.iter().map(|p| format!("?{p}")).collect();
        let head =
            if params.is_empty() { format!("({})", o.name) } else { format!("({} {})", o.name, params.join(" ")) };
        out.push_str(&format!(
            "  (:operator {head}\n    :pre {}\n    :del {}\n    :add {})\n",
            print_list(&o.pre),
            print_list(&o.del),
            print_list(&o.add)
        ));
    }
    for m in &d.methods {
        out.push_str(&format!(
            "  (:method {} :name {}\n    :pre {}\n   {})\n",
            m.head,
            m.branch,
            print_list(&m.pre),
            print_network_tail(&m.network)
        ));
    }
    out.push_str(")\n");
    out
}

pub fn print_problem(p: &Problem) -> String {
    let mut out = format!("(problem {} :domain {}\n", p.name, p.domain.name);
    if !p.objects.is_empty() {
        out.push_str(&format!("  :objects ({})\n", join(p.objects.iter())));
    }
    let facts: Vec<&Atom> = p.init.facts.iter().collect();
    out.push_str(&format!("  :init {}\n ", print_list(&facts)));
    out.push_str(&print_network_tail(&p.network));
    out.push_str(")\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRAVEL: &str = "(domain travel
        (:predicates (drivable) (card ?c))
        (:operator (!book-train ?t) :pre ((avail ?t)) :del ((avail ?t)) :add ((hasTicket ?t)))
        (:operator (!book-flight ?f) :pre ((flight ?f)) :add ((hasTicket ?f)))
        (:operator (!book-car ?c ?co) :pre ((car ?c ?co)) :add ((rented ?c)))
        (:operator (!pay ?c) :pre ((card ?c)) :add ((paid ?c)))
        (:method (arrange-trans) :name by-flight-trans :pre ((flight ?f) (card ?c))
            :tasks ((!book-flight ?f) (!pay ?c)))
        (:method (arrange-trans) :name by-train-trans :pre ((avail ?t))
            :tasks ((!book-train ?t))))";

    fn travel() -> Arc<Domain> {
        Arc::new(parse_domain(TRAVEL).unwrap())
    }

    #[test]
    fn single_operator_domain() {
        let d = parse_domain(
            "(domain travel (:operator (!book-train ?t) :pre ((avail ?t)) :del ((avail ?t)) :add ((hasTicket ?t))))",
        )
        .unwrap();
        assert_eq!(d.operators.len(), 1);
        assert_eq!(d.operators[0].params, vec![Symbol::from("t")]);
    }

    #[test]
    fn method_with_two_ordered_subtasks() {
        let d = travel();
        let m = d.method_branch("by-flight-trans").unwrap();
        assert_eq!(m.network.tasks.len(), 2);
        assert!(!m.network.unordered);
        assert!(m.network.tasks.iter().all(Task::is_primitive));
        assert_eq!(m.params, vec![Symbol::from("f"), Symbol::from("c")]);
    }

    #[test]
    fn unbalanced_domain_is_located() {
        let err = parse_domain("(domain d\n  (:operator (!a) :pre ()").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Syntax);
        assert_eq!((err.line, err.column), (2, 3));
    }

    #[test]
    fn domain_errors() {
        let dup = "(domain d (:operator (!a)) (:operator (!a)))";
        assert_eq!(parse_domain(dup).unwrap_err().kind, ParseErrorKind::DuplicateName);
        let arity = "(domain d (:operator (!a ?x) :pre ((p ?x)) :add ((p ?x ?x))))";
        assert_eq!(parse_domain(arity).unwrap_err().kind, ParseErrorKind::ArityMismatch);
        let unknown = "(domain d (:method (t) :name m :tasks ((!nope))))";
        assert_eq!(parse_domain(unknown).unwrap_err().kind, ParseErrorKind::UnknownTask);
        let unbound = "(domain d (:operator (!a ?x)) (:method (t) :name m :tasks ((!a ?y))))";
        assert_eq!(parse_domain(unbound).unwrap_err().kind, ParseErrorKind::UnboundVariable);
    }

    #[test]
    fn problem_with_root_task() {
        let p = parse_problem("(problem p :init ((drivable)) :tasks ((arrange-trans)))", travel()).unwrap();
        assert_eq!(p.network.tasks.len(), 1);
        assert!(!p.network.tasks[0].is_primitive());
        assert!(p.init.facts.contains(&Atom::new("drivable", &[])));
    }

    #[test]
    fn problem_errors() {
        let e = parse_problem("(problem p :init () :tasks ((arrange-acc)))", travel()).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownTask);
        let e = parse_problem("(problem p :init ((card ?c)) :tasks ())", travel()).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::NonGroundInit);
        let e = parse_problem("(problem p :init ((weird)) :tasks ())", travel()).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownPredicate);
    }

    #[test]
    fn existential_occurrence_preference() {
        let d = travel();
        let g = parse_preference("(exists (?c) (eventually (occ (book-car ?c enterprise))))", &d).unwrap();
        let expected = Gpf::Atomic(Apf::single(Bdf::Exists(
            "c".into(),
            Box::new(Bdf::eventually(Bdf::occ("!book-car", &["?c", "enterprise"]))),
        )));
        assert_eq!(g, expected);
    }

    #[test]
    fn train_over_car_apf() {
        let d = travel();
        let g = parse_preference("(>> ((eventually (occ (book-train))) 0) ((eventually (occ (book-car))) 0.4))", &d)
            .unwrap();
        let Gpf::Atomic(apf) = g else { panic!("expected an APF") };
        assert_eq!(apf.alternatives.len(), 2);
        assert_eq!(apf.alternatives[1].1, Weight::new(2, 5).unwrap());
        assert_eq!(apf.alternatives[0].0, Bdf::eventually(Bdf::occ("!book-train", &[])));
    }

    #[test]
    fn value_order_is_enforced() {
        let d = travel();
        let e = parse_preference("(>> ((drivable) 0.4) ((drivable) 0.2))", &d).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::BadValueOrder);
        let e = parse_preference("(>> ((drivable) 0.1))", &d).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::BadValueOrder);
        let e = parse_preference("(eventually (apply (by-bus)))", &d).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownMethodName);
        let e = parse_preference("(occ (book-car ?c))", &d).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnboundVariable);
    }

    #[test]
    fn negation_normal_form_at_parse_time() {
        let d = travel();
        let g = parse_preference("(always (not (eventually (occ (pay mastercard)))))", &d).unwrap();
        let expected = Bdf::always(Bdf::always(Bdf::Not(Box::new(Bdf::occ("!pay", &["mastercard"])))));
        assert_eq!(g, Gpf::Atomic(Apf::single(expected)));
    }

    #[test]
    fn printing_round_trips() {
        let d = travel();
        assert_eq!(parse_domain(&print_domain(&d)).unwrap(), *d);
        for text in [
            "(&! (>> ((eventually (occ (book-train))) 0) ((eventually (occ (book-car))) 0.4)) (if (drivable) (always (not (occ (pay mastercard))))))",
            "(|! (not (next (card visa))) (not (until (drivable) (final (not (drivable))))))",
            "(forall (?x ?y) (or (before (arrange-trans) (pay ?x)) (hold-between (book-train ?y) (drivable) (pay))))",
        ] {
            let g = parse_preference(text, &d).unwrap();
            assert_eq!(parse_preference(&print_gpf(&g), &d).unwrap(), g, "{text}");
        }
        let p = parse_problem(
            "(problem p :objects (z) :init ((drivable) (card visa)) :tasks ((arrange-trans)))",
            d.clone(),
        )
        .unwrap();
        let again = parse_problem(&print_problem(&p), d).unwrap();
        assert_eq!(again.init, p.init);
        assert_eq!(again.network, p.network);
        assert_eq!(again.objects, p.objects);
    }
}
