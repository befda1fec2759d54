//! Preference formula ASTs: basic desires, atomic and general preferences.
//!
//! Basic desire formulas are kept in negation normal form. `Not` only wraps
//! constructs that are decided directly on a trace (occurrences, method
//! applications, termination and the before/hold family), so every `And`/`Or`
//! is monotone in its children.

use std::fmt;

use num_rational::Ratio;
use num_traits::{One, Zero};

use crate::model::{Bindings, Literal, Symbol, Term};

/// An exact rational in `[0, 1]`; `0` is the best value, `1` the worst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Weight(Ratio<i64>);

impl Weight {
    pub const MIN: Weight = Weight(Ratio::new_raw(0, 1));
    pub const MAX: Weight = Weight(Ratio::new_raw(1, 1));

    pub fn new(numer: i64, denom: i64) -> Option<Weight> {
        if denom == 0 {
            return None;
        }
        Weight::from_ratio(Ratio::new(numer, denom))
    }

    pub fn from_ratio(r: Ratio<i64>) -> Option<Weight> {
        if r < Ratio::zero() || r > Ratio::one() {
            None
        } else {
            Some(Weight(r))
        }
    }

    pub fn ratio(&self) -> Ratio<i64> {
        self.0
    }

    /// Parses `0.4`, `1`, `2/5`.
    pub fn parse(text: &str) -> Option<Weight> {
        if let Some((n, d)) = text.split_once('/') {
            return Weight::new(n.parse().ok()?, d.parse().ok()?);
        }
        let (int, frac) = match text.split_once('.') {
            Some((i, f)) => (i, f),
            None => (text, ""),
        };
        if int.is_empty() && frac.is_empty() {
            return None;
        }
        if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        if frac.len() > 15 || int.len() > 15 {
            return None;
        }
        let denom = 10i64.pow(frac.len() as u32);
        let int: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
        let frac_v: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
        Weight::new(int.checked_mul(denom)?.checked_add(frac_v)?, denom)
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (n, d) = (*self.0.numer(), *self.0.denom());
        if d == 1 {
            return write!(f, "{n}");
        }
        let mut rest = d;
        let (mut twos, mut fives) = (0u32, 0u32);
        while rest % 2 == 0 {
            rest /= 2;
            twos += 1;
        }
        while rest % 5 == 0 {
            rest /= 5;
            fives += 1;
        }
        if rest != 1 {
            return write!(f, "{n}/{d}");
        }
        let digits = twos.max(fives);
        let scaled = n * 10i64.pow(digits) / d;
        let s = format!("{:0>width$}", scaled, width = digits as usize + 1);
        let (int, frac) = s.split_at(s.len() - digits as usize);
        write!(f, "{int}.{}", frac.trim_end_matches('0'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TaskRef {
    pub symbol: Symbol,
    /// Leading arguments the occurrence must carry; may be fewer than the task's arity.
    pub args: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MethodRef {
    pub branch: Symbol,
    /// Leading parameter values of the method application.
    pub args: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Target {
    Task(TaskRef),
    Method(MethodRef),
}

/// Incremental checker for a before/hold construct, see `progression`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monitor {
    pub kind: MonitorKind,
    /// Before: a witness state has been seen. HoldBefore: the fluent held in the
    /// previous state. HoldBetween: a witness with the fluent holding ever since exists.
    pub flag: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MonitorKind {
    Before(TaskRef, TaskRef),
    HoldBefore(TaskRef, Literal),
    HoldAfter(TaskRef, Literal),
    HoldBetween(TaskRef, Literal, TaskRef),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Bdf {
    True,
    False,
    Lit(Literal),
    Final(Literal),
    Occ(TaskRef),
    Apply(MethodRef),
    Before(TaskRef, TaskRef),
    HoldBefore(TaskRef, Literal),
    HoldAfter(TaskRef, Literal),
    HoldBetween(TaskRef, Literal, TaskRef),
    Not(Box<Bdf>),
    And(Vec<Bdf>),
    Or(Vec<Bdf>),
    Exists(Symbol, Box<Bdf>),
    Forall(Symbol, Box<Bdf>),
    Next(Box<Bdf>),
    /// Dual of `Next`: true at the last state.
    WeakNext(Box<Bdf>),
    Always(Box<Bdf>),
    Eventually(Box<Bdf>),
    Until(Box<Bdf>, Box<Bdf>),
    /// Dual of `Until`.
    Release(Box<Bdf>, Box<Bdf>),
    OccNext(TaskRef),
    ApplyNext(MethodRef),
    Terminated(Target),
    Monitor(Monitor),
}

impl Bdf {
    pub fn eventually(b: Bdf) -> Bdf {
        Bdf::Eventually(Box::new(b))
    }

    pub fn always(b: Bdf) -> Bdf {
        Bdf::Always(Box::new(b))
    }

    pub fn occ(symbol: &str, args: &[&str]) -> Bdf {
        Bdf::Occ(TaskRef { symbol: symbol.into(), args: terms(args) })
    }

    pub fn apply(branch: &str, args: &[&str]) -> Bdf {
        Bdf::Apply(MethodRef { branch: branch.into(), args: terms(args) })
    }

    /// Negation pushed through to the directly decidable constructs.
    pub fn negate(&self) -> Bdf {
        use Bdf::*;
        match self {
            True => False,
            False => True,
            Lit(l) => Lit(l.negated()),
            Final(l) => Final(l.negated()),
            Not(inner) => (**inner).clone(),
            And(xs) => Or(xs.iter().map(Bdf::negate).collect()),
            Or(xs) => And(xs.iter().map(Bdf::negate).collect()),
            Exists(v, b) => Forall(v.clone(), Box::new(b.negate())),
            Forall(v, b) => Exists(v.clone(), Box::new(b.negate())),
            Next(b) => WeakNext(Box::new(b.negate())),
            WeakNext(b) => Next(Box::new(b.negate())),
            Always(b) => Eventually(Box::new(b.negate())),
            Eventually(b) => Always(Box::new(b.negate())),
            Until(a, b) => Release(Box::new(a.negate()), Box::new(b.negate())),
            Release(a, b) => Until(Box::new(a.negate()), Box::new(b.negate())),
            Occ(_) | Apply(_) | Before(..) | HoldBefore(..) | HoldAfter(..) | HoldBetween(..) | OccNext(_)
            | ApplyNext(_) | Terminated(_) | Monitor(_) => Not(Box::new(self.clone())),
        }
    }

    /// Replaces bound variables; quantifiers shadow.
    pub fn substitute(&self, b: &Bindings) -> Bdf {
        use Bdf::*;
        let t =
            |r: &TaskRef| TaskRef { symbol: r.symbol.clone(), args: r.args.iter().map(|a| a.substitute(b)).collect() };
        let m = |r: &MethodRef| MethodRef {
            branch: r.branch.clone(),
            args: r.args.iter().map(|a| a.substitute(b)).collect(),
        };
        let bx = |x: &Bdf| Box::new(x.substitute(b));
        match self {
            True | False => self.clone(),
            Lit(l) => Lit(l.substitute(b)),
            Final(l) => Final(l.substitute(b)),
            Occ(r) => Occ(t(r)),
            Apply(r) => Apply(m(r)),
            Before(x, y) => Before(t(x), t(y)),
            HoldBefore(x, l) => HoldBefore(t(x), l.substitute(b)),
            HoldAfter(x, l) => HoldAfter(t(x), l.substitute(b)),
            HoldBetween(x, l, y) => HoldBetween(t(x), l.substitute(b), t(y)),
            Not(x) => Not(bx(x)),
            And(xs) => And(xs.iter().map(|x| x.substitute(b)).collect()),
            Or(xs) => Or(xs.iter().map(|x| x.substitute(b)).collect()),
            Exists(v, body) | Forall(v, body) => {
                let mut inner = b.clone();
                inner.remove(v);
                let body = Box::new(body.substitute(&inner));
                if matches!(self, Exists(..)) {
                    Exists(v.clone(), body)
                } else {
                    Forall(v.clone(), body)
                }
            }
            Next(x) => Next(bx(x)),
            WeakNext(x) => WeakNext(bx(x)),
            Always(x) => Always(bx(x)),
            Eventually(x) => Eventually(bx(x)),
            Until(x, y) => Until(bx(x), bx(y)),
            Release(x, y) => Release(bx(x), bx(y)),
            OccNext(r) => OccNext(t(r)),
            ApplyNext(r) => ApplyNext(m(r)),
            Terminated(Target::Task(r)) => Terminated(Target::Task(t(r))),
            Terminated(Target::Method(r)) => Terminated(Target::Method(m(r))),
            Monitor(mon) => {
                let kind = match &mon.kind {
                    MonitorKind::Before(x, y) => MonitorKind::Before(t(x), t(y)),
                    MonitorKind::HoldBefore(x, l) => MonitorKind::HoldBefore(t(x), l.substitute(b)),
                    MonitorKind::HoldAfter(x, l) => MonitorKind::HoldAfter(t(x), l.substitute(b)),
                    MonitorKind::HoldBetween(x, l, y) => MonitorKind::HoldBetween(t(x), l.substitute(b), t(y)),
                };
                Monitor(crate::formula::Monitor { kind, flag: mon.flag })
            }
        }
    }

    /// Expands every quantifier into a disjunction or conjunction over `universe`.
    pub fn ground(&self, universe: &[Symbol]) -> Bdf {
        use Bdf::*;
        let g = |x: &Bdf| Box::new(x.ground(universe));
        match self {
            Exists(v, body) | Forall(v, body) => {
                let parts: Vec<Bdf> = universe
                    .iter()
                    .map(|c| {
                        let b = Bindings::from([(v.clone(), c.clone())]);
                        body.substitute(&b).ground(universe)
                    })
                    .collect();
                match (self, parts.len()) {
                    (Exists(..), 0) => False,
                    (Forall(..), 0) => True,
                    (_, 1) => parts.into_iter().next().expect("one part"),
                    (Exists(..), _) => Or(parts),
                    _ => And(parts),
                }
            }
            Not(x) => Not(g(x)),
            And(xs) => And(xs.iter().map(|x| x.ground(universe)).collect()),
            Or(xs) => Or(xs.iter().map(|x| x.ground(universe)).collect()),
            Next(x) => Next(g(x)),
            WeakNext(x) => WeakNext(g(x)),
            Always(x) => Always(g(x)),
            Eventually(x) => Eventually(g(x)),
            Until(x, y) => Until(g(x), g(y)),
            Release(x, y) => Release(g(x), g(y)),
            _ => self.clone(),
        }
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        use Bdf::*;
        1 + match self {
            Not(x) | Exists(_, x) | Forall(_, x) | Next(x) | WeakNext(x) | Always(x) | Eventually(x) => x.size(),
            Until(x, y) | Release(x, y) => x.size() + y.size(),
            And(xs) | Or(xs) => xs.iter().map(Bdf::size).sum(),
            _ => 0,
        }
    }
}

fn terms(args: &[&str]) -> Vec<Term> {
    args.iter()
        .map(|a| match a.strip_prefix('?') {
            Some(v) => Term::Var(v.into()),
            None => Term::Const((*a).into()),
        })
        .collect()
}

/// Ordered alternatives; a trace scores the weight of the first one it satisfies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Apf {
    pub alternatives: Vec<(Bdf, Weight)>,
}

impl Apf {
    pub fn single(b: Bdf) -> Apf {
        Apf { alternatives: vec![(b, Weight::MIN)] }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Gpf {
    Atomic(Apf),
    Conditional(Bdf, Box<Gpf>),
    Conj(Vec<Gpf>),
    Disj(Vec<Gpf>),
}

impl Gpf {
    /// Every basic desire in document order: APF alternatives, and for a
    /// conditional its condition before the body.
    pub fn leaves(&self) -> Vec<&Bdf> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Bdf>) {
        match self {
            Gpf::Atomic(apf) => out.extend(apf.alternatives.iter().map(|(b, _)| b)),
            Gpf::Conditional(c, body) => {
                out.push(c);
                body.collect_leaves(out);
            }
            Gpf::Conj(xs) | Gpf::Disj(xs) => xs.iter().for_each(|x| x.collect_leaves(out)),
        }
    }

    pub fn map_leaves(&self, f: &mut impl FnMut(&Bdf) -> Bdf) -> Gpf {
        match self {
            Gpf::Atomic(apf) => {
                Gpf::Atomic(Apf { alternatives: apf.alternatives.iter().map(|(b, w)| (f(b), *w)).collect() })
            }
            Gpf::Conditional(c, body) => Gpf::Conditional(f(c), Box::new(body.map_leaves(f))),
            Gpf::Conj(xs) => Gpf::Conj(xs.iter().map(|x| x.map_leaves(f)).collect()),
            Gpf::Disj(xs) => Gpf::Disj(xs.iter().map(|x| x.map_leaves(f)).collect()),
        }
    }

    /// The preference every plan satisfies at the best value.
    pub fn trivial() -> Gpf {
        Gpf::Atomic(Apf::single(Bdf::True))
    }

    pub fn size(&self) -> usize {
        match self {
            Gpf::Atomic(apf) => 1 + apf.alternatives.iter().map(|(b, _)| b.size()).sum::<usize>(),
            Gpf::Conditional(c, body) => 1 + c.size() + body.size(),
            Gpf::Conj(xs) | Gpf::Disj(xs) => 1 + xs.iter().map(Gpf::size).sum::<usize>(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_parse_and_display() {
        assert_eq!(Weight::parse("0.4"), Weight::new(2, 5));
        assert_eq!(Weight::parse("0"), Some(Weight::MIN));
        assert_eq!(Weight::parse("1.0"), Some(Weight::MAX));
        assert_eq!(Weight::parse("1/3"), Weight::new(1, 3));
        assert_eq!(Weight::parse("1.5"), None);
        assert_eq!(Weight::parse("."), None);
        assert_eq!(Weight::parse("-0.1"), None);
        for s in ["0", "1", "0.4", "0.05", "0.125", "1/3"] {
            assert_eq!(Weight::parse(s).unwrap().to_string(), s);
        }
    }

    #[test]
    fn negation_is_an_involution() {
        let f = Bdf::Until(
            Box::new(Bdf::Next(Box::new(Bdf::occ("a", &[])))),
            Box::new(Bdf::And(vec![Bdf::always(Bdf::apply("m", &[])), Bdf::False])),
        );
        assert_eq!(f.negate().negate(), f);
        assert!(matches!(f.negate(), Bdf::Release(..)));
    }

    #[test]
    fn grounding_expands_quantifiers() {
        let body = Bdf::occ("book-car", &["?c"]);
        let f = Bdf::Exists("c".into(), Box::new(body));
        let g = f.ground(&["a".into(), "b".into()]);
        assert_eq!(g, Bdf::Or(vec![Bdf::occ("book-car", &["a"]), Bdf::occ("book-car", &["b"])]));
        assert_eq!(f.ground(&[]), Bdf::False);
        assert_eq!(f.negate().ground(&[]), Bdf::True);
    }
}
