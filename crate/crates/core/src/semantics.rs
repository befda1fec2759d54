//! Direct evaluation of preference formulas over complete traces.
//!
//! This is the reference semantics: it never progresses formulas and expands
//! quantifiers lazily with an environment, so it shares no logic with
//! [`crate::progression`] beyond the AST.

use std::cmp::Ordering;

use thiserror::Error;

use crate::formula::{Apf, Bdf, Gpf, MethodRef, MonitorKind, Target, TaskRef, Weight};
use crate::model::{Bindings, Literal, State, Symbol, Term, Trace};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticsError {
    #[error("unbound variable ?{0}")]
    UnboundVariable(String),
    #[error("start index {0} is past the end of the trace")]
    OutOfRange(usize),
}

type Result<T> = std::result::Result<T, SemanticsError>;

struct Eval<'a> {
    trace: &'a Trace,
    universe: &'a [Symbol],
}

fn resolve(args: &[Term], env: &Bindings) -> Result<Vec<Symbol>> {
    args.iter()
        .map(|t| match t {
            Term::Const(c) => Ok(c.clone()),
            Term::Var(v) => env.get(v).cloned().ok_or_else(|| SemanticsError::UnboundVariable(v.to_string())),
        })
        .collect()
}

fn ground_literal(l: &Literal, env: &Bindings) -> Result<Literal> {
    resolve(&l.atom.args, env)?;
    Ok(l.substitute(env))
}

impl Eval<'_> {
    fn n(&self) -> usize {
        self.trace.events.len()
    }

    fn state(&self, i: usize) -> &State {
        &self.trace.states[i]
    }

    fn occurs_at(&self, t: &TaskRef, args: &[Symbol], i: usize) -> bool {
        i < self.n() && self.trace.events[i].is_task_occurrence(&t.symbol, args)
    }

    fn applied_at(&self, m: &MethodRef, args: &[Symbol], i: usize) -> bool {
        i < self.n() && self.trace.events[i].is_method_start(&m.branch, args)
    }

    fn terminated(&self, t: &TaskRef, args: &[Symbol], i: usize) -> bool {
        self.state(i).any_terminated(|k| k.matches_task(&t.symbol, args))
    }

    fn executing(&self, t: &TaskRef, args: &[Symbol], i: usize) -> bool {
        self.state(i).any_executing(|k| k.matches_task(&t.symbol, args))
    }

    /// Terminated first, second neither executing nor terminated.
    fn before_ready(&self, t1: &[Symbol], r1: &TaskRef, t2: &[Symbol], r2: &TaskRef, i: usize) -> bool {
        self.terminated(r1, t1, i) && !self.executing(r2, t2, i) && !self.terminated(r2, t2, i)
    }

    fn before(&self, r1: &TaskRef, r2: &TaskRef, env: &Bindings, from: usize) -> Result<bool> {
        let (a1, a2) = (resolve(&r1.args, env)?, resolve(&r2.args, env)?);
        let n = self.n();
        Ok((from..n).any(|s1| self.before_ready(&a1, r1, &a2, r2, s1) && (s1..n).any(|s2| self.occurs_at(r2, &a2, s2))))
    }

    fn hold_between(&self, r1: &TaskRef, f: &Literal, r2: &TaskRef, env: &Bindings, from: usize) -> Result<bool> {
        let (a1, a2) = (resolve(&r1.args, env)?, resolve(&r2.args, env)?);
        let f = ground_literal(f, env)?;
        let n = self.n();
        Ok((from..n).any(|s1| {
            self.before_ready(&a1, r1, &a2, r2, s1)
                && (s1..n).any(|s2| self.occurs_at(r2, &a2, s2) && (s1..=s2).all(|k| self.state(k).holds(&f)))
        }))
    }

    fn sat(&self, phi: &Bdf, env: &Bindings, i: usize) -> Result<bool> {
        use Bdf::*;
        let n = self.n();
        Ok(match phi {
            True => true,
            False => false,
            Lit(l) => self.state(i).holds(&ground_literal(l, env)?),
            Final(l) => self.state(n).holds(&ground_literal(l, env)?),
            Occ(t) => self.occurs_at(t, &resolve(&t.args, env)?, i),
            Apply(m) => self.applied_at(m, &resolve(&m.args, env)?, i),
            OccNext(t) => i > 0 && self.occurs_at(t, &resolve(&t.args, env)?, i - 1),
            ApplyNext(m) => i > 0 && self.applied_at(m, &resolve(&m.args, env)?, i - 1),
            Terminated(Target::Task(t)) => self.terminated(t, &resolve(&t.args, env)?, i),
            Terminated(Target::Method(m)) => {
                let args = resolve(&m.args, env)?;
                self.state(i).any_terminated(|k| k.matches_method(&m.branch, &args))
            }
            Before(a, b) => self.before(a, b, env, i)?,
            HoldBefore(t, f) => {
                let args = resolve(&t.args, env)?;
                let f = ground_literal(f, env)?;
                (i..n).any(|s1| self.state(s1).holds(&f) && self.occurs_at(t, &args, s1))
            }
            HoldAfter(t, f) => {
                let args = resolve(&t.args, env)?;
                let f = ground_literal(f, env)?;
                (i..=n).any(|s1| self.terminated(t, &args, s1) && self.state(s1).holds(&f))
            }
            HoldBetween(a, f, b) => self.hold_between(a, f, b, env, i)?,
            Monitor(m) => {
                let plain = match &m.kind {
                    MonitorKind::Before(a, b) => Before(a.clone(), b.clone()),
                    MonitorKind::HoldBefore(t, f) => HoldBefore(t.clone(), f.clone()),
                    MonitorKind::HoldAfter(t, f) => HoldAfter(t.clone(), f.clone()),
                    MonitorKind::HoldBetween(a, f, b) => HoldBetween(a.clone(), f.clone(), b.clone()),
                };
                self.sat(&plain, env, i)?
            }
            Not(x) => !self.sat(x, env, i)?,
            And(xs) => {
                for x in xs {
                    if !self.sat(x, env, i)? {
                        return Ok(false);
                    }
                }
                true
            }
            Or(xs) => {
                for x in xs {
                    if self.sat(x, env, i)? {
                        return Ok(true);
                    }
                }
                false
            }
            Exists(v, body) | Forall(v, body) => {
                let want = matches!(phi, Exists(..));
                for c in self.universe {
                    let mut inner = env.clone();
                    inner.insert(v.clone(), c.clone());
                    if self.sat(body, &inner, i)? == want {
                        return Ok(want);
                    }
                }
                !want
            }
            Next(x) => i < n && self.sat(x, env, i + 1)?,
            WeakNext(x) => i == n || self.sat(x, env, i + 1)?,
            Always(x) => {
                for j in i..=n {
                    if !self.sat(x, env, j)? {
                        return Ok(false);
                    }
                }
                true
            }
            Eventually(x) => {
                for j in i..=n {
                    if self.sat(x, env, j)? {
                        return Ok(true);
                    }
                }
                false
            }
            Until(a, b) => {
                for k in i..=n {
                    if self.sat(b, env, k)? {
                        return Ok(true);
                    }
                    if !self.sat(a, env, k)? {
                        return Ok(false);
                    }
                }
                false
            }
            Release(a, b) => {
                for k in i..=n {
                    if !self.sat(b, env, k)? {
                        return Ok(false);
                    }
                    if self.sat(a, env, k)? {
                        return Ok(true);
                    }
                }
                true
            }
        })
    }
}

/// Truth of `phi` over the suffix of `trace` starting at state index `from`.
pub fn satisfies(trace: &Trace, from: usize, phi: &Bdf, universe: &[Symbol]) -> Result<bool> {
    if from > trace.events.len() {
        return Err(SemanticsError::OutOfRange(from));
    }
    Eval { trace, universe }.sat(phi, &Bindings::new(), from)
}

pub fn weight_bdf(trace: &Trace, phi: &Bdf, universe: &[Symbol]) -> Result<Weight> {
    Ok(if satisfies(trace, 0, phi, universe)? { Weight::MIN } else { Weight::MAX })
}

/// Value of the first satisfied alternative, or the worst value.
pub fn weight_apf(trace: &Trace, apf: &Apf, universe: &[Symbol]) -> Result<Weight> {
    for (phi, w) in &apf.alternatives {
        if satisfies(trace, 0, phi, universe)? {
            return Ok(*w);
        }
    }
    Ok(Weight::MAX)
}

pub fn weight_gpf(trace: &Trace, gpf: &Gpf, universe: &[Symbol]) -> Result<Weight> {
    Ok(match gpf {
        Gpf::Atomic(apf) => weight_apf(trace, apf, universe)?,
        Gpf::Conditional(cond, body) => {
            if weight_bdf(trace, cond, universe)? == Weight::MAX {
                Weight::MIN
            } else {
                weight_gpf(trace, body, universe)?
            }
        }
        Gpf::Conj(xs) => {
            let mut w = Weight::MIN;
            for x in xs {
                w = w.max(weight_gpf(trace, x, universe)?);
            }
            w
        }
        Gpf::Disj(xs) => {
            let mut w = Weight::MAX;
            for x in xs {
                w = w.min(weight_gpf(trace, x, universe)?);
            }
            w
        }
    })
}

/// Weights of the top-level constituents of a general conjunction or
/// disjunction; a single-element vector for any other formula.
pub fn constituent_weights(trace: &Trace, gpf: &Gpf, universe: &[Symbol]) -> Result<Vec<Weight>> {
    match gpf {
        Gpf::Conj(xs) | Gpf::Disj(xs) => xs.iter().map(|x| weight_gpf(trace, x, universe)).collect(),
        _ => Ok(vec![weight_gpf(trace, gpf, universe)?]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanOrdering {
    APreferred,
    BPreferred,
    Indistinguishable,
}

impl From<Ordering> for PlanOrdering {
    fn from(o: Ordering) -> Self {
        match o {
            Ordering::Less => PlanOrdering::APreferred,
            Ordering::Greater => PlanOrdering::BPreferred,
            Ordering::Equal => PlanOrdering::Indistinguishable,
        }
    }
}

/// Orders two complete traces by weight; with `tiebreak` equal weights are
/// further ordered lexicographically by constituent weights.
pub fn compare_plans(a: &Trace, b: &Trace, gpf: &Gpf, universe: &[Symbol], tiebreak: bool) -> Result<PlanOrdering> {
    let (wa, wb) = (weight_gpf(a, gpf, universe)?, weight_gpf(b, gpf, universe)?);
    if wa != wb || !tiebreak {
        return Ok(wa.cmp(&wb).into());
    }
    let (va, vb) = (constituent_weights(a, gpf, universe)?, constituent_weights(b, gpf, universe)?);
    Ok(va.cmp(&vb).into())
}
