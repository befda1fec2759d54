//! Ordered task decomposition: the expansion relation shared by the best-first
//! search and the exhaustive oracle.
//!
//! An [`Agenda`] is a persistent list of pending work. Expanding a cursor drills
//! through its front until one operator has been applied, emitting start and end
//! events for every task and method instance on the way, and then fires the end
//! markers that immediately follow the operator.

use std::sync::Arc;

use thiserror::Error;

use crate::model::{Domain, Event, InstanceId, Literal, State, Task, TaskNetwork, UnitKind, UnitRef};
use crate::progression::{LookSet, Reachability};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    /// A ground task still to be accomplished.
    Task(Task),
    /// Ends the unit instance once everything before it is done.
    End(UnitRef),
    /// A before-constraint: must hold when the next task begins.
    Check(Literal),
    /// Unordered members, each a task preceded by its checks.
    Group(Arc<[Vec<Item>]>),
}

#[derive(Debug)]
struct Cell {
    item: Item,
    next: Agenda,
}

#[derive(Debug, Clone, Default)]
pub struct Agenda(Option<Arc<Cell>>);

impl Agenda {
    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    pub fn front(&self) -> Option<&Item> {
        self.0.as_ref().map(|c| &c.item)
    }

    fn tail(&self) -> Agenda {
        self.0.as_ref().map_or_else(Agenda::default, |c| c.next.clone())
    }

    fn push(item: Item, next: Agenda) -> Agenda {
        Agenda(Some(Arc::new(Cell { item, next })))
    }

    fn prepend(items: impl IntoIterator<Item = Item, IntoIter: DoubleEndedIterator>, tail: Agenda) -> Agenda {
        items.into_iter().rev().fold(tail, |acc, it| Agenda::push(it, acc))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Item> {
        let mut cur = self.0.as_deref();
        std::iter::from_fn(move || {
            let c = cur?;
            cur = c.next.0.as_deref();
            Some(&c.item)
        })
    }

    /// Task symbols and methods the pending part of this agenda may still produce.
    pub fn lookahead(&self, reach: &Reachability) -> LookSet {
        fn add(reach: &Reachability, set: &mut LookSet, item: &Item) {
            match item {
                Item::Task(t) => reach.add_task(set, &t.symbol),
                Item::Group(members) => members.iter().flatten().for_each(|i| add(reach, set, i)),
                Item::End(_) | Item::Check(_) => {}
            }
        }
        let mut set = reach.empty();
        for item in self.iter() {
            add(reach, &mut set, item);
        }
        set
    }
}

/// Converts a task network into agenda items.
pub fn network_items(network: &TaskNetwork) -> Vec<Item> {
    let member = |k: usize, t: &Task| {
        let mut items: Vec<Item> =
            network.constraints.iter().filter(|c| c.subtask == k).map(|c| Item::Check(c.literal.clone())).collect();
        items.push(Item::Task(t.clone()));
        items
    };
    if network.unordered && network.tasks.len() > 1 {
        let members: Vec<Vec<Item>> = network.tasks.iter().enumerate().map(|(k, t)| member(k, t)).collect();
        vec![Item::Group(members.into())]
    } else {
        network.tasks.iter().enumerate().flat_map(|(k, t)| member(k, t)).collect()
    }
}

/// Position within a decomposition: what remains, the current state, the next free id.
#[derive(Debug, Clone)]
pub struct Cursor {
    pub agenda: Agenda,
    pub state: State,
    pub next_id: InstanceId,
}

impl Cursor {
    pub fn is_terminal(&self) -> bool {
        self.agenda.is_empty()
    }
}

/// One way to advance a cursor.
#[derive(Debug, Clone)]
pub struct Step {
    pub events: Vec<Event>,
    /// `states[i]` follows `events[i]`.
    pub states: Vec<State>,
    pub cursor: Cursor,
    /// False only when the agenda ran out before any operator could be applied.
    pub applied_operator: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("decomposition depth exceeds {0}")]
pub struct DepthLimit(pub usize);

#[derive(Debug, Clone)]
pub struct Decomposer<'a> {
    pub domain: &'a Domain,
    pub depth_cap: usize,
}

struct Partial {
    cursor: Cursor,
    events: Vec<Event>,
    states: Vec<State>,
}

impl Partial {
    fn emit(&mut self, e: Event, s: State) {
        self.cursor.state = s.clone();
        self.events.push(e);
        self.states.push(s);
    }

    fn fire(&mut self, e: Event) {
        let s = self.cursor.state.apply_event(&e).expect("decomposition emits only legal events");
        self.emit(e, s);
    }

    fn fresh_id(&mut self) -> InstanceId {
        let id = self.cursor.next_id;
        self.cursor.next_id += 1;
        id
    }

    fn finish(self, applied_operator: bool) -> Step {
        Step { events: self.events, states: self.states, cursor: self.cursor, applied_operator }
    }
}

impl<'a> Decomposer<'a> {
    pub fn new(domain: &'a Domain, depth_cap: usize) -> Decomposer<'a> {
        Decomposer { domain, depth_cap }
    }

    pub fn root(network: &TaskNetwork, init: &State) -> Cursor {
        Cursor { agenda: Agenda::prepend(network_items(network), Agenda::default()), state: init.clone(), next_id: 0 }
    }

    /// Every successor of `cursor`, in method declaration, grounding and member order.
    /// Branches violating a precondition or before-constraint are dropped.
    pub fn expand(&self, cursor: &Cursor) -> Result<Vec<Step>, DepthLimit> {
        let mut out = Vec::new();
        let p = Partial { cursor: cursor.clone(), events: Vec::new(), states: Vec::new() };
        self.drill(p, &mut out)?;
        Ok(out)
    }

    fn drill(&self, mut p: Partial, out: &mut Vec<Step>) -> Result<(), DepthLimit> {
        loop {
            let Some(front) = p.cursor.agenda.front().cloned() else {
                out.push(p.finish(false));
                return Ok(());
            };
            let tail = p.cursor.agenda.tail();
            match front {
                Item::End(u) => {
                    p.cursor.agenda = tail;
                    p.fire(Event::End(u));
                }
                Item::Check(l) => {
                    if !p.cursor.state.holds(&l) {
                        return Ok(());
                    }
                    p.cursor.agenda = tail;
                }
                Item::Group(members) => {
                    for k in 0..members.len() {
                        let rest: Vec<Vec<Item>> =
                            members.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, m)| m.clone()).collect();
                        let after = match rest.len() {
                            0 => tail.clone(),
                            1 => Agenda::prepend(rest.into_iter().next().expect("one"), tail.clone()),
                            _ => Agenda::push(Item::Group(rest.into()), tail.clone()),
                        };
                        let q = Partial {
                            cursor: Cursor { agenda: Agenda::prepend(members[k].clone(), after), ..p.cursor.clone() },
                            events: p.events.clone(),
                            states: p.states.clone(),
                        };
                        self.drill(q, out)?;
                    }
                    return Ok(());
                }
                Item::Task(t) if self.domain.operator(&t.symbol).is_some() => {
                    let op = self.domain.operator(&t.symbol).expect("checked");
                    let Some(args) = t.ground_args() else { return Ok(()) };
                    let Ok(ground) = op.ground(&args) else { return Ok(()) };
                    let id = p.fresh_id();
                    let Ok(next) = p.cursor.state.apply_operator(&ground, id) else { return Ok(()) };
                    p.cursor.agenda = tail;
                    p.emit(Event::Op { id, op: Arc::new(ground) }, next);
                    while let Some(Item::End(u)) = p.cursor.agenda.front().cloned() {
                        p.cursor.agenda = p.cursor.agenda.tail();
                        p.fire(Event::End(u));
                    }
                    out.push(p.finish(true));
                    return Ok(());
                }
                Item::Task(t) => {
                    let depth =
                        p.cursor.state.executing.values().filter(|k| matches!(***k, UnitKind::Task { .. })).count();
                    if depth >= self.depth_cap {
                        return Err(DepthLimit(self.depth_cap));
                    }
                    let Ok(relevant) = self.domain.relevant_methods(&t) else { return Ok(()) };
                    let args = t.ground_args().expect("relevant tasks are ground");
                    for (m, head) in relevant {
                        for b in m.groundings(&head, &p.cursor.state) {
                            let mut q = Partial {
                                cursor: p.cursor.clone(),
                                events: p.events.clone(),
                                states: p.states.clone(),
                            };
                            let task_unit = UnitRef {
                                id: q.fresh_id(),
                                kind: Arc::new(UnitKind::Task { symbol: t.symbol.clone(), args: args.clone() }),
                            };
                            let method_unit = UnitRef {
                                id: q.fresh_id(),
                                kind: Arc::new(UnitKind::Method {
                                    branch: m.branch.clone(),
                                    task: t.symbol.clone(),
                                    bindings: m.bound_args(&b),
                                }),
                            };
                            q.fire(Event::Start(task_unit.clone()));
                            q.fire(Event::Start(method_unit.clone()));
                            let network = TaskNetwork {
                                tasks: m.network.tasks.iter().map(|s| s.substitute(&b)).collect(),
                                unordered: m.network.unordered,
                                constraints: m
                                    .network
                                    .constraints
                                    .iter()
                                    .map(|c| crate::model::BeforeConstraint {
                                        literal: c.literal.substitute(&b),
                                        subtask: c.subtask,
                                    })
                                    .collect(),
                            };
                            let mut items = network_items(&network);
                            items.push(Item::End(method_unit));
                            items.push(Item::End(task_unit));
                            q.cursor.agenda = Agenda::prepend(items, tail.clone());
                            self.drill(q, out)?;
                        }
                    }
                    return Ok(());
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_domain, parse_problem};

    fn setup(domain: &str, problem: &str) -> (Arc<Domain>, crate::model::Problem) {
        let d = Arc::new(parse_domain(domain).unwrap());
        let p = parse_problem(problem, d.clone()).unwrap();
        (d, p)
    }

    const TRAVEL: &str = "(domain travel (:predicates (avail ?t) (hasTicket ?t))
        (:operator (!book-train ?t) :pre ((avail ?t)) :del ((avail ?t)) :add ((hasTicket ?t)))
        (:operator (!book-flight ?f) :pre ((avail ?f)) :del ((avail ?f)) :add ((hasTicket ?f)))
        (:method (arrange-trans) :name by-flight-trans :pre ((avail ?f)) :tasks ((!book-flight ?f)))
        (:method (arrange-trans) :name by-train-trans :pre ((avail ?t)) :tasks ((!book-train ?t))))";

    #[test]
    fn two_methods_give_two_children() {
        let (d, p) = setup(TRAVEL, "(problem x :domain travel :init ((avail t1)) :tasks ((arrange-trans)))");
        let dec = Decomposer::new(&d, 64);
        let root = Decomposer::root(&p.network, &p.init);
        let steps = dec.expand(&root).unwrap();
        assert_eq!(steps.len(), 2);
        for s in &steps {
            assert!(s.applied_operator);
            assert!(s.cursor.is_terminal());
            assert_eq!(s.events.len(), 5);
            assert!(matches!(s.events[4], Event::End(_)));
        }
        assert_eq!(steps[0].events[2].to_string(), "(!book-flight t1)");
        assert_eq!(steps[1].events[2].to_string(), "(!book-train t1)");
    }

    #[test]
    fn failing_precondition_prunes_the_branch() {
        let dom = "(domain d (:predicates (ok))
            (:operator (!good))
            (:operator (!bad) :pre ((ok)))
            (:method (t) :name m1 :tasks ((!bad)))
            (:method (t) :name m2 :tasks ((!good))))";
        let (d, p) = setup(dom, "(problem x :domain d :tasks ((t)))");
        let steps = Decomposer::new(&d, 64).expand(&Decomposer::root(&p.network, &p.init)).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].events[2].to_string(), "(!good)");
    }

    #[test]
    fn end_marker_only_agenda_terminates() {
        let dom = "(domain d (:method (t) :name m :tasks ()))";
        let (d, p) = setup(dom, "(problem x :domain d :tasks ((t)))");
        let steps = Decomposer::new(&d, 64).expand(&Decomposer::root(&p.network, &p.init)).unwrap();
        assert_eq!(steps.len(), 1);
        assert!(!steps[0].applied_operator);
        assert!(steps[0].cursor.is_terminal());
        assert_eq!(steps[0].events.len(), 4);
    }

    #[test]
    fn unordered_groups_try_every_member_first() {
        let dom = "(domain d (:operator (!a)) (:operator (!b)) (:operator (!c))
            (:method (t) :name m :tasks ((!a) (!b) (!c)) :unordered))";
        let (d, p) = setup(dom, "(problem x :domain d :tasks ((t)))");
        let dec = Decomposer::new(&d, 64);
        let mut plans = Vec::new();
        let mut stack = vec![(Decomposer::root(&p.network, &p.init), String::new())];
        while let Some((c, acc)) = stack.pop() {
            if c.is_terminal() {
                plans.push(acc);
                continue;
            }
            for s in dec.expand(&c).unwrap() {
                let ops: String = s.events.iter().filter_map(|e| e.action()).map(|a| a.name[1..].to_string()).collect();
                stack.push((s.cursor, format!("{acc}{ops}")));
            }
        }
        plans.sort();
        assert_eq!(plans, ["abc", "acb", "bac", "bca", "cab", "cba"]);
    }

    #[test]
    fn recursion_hits_the_depth_cap() {
        let dom = "(domain d (:operator (!a)) (:method (t) :name m :tasks ((t) (!a))))";
        let (d, p) = setup(dom, "(problem x :domain d :tasks ((t)))");
        let err = Decomposer::new(&d, 8).expand(&Decomposer::root(&p.network, &p.init)).unwrap_err();
        assert_eq!(err, DepthLimit(8));
    }

    #[test]
    fn before_constraints_guard_subtasks() {
        let dom = "(domain d (:predicates (ready))
            (:operator (!prep) :add ((ready)))
            (:operator (!go))
            (:method (t) :name m :tasks ((!go) (!prep)) :constraints ((before 0 (ready))))
            (:method (t) :name n :tasks ((!prep) (!go)) :constraints ((before 1 (ready)))))";
        let (d, p) = setup(dom, "(problem x :domain d :tasks ((t)))");
        let steps = Decomposer::new(&d, 64).expand(&Decomposer::root(&p.network, &p.init)).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].events[2].to_string(), "(!prep)");
    }
}
