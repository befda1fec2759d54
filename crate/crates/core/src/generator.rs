//! Seeded random HTN instances with preferences, for property tests.
//!
//! Instances are produced as text and parsed back, so every generated
//! instance has been through the parser. Compound tasks live in layers and a
//! method of layer k only calls primitives or tasks of lower layers, which
//! keeps the set of plans finite.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::Problem;
use crate::oracle::{enumerate_all, Cap, EnumerationCaps, OracleError};
use crate::parser::{load_problem, parse_domain};

/// Which basic-formula constructs the preference generator may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Constructs {
    pub temporal: bool,
    pub occurrence: bool,
    pub apply: bool,
    pub precedence: bool,
    pub hold: bool,
    pub quantifiers: bool,
    pub final_state: bool,
    pub conditional: bool,
}

impl Constructs {
    pub const ALL: Constructs = Constructs {
        temporal: true,
        occurrence: true,
        apply: true,
        precedence: true,
        hold: true,
        quantifiers: true,
        final_state: true,
        conditional: true,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    pub num_operators: usize,
    pub num_methods: usize,
    pub max_subtasks: usize,
    pub max_depth: usize,
    pub num_constants: usize,
    /// Upper bound on the node count of the generated preference.
    pub preference_budget: usize,
    pub constructs: Constructs,
    /// Instances whose decomposition tree could yield more plans than this
    /// are regenerated.
    pub max_plans: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            num_operators: 4,
            num_methods: 5,
            max_subtasks: 3,
            max_depth: 3,
            num_constants: 3,
            preference_budget: 15,
            constructs: Constructs::ALL,
            max_plans: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid generator config: {0}")]
pub struct InvalidConfig(String);

impl GenConfig {
    pub fn with_seed(seed: u64) -> GenConfig {
        GenConfig { seed, ..GenConfig::default() }
    }

    pub fn validate(&self) -> Result<(), InvalidConfig> {
        let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(InvalidConfig(what.into())) };
        check((2..=6).contains(&self.num_operators), "operators must be 2 to 6")?;
        check((2..=8).contains(&self.num_methods), "methods must be 2 to 8")?;
        check((1..=3).contains(&self.max_subtasks), "subtasks must be 1 to 3")?;
        check((1..=4).contains(&self.max_depth), "depth must be 1 to 4")?;
        check(self.max_depth <= self.num_methods, "need a method per layer")?;
        check((2..=5).contains(&self.num_constants), "constants must be 2 to 5")?;
        check((1..=25).contains(&self.preference_budget), "preference budget must be 1 to 25")?;
        check(self.max_plans >= 1, "plan cap must be positive")
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: Problem,
    pub solvable: bool,
    pub domain_text: String,
    pub problem_text: String,
    pub preference_text: String,
}

impl Instance {
    /// Writes `NAME.htn`, `NAME-1.prob` and `NAME-1.pref` into `dir`.
    pub fn write(&self, dir: &Path, name: &str) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{name}.htn")), &self.domain_text)?;
        std::fs::write(dir.join(format!("{name}-1.prob")), &self.problem_text)?;
        std::fs::write(dir.join(format!("{name}-1.pref")), &self.preference_text)
    }
}

const PREDICATES: [&str; 3] = ["p0", "p1", "p2"];

#[derive(Clone)]
struct Sig {
    name: String,
    arity: usize,
}

struct MethodSpec {
    task: usize,
    branch: String,
    text: String,
    /// Subtasks: a primitive or a compound task index.
    subtasks: Vec<Sub>,
    fresh_var: bool,
}

#[derive(Clone, Copy)]
enum Sub {
    Op,
    Task(usize),
}

struct Draft {
    ops: Vec<Sig>,
    tasks: Vec<Sig>,
    methods: Vec<MethodSpec>,
    constants: Vec<String>,
    top: Vec<usize>,
}

impl Draft {
    /// Plan count of the decomposition tree with preconditions ignored.
    fn plan_bound(&self) -> u128 {
        let k = self.constants.len() as u128;
        let mut memo: BTreeMap<usize, u128> = BTreeMap::new();
        fn task(d: &Draft, t: usize, k: u128, memo: &mut BTreeMap<usize, u128>) -> u128 {
            if let Some(&v) = memo.get(&t) {
                return v;
            }
            let mut total: u128 = 0;
            for m in d.methods.iter().filter(|m| m.task == t) {
                let mut n: u128 = if m.fresh_var { k } else { 1 };
                for s in &m.subtasks {
                    if let Sub::Task(u) = *s {
                        n = n.saturating_mul(task(d, u, k, memo));
                    }
                }
                total = total.saturating_add(n);
            }
            memo.insert(t, total);
            total
        }
        self.top.iter().fold(1u128, |acc, &t| acc.saturating_mul(task(self, t, k, &mut memo)))
    }
}

struct Gen {
    rng: ChaCha8Rng,
    cfg: GenConfig,
}

impl Gen {
    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        xs.choose(&mut self.rng).expect("nonempty choice")
    }

    fn effect_atoms(&mut self, arity: usize) -> Vec<String> {
        let mut out = Vec::new();
        for _ in 0..self.rng.gen_range(0..=2) {
            if arity == 1 && self.chance(0.7) {
                out.push(format!("({} ?x)", self.pick(&PREDICATES)));
            } else {
                out.push("(q)".into());
            }
        }
        out.sort();
        out.dedup();
        out
    }

    fn draft(&mut self) -> (Draft, String) {
        let cfg = self.cfg.clone();
        let constants: Vec<String> = (0..cfg.num_constants).map(|i| format!("c{i}")).collect();
        let mut text = String::from("(domain gen\n  (:predicates (obj ?a) (p0 ?a) (p1 ?a) (p2 ?a) (q))\n");
        let mut ops = Vec::new();
        for i in 0..cfg.num_operators {
            let arity = usize::from(self.chance(0.7));
            let name = format!("!o{i}");
            let head = if arity == 1 { format!("({name} ?x)") } else { format!("({name})") };
            let mut pre = Vec::new();
            if self.chance(0.5) {
                let neg = self.chance(0.3);
                let atom = if arity == 1 { format!("({} ?x)", self.pick(&PREDICATES)) } else { "(q)".into() };
                pre.push(if neg { format!("(not {atom})") } else { atom });
            }
            let del = self.effect_atoms(arity);
            let add: Vec<String> = self.effect_atoms(arity).into_iter().filter(|a| !del.contains(a)).collect();
            let _ = writeln!(
                text,
                "  (:operator {head} :pre ({}) :del ({}) :add ({}))",
                pre.join(" "),
                del.join(" "),
                add.join(" ")
            );
            ops.push(Sig { name, arity });
        }

        // One compound task per layer at least; extra methods either add
        // tasks or alternative decompositions.
        let mut layers: Vec<Vec<usize>> = vec![Vec::new(); cfg.max_depth];
        let mut tasks = Vec::new();
        let spare_tasks = cfg.num_methods - cfg.max_depth;
        let extra = if spare_tasks == 0 { 0 } else { self.rng.gen_range(0..=spare_tasks.min(cfg.max_depth)) };
        for l in 0..cfg.max_depth + extra {
            let layer = if l < cfg.max_depth { l } else { self.rng.gen_range(0..cfg.max_depth) };
            layers[layer].push(tasks.len());
            tasks.push(Sig { name: format!("t{}", tasks.len()), arity: usize::from(self.chance(0.5)) });
        }
        let layer_of = |t: usize| layers.iter().position(|l| l.contains(&t)).expect("task has a layer");
        let mut owners: Vec<usize> = (0..tasks.len()).collect();
        while owners.len() < cfg.num_methods {
            owners.push(self.rng.gen_range(0..tasks.len()));
        }
        owners.sort_by_key(|&t| (layer_of(t), t));

        let mut methods = Vec::new();
        for (i, &t) in owners.iter().enumerate() {
            let layer = layer_of(t);
            let head_var = tasks[t].arity == 1;
            let fresh_var = self.chance(0.4);
            let mut pre = Vec::new();
            if fresh_var {
                let p = if self.chance(0.5) { "obj" } else { self.pick(&PREDICATES) };
                pre.push(format!("({p} ?y)"));
            }
            if head_var && self.chance(0.4) {
                let atom = format!("({} ?x)", self.pick(&PREDICATES));
                pre.push(if self.chance(0.3) { format!("(not {atom})") } else { atom });
            }
            let mut vars: Vec<String> = Vec::new();
            if head_var {
                vars.push("?x".into());
            }
            if fresh_var {
                vars.push("?y".into());
            }
            let lower: Vec<usize> = layers[..layer].iter().flatten().copied().collect();
            let n = self.rng.gen_range(1..=cfg.max_subtasks);
            let mut subtasks = Vec::new();
            let mut sub_text = Vec::new();
            for _ in 0..n {
                let (sub, sig) = if !lower.is_empty() && self.chance(0.5) {
                    let u = *self.pick(&lower);
                    (Sub::Task(u), tasks[u].clone())
                } else {
                    let o = self.rng.gen_range(0..ops.len());
                    (Sub::Op, ops[o].clone())
                };
                let arg = if sig.arity == 1 {
                    let mut pool = vars.clone();
                    pool.push(self.pick(&constants).clone());
                    format!(" {}", self.pick(&pool))
                } else {
                    String::new()
                };
                subtasks.push(sub);
                sub_text.push(format!("({}{arg})", sig.name));
            }
            // Methods of a layer above the first call at least one lower task,
            // so that the depth is actually reached.
            if layer > 0 && !subtasks.iter().any(|s| matches!(s, Sub::Task(_))) {
                let u = *self.pick(&layers[layer - 1]);
                let arg = if tasks[u].arity == 1 { format!(" {}", self.pick(&constants)) } else { String::new() };
                subtasks[0] = Sub::Task(u);
                sub_text[0] = format!("({}{arg})", tasks[u].name);
            }
            let head = if head_var { format!("({} ?x)", tasks[t].name) } else { format!("({})", tasks[t].name) };
            let branch = format!("m{i}");
            let method_text =
                format!("  (:method {head} :name {branch} :pre ({}) :tasks ({}))\n", pre.join(" "), sub_text.join(" "));
            methods.push(MethodSpec { task: t, branch, text: method_text, subtasks, fresh_var });
        }
        for m in &methods {
            text.push_str(&m.text);
        }
        text.push_str(")\n");

        let top_layer = &layers[cfg.max_depth - 1];
        let top: Vec<usize> = (0..self.rng.gen_range(1..=2)).map(|_| *self.pick(top_layer)).collect();
        (Draft { ops, tasks, methods, constants, top }, text)
    }

    fn problem_text(&mut self, d: &Draft) -> String {
        let mut facts: Vec<String> = d.constants.iter().map(|c| format!("(obj {c})")).collect();
        for c in &d.constants {
            for p in PREDICATES {
                if self.chance(0.4) {
                    facts.push(format!("({p} {c})"));
                }
            }
        }
        if self.chance(0.5) {
            facts.push("(q)".into());
        }
        let tasks: Vec<String> = d
            .top
            .iter()
            .map(|&t| {
                let s = &d.tasks[t];
                if s.arity == 1 {
                    format!("({} {})", s.name, self.pick(&d.constants))
                } else {
                    format!("({})", s.name)
                }
            })
            .collect();
        format!(
            "(problem gen-{} :domain gen\n  :objects ({})\n  :init ({})\n  :tasks ({}))\n",
            self.cfg.seed,
            d.constants.join(" "),
            facts.join(" "),
            tasks.join(" ")
        )
    }
}

/// Random preference text over the symbols of a draft.
struct PrefGen<'a> {
    g: &'a mut Gen,
    d: &'a Draft,
}

impl PrefGen<'_> {
    fn term(&mut self, scope: &[String]) -> String {
        if !scope.is_empty() && self.g.chance(0.6) {
            format!("?{}", self.g.pick(scope))
        } else {
            self.g.pick(&self.d.constants).clone()
        }
    }

    fn literal(&mut self, scope: &[String]) -> String {
        if self.g.chance(0.2) {
            "(q)".into()
        } else {
            let p = *self.g.pick(&PREDICATES);
            format!("({p} {})", self.term(scope))
        }
    }

    fn task(&mut self, scope: &[String]) -> String {
        let sig =
            if self.g.chance(0.6) { self.g.pick(&self.d.ops).clone() } else { self.g.pick(&self.d.tasks).clone() };
        let name = sig.name.trim_start_matches('!');
        if sig.arity == 1 && self.g.chance(0.5) {
            format!("({name} {})", self.term(scope))
        } else {
            format!("({name})")
        }
    }

    fn method(&mut self) -> String {
        let m = self.g.pick(&self.d.methods);
        format!("({})", m.branch)
    }

    /// A basic formula of at most `budget` nodes.
    fn bdf(&mut self, budget: usize, scope: &mut Vec<String>) -> String {
        let c = self.g.cfg.constructs;
        let mut leaves: Vec<u8> = vec![0];
        if c.occurrence {
            leaves.push(1);
        }
        if c.apply {
            leaves.push(2);
        }
        if c.final_state {
            leaves.push(3);
        }
        if c.precedence {
            leaves.push(4);
        }
        if c.hold {
            leaves.extend([5, 6, 7]);
        }
        let mut inner: Vec<u8> = vec![10, 11, 12];
        if c.temporal {
            inner.extend([13, 14, 15, 16]);
        }
        if c.quantifiers && scope.len() < 2 {
            inner.extend([17, 18]);
        }
        let choice = if budget < 2 || self.g.chance(0.35) { *self.g.pick(&leaves) } else { *self.g.pick(&inner) };
        match choice {
            0 => self.literal(scope),
            1 => format!("(occ {})", self.task(scope)),
            2 => format!("(apply {})", self.method()),
            3 => format!("(final {})", self.literal(scope)),
            4 => format!("(before {} {})", self.task(scope), self.task(scope)),
            5 => format!("(hold-before {} {})", self.task(scope), self.literal(scope)),
            6 => format!("(hold-after {} {})", self.task(scope), self.literal(scope)),
            7 => format!("(hold-between {} {} {})", self.task(scope), self.literal(scope), self.task(scope)),
            10 => format!("(not {})", self.bdf(budget - 1, scope)),
            11 | 12 | 16 if budget >= 3 => {
                let left = self.g.rng.gen_range(1..=budget - 2);
                let a = self.bdf(left, scope);
                let b = self.bdf(budget - 1 - left, scope);
                let head = match choice {
                    11 => "and",
                    12 => "or",
                    _ => "until",
                };
                format!("({head} {a} {b})")
            }
            11 | 12 | 16 => self.literal(scope),
            13 => format!("(next {})", self.bdf(budget - 1, scope)),
            14 => format!("(always {})", self.bdf(budget - 1, scope)),
            15 => format!("(eventually {})", self.bdf(budget - 1, scope)),
            _ => {
                let v = format!("v{}", scope.len());
                scope.push(v.clone());
                let body = self.bdf(budget - 1, scope);
                scope.pop();
                let q = if choice == 17 { "exists" } else { "forall" };
                format!("({q} (?{v}) {body})")
            }
        }
    }

    fn apf(&mut self, budget: usize) -> String {
        let alts = self.g.rng.gen_range(1..=3).min(budget.saturating_sub(1).max(1));
        // The first alternative is always the ideal one.
        let mut rest: Vec<u32> = (1..10).collect();
        rest.shuffle(&mut self.g.rng);
        let mut weights = vec![0];
        weights.extend_from_slice(&rest[..alts - 1]);
        weights.sort_unstable();
        let per = (budget.saturating_sub(1) / alts).max(1);
        let parts: Vec<String> =
            weights.iter().map(|&w| format!("({} {})", self.bdf(per, &mut Vec::new()), weight_text(w))).collect();
        format!("(>> {})", parts.join(" "))
    }

    fn gpf(&mut self, budget: usize) -> String {
        let conditional = self.g.cfg.constructs.conditional;
        match self.g.rng.gen_range(0..4) {
            1 if budget >= 7 => {
                let half = (budget - 1) / 2;
                let op = if self.g.chance(0.5) { "&!" } else { "|!" };
                format!("({op} {} {})", self.apf(half), self.apf(budget - 1 - half))
            }
            2 if budget >= 6 && conditional => {
                let c = self.g.rng.gen_range(1..=3);
                let cond = self.bdf(c, &mut Vec::new());
                format!("(if {cond} {})", self.apf(budget - 1 - c))
            }
            _ => self.apf(budget),
        }
    }
}

fn weight_text(tenths: u32) -> String {
    if tenths == 0 {
        "0".into()
    } else {
        format!("0.{tenths}")
    }
}

/// Generates the instance for `config.seed`; the same config always gives
/// the same instance. `solvable` is decided by searching for one plan.
pub fn gen_instance(config: &GenConfig) -> Result<Instance, InvalidConfig> {
    config.validate()?;
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(config.seed), cfg: config.clone() };
    loop {
        let (draft, domain_text) = g.draft();
        if draft.plan_bound() > config.max_plans as u128 {
            continue;
        }
        let problem_text = g.problem_text(&draft);
        let domain = Arc::new(parse_domain(&domain_text).expect("generated domain parses"));
        for _ in 0..20 {
            let preference_text = PrefGen { g: &mut g, d: &draft }.gpf(config.preference_budget);
            let problem = load_problem(domain.clone(), "gen.prob", &problem_text, "gen.pref", &preference_text)
                .expect("generated instance parses");
            if problem.preference.size() > config.preference_budget {
                continue;
            }
            let caps = EnumerationCaps { max_plans: 1, ..EnumerationCaps::default() };
            let solvable = match enumerate_all(&problem, &caps) {
                Ok(r) => r.plan_count > 0,
                Err(OracleError::CapExceeded { cap: Cap::Plans, .. }) => true,
                Err(e) => panic!("acyclic instance failed to enumerate: {e}"),
            };
            return Ok(Instance { problem, solvable, domain_text, problem_text, preference_text });
        }
    }
}
