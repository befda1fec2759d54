//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use htnpref::bench::{load_suite, run, Mode, RunOptions, Status, SuiteProblem};
use htnpref::formula::TaskRef;
use htnpref::generator::{gen_instance, GenConfig};
use htnpref::model::{sym, Atom, Event, Operator, State, Trace, UnitKind, UnitRef};
use htnpref::oracle::{cross_check, enumerate_all, CrossCheckReport, EnumerationCaps};
use htnpref::parser::{parse_domain, parse_preference, parse_problem, print_domain, print_gpf, print_problem};
use htnpref::progression::ProgressOptions;
use htnpref::search::{solve, SearchConfig};
use htnpref::semantics::{compare_plans, satisfies, weight_apf, weight_bdf, weight_gpf, PlanOrdering};
use htnpref::{Apf, Bdf, Gpf, Weight};

const SUITES: [&str; 3] = ["travel", "zeno", "logistics"];
const RANDOM_SEEDS: u64 = 50;
const OPTIMALITY_BUDGET: Duration = Duration::from_secs(300);
const TREND_MIN_PLANS: usize = 90;
const TREND_SHARE: f64 = 0.9;
const TREND_RUN_CAP: Duration = Duration::from_secs(60);
const TREND_BUDGET: Duration = Duration::from_secs(600);
const TRAVEL_BUDGET: Duration = Duration::from_secs(10);
const FUZZ_INPUTS: usize = 1000;
const FUZZ_SEED: u64 = 0x5eed;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn suite(name: &str) -> Vec<SuiteProblem> {
    load_suite(&fixtures().join(name)).unwrap_or_else(|e| panic!("suite {name}: {e}"))
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

/// Cross-check reports for criteria 1 to 3, shared because they cover the same instances.
struct Reports {
    reports: Vec<(String, CrossCheckReport)>,
    errors: Vec<String>,
    random: usize,
    elapsed: Duration,
}

fn collect_reports() -> Reports {
    let start = Instant::now();
    let caps = EnumerationCaps::default();
    let options = ProgressOptions::standard();
    let mut reports = Vec::new();
    let mut errors = Vec::new();
    let mut problems = Vec::new();
    for seed in 1..=RANDOM_SEEDS {
        let inst = gen_instance(&GenConfig::with_seed(seed)).expect("default config is valid");
        problems.push((format!("seed {seed}"), inst.problem));
    }
    let random = problems.len();
    for name in SUITES {
        problems.extend(suite(name).into_iter().map(|sp| (sp.id, sp.problem)));
    }
    for (id, p) in &problems {
        match cross_check(p, &caps, &options) {
            Ok(r) => reports.push((id.clone(), r)),
            Err(e) => errors.push(format!("{id}: {e}")),
        }
    }
    Reports { reports, errors, random, elapsed: start.elapsed() }
}

fn line_outcome(reports: &Reports, lines: &[&str]) -> Outcome {
    let mut failed = Vec::new();
    let mut plans = 0;
    for (id, r) in &reports.reports {
        plans += r.plans;
        for l in r.lines.iter().filter(|l| lines.contains(&l.name.as_str())) {
            if !l.passed {
                failed.push(format!("{id} ({})", l.detail));
            }
        }
    }
    failed.extend(reports.errors.iter().cloned());
    let n = reports.reports.len() + reports.errors.len();
    if failed.is_empty() {
        outcome(true, format!("{n} instances, {plans} plans, zero exceptions"))
    } else {
        outcome(false, format!("{} of {n} instances fail: {}", failed.len(), failed.join("; ")))
    }
}

fn optimality(reports: &Reports) -> Outcome {
    let mut o = line_outcome(reports, &["optimal weight", "solution sound", "oracle consistency"]);
    let solvable = reports.reports.iter().filter(|(_, r)| r.plans > 0).count();
    o.detail = format!(
        "{}; {} random seeds, {solvable} solvable instances, {:.1}s (limit {}s)",
        o.detail,
        reports.random,
        reports.elapsed.as_secs_f64(),
        OPTIMALITY_BUDGET.as_secs()
    );
    o.passed &= reports.random >= 50 && reports.elapsed < OPTIMALITY_BUDGET;
    o
}

fn trend() -> Outcome {
    let start = Instant::now();
    let options = RunOptions { timeout: Some(TREND_RUN_CAP), ..RunOptions::default() };
    let mut total = 0;
    let mut wins = 0;
    let mut losses = Vec::new();
    for name in SUITES {
        for sp in suite(name) {
            let brute = run(&sp.id, &sp.problem, Mode::BruteForce, &options);
            if brute.status == Status::Ok && brute.plan_count.unwrap_or(0) < TREND_MIN_PLANS {
                continue;
            }
            if brute.status == Status::NoPlan {
                continue;
            }
            total += 1;
            let best = run(&sp.id, &sp.problem, Mode::BestFirst, &options);
            if best.status == Status::Ok && best.ne < brute.ne && best.seconds < brute.seconds {
                wins += 1;
            } else {
                losses.push(format!(
                    "{} (NE {} vs {}, {:.3}s vs {:.3}s)",
                    sp.id, best.ne, brute.ne, best.seconds, brute.seconds
                ));
            }
        }
    }
    let elapsed = start.elapsed();
    let share = if total == 0 { 0.0 } else { wins as f64 / total as f64 };
    let mut detail = format!(
        "best first cheaper on {wins} of {total} instances with at least {TREND_MIN_PLANS} plans ({:.0}%, need {:.0}%), {:.1}s (limit {}s)",
        share * 100.0,
        TREND_SHARE * 100.0,
        elapsed.as_secs_f64(),
        TREND_BUDGET.as_secs()
    );
    if !losses.is_empty() {
        detail.push_str(&format!("; slower: {}", losses.join(", ")));
    }
    outcome(total > 0 && share >= TREND_SHARE && elapsed < TREND_BUDGET, detail)
}

fn travel() -> Outcome {
    let start = Instant::now();
    let problems = suite("travel");
    let get = |id: &str| &problems.iter().find(|sp| sp.id == id).unwrap_or_else(|| panic!("{id} missing")).problem;
    let caps = EnumerationCaps::default();
    let mut notes = Vec::new();
    let mut ok = true;

    // Never paying by Mastercard: a zero-weight plan exists, so the answer must avoid it.
    let p = get("travel-1");
    let sol = solve(p, &SearchConfig::default()).expect("travel-1 is solvable");
    let oracle = enumerate_all(p, &caps).expect("travel-1 enumerates");
    let alternative = oracle.best_weight == Some(Weight::MIN);
    let mastercard =
        sol.plan.ops.iter().any(|a| a.name.as_ref() == "!pay" && a.args.iter().any(|x| x.as_ref() == "mastercard"));
    ok &= alternative && !mastercard;
    notes.push(format!("travel-1 pays by mastercard: {mastercard}"));

    // Train over car: a train plan exists, so the answer books one.
    let p = get("travel-2");
    let sol = solve(p, &SearchConfig::default()).expect("travel-2 is solvable");
    let oracle = enumerate_all(p, &caps).expect("travel-2 enumerates");
    let train = sol.plan.ops.iter().any(|a| a.name.as_ref() == "!book-train");
    ok &= oracle.best_weight == Some(Weight::MIN) && train;
    notes.push(format!("travel-2 books a train: {train}"));

    // Aggregate preference: weight equals the enumerated minimum.
    let p = get("travel-3");
    let sol = solve(p, &SearchConfig::default()).expect("travel-3 is solvable");
    let oracle = enumerate_all(p, &caps).expect("travel-3 enumerates");
    ok &= Some(sol.weight) == oracle.best_weight;
    notes.push(format!("travel-3 weight {} vs minimum {:?}", sol.weight, oracle.best_weight.map(|w| w.to_string())));

    let elapsed = start.elapsed();
    ok &= elapsed < TRAVEL_BUDGET;
    notes.push(format!("{:.2}s (limit {}s)", elapsed.as_secs_f64(), TRAVEL_BUDGET.as_secs()));
    outcome(ok, notes.join(", "))
}

fn w(s: &str) -> Weight {
    Weight::parse(s).expect("weight literal")
}

fn op(name: &str, add: &[&str]) -> Arc<htnpref::model::GroundOperator> {
    let o = Operator {
        name: sym(name),
        params: vec![],
        pre: vec![],
        add: add.iter().map(|p| Atom::new(p, &[])).collect(),
        del: vec![],
    };
    Arc::new(o.ground(&[]).expect("no parameters"))
}

fn unit(id: u32, kind: UnitKind) -> UnitRef {
    UnitRef { id, kind: Arc::new(kind) }
}

/// start(arrange-trans), start(by-train-trans), book-train, pay, end, end.
fn train_trace() -> Trace {
    let t = unit(1, UnitKind::Task { symbol: sym("arrange-trans"), args: vec![] });
    let m = unit(2, UnitKind::Method { branch: sym("by-train-trans"), task: sym("arrange-trans"), bindings: vec![] });
    let mut tr = Trace::new(State::default());
    for e in [
        Event::Start(t.clone()),
        Event::Start(m.clone()),
        Event::Op { id: 3, op: op("!book-train", &["ticket"]) },
        Event::Op { id: 4, op: op("!pay", &["paid"]) },
        Event::End(m),
        Event::End(t),
    ] {
        tr.push(e).expect("trace event applies");
    }
    tr
}

fn car_trace() -> Trace {
    let mut tr = Trace::new(State::default());
    tr.push(Event::Op { id: 1, op: op("!book-car", &[]) }).expect("trace event applies");
    tr
}

fn apf(alts: &[(Bdf, &str)]) -> Apf {
    Apf { alternatives: alts.iter().map(|(b, v)| (b.clone(), w(v))).collect() }
}

/// A preference every trace scores at `v`.
fn fixed(v: &str) -> Gpf {
    if w(v) == Weight::MIN {
        Gpf::Atomic(Apf::single(Bdf::True))
    } else {
        Gpf::Atomic(apf(&[(Bdf::False, "0"), (Bdf::True, v)]))
    }
}

fn semantics_examples() -> Outcome {
    let tr = train_trace();
    let car = car_trace();
    let r = |s: &str| TaskRef { symbol: sym(s), args: vec![] };
    let booked_car = Bdf::eventually(Bdf::occ("!book-car", &[]));
    let booked_train = Bdf::eventually(Bdf::occ("!book-train", &[]));
    let checks: Vec<(&str, bool)> = vec![
        ("eventually book-train holds", satisfies(&tr, 0, &booked_train, &[]) == Ok(true)),
        (
            "before with absent task fails",
            satisfies(&tr, 0, &Bdf::Before(r("arrange-trans"), r("arrange-acc")), &[]) == Ok(false),
        ),
        ("always true holds", satisfies(&tr, 0, &Bdf::always(Bdf::True), &[]) == Ok(true)),
        ("satisfied desire weighs 0", weight_bdf(&tr, &booked_train, &[]) == Ok(Weight::MIN)),
        ("falsified desire weighs 1", weight_bdf(&tr, &booked_car, &[]) == Ok(Weight::MAX)),
        (
            "false weighs 1",
            weight_bdf(&tr, &Bdf::False, &[]) == Ok(Weight::MAX)
                && weight_bdf(&car, &Bdf::False, &[]) == Ok(Weight::MAX),
        ),
        (
            "second alternative weighs 0.4",
            weight_apf(&tr, &apf(&[(booked_car.clone(), "0"), (booked_train.clone(), "0.4")]), &[]) == Ok(w("0.4")),
        ),
        (
            "first satisfied alternative wins",
            weight_apf(&tr, &apf(&[(booked_train.clone(), "0"), (Bdf::True, "0.4")]), &[]) == Ok(w("0")),
        ),
        (
            "no alternative weighs 1",
            weight_apf(&tr, &apf(&[(booked_car.clone(), "0"), (Bdf::False, "0.4")]), &[]) == Ok(Weight::MAX),
        ),
        (
            "unmet condition weighs 0",
            weight_gpf(&tr, &Gpf::Conditional(Bdf::False, Box::new(fixed("0.7"))), &[]) == Ok(Weight::MIN),
        ),
        ("conjunction takes max", weight_gpf(&tr, &Gpf::Conj(vec![fixed("0"), fixed("0.4")]), &[]) == Ok(w("0.4"))),
        (
            "disjunction takes min",
            weight_gpf(&tr, &Gpf::Disj(vec![fixed("0.3"), Gpf::Atomic(Apf::single(Bdf::False))]), &[]) == Ok(w("0.3")),
        ),
        (
            "lower weight preferred",
            compare_plans(&car, &tr, &Gpf::Atomic(apf(&[(booked_car.clone(), "0.2"), (Bdf::True, "0.5")])), &[], false)
                == Ok(PlanOrdering::APreferred),
        ),
        (
            "equal weights indistinguishable",
            compare_plans(&tr, &car, &fixed("0.4"), &[], false) == Ok(PlanOrdering::Indistinguishable),
        ),
        (
            "constituent vector breaks ties",
            compare_plans(
                &tr,
                &car,
                &Gpf::Conj(vec![fixed("0.4"), Gpf::Atomic(apf(&[(booked_train, "0"), (Bdf::True, "0.3")]))]),
                &[],
                true,
            ) == Ok(PlanOrdering::APreferred),
        ),
    ];
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        outcome(true, format!("{} examples, exact equality", checks.len()))
    } else {
        outcome(false, format!("failed: {}", failed.join(", ")))
    }
}

/// Raw fixture texts: (domain text, [(problem text, preference text)]).
fn fixture_texts(name: &str) -> (String, Vec<(String, String)>) {
    let dir = fixtures().join(name);
    let domain = fs::read_to_string(dir.join(format!("{name}.htn"))).expect("domain file");
    let mut problems = Vec::new();
    for k in 1.. {
        let prob = dir.join(format!("{name}-{k}.prob"));
        if !prob.exists() {
            break;
        }
        let pref = fs::read_to_string(dir.join(format!("{name}-{k}.pref"))).unwrap_or_else(|_| "(and)".into());
        problems.push((fs::read_to_string(prob).expect("problem file"), pref));
    }
    (domain, problems)
}

fn round_trip(name: &str) -> Result<usize, String> {
    let (dtext, problems) = fixture_texts(name);
    let d = parse_domain(&dtext).map_err(|e| e.to_string())?;
    let printed = print_domain(&d);
    let d2 = parse_domain(&printed).map_err(|e| format!("{name} reprinted domain: {e}"))?;
    if d2 != d {
        return Err(format!("{name} domain changes on round trip"));
    }
    let d = Arc::new(d);
    for (i, (ptext, ftext)) in problems.iter().enumerate() {
        let p = parse_problem(ptext, d.clone()).map_err(|e| e.to_string())?;
        let printed = print_problem(&p);
        let p2 = parse_problem(&printed, d.clone()).map_err(|e| format!("{name}-{} reprinted: {e}", i + 1))?;
        if print_problem(&p2) != printed {
            return Err(format!("{name}-{} problem changes on round trip", i + 1));
        }
        let g = parse_preference(ftext, &d).map_err(|e| e.to_string())?;
        let g2 =
            parse_preference(&print_gpf(&g), &d).map_err(|e| format!("{name}-{} reprinted preference: {e}", i + 1))?;
        if g2 != g {
            return Err(format!("{name}-{} preference changes on round trip", i + 1));
        }
    }
    Ok(problems.len())
}

/// Mutates a fixture text or produces token soup.
fn fuzz_input(rng: &mut ChaCha8Rng, corpus: &[String]) -> Vec<u8> {
    const TOKENS: [&str; 16] =
        ["(", ")", "(", ")", "?x", ":pre", ":tasks", "and", "not", "always", ">>", "0.5", "!op", "exists", ";", "\n"];
    match rng.gen_range(0..3) {
        0 => (0..rng.gen_range(0..200)).map(|_| rng.gen()).collect(),
        1 => {
            let n = rng.gen_range(0..40);
            (0..n).flat_map(|_| format!("{} ", TOKENS[rng.gen_range(0..TOKENS.len())]).into_bytes()).collect()
        }
        _ => {
            let mut bytes = corpus[rng.gen_range(0..corpus.len())].clone().into_bytes();
            for _ in 0..rng.gen_range(1..8) {
                if bytes.is_empty() {
                    break;
                }
                let i = rng.gen_range(0..bytes.len());
                match rng.gen_range(0..4) {
                    0 => bytes[i] = rng.gen(),
                    1 => {
                        bytes.remove(i);
                    }
                    2 => bytes.insert(i, b"()?;:\"-"[rng.gen_range(0..7)]),
                    _ => bytes.truncate(i),
                }
            }
            bytes
        }
    }
}

fn parser_robustness() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut corpus = Vec::new();
    let mut files = 0;
    for name in SUITES {
        match round_trip(name) {
            Ok(n) => files += 1 + 2 * n,
            Err(e) => {
                ok = false;
                notes.push(e);
            }
        }
        let (d, ps) = fixture_texts(name);
        corpus.push(d);
        for (p, f) in ps {
            corpus.push(p);
            corpus.push(f);
        }
    }
    notes.push(format!("{files} fixture files round trip"));

    let travel = Arc::new(parse_domain(&fixture_texts("travel").0).expect("travel domain"));
    let mut rng = ChaCha8Rng::seed_from_u64(FUZZ_SEED);
    let mut panics = 0;
    let mut rejected = 0;
    for _ in 0..FUZZ_INPUTS {
        let bytes = fuzz_input(&mut rng, &corpus);
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let d = travel.clone();
        let result = catch_unwind(AssertUnwindSafe(|| {
            [parse_domain(&text).err(), parse_problem(&text, d.clone()).err(), parse_preference(&text, &d).err()]
                .into_iter()
                .flatten()
                .count()
        }));
        match result {
            Ok(n) => rejected += n,
            Err(_) => panics += 1,
        }
    }
    ok &= panics == 0;
    notes.push(format!("{FUZZ_INPUTS} fuzzed inputs, {panics} panics, {rejected} structured parse errors"));
    outcome(ok, notes.join(", "))
}

fn main() {
    std::panic::set_hook(Box::new(|_| {}));
    let reports = collect_reports();
    let results = [
        ("optimality against enumeration", optimality(&reports)),
        ("progression agrees with direct semantics", line_outcome(&reports, &["progression matches semantics"])),
        ("prefix bound properties", line_outcome(&reports, &["prefix bounds"])),
        ("best first beats enumeration", trend()),
        ("travel examples", travel()),
        ("semantics examples", semantics_examples()),
        ("parser robustness", parser_robustness()),
    ];
    let _ = std::panic::take_hook();
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("{} criterion {} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", results.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", results.len());
}
