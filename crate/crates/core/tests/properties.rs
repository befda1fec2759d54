use proptest::prelude::*;

use htnpref::generator::{gen_instance, GenConfig};
use htnpref::oracle::{enumerate_all, EnumerationCaps};
use htnpref::parser::{parse_preference, print_gpf};
use htnpref::search::{solve, SearchConfig};
use htnpref::Weight;

fn small(seed: u64) -> GenConfig {
    GenConfig { seed, max_plans: 500, ..GenConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn generator_is_deterministic(seed in any::<u64>()) {
        let a = gen_instance(&small(seed)).unwrap();
        let b = gen_instance(&small(seed)).unwrap();
        prop_assert_eq!(a.domain_text, b.domain_text);
        prop_assert_eq!(a.problem_text, b.problem_text);
        prop_assert_eq!(a.preference_text, b.preference_text);
    }

    #[test]
    fn best_first_matches_enumeration(seed in 1000u64..1_000_000) {
        let inst = gen_instance(&small(seed)).unwrap();
        let oracle = enumerate_all(&inst.problem, &EnumerationCaps::default()).unwrap();
        prop_assert_eq!(oracle.plan_count > 0, inst.solvable);
        match solve(&inst.problem, &SearchConfig::default()) {
            Ok(sol) => prop_assert_eq!(Some(sol.weight), oracle.best_weight),
            Err(e) => prop_assert!(oracle.best_weight.is_none(), "{e}"),
        }
    }

    #[test]
    fn generated_preferences_reprint(seed in any::<u64>()) {
        let inst = gen_instance(&small(seed)).unwrap();
        let d = &inst.problem.domain;
        let g = parse_preference(&inst.preference_text, d).unwrap();
        prop_assert_eq!(parse_preference(&print_gpf(&g), d).unwrap(), g);
    }

    #[test]
    fn weights_print_and_parse(n in 0i64..=1000) {
        let w = Weight::new(n, 1000).unwrap();
        prop_assert_eq!(Weight::parse(&w.to_string()), Some(w));
    }
}
