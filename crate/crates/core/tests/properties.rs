mod common;

use common::{execute, random_program, reachability};
use ectsim::analysis::{critical_points, lint_trace, sync_edges, vector_clocks};
use ectsim::coverage::{coverage_of, growth_curve, merge};
use ectsim::runtime::SchedulerConfig;
use ectsim::trace::{load, save};
use proptest::prelude::*;

fn config(policy: u8, seed: u64) -> SchedulerConfig {
    match policy {
        0 => SchedulerConfig::fifo(seed),
        _ => SchedulerConfig::random(seed),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clocks_match_transitive_closure(prog in 0u64..10_000, policy in 0u8..2, seed in any::<u64>()) {
        let (b, _) = execute(&random_program(prog), "rand.csp", &config(policy, seed), None);
        let vcs = vector_clocks(&b).unwrap();
        let reach = reachability(&b.trace);
        for (a, row) in reach.iter().enumerate() {
            for (c, &y) in row.iter().enumerate() {
                prop_assert_eq!(vcs.before(a as u32, c as u32), y, "events {} {}", a, c);
            }
        }
    }

    #[test]
    fn sync_edges_point_forward(prog in 0u64..10_000, seed in any::<u64>()) {
        let (b, _) = execute(&random_program(prog), "rand.csp", &SchedulerConfig::random(seed), None);
        for e in sync_edges(&b).unwrap() {
            prop_assert!(e.from < e.to);
        }
    }

    #[test]
    fn random_runs_lint_clean_and_round_trip(prog in 0u64..10_000, seed in any::<u64>()) {
        let (fifo, _) = execute(&random_program(prog), "rand.csp", &SchedulerConfig::fifo(0), None);
        let cps = critical_points([&fifo]);
        let (b, _) = execute(&random_program(prog), "rand.csp", &SchedulerConfig::delay_inject(seed, 0.5, 3, cps), None);
        prop_assert_eq!(lint_trace(&b), vec![]);
        let dir = tempfile::tempdir().unwrap();
        save(&b, dir.path(), false).unwrap();
        prop_assert_eq!(load(dir.path(), &b.run_id).unwrap(), b);
    }

    #[test]
    fn coverage_merge_laws(prog in 0u64..10_000, seeds in proptest::collection::vec(any::<u64>(), 1..6)) {
        let src = random_program(prog);
        let sets: Vec<_> = seeds
            .iter()
            .map(|&s| coverage_of(&execute(&src, "rand.csp", &SchedulerConfig::random(s), None).0).unwrap())
            .collect();
        let curve = growth_curve(&sets).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[0].sync_pairs <= w[1].sync_pairs);
            prop_assert!(w[0].blocking_blocked <= w[1].blocking_blocked);
            prop_assert!(w[0].blocked_pairs <= w[1].blocked_pairs);
        }
        let all = merge(&sets).unwrap();
        prop_assert_eq!(curve.last().copied(), Some(all.size()));
        let mut rev = sets.clone();
        rev.reverse();
        prop_assert_eq!(merge(&rev).unwrap(), all.clone());
        prop_assert_eq!(merge([&all, &all]).unwrap(), all);
    }
}
