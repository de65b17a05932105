//! Randomized property tests over instances, schedules, and the solver.

use proptest::prelude::*;

use rbm::core::{
    check_lp_feasibility, schedule_cost, simulate_evictions, validate_schedule, Batch,
    FractionalSolution, Instance,
};
use rbm::engine::{run as engine_run, EngineConfig};
use rbm::oracle::{opt_schedule, OracleLimits};
use rbm::rounding::{round, RoundingConfig};

fn instance_strategy(max_n: usize, max_colors: usize) -> impl Strategy<Value = Instance> {
    (2usize..=4, 1usize..=max_colors, proptest::collection::vec(0usize..max_colors, 1..=max_n))
        .prop_map(|(k, m, picks)| {
            let names = ["a", "b", "c", "d", "e", "f"];
            let tokens: Vec<&str> = picks.iter().map(|&p| names[p % m]).collect();
            Instance::new(k, &tokens)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Any eviction policy yields a schedule passing permutation,
    /// availability, and per-color order checks.
    #[test]
    fn random_policies_produce_valid_schedules(
        inst in instance_strategy(24, 4),
        pick in 0usize..1000,
    ) {
        let schedule = simulate_evictions(&inst, |view| {
            let buf = view.buffer;
            inst.color(buf[pick % buf.len()])
        }).unwrap();
        validate_schedule(&schedule, &inst).unwrap();
    }

    /// Weight-1 batches built from the runs of any valid schedule form a
    /// feasible LP solution.
    #[test]
    fn schedule_runs_give_a_feasible_lp_solution(
        inst in instance_strategy(24, 4),
        pick in 0usize..1000,
    ) {
        let schedule = simulate_evictions(&inst, |view| {
            let buf = view.buffer;
            inst.color(buf[pick % buf.len()])
        }).unwrap();
        let k = inst.k();
        let mut batches = Vec::new();
        for (color, pos, len) in schedule.runs(&inst) {
            let items = schedule.output[pos..pos + len].to_vec();
            batches.push(Batch::from_items(color, items, k + pos + 1, 1.0));
        }
        let frac = FractionalSolution::new(batches);
        let report = check_lp_feasibility(&frac, &inst).unwrap();
        prop_assert!(report.feasible, "{:?}", report.violations);
    }

    /// Renaming colors (reversing the palette) leaves the optimal cost
    /// unchanged.
    #[test]
    fn optimal_cost_is_invariant_under_recoloring(inst in instance_strategy(14, 4)) {
        let names = ["z", "y", "x", "w", "v", "u"];
        let tokens: Vec<&str> = (1..=inst.n())
            .map(|i| names[inst.color(i)])
            .collect();
        let renamed = Instance::new(inst.k(), &tokens);
        let a = opt_schedule(&inst, Some(OracleLimits::default())).unwrap().cost;
        let b = opt_schedule(&renamed, Some(OracleLimits::default())).unwrap().cost;
        prop_assert_eq!(a, b);
    }

    /// The optimum is bounded below by the number of distinct colors and
    /// above by the number of items.
    #[test]
    fn optimal_cost_bounds(inst in instance_strategy(14, 4)) {
        let opt = opt_schedule(&inst, Some(OracleLimits::default())).unwrap().cost;
        prop_assert!(opt >= inst.num_colors());
        prop_assert!(opt <= inst.n());
    }

    /// Any valid schedule costs at least the optimum.
    #[test]
    fn no_policy_beats_the_optimum(
        inst in instance_strategy(14, 4),
        pick in 0usize..1000,
    ) {
        let opt = opt_schedule(&inst, Some(OracleLimits::default())).unwrap().cost;
        let schedule = simulate_evictions(&inst, |view| {
            let buf = view.buffer;
            inst.color(buf[pick % buf.len()])
        }).unwrap();
        prop_assert!(schedule_cost(&schedule, &inst).unwrap() >= opt);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// The solver's output is LP-feasible and its runtime claims hold on
    /// arbitrary instances with the minimum supported buffer size.
    #[test]
    fn solver_output_is_feasible(
        picks in proptest::collection::vec(0usize..5, 1..=60),
    ) {
        let names = ["a", "b", "c", "d", "e"];
        let tokens: Vec<&str> = picks.iter().map(|&p| names[p]).collect();
        let inst = Instance::new(12, &tokens);
        let out = engine_run(&inst, &EngineConfig::default()).unwrap();
        let report = check_lp_feasibility(&out.x, &inst).unwrap();
        prop_assert!(report.feasible, "{:?}", report.violations);
        prop_assert!(out.stats.invariant_failures.is_empty(),
            "{:?}", out.stats.invariant_failures);
    }

    /// Rounding the solver's output always yields a valid schedule costing
    /// at least the LP objective (weight-1 batches per run make the LP a
    /// relaxation).
    #[test]
    fn rounding_solver_output_is_valid(
        picks in proptest::collection::vec(0usize..4, 1..=40),
        seed in 0u64..1000,
    ) {
        let names = ["a", "b", "c", "d"];
        let tokens: Vec<&str> = picks.iter().map(|&p| names[p]).collect();
        let inst = Instance::new(12, &tokens);
        let out = engine_run(&inst, &EngineConfig::default()).unwrap();
        let cfg = RoundingConfig { seed, ..Default::default() };
        let r = round(&inst, &out.x, cfg).unwrap();
        validate_schedule(&r.schedule, &inst).unwrap();
        prop_assert!(r.cost >= 1);
    }
}
