//! Acceptance suite: nine end-to-end checks with explicit numeric envelopes.
//! Each test prints one `criterion N: PASS ...` line (visible with
//! `cargo test --test acceptance -- --nocapture`); a failed assertion marks
//! the criterion FAIL.

use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rbm::core::{check_lp_feasibility, dual_max_violation, validate_schedule, Instance};
use rbm::engine::{compute_scale, derive_k_prime, run as engine_run, CandidateMode, EngineConfig, EngineOutput};
use rbm::gen::{generate, GenKind, GenSpec};
use rbm::oracle::{opt_cost_bruteforce, opt_schedule, run_augmented, OracleLimits};
use rbm::rounding::{round, RoundingConfig};

const FAMILIES: [GenKind; 4] = [GenKind::RoundRobin, GenKind::Uniform, GenKind::Zipf, GenKind::Bursty];

fn family_instance(kind: GenKind, n: usize, colors: usize, seed: u64, k: usize) -> Instance {
    generate(&GenSpec::new(kind, n, colors, seed), k)
}

/// The 200-instance main suite: k in {12, 16, 32, 64}, n in 50..=400,
/// all four families.
fn main_suite() -> Vec<(String, Instance)> {
    let mut out = Vec::new();
    let mut s = 0u64;
    'outer: for k in [12usize, 16, 32, 64] {
        for kind in FAMILIES {
            for rep in 0..13u64 {
                let n = 50 + ((s * 37 + rep * 101) % 351) as usize;
                let colors = 2 + (s % 7) as usize;
                let inst = family_instance(kind, n, colors, s, k);
                out.push((format!("{}-k{}-n{}-s{}", kind.name(), k, n, s), inst));
                s += 1;
                if out.len() == 200 {
                    break 'outer;
                }
            }
        }
    }
    assert_eq!(out.len(), 200);
    out
}

struct SuiteRun {
    id: String,
    out: EngineOutput,
    feasible: bool,
    violations: String,
}

/// Engine results over the main suite, computed once and shared by
/// criteria 1, 3, and 4.
fn suite_runs() -> &'static Vec<SuiteRun> {
    static RUNS: OnceLock<Vec<SuiteRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        main_suite()
            .into_iter()
            .map(|(id, inst)| {
                let out = engine_run(&inst, &EngineConfig::default())
                    .unwrap_or_else(|e| panic!("{id}: engine failed: {e}"));
                let report = check_lp_feasibility(&out.x, &inst)
                    .unwrap_or_else(|e| panic!("{id}: invalid batch: {e}"));
                SuiteRun {
                    id,
                    feasible: report.feasible,
                    violations: format!("{:?}", report.violations),
                    out,
                }
            })
            .collect()
    })
}

fn percentiles(mut v: Vec<f64>) -> (f64, f64, f64) {
    v.sort_by(|a, b| a.total_cmp(b));
    (v[0], v[v.len() / 2], v[v.len() - 1])
}

#[test]
fn criterion_1_primal_feasibility() {
    let start = Instant::now();
    let runs = suite_runs();
    for r in runs {
        assert!(
            r.feasible,
            "criterion 1: FAIL - {} infeasible: {}",
            r.id, r.violations
        );
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 300.0, "criterion 1: FAIL - took {secs:.1}s (budget 300s)");
    println!(
        "criterion 1: PASS - 200/200 instances primal-feasible (tol 1e-9) in {secs:.1}s"
    );
}

#[test]
fn criterion_2_scaled_dual_feasibility() {
    let start = Instant::now();
    let cfg = EngineConfig {
        candidate_mode: CandidateMode::Exhaustive,
        ..Default::default()
    };
    let mut ratios = Vec::new();
    let mut s = 1000u64;
    for rep in 0..50u64 {
        let k = [12usize, 16, 32, 64][(rep % 4) as usize];
        let kind = FAMILIES[((rep / 4) % 4) as usize];
        let n = 60 + ((rep * 17) % 141) as usize; // <= 200
        let colors = 2 + (rep % 6) as usize;
        let inst = family_instance(kind, n, colors, s, k);
        s += 1;
        let out = engine_run(&inst, &cfg).unwrap();
        let kp = out.k_prime;
        let scale = compute_scale(&out.duals, &inst, kp, Some(n)).unwrap();
        let scaled = out.duals.unscaled_dual(kp).scaled(scale);
        let check = dual_max_violation(&scaled, &inst, Some(n)).unwrap();
        assert!(
            check.max_lhs <= 1.0 + 1e-9,
            "criterion 2: FAIL - {kind:?} k={k} n={n}: scaled dual max lhs {}",
            check.max_lhs
        );
        let envelope = 25.0 * (1.0 + (k as f64).ln().ln());
        assert!(
            scale <= envelope,
            "criterion 2: FAIL - {kind:?} k={k} n={n}: scale {scale:.3} > {envelope:.3}"
        );
        ratios.push(scale / (1.0 + (k as f64).ln().ln()));
    }
    let (lo, med, hi) = percentiles(ratios);
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 1200.0, "criterion 2: FAIL - took {secs:.1}s (budget 1200s)");
    println!(
        "criterion 2: PASS - 50/50 scaled duals feasible; scale/(1+ln ln k) \
         min {lo:.2} median {med:.2} max {hi:.2} (envelope 25); {secs:.1}s"
    );
}

#[test]
fn criterion_3_primal_dual_ratio() {
    let mut ratios = Vec::new();
    for r in suite_runs() {
        let primal = r.out.x.objective();
        let dual = r.out.duals.objective();
        assert!(
            primal <= 100.0 * dual,
            "criterion 3: FAIL - {}: primal {primal:.3} > 100 x dual {dual:.3}",
            r.id
        );
        ratios.push(primal / dual);
    }
    let (lo, med, hi) = percentiles(ratios);
    println!(
        "criterion 3: PASS - primal/dual ratio over 200 instances: \
         min {lo:.3} median {med:.3} max {hi:.3} (envelope 100)"
    );
}

#[test]
fn criterion_4_runtime_invariants() {
    for r in suite_runs() {
        assert!(
            r.out.stats.invariant_failures.is_empty(),
            "criterion 4: FAIL - {}: {:?}",
            r.id,
            r.out.stats.invariant_failures
        );
        assert!(
            r.out.stats.max_x_hat <= 1.1 + 1e-9,
            "criterion 4: FAIL - {}: max x-hat {}",
            r.id,
            r.out.stats.max_x_hat
        );
    }
    // one big run where the fractional-block bound 12k/(100 ln k) exceeds 1
    let start = Instant::now();
    let inst = family_instance(GenKind::Zipf, 5000, 12, 42, 1024);
    let cfg = EngineConfig {
        candidate_mode: CandidateMode::Pruned,
        ..Default::default()
    };
    let out = engine_run(&inst, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert!(
        out.stats.invariant_failures.is_empty(),
        "criterion 4: FAIL - k=1024 run: {:?}",
        out.stats.invariant_failures
    );
    assert!(
        out.stats.max_x_hat <= 1.1 + 1e-9,
        "criterion 4: FAIL - k=1024 run: max x-hat {}",
        out.stats.max_x_hat
    );
    assert!(secs < 600.0, "criterion 4: FAIL - k=1024 run took {secs:.1}s (budget 600s)");
    let report = check_lp_feasibility(&out.x, &inst).unwrap();
    assert!(report.feasible, "criterion 4: FAIL - k=1024 run infeasible");
    println!(
        "criterion 4: PASS - zero invariant failures on 200 instances and \
         the k=1024 n=5000 run ({secs:.1}s); max x-hat {:.6}",
        out.stats.max_x_hat
    );
}

#[test]
fn criterion_5_rounding_validity_and_cost() {
    let mut ratios = Vec::new();
    for rep in 0..20u64 {
        let k = [12usize, 16][(rep % 2) as usize];
        let kind = FAMILIES[(rep % 4) as usize];
        let n = 40 + ((rep * 13) % 81) as usize;
        let colors = 2 + (rep % 5) as usize;
        let inst = family_instance(kind, n, colors, 2000 + rep, k);
        let out = engine_run(&inst, &EngineConfig::default()).unwrap();
        let primal = out.x.objective();
        let mut total = 0usize;
        for seed in 0..50u64 {
            let r = round(&inst, &out.x, RoundingConfig { seed, ..Default::default() }).unwrap();
            validate_schedule(&r.schedule, &inst).unwrap_or_else(|e| {
                panic!("criterion 5: FAIL - {kind:?} k={k} n={n} seed {seed}: {e}")
            });
            total += r.cost;
        }
        let mean = total as f64 / 50.0;
        assert!(
            mean / primal <= 50.0,
            "criterion 5: FAIL - {kind:?} k={k} n={n}: mean {mean:.2} / primal {primal:.2} > 50"
        );
        ratios.push(mean / primal);
    }
    let (lo, med, hi) = percentiles(ratios);
    println!(
        "criterion 5: PASS - 1000/1000 rounded schedules valid; mean(cost)/primal \
         min {lo:.2} median {med:.2} max {hi:.2} (envelope 50)"
    );
}

/// 30 tiny instances solvable by the exact oracle.
fn tiny_suite() -> Vec<(String, Instance)> {
    let mut out = Vec::new();
    let mut rep = 0u64;
    while out.len() < 30 {
        let k = [12usize, 16][(rep % 2) as usize];
        let kind = FAMILIES[(rep % 4) as usize];
        let n = 8 + (rep % 13) as usize; // 8..=20
        let colors = 2 + (rep % 3) as usize; // <= 4
        let inst = family_instance(kind, n, colors, 3000 + rep, k);
        rep += 1;
        if inst.num_colors() < 2 {
            continue; // degenerate draw; keep suites non-trivial
        }
        out.push((format!("{}-k{}-n{}-r{}", kind.name(), k, n, rep), inst));
    }
    out
}

#[test]
fn criterion_6_end_to_end_vs_opt() {
    let limits = OracleLimits { max_n: 20, max_colors: 4 };
    let mut ratios = Vec::new();
    for (id, inst) in tiny_suite() {
        let opt = opt_schedule(&inst, Some(limits)).unwrap();
        let out = engine_run(&inst, &EngineConfig::default()).unwrap();
        let mut total = 0usize;
        for seed in 0..20u64 {
            let r = round(&inst, &out.x, RoundingConfig { seed, ..Default::default() }).unwrap();
            total += r.cost;
        }
        let mean = total as f64 / 20.0;
        assert!(
            mean / opt.cost as f64 <= 50.0,
            "criterion 6: FAIL - {id}: mean rounded {mean:.2} / opt {} > 50",
            opt.cost
        );
        ratios.push(mean / opt.cost as f64);

        // weak duality: the scaled dual objective lower-bounds the optimum
        // with the smaller buffer k'
        let kp = out.k_prime;
        let scale = compute_scale(&out.duals, &inst, kp, Some(inst.n())).unwrap();
        let scaled_obj = out.duals.objective() / scale;
        let opt_kp = opt_schedule(&inst.with_k(kp), Some(limits)).unwrap().cost;
        assert!(
            scaled_obj <= opt_kp as f64 + 1e-9,
            "criterion 6: FAIL - {id}: scaled dual {scaled_obj:.4} > opt(k'={kp}) {opt_kp}"
        );
    }
    let (lo, med, hi) = percentiles(ratios);
    println!(
        "criterion 6: PASS - 30 tiny instances: mean rounded/opt min {lo:.2} \
         median {med:.2} max {hi:.2} (envelope 50); weak duality exact"
    );
}

#[test]
fn criterion_7_augmented_algorithm() {
    let limits = OracleLimits { max_n: 20, max_colors: 4 };
    for (id, inst) in tiny_suite() {
        let k = inst.k();
        let kp = derive_k_prime(k).unwrap();
        let opt = opt_schedule(&inst, Some(limits)).unwrap();
        let run = run_augmented(&inst, k, kp, &opt.schedule).unwrap();
        validate_schedule(&run.schedule, &run.renamed).unwrap();
        assert!(
            run.max_p < k - kp,
            "criterion 7: FAIL - {id}: counter reached {} (bound {})",
            run.max_p,
            k - kp
        );
        let phi_floor = kp as f64 / (1.0 + (kp as f64).ln());
        assert!(
            run.min_phi_max_at_step2 >= phi_floor,
            "criterion 7: FAIL - {id}: full-buffer step-2 max potential {} < {phi_floor}",
            run.min_phi_max_at_step2
        );
        let bound =
            (2.0 + (k - kp) as f64 * (1.0 + (kp as f64).ln()) / kp as f64) * opt.cost as f64;
        assert!(
            (run.cost as f64) <= bound,
            "criterion 7: FAIL - {id}: cost {} > bound {bound:.4}",
            run.cost
        );
    }
    println!(
        "criterion 7: PASS - 30 tiny instances: counters < k-k', full-buffer \
         step-2 potential >= k'/(1+ln k'), cost within the augmentation bound"
    );
}

#[test]
fn criterion_8_oracle_self_consistency() {
    let mut checked = 0;
    let mut rep = 0u64;
    while checked < 100 {
        let kind = FAMILIES[(rep % 4) as usize];
        let n = 4 + (rep % 9) as usize; // 4..=12
        let colors = 2 + (rep % 3) as usize;
        let k = 2 + (rep % 4) as usize;
        let inst = family_instance(kind, n, colors, 4000 + rep, k);
        rep += 1;
        let a = opt_schedule(&inst, None).unwrap().cost;
        let b = opt_cost_bruteforce(&inst).unwrap();
        assert_eq!(
            a, b,
            "criterion 8: FAIL - {kind:?} k={k} n={n} rep={rep}: search {a} != brute force {b}"
        );
        checked += 1;
    }
    println!("criterion 8: PASS - exact search matches brute force on 100 instances");
}

#[test]
fn criterion_9_determinism() {
    // engine trace, solution, and rounding log are byte-identical across runs
    let inst = family_instance(GenKind::Bursty, 120, 5, 7, 16);
    let cfg = EngineConfig::default();
    let a = engine_run(&inst, &cfg).unwrap();
    let b = engine_run(&inst, &cfg).unwrap();
    assert_eq!(a.trace_jsonl(), b.trace_jsonl(), "criterion 9: FAIL - traces differ");
    assert_eq!(
        serde_json::to_string(&a.x).unwrap(),
        serde_json::to_string(&b.x).unwrap(),
        "criterion 9: FAIL - solutions differ"
    );
    let rc = RoundingConfig { seed: 9, ..Default::default() };
    let ra = round(&inst, &a.x, rc.clone()).unwrap();
    let rb = round(&inst, &b.x, rc).unwrap();
    assert_eq!(ra.schedule, rb.schedule, "criterion 9: FAIL - schedules differ");
    assert_eq!(
        ra.phase_log_jsonl(),
        rb.phase_log_jsonl(),
        "criterion 9: FAIL - rounding logs differ"
    );

    // the bench CSV is byte-identical across invocations
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.conf");
    std::fs::write(
        &config,
        "kind = uniform\nn = 60\ncolors = 4\ninstance_seeds = 2\nk = 12,16\nrounding_seeds = 3\n",
    )
    .unwrap();
    let csv = |out: &str| {
        let outdir = dir.path().join(out);
        let output = Command::new(env!("CARGO_BIN_EXE_rbm"))
            .args(["bench", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&outdir)
            .arg("--no-plot")
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "criterion 9: FAIL - bench run failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        std::fs::read(outdir.join("bench.csv")).unwrap()
    };
    assert_eq!(csv("a"), csv("b"), "criterion 9: FAIL - CSV differs");
    println!("criterion 9: PASS - traces, solutions, schedules, logs, and CSV byte-identical");
}
