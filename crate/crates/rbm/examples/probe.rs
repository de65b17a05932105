use rbm::core::check_lp_feasibility;
use rbm::engine::{run, CandidateMode, EngineConfig};
use rbm::gen::{generate, GenKind, GenSpec};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let k: usize = args[1].parse().unwrap();
    let n: usize = args[2].parse().unwrap();
    let m: usize = args[3].parse().unwrap();
    let mode = args.get(4).map(|s| s.as_str()).unwrap_or("auto");
    let spec = GenSpec::new(GenKind::Uniform, n, m, 42);
    let inst = generate(&spec, k);
    let mut cfg = EngineConfig::default();
    cfg.candidate_mode = CandidateMode::parse(mode).unwrap();
    let t0 = Instant::now();
    let out = run(&inst, &cfg).unwrap();
    let el = t0.elapsed();
    let rep = check_lp_feasibility(&out.x, &inst).unwrap();
    println!(
        "k={k} n={n} m={m} mode={mode}: {:.2?} obj={:.3} feasible={} cands={} pieces={} advances={} max_x_hat={:.4} inv_fail={}",
        el, out.x.objective(), rep.feasible, out.stats.candidates, out.stats.pieces,
        out.stats.advances, out.stats.max_x_hat, out.stats.invariant_failures.len()
    );
    if !rep.feasible {
        println!("  min_cov={} max_use={}", rep.min_coverage, rep.max_usage);
    }
    for f in out.stats.invariant_failures.iter().take(12) {
        println!("  INV: {f}");
    }
}
