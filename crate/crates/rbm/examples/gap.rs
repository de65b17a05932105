use rbm::engine::{compute_scale, run, EngineConfig};
use rbm::gen::{generate, GenKind, GenSpec};

fn main() {
    for k in [12usize, 16, 32, 64] {
        for (kind, seed, n, m) in [
            (GenKind::Uniform, 0u64, 100usize, 5usize),
            (GenKind::Zipf, 1, 150, 8),
            (GenKind::Bursty, 2, 200, 6),
            (GenKind::RoundRobin, 3, 120, 3),
        ] {
            let inst = generate(&GenSpec::new(kind, n, m, seed), k);
            let out = run(&inst, &EngineConfig::default()).unwrap();
            let obj = out.x.objective();
            let dual = out.duals.objective();
            let scale = compute_scale(&out.duals, &inst, out.k_prime, None).unwrap();
            println!(
                "k={k} {kind:?} n={n}: obj={obj:.2} dual={dual:.3} ratio={:.2} scale={scale:.3} bound={:.2}",
                obj / dual,
                25.0 * (1.0 + (k as f64).ln().ln())
            );
        }
    }
}
