use rbm::engine::{run, EngineConfig};
use rbm::gen::{generate, GenKind, GenSpec};
use rbm::oracle::opt_schedule;
use rbm::rounding::{round, RoundingConfig};

fn main() {
    for k in [12usize, 16, 32] {
        for seed in 0..5u64 {
            let spec = GenSpec::new(GenKind::Uniform, 100, 5, seed);
            let inst = generate(&spec, k);
            let out = run(&inst, &EngineConfig::default()).unwrap();
            let obj = out.x.objective();
            let mut costs = Vec::new();
            for rs in 0..20u64 {
                let cfg = RoundingConfig { seed: rs, ..Default::default() };
                costs.push(round(&inst, &out.x, cfg).unwrap().cost as f64);
            }
            let mean = costs.iter().sum::<f64>() / costs.len() as f64;
            print!("k={k} seed={seed}: obj={obj:.2} mean_round={mean:.1} ratio={:.2}", mean / obj);
            if inst.n() <= 24 {
                let opt = opt_schedule(&inst, None).unwrap().cost;
                print!(" opt={opt}");
            }
            println!();
        }
    }
}
