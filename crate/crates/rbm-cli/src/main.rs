//! Command-line front end: generate instances, compute exact optima, run the
//! fractional solver, round, verify artifacts, and benchmark end to end.

mod bench;
mod verify;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rbm::core::Instance;
use rbm::engine::{compute_scale, run as engine_run, CandidateMode, EngineConfig};
use rbm::gen::{generate, GenKind, GenSpec};
use rbm::oracle::{opt_schedule, run_augmented, OracleLimits};
use rbm::rounding::{round, RoundingConfig};

#[derive(Parser)]
#[command(name = "rbm", version, about = "Reordering buffer management toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an instance file from a named distribution.
    Gen(GenArgs),
    /// Exact optimal cost for a small instance (dynamic program).
    Opt(OptArgs),
    /// Run the eviction-priority algorithm with a reduced buffer k'.
    Augment(AugmentArgs),
    /// Run the fractional solver; emit solution, duals, and trace.
    SolveLp(SolveArgs),
    /// Round a fractional solution into an integral schedule.
    Round(RoundArgs),
    /// Verify stored artifacts against an instance.
    Verify(verify::VerifyArgs),
    /// Run an experiment suite; emit CSV (and an SVG chart).
    Bench(bench::BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// uniform | round_robin | zipf | bursty | single_color
    #[arg(long)]
    kind: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    colors: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    zipf_alpha: f64,
    #[arg(long, default_value_t = 1)]
    burst_min: usize,
    #[arg(long, default_value_t = 8)]
    burst_max: usize,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptArgs {
    /// Instance file, or '-' plus --tokens for inline input.
    instance: PathBuf,
    /// Override the instance's buffer size.
    #[arg(long)]
    k: Option<usize>,
    /// Print the optimal schedule as JSON as well.
    #[arg(long)]
    schedule: bool,
    #[arg(long, default_value_t = 24)]
    max_n: usize,
    #[arg(long, default_value_t = 6)]
    max_colors: usize,
}

#[derive(Args)]
struct AugmentArgs {
    instance: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    k_prime_override: Option<usize>,
    /// Print the per-step trace as JSON lines.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    k_prime_override: Option<usize>,
    /// auto | exhaustive | pruned
    #[arg(long, default_value = "auto")]
    candidate_mode: String,
    /// Directory for x.json, duals.json, trace.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also certify the duals by exhaustive enumeration (n <= 500).
    #[arg(long)]
    certify: bool,
}

#[derive(Args)]
struct RoundArgs {
    instance: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    /// Fractional solution JSON (re-runs the solver when omitted).
    #[arg(long)]
    frac: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0 / 128.0)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Round with this many consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long)]
    no_appending: bool,
    /// Directory for schedule JSON and phase logs.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_instance(path: &Path, k_override: Option<usize>) -> Result<Instance> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading instance {}", path.display()))?;
    let inst = Instance::parse(&text)?;
    Ok(match k_override {
        Some(k) => inst.with_k(k),
        None => inst,
    })
}

fn write_or_print(out: &Option<PathBuf>, name: &str, content: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(name);
            fs::write(&path, content)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Gen(a) => {
            let kind = GenKind::parse(&a.kind)
                .with_context(|| format!("unknown generator kind '{}'", a.kind))?;
            let mut spec = GenSpec::new(kind, a.n, a.colors, a.seed);
            spec.zipf_alpha = a.zipf_alpha;
            spec.burst_min = a.burst_min;
            spec.burst_max = a.burst_max;
            let inst = generate(&spec, a.k);
            match &a.out {
                Some(p) => {
                    fs::write(p, inst.to_text())?;
                    eprintln!("wrote {}", p.display());
                }
                None => print!("{}", inst.to_text()),
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Opt(a) => {
            let inst = load_instance(&a.instance, a.k)?;
            let limits = OracleLimits {
                max_n: a.max_n,
                max_colors: a.max_colors,
            };
            let res = opt_schedule(&inst, Some(limits))?;
            println!("{}", res.cost);
            if a.schedule {
                println!("{}", serde_json::to_string(&res.schedule)?);
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Augment(a) => {
            let inst = load_instance(&a.instance, a.k)?;
            let k = inst.k();
            let k_prime = match a.k_prime_override {
                Some(kp) => kp,
                None => rbm::engine::derive_k_prime(k)?,
            };
            let opt = opt_schedule(&inst, None)?;
            let run = run_augmented(&inst, k, k_prime, &opt.schedule)?;
            println!(
                "cost={} opt={} k={} k_prime={} max_p={}",
                run.cost, opt.cost, run.k, run.k_prime, run.max_p
            );
            if a.trace {
                for step in &run.trace {
                    println!("{}", serde_json::to_string(step)?);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::SolveLp(a) => {
            let inst = load_instance(&a.instance, a.k)?;
            let mut cfg = EngineConfig::default();
            cfg.k_prime_override = a.k_prime_override;
            cfg.candidate_mode = CandidateMode::parse(&a.candidate_mode)
                .with_context(|| format!("unknown candidate mode '{}'", a.candidate_mode))?;
            let out = engine_run(&inst, &cfg)?;
            let mut duals = out.duals.clone();
            if a.certify {
                if inst.n() > 500 {
                    bail!("--certify needs n <= 500 (exhaustive dual enumeration)");
                }
                duals.scale = compute_scale(&duals, &inst, out.k_prime, Some(inst.n()))?;
            }
            eprintln!(
                "objective={:.6} dual={:.6} scale={:.6} k_prime={} cases={:?} invariant_failures={}",
                out.x.objective(),
                duals.objective(),
                duals.scale,
                out.k_prime,
                out.stats.case_counts,
                out.stats.invariant_failures.len()
            );
            write_or_print(&a.out, "x.json", &serde_json::to_string_pretty(&out.x)?)?;
            if let Some(dir) = &a.out {
                fs::write(dir.join("duals.json"), serde_json::to_string_pretty(&duals)?)?;
                // scaled feasible dual on the k' slot axis, in the plain
                // dual-solution format `verify --duals` accepts
                let scaled = duals.unscaled_dual(out.k_prime).scaled(duals.scale);
                fs::write(
                    dir.join("dual-scaled.json"),
                    serde_json::to_string_pretty(&scaled)?,
                )?;
                fs::write(dir.join("trace.jsonl"), out.trace_jsonl())?;
            }
            if out.stats.invariant_failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for f in &out.stats.invariant_failures {
                    eprintln!("invariant: {f}");
                }
                Ok(ExitCode::FAILURE)
            }
        }
        Cmd::Round(a) => {
            let inst = load_instance(&a.instance, a.k)?;
            let frac = match &a.frac {
                Some(p) => {
                    let text = fs::read_to_string(p)?;
                    serde_json::from_str(&text)?
                }
                None => engine_run(&inst, &EngineConfig::default())?.x,
            };
            let mut costs = Vec::new();
            for s in 0..a.seeds {
                let cfg = RoundingConfig {
                    delta: a.delta,
                    seed: a.seed + s,
                    appending: !a.no_appending,
                };
                let out = round(&inst, &frac, cfg)?;
                costs.push(out.cost);
                println!("seed={} cost={}", cfg.seed, out.cost);
                if let Some(dir) = &a.out {
                    fs::create_dir_all(dir)?;
                    fs::write(
                        dir.join(format!("schedule-{}.json", cfg.seed)),
                        serde_json::to_string_pretty(&out.schedule)?,
                    )?;
                    fs::write(
                        dir.join(format!("phases-{}.jsonl", cfg.seed)),
                        out.phase_log_jsonl(),
                    )?;
                }
            }
            if costs.len() > 1 {
                let mean = costs.iter().sum::<usize>() as f64 / costs.len() as f64;
                println!(
                    "mean={mean:.3} min={} max={}",
                    costs.iter().min().unwrap(),
                    costs.iter().max().unwrap()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Verify(a) => verify::run(a),
        Cmd::Bench(a) => bench::run(a),
    }
}
