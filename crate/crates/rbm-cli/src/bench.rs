//! `rbm bench`: runs an experiment suite described by a flat key-value
//! config file and emits a versioned CSV plus an optional SVG chart.
//!
//! Config keys (one `key = value` pair per line, `#` comments):
//!   kind            uniform | round_robin | zipf | bursty | single_color
//!   n               stream length
//!   colors          palette size
//!   instance_seeds  comma list of generator seeds
//!   instance_file   path to an instance file (overrides the generator)
//!   k               comma list of buffer sizes
//!   rounding_seeds  number of rounding seeds per instance (default 10)
//!   delta           rounding threshold (default 1/128)
//!   candidate_mode  auto | exhaustive | pruned
//!   oracle          auto | on | off  (exact optimum; guarded by size)
//!   augmented       on | off         (reduced-buffer eviction algorithm)
//!   verify_level    off | assert | full
//!   zipf_alpha, burst_min, burst_max  generator knobs

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;

use rbm::core::{check_lp_feasibility, dual_max_violation, validate_schedule, Instance};
use rbm::engine::{compute_scale, run as engine_run, CandidateMode, EngineConfig};
use rbm::gen::{generate, GenKind, GenSpec};
use rbm::oracle::{opt_schedule, run_augmented, OracleLimits};
use rbm::rounding::{round, RoundingConfig};

#[derive(Args)]
pub struct BenchArgs {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for bench.csv and bench.svg.
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    /// Skip the SVG chart.
    #[arg(long)]
    no_plot: bool,
    /// Record wall-clock runtimes in the CSV (breaks byte-stability).
    #[arg(long)]
    timings: bool,
    /// Override the config's rounding seed count.
    #[arg(long)]
    seeds: Option<u64>,
    /// Override the config's verify level (off | assert | full).
    #[arg(long)]
    verify_level: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VerifyLevel {
    Off,
    Assert,
    Full,
}

struct Config {
    kind: GenKind,
    n: usize,
    colors: usize,
    instance_seeds: Vec<u64>,
    instance_file: Option<PathBuf>,
    ks: Vec<usize>,
    rounding_seeds: u64,
    delta: f64,
    candidate_mode: CandidateMode,
    oracle: String,
    augmented: bool,
    verify_level: VerifyLevel,
    zipf_alpha: f64,
    burst_min: usize,
    burst_max: usize,
}

fn parse_config(text: &str) -> Result<Config> {
    let mut map = BTreeMap::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {} is not 'key = value': {line}", ln + 1);
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    let get = |k: &str, d: &str| map.get(k).cloned().unwrap_or_else(|| d.to_string());
    let kind = GenKind::parse(&get("kind", "uniform"))
        .with_context(|| format!("bad kind '{}'", get("kind", "uniform")))?;
    let list_u64 = |s: &str| -> Result<Vec<u64>> {
        s.split(',').map(|x| Ok(x.trim().parse()?)).collect()
    };
    let list_usize = |s: &str| -> Result<Vec<usize>> {
        s.split(',').map(|x| Ok(x.trim().parse()?)).collect()
    };
    let verify_level = match get("verify_level", "assert").as_str() {
        "off" => VerifyLevel::Off,
        "assert" => VerifyLevel::Assert,
        "full" => VerifyLevel::Full,
        other => bail!("bad verify_level '{other}'"),
    };
    Ok(Config {
        kind,
        n: get("n", "64").parse()?,
        colors: get("colors", "4").parse()?,
        instance_seeds: list_u64(&get("instance_seeds", "0"))?,
        instance_file: map.get("instance_file").map(PathBuf::from),
        ks: list_usize(&get("k", "16"))?,
        rounding_seeds: get("rounding_seeds", "10").parse()?,
        delta: get("delta", &format!("{}", 1.0 / 128.0)).parse()?,
        candidate_mode: CandidateMode::parse(&get("candidate_mode", "auto"))
            .context("bad candidate_mode")?,
        oracle: get("oracle", "auto"),
        augmented: get("augmented", "off") == "on",
        verify_level,
        zipf_alpha: get("zipf_alpha", "1.0").parse()?,
        burst_min: get("burst_min", "1").parse()?,
        burst_max: get("burst_max", "8").parse()?,
    })
}

const CSV_HEADER: &str = "instance_id,k,k_prime,frac_obj,dual_obj,scale,scaled_dual_obj,\
rounded_mean,rounded_min,rounded_max,opt,aug_cost,frac_scale_over_dual,rounded_over_frac,\
rounded_over_opt,runtime_ms,invariant_failures";

struct Row {
    instance_id: String,
    k: usize,
    k_prime: usize,
    frac_obj: f64,
    dual_obj: f64,
    scale: f64,
    rounded: Vec<usize>,
    opt: Option<usize>,
    aug_cost: Option<usize>,
    runtime_ms: Option<u128>,
    invariant_failures: usize,
}

impl Row {
    fn csv(&self) -> String {
        let mean = self.rounded.iter().sum::<usize>() as f64 / self.rounded.len().max(1) as f64;
        let scaled_dual = self.dual_obj / self.scale;
        let opt_s = self.opt.map(|o| o.to_string()).unwrap_or_default();
        let aug_s = self.aug_cost.map(|c| c.to_string()).unwrap_or_default();
        let r_opt = self
            .opt
            .filter(|&o| o > 0)
            .map(|o| format!("{:.6}", mean / o as f64))
            .unwrap_or_default();
        let rt = self
            .runtime_ms
            .map(|m| m.to_string())
            .unwrap_or_default();
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{:.6},{:.6},{},{},{}",
            self.instance_id,
            self.k,
            self.k_prime,
            self.frac_obj,
            self.dual_obj,
            self.scale,
            scaled_dual,
            mean,
            self.rounded.iter().min().copied().unwrap_or(0),
            self.rounded.iter().max().copied().unwrap_or(0),
            opt_s,
            aug_s,
            self.frac_obj * self.scale / self.dual_obj,
            mean / self.frac_obj.max(f64::MIN_POSITIVE),
            r_opt,
            rt,
            self.invariant_failures
        )
    }
}

pub fn run(a: BenchArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&a.config)
        .with_context(|| format!("reading config {}", a.config.display()))?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = a.seeds {
        cfg.rounding_seeds = s;
    }
    if let Some(v) = &a.verify_level {
        cfg.verify_level = match v.as_str() {
            "off" => VerifyLevel::Off,
            "assert" => VerifyLevel::Assert,
            "full" => VerifyLevel::Full,
            other => bail!("bad verify level '{other}'"),
        };
    }

    // materialize instances as (id, tokens)
    let mut sources: Vec<(String, Instance)> = Vec::new();
    if let Some(path) = &cfg.instance_file {
        let inst = super::load_instance(path, None)?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "instance".into());
        sources.push((id, inst));
    } else {
        for &seed in &cfg.instance_seeds {
            let mut spec = GenSpec::new(cfg.kind, cfg.n, cfg.colors, seed);
            spec.zipf_alpha = cfg.zipf_alpha;
            spec.burst_min = cfg.burst_min;
            spec.burst_max = cfg.burst_max;
            let inst = generate(&spec, cfg.ks[0]);
            sources.push((format!("{}-n{}-s{}", cfg.kind.name(), cfg.n, seed), inst));
        }
    }

    let mut rows: Vec<Row> = Vec::new();
    let mut violations = 0usize;
    for (id, base) in &sources {
        for &k in &cfg.ks {
            let inst = base.with_k(k);
            let t0 = Instant::now();
            let mut ecfg = EngineConfig::default();
            ecfg.candidate_mode = cfg.candidate_mode;
            let out = engine_run(&inst, &ecfg)?;
            let frac_obj = out.x.objective();
            let dual_obj = out.duals.objective();
            let mut scale = 1.0;
            if inst.n() <= 500 {
                scale = compute_scale(&out.duals, &inst, out.k_prime, Some(inst.n()))?;
            }

            if cfg.verify_level != VerifyLevel::Off {
                let report = check_lp_feasibility(&out.x, &inst)?;
                if !report.feasible {
                    eprintln!("VIOLATION {id} k={k}: primal infeasible");
                    violations += 1;
                }
                if !out.stats.invariant_failures.is_empty() {
                    eprintln!(
                        "VIOLATION {id} k={k}: {} invariant failures",
                        out.stats.invariant_failures.len()
                    );
                    violations += 1;
                }
            }
            if cfg.verify_level == VerifyLevel::Full {
                if inst.n() > 500 {
                    bail!("verify_level full needs n <= 500");
                }
                let scaled = out.duals.unscaled_dual(out.k_prime).scaled(scale);
                let check = dual_max_violation(&scaled, &inst, Some(inst.n()))?;
                if check.max_lhs > 1.0 + 1e-9 {
                    eprintln!("VIOLATION {id} k={k}: scaled dual infeasible");
                    violations += 1;
                }
            }

            let mut rounded = Vec::new();
            for s in 0..cfg.rounding_seeds {
                let rcfg = RoundingConfig {
                    delta: cfg.delta,
                    seed: s,
                    appending: true,
                };
                let r = round(&inst, &out.x, rcfg)?;
                if cfg.verify_level != VerifyLevel::Off {
                    if let Err(e) = validate_schedule(&r.schedule, &inst) {
                        eprintln!("VIOLATION {id} k={k} seed={s}: invalid schedule ({e})");
                        violations += 1;
                    }
                }
                rounded.push(r.cost);
            }

            let limits = OracleLimits::default();
            let opt = match cfg.oracle.as_str() {
                "off" => None,
                "on" => Some(opt_schedule(&inst, None)?.cost),
                _ => {
                    if inst.n() <= limits.max_n && inst.num_colors() <= limits.max_colors {
                        Some(opt_schedule(&inst, Some(limits))?.cost)
                    } else {
                        None
                    }
                }
            };
            let mut aug_cost = None;
            if let Some(o) = opt {
                if cfg.verify_level != VerifyLevel::Off && !rounded.is_empty() {
                    let min = *rounded.iter().min().unwrap();
                    if min < o {
                        eprintln!("VIOLATION {id} k={k}: rounded cost {min} below optimum {o}");
                        violations += 1;
                    }
                }
                if cfg.augmented && k >= 12 {
                    let k_prime = rbm::engine::derive_k_prime(k)?;
                    let opt_run = opt_schedule(&inst, None)?;
                    aug_cost = Some(run_augmented(&inst, k, k_prime, &opt_run.schedule)?.cost);
                }
            }

            rows.push(Row {
                instance_id: id.clone(),
                k,
                k_prime: out.k_prime,
                frac_obj,
                dual_obj,
                scale,
                rounded,
                opt,
                aug_cost,
                runtime_ms: a.timings.then(|| t0.elapsed().as_millis()),
                invariant_failures: out.stats.invariant_failures.len(),
            });
        }
    }

    rows.sort_by(|a, b| a.instance_id.cmp(&b.instance_id).then(a.k.cmp(&b.k)));
    let mut csv = String::from("# rbm-bench-v1\n");
    csv.push_str(CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv());
        csv.push('\n');
    }
    fs::create_dir_all(&a.out)?;
    let csv_path = a.out.join("bench.csv");
    fs::write(&csv_path, &csv)?;
    eprintln!("wrote {}", csv_path.display());

    if !a.no_plot {
        let svg = plot_ratio_vs_k(&rows);
        let svg_path = a.out.join("bench.svg");
        fs::write(&svg_path, svg)?;
        eprintln!("wrote {}", svg_path.display());
    }

    if violations > 0 {
        eprintln!("{violations} verification violations");
        Ok(ExitCode::FAILURE)
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

/// Minimal static SVG: mean rounded/fractional ratio against k.
fn plot_ratio_vs_k(rows: &[Row]) -> String {
    let mut by_k: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in rows {
        let mean = r.rounded.iter().sum::<usize>() as f64 / r.rounded.len().max(1) as f64;
        let e = by_k.entry(r.k).or_insert((0.0, 0));
        e.0 += mean / r.frac_obj.max(f64::MIN_POSITIVE);
        e.1 += 1;
    }
    let pts: Vec<(f64, f64)> = by_k
        .iter()
        .map(|(&k, &(sum, n))| (k as f64, sum / n as f64))
        .collect();
    let (w, h, ml, mb) = (480.0, 320.0, 50.0, 40.0);
    let xmax = pts.last().map(|p| p.0).unwrap_or(1.0).max(1.0);
    let ymax = pts.iter().map(|p| p.1).fold(1.0f64, f64::max) * 1.1;
    let sx = |x: f64| ml + (x / xmax) * (w - ml - 10.0);
    let sy = |y: f64| (h - mb) - (y / ymax) * (h - mb - 10.0);
    let poly: Vec<String> = pts
        .iter()
        .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
        .collect();
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    s.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"10\" x2=\"{ml}\" y2=\"{0}\" stroke=\"black\"/>\n",
        h - mb,
        w - 10.0
    ));
    s.push_str(&format!(
        "<text x=\"{:.0}\" y=\"{:.0}\" font-size=\"12\">k</text>\n\
         <text x=\"8\" y=\"20\" font-size=\"12\">rounded / fractional</text>\n",
        w - 24.0,
        h - 12.0
    ));
    for &(x, y) in &pts {
        s.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"steelblue\"/>\n\
             <text x=\"{:.1}\" y=\"{:.0}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
            sx(x),
            sy(y),
            sx(x),
            h - mb + 14.0,
            x as usize
        ));
    }
    if poly.len() > 1 {
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\"/>\n",
            poly.join(" ")
        ));
    }
    s.push_str("</svg>\n");
    s
}
