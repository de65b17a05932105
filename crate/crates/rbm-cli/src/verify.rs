//! `rbm verify`: re-checks stored artifacts (fractional solutions, duals,
//! schedules) against an instance; exits 1 on any violation.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;

use rbm::core::{
    check_lp_feasibility, dual_max_violation, validate_schedule, DualSolution,
    FractionalSolution, IntegralSchedule,
};

#[derive(Args)]
pub struct VerifyArgs {
    /// Instance file.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    /// Fractional solution JSON to check for LP feasibility.
    #[arg(long)]
    frac: Option<PathBuf>,
    /// Dual solution JSON to check (exhaustive enumeration, n <= 500).
    #[arg(long)]
    duals: Option<PathBuf>,
    /// Integral schedule JSON to validate.
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Feasibility tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

pub fn run(a: VerifyArgs) -> Result<ExitCode> {
    let inst = super::load_instance(&a.instance, a.k)?;
    let mut failed = false;

    if let Some(p) = &a.frac {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let mut frac: FractionalSolution = serde_json::from_str(&text)?;
        frac.rehydrate(&inst);
        let report = check_lp_feasibility(&frac, &inst)?;
        if report.feasible {
            println!(
                "frac: ok (objective {:.6}, min coverage {:.9}, max usage {:.9})",
                report.objective, report.min_coverage, report.max_usage
            );
        } else {
            failed = true;
            println!("frac: INFEASIBLE ({} violations)", report.violations.len());
            for v in report.violations.iter().take(10) {
                println!("  {v:?}");
            }
        }
    }

    if let Some(p) = &a.duals {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let duals: DualSolution = serde_json::from_str(&text)?;
        let check = dual_max_violation(&duals, &inst, Some(inst.n().max(1)))?;
        if check.max_lhs <= 1.0 + a.tol {
            println!(
                "duals: ok (max constraint lhs {:.9}, objective {:.6})",
                check.max_lhs,
                duals.objective()
            );
        } else {
            failed = true;
            println!(
                "duals: INFEASIBLE (max constraint lhs {:.9} at {:?})",
                check.max_lhs, check.argmax_batch
            );
        }
    }

    if let Some(p) = &a.schedule {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let sched: IntegralSchedule = serde_json::from_str(&text)?;
        match validate_schedule(&sched, &inst) {
            Ok(()) => {
                let cost = rbm::core::schedule_cost(&sched, &inst)?;
                println!("schedule: ok (cost {cost})");
            }
            Err(e) => {
                failed = true;
                println!("schedule: INVALID ({e})");
            }
        }
    }

    Ok(if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}
